use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use corrkd::dsp::{measure_snr, read_wav, write_wav, AudioBuffer};
use corrkd::models::{init_student_from_teacher, load_student, save_student, TeacherModel};
use corrkd_cli::RunConfig;
use serde_json::Value;

fn corrkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Vec<Value> {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn tone(path: &Path) -> AudioBuffer {
    let samples = (0..16_000)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 16_000.0).sin())
        .collect();
    let audio = AudioBuffer::new(samples, 16_000).unwrap();
    write_wav(path, &audio).unwrap();
    read_wav(path, None).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn augment_hits_the_requested_snr() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
    let clean = tone(&input);
    let out = corrkd(&["augment", "--in", s(&input), "--out", s(&output), "--kind", "gaussian", "--snr", "15"]);
    let rec = &stdout_json(&out)[0];
    assert_eq!(rec["snr_db"].as_f64(), Some(15.0));
    assert!((rec["measured_snr_db"][0].as_f64().unwrap() - 15.0).abs() < 1e-9);

    // recover the noise from the written file; 16-bit rounding is the only error
    let noisy = read_wav(&output, None).unwrap();
    let noise: Vec<f64> = noisy.samples().iter().zip(clean.samples()).map(|(a, b)| a - b).collect();
    let snr = measure_snr(&clean, &AudioBuffer::new(noise, 16_000).unwrap()).unwrap();
    assert!((snr - 15.0).abs() < 0.01, "{snr}");
}

#[test]
fn augment_without_flags_copies_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
    let clean = tone(&input);
    stdout_json(&corrkd(&["augment", "--in", s(&input), "--out", s(&output)]));
    assert_eq!(read_wav(&output, None).unwrap(), clean);
}

#[test]
fn augment_rejects_stereo_and_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("stereo.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&input, spec).unwrap();
    for i in 0..200 {
        w.write_sample(i as i16).unwrap();
    }
    w.finalize().unwrap();
    let out = corrkd(&["augment", "--in", s(&input), "--out", s(&dir.path().join("o.wav"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mono"));

    let out = corrkd(&["augment", "--in", s(&dir.path().join("nope.wav")), "--out", s(&dir.path().join("o.wav"))]);
    assert!(!out.status.success());
}

const SMALL: &[&str] = &[
    "--synthetic",
    "--synthetic_utterances",
    "6",
    "--dev_utterances",
    "2",
    "--synthetic_duration_s",
    "0.5",
    "--segment_s",
    "0.3",
    "--batch_size",
    "3",
    "--model_dim",
    "16",
    "--mlp_dim",
    "32",
    "--n_mels",
    "16",
];

fn distill(out: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["distill", "--out", s(out)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    stdout_json(&corrkd(&args)).remove(0)
}

fn run_log(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("run_log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn zero_learning_rate_keeps_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let summary = distill(dir.path(), &["--steps", "1", "--lr", "0", "--seed", "4"]);
    assert_eq!(summary["selected_step"].as_u64(), Some(1));

    let mut cfg = RunConfig::default();
    for pair in SMALL[1..].chunks(2) {
        cfg.set(pair[0].trim_start_matches("--"), pair[1]).unwrap();
    }
    cfg.set("seed", "4").unwrap();
    let teacher = TeacherModel::new(cfg.teacher_config()).unwrap();
    let init = init_student_from_teacher(&teacher, cfg.head_init, 4).unwrap();
    let stem = dir.path().join("init");
    save_student(&init, &stem).unwrap();
    let ckpt = dir.path().join("checkpoints/step_000001");
    assert_eq!(load_student(&ckpt).unwrap(), init);
    assert_eq!(
        fs::read(ckpt.with_extension("bin")).unwrap(),
        fs::read(stem.with_extension("bin")).unwrap()
    );
}

#[test]
fn heuristic_varies_lambda_per_step() {
    let dir = tempfile::tempdir().unwrap();
    distill(
        dir.path(),
        &["--steps", "4", "--loss", "cl", "--setup", "both", "--heuristic", "true", "--dev_eval_every", "2"],
    );
    let log = run_log(dir.path());
    assert_eq!(log.len(), 4);
    let lambdas: Vec<f64> = log.iter().map(|r| r["lambda_cc_eff"].as_f64().unwrap()).collect();
    assert!(lambdas.iter().all(|l| (5e-7..=5e-5).contains(l)));
    assert!(lambdas.windows(2).any(|w| w[0] != w[1]), "{lambdas:?}");
    let pointer = fs::read_to_string(dir.path().join("selected_checkpoint.txt")).unwrap();
    assert!(dir.path().join(pointer.trim()).with_extension("manifest").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--steps", "3", "--dev_eval_every", "1", "--seed", "7"];
    distill(a.path(), &args);
    distill(b.path(), &args);
    for f in [
        "run_log.jsonl",
        "selected_checkpoint.txt",
        "config.txt",
        "checkpoints/step_000002.bin",
        "checkpoints/step_000003.manifest",
    ] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_flag_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = corrkd(&["distill", "--synthetic", "--out", s(dir.path()), "--bogus_key", "1"]);
    assert!(!out.status.success());

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nsteps = 2\nlearning_rat = 0.1\n").unwrap();
    let out = corrkd(&["distill", "--synthetic", "--out", s(dir.path()), "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));

    let out = corrkd(&["distill", "--synthetic", "--out", s(dir.path()), "--loss", "mse"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("loss"));
}

fn probe_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["probe"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--probe_utterances", "10", "--n_trees", "20"]);
    args.extend_from_slice(extra);
    args
}

#[test]
fn probe_reports_are_in_range_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    distill(dir.path(), &["--steps", "1", "--lr", "0"]);
    let ckpt: PathBuf = dir.path().join("checkpoints/step_000001.manifest");
    let first = stdout_json(&corrkd(&probe_args(&["--checkpoint", s(&ckpt)]))).remove(0);
    let acc = first["overall_acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(first["acc_per_class"].as_array().unwrap().len(), 4);
    let second = stdout_json(&corrkd(&probe_args(&["--checkpoint", s(&ckpt)]))).remove(0);
    assert_eq!(first, second);

    let teacher = stdout_json(&corrkd(&probe_args(&["--teacher"]))).remove(0);
    assert!((0.0..=1.0).contains(&teacher["overall_acc"].as_f64().unwrap()));
}

#[test]
fn probe_rejects_mismatched_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    distill(dir.path(), &["--steps", "1", "--lr", "0"]);
    let ckpt = dir.path().join("checkpoints/step_000001");
    let out = corrkd(&probe_args(&["--checkpoint", s(&ckpt), "--n_mels", "20"]));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_mels"));

    let manifest = ckpt.with_extension("manifest");
    let text = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, text.replacen("model_dim 16", "model_dim 12", 1)).unwrap();
    assert!(!corrkd(&probe_args(&["--checkpoint", s(&ckpt)])).status.success());
    assert!(!corrkd(&probe_args(&["--checkpoint", s(&dir.path().join("missing"))])).status.success());
}

#[test]
fn gradcheck_passes_and_catches_a_sign_flip() {
    let out = corrkd(&["gradcheck", "--cases", "3"]);
    let lines = stdout_json(&out);
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| l["passed"] == Value::Bool(true)));

    let out = corrkd(&["gradcheck", "--cases", "2", "--inject-sign-flip", "square"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bt: case"));
}
