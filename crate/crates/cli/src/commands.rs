use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use corrkd::corpus::{load_wav_dir, synthetic_corpus, SynthConfig};
use corrkd::dsp::{
    apply_plan_traced, measure_snr, read_wav, write_wav, AudioBuffer, Distortion, DistortionPlan,
    NoiseKind,
};
use corrkd::models::{
    init_student_from_teacher, load_student, save_student, StudentModel, TeacherModel,
};
use corrkd::probe::{
    build_probe_dataset, forest_train, probe_accuracy, Embedder, ProbeClass, ProbeReport,
};
use corrkd::trainer::{train_distill, Checkpoint, Featurizer, RunRecord, TrainObserver};
use corrkd::verify::{gradient_suite, SuiteConfig, SuiteReport};

use crate::config::RunConfig;

/// Where utterances come from.
#[derive(Clone, Debug, PartialEq)]
pub enum CorpusSource {
    Synthetic,
    WavDir(PathBuf),
}

/// Distortions requested on the `augment` command line, applied in the
/// order listed: effects first, then the additive noise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentArgs {
    pub noise: Option<(NoiseKind, f64)>,
    pub reverb_rt60_s: Option<f64>,
    pub pitch_semitones: Option<f64>,
    pub band_reject: Option<(f64, f64)>,
    pub seed: u64,
}

impl AugmentArgs {
    pub fn plan(&self) -> Result<DistortionPlan> {
        let mut specs = Vec::new();
        if let Some(rt60_s) = self.reverb_rt60_s {
            specs.push(Distortion::Reverb { rt60_s });
        }
        if let Some(semitones) = self.pitch_semitones {
            specs.push(Distortion::PitchShift { semitones });
        }
        if let Some((center_hz, q)) = self.band_reject {
            specs.push(Distortion::BandReject { center_hz, q });
        }
        if let Some((noise, snr_db)) = self.noise {
            specs.push(Distortion::Noise { noise, snr_db });
        }
        Ok(DistortionPlan::new(specs, self.seed)?)
    }
}

#[derive(Debug, Serialize)]
pub struct AugmentRecord {
    pub output: String,
    pub specs: Vec<Distortion>,
    pub snr_db: f64,
    /// measured before clipping, one value per additive stage
    pub measured_snr_db: Vec<f64>,
}

pub fn augment(input: &Path, output: &Path, args: &AugmentArgs) -> Result<AugmentRecord> {
    let audio = read_wav(input, None).with_context(|| format!("reading {}", input.display()))?;
    let plan = args.plan()?;
    let applied = apply_plan_traced(&audio, &plan)?;
    let measured = applied
        .additive
        .iter()
        .map(|s| measure_snr(&s.reference, &s.scaled_noise))
        .collect::<corrkd::Result<Vec<_>>>()?;
    write_wav(output, &applied.audio).with_context(|| format!("writing {}", output.display()))?;
    Ok(AugmentRecord {
        output: output.display().to_string(),
        specs: plan.specs().to_vec(),
        snr_db: plan.effective_snr_db(),
        measured_snr_db: measured,
    })
}

/// Training and dev utterances for a run.
pub fn training_corpora(cfg: &RunConfig, source: &CorpusSource) -> Result<(Vec<AudioBuffer>, Vec<AudioBuffer>)> {
    let rate = cfg.training.features.sample_rate_hz;
    match source {
        CorpusSource::Synthetic => {
            let synth = |n, seed| {
                synthetic_corpus(&SynthConfig {
                    n_utterances: n,
                    duration_s: cfg.corpus.synthetic_duration_s,
                    sample_rate_hz: rate,
                    seed,
                })
            };
            Ok((
                synth(cfg.corpus.synthetic_utterances, cfg.corpus.train_seed())?,
                synth(cfg.corpus.dev_utterances, cfg.corpus.dev_seed())?,
            ))
        }
        CorpusSource::WavDir(dir) => {
            let mut all = load_wav_dir(dir, rate)?;
            let n_dev = cfg.corpus.dev_utterances;
            if all.len() <= n_dev {
                bail!(
                    "{} holds {} files; need more than dev_utterances = {n_dev}",
                    dir.display(),
                    all.len()
                );
            }
            let dev = all.split_off(all.len() - n_dev);
            Ok((all, dev))
        }
    }
}

/// Utterances the probe distorts and embeds.
pub fn probe_corpus(cfg: &RunConfig, source: &CorpusSource) -> Result<Vec<AudioBuffer>> {
    let rate = cfg.training.features.sample_rate_hz;
    Ok(match source {
        CorpusSource::Synthetic => synthetic_corpus(&SynthConfig {
            n_utterances: cfg.corpus.probe_utterances,
            duration_s: cfg.corpus.synthetic_duration_s,
            sample_rate_hz: rate,
            seed: cfg.corpus.probe_seed(),
        })?,
        CorpusSource::WavDir(dir) => load_wav_dir(dir, rate)?,
    })
}

/// Streams the run log and checkpoints into an output directory.
struct DirObserver {
    log: BufWriter<File>,
    checkpoints: PathBuf,
}

impl TrainObserver for DirObserver {
    fn on_record(&mut self, record: &RunRecord) -> corrkd::Result<()> {
        let line = serde_json::to_string(record).map_err(std::io::Error::from)?;
        writeln!(self.log, "{line}")?;
        self.log.flush()?;
        Ok(())
    }

    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) -> corrkd::Result<()> {
        save_student(&checkpoint.model, &checkpoint_stem(&self.checkpoints, checkpoint.step))
    }
}

pub fn checkpoint_stem(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("step_{step:06}"))
}

pub const RUN_LOG: &str = "run_log.jsonl";
pub const SELECTED: &str = "selected_checkpoint.txt";
pub const RESOLVED_CONFIG: &str = "config.txt";

#[derive(Debug, Serialize)]
pub struct DistillSummary {
    pub steps: usize,
    pub selected_step: usize,
    pub selected_dev_loss: f64,
    pub checkpoint: String,
}

/// Train a student from the configured teacher and write everything a run
/// produces under `out`.
pub fn distill(cfg: &RunConfig, source: &CorpusSource, out: &Path) -> Result<DistillSummary> {
    cfg.validate()?;
    let (corpus, dev) = training_corpora(cfg, source)?;
    let teacher = TeacherModel::new(cfg.teacher_config())?;
    let student = init_student_from_teacher(&teacher, cfg.head_init, cfg.training.seed)?;

    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).with_context(|| format!("creating {}", ckpt_dir.display()))?;
    fs::write(out.join(RESOLVED_CONFIG), cfg.render())?;
    let mut observer = DirObserver {
        log: BufWriter::new(File::create(out.join(RUN_LOG))?),
        checkpoints: ckpt_dir,
    };
    let outcome = train_distill(&cfg.training, &teacher, student, &corpus, &dev, &mut observer)?;
    let chosen = outcome.selected()?;
    let rel = format!("checkpoints/step_{:06}", chosen.step);
    fs::write(out.join(SELECTED), format!("{rel}\n"))?;
    Ok(DistillSummary {
        steps: cfg.training.steps,
        selected_step: chosen.step,
        selected_dev_loss: chosen.dev_loss,
        checkpoint: rel,
    })
}

/// Accept a checkpoint given as its stem or as either of its two files.
pub fn checkpoint_path_stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("manifest" | "bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

/// Which model's last hidden layer the probe embeds.
pub enum ProbeTarget<'a> {
    Checkpoint(&'a Path),
    Teacher,
}

/// Probe `model` on the probe corpus with the configured forest.
pub fn probe_model(cfg: &RunConfig, model: &dyn Embedder, utterances: &[AudioBuffer]) -> Result<ProbeReport> {
    let featurizer = Featurizer::new(&cfg.training.features)?;
    let data = build_probe_dataset(model, &featurizer, utterances, &ProbeClass::DEFAULT, cfg.probe_seed)?;
    let forest = forest_train(&data, &cfg.forest)?;
    Ok(probe_accuracy(&forest, &data)?)
}

pub fn probe(cfg: &RunConfig, target: ProbeTarget<'_>, source: &CorpusSource) -> Result<ProbeReport> {
    cfg.validate()?;
    let utterances = probe_corpus(cfg, source)?;
    match target {
        ProbeTarget::Teacher => probe_model(cfg, &TeacherModel::new(cfg.teacher_config())?, &utterances),
        ProbeTarget::Checkpoint(path) => {
            let stem = checkpoint_path_stem(path);
            let student: StudentModel = load_student(&stem)
                .with_context(|| format!("loading checkpoint {}", stem.display()))?;
            let want = cfg.training.features.n_mels;
            if student.config().input_dim != want {
                bail!(
                    "checkpoint expects {} input features but n_mels = {want}",
                    student.config().input_dim
                );
            }
            probe_model(cfg, &student, &utterances)
        }
    }
}

pub fn gradcheck(cfg: &SuiteConfig) -> Result<SuiteReport> {
    Ok(gradient_suite(cfg)?)
}
