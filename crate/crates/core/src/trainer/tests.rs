use super::*;
use crate::corpus::{synthetic_corpus, SynthConfig};
use crate::dsp::SNR_MIN_DB;
use crate::losses::heuristic_lambda;
use crate::models::{init_student_from_teacher, param_blob, EncoderConfig, HeadInit, TeacherModel};

fn tiny_teacher() -> TeacherModel {
    TeacherModel::new(EncoderConfig {
        input_dim: 16,
        model_dim: 8,
        n_blocks: 3,
        n_heads: 2,
        mlp_dim: 16,
        seed: 5,
    })
    .unwrap()
}

fn tiny_config() -> TrainingConfig {
    TrainingConfig {
        steps: 4,
        batch_size: 3,
        dev_eval_every: 2,
        segment_s: 0.1,
        features: FeatureConfig {
            n_mels: 16,
            ..FeatureConfig::default()
        },
        ..TrainingConfig::default()
    }
}

fn corpus(n: usize, seed: u64) -> Vec<AudioBuffer> {
    synthetic_corpus(&SynthConfig {
        n_utterances: n,
        duration_s: 0.15,
        sample_rate_hz: 16_000,
        seed,
    })
    .unwrap()
}

fn record(step: usize, dev: Option<f64>) -> RunRecord {
    RunRecord {
        step,
        report: Default::default(),
        dev_loss: dev,
        student_snr_db: 20.0,
        teacher_snr_db: 20.0,
    }
}

#[test]
fn student_only_teacher_views_are_clean() {
    let clean = corpus(3, 1);
    let v = sample_views(&clean, Setup::StudentOnly, &DistortionPolicy::default(), 9).unwrap();
    assert_eq!(v.teacher, clean);
    assert!(v.teacher_snr_db.iter().all(|&s| s == 20.0));
    assert!(v.student.iter().zip(&clean).all(|(s, c)| s != c));
}

#[test]
fn both_setup_draws_independent_plans() {
    let clean = corpus(6, 2);
    let v = sample_views(&clean, Setup::Both, &DistortionPolicy::default(), 4).unwrap();
    for (t, s) in v.teacher_plans.iter().zip(&v.student_plans) {
        assert_ne!(t, s);
    }
}

#[test]
fn recorded_snr_stays_in_range() {
    let clean = corpus(4, 3);
    for seed in 0..10 {
        let v = sample_views(&clean, Setup::Both, &DistortionPolicy::default(), seed).unwrap();
        for &s in v.student_snr_db.iter().chain(&v.teacher_snr_db) {
            assert!((SNR_MIN_DB..=20.0).contains(&s), "{s}");
        }
    }
    assert!(sample_views(&[], Setup::Both, &DistortionPolicy::default(), 0).is_err());
}

#[test]
fn config_validation() {
    assert!(tiny_config().validate().is_ok());
    let bad = TrainingConfig {
        batch_size: 1,
        ..tiny_config()
    };
    assert!(matches!(bad.validate(), Err(Error::BatchSize { .. })));
    let kd = TrainingConfig {
        loss: LossKind::Kd,
        ..bad
    };
    assert!(kd.validate().is_ok());
    assert!(TrainingConfig {
        steps: 0,
        ..tiny_config()
    }
    .validate()
    .is_err());
    assert_eq!("bt_reference".parse::<LossKind>().unwrap(), LossKind::BtReference);
    assert!("both ".parse::<Setup>().is_err());
}

#[test]
fn zero_learning_rate_leaves_student_unchanged() {
    let teacher = tiny_teacher();
    let student = init_student_from_teacher(&teacher, HeadInit::Uniform, 1).unwrap();
    let cfg = TrainingConfig {
        steps: 1,
        learning_rate: 0.0,
        ..tiny_config()
    };
    let data = corpus(5, 4);
    let out = train_distill(&cfg, &teacher, student.clone(), &data, &data[..2], &mut ()).unwrap();
    assert_eq!(out.student, student);
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.checkpoints.len(), 1);
}

#[test]
fn runs_are_deterministic_and_teacher_is_frozen() {
    let teacher = tiny_teacher();
    let before = param_blob(teacher.named_params().into_iter().map(|(_, t)| t));
    let student = init_student_from_teacher(&teacher, HeadInit::Uniform, 1).unwrap();
    let cfg = TrainingConfig {
        weights: crate::losses::LossWeights {
            heuristic: true,
            ..Default::default()
        },
        ..tiny_config()
    };
    let data = corpus(5, 5);
    let a = train_distill(&cfg, &teacher, student.clone(), &data, &data[..2], &mut ()).unwrap();
    let b = train_distill(&cfg, &teacher, student.clone(), &data, &data[..2], &mut ()).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.student, b.student);
    assert_ne!(a.student, student);
    let steps: Vec<usize> = a.records.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![1, 2, 3, 4]);
    let ckpt: Vec<usize> = a.checkpoints.iter().map(|c| c.step).collect();
    assert_eq!(ckpt, vec![2, 4]);
    assert_eq!(before, param_blob(teacher.named_params().into_iter().map(|(_, t)| t)));
}

#[test]
fn heuristic_weights_follow_view_snr_exactly() {
    let teacher = tiny_teacher();
    let student = init_student_from_teacher(&teacher, HeadInit::Uniform, 1).unwrap();
    let cfg = TrainingConfig {
        weights: crate::losses::LossWeights {
            heuristic: true,
            ..Default::default()
        },
        ..tiny_config()
    };
    let data = corpus(5, 6);
    let out = train_distill(&cfg, &teacher, student, &data, &data[..2], &mut ()).unwrap();
    for r in &out.records {
        assert_eq!(r.report.lambda_sc_eff, Some(heuristic_lambda(r.student_snr_db)));
        assert_eq!(r.report.lambda_cc_eff, Some(heuristic_lambda(r.teacher_snr_db)));
    }
}

#[test]
fn oracle_invariant_teacher_sees_clean_input() {
    let teacher = tiny_teacher();
    let student = init_student_from_teacher(&teacher, HeadInit::Uniform, 1).unwrap();
    let cfg = TrainingConfig {
        teacher_mode: TeacherMode::OracleInvariant,
        ..tiny_config()
    };
    let data = corpus(5, 7);
    let out = train_distill(&cfg, &teacher, student, &data, &data[..2], &mut ()).unwrap();
    assert!(out.records.iter().all(|r| r.teacher_snr_db == 20.0));
}

#[test]
fn dev_loss_matches_direct_recomputation() {
    let teacher = tiny_teacher();
    let student = init_student_from_teacher(&teacher, HeadInit::Identity, 0).unwrap();
    let cfg = TrainingConfig {
        loss: LossKind::Kd,
        weights: crate::losses::LossWeights {
            gamma: 0.0,
            ..Default::default()
        },
        ..tiny_config()
    };
    let dev = corpus(3, 8);
    let got = evaluate_dev_loss(&student, &teacher, &dev, &cfg).unwrap();

    let featurizer = Featurizer::new(&cfg.features).unwrap();
    let mut total = 0.0;
    for a in &dev {
        let clip = crate::corpus::fixed_length(a, 0, cfg.segment_len()).unwrap();
        let hidden = teacher.hidden_states(&featurizer.features(&clip).unwrap()).unwrap();
        let z = &hidden[1];
        let (t, d) = (z.shape()[0], z.shape()[1]);
        for &layer in &teacher.target_layers() {
            let h = &hidden[layer - 1];
            for i in 0..t {
                let l1: f64 = (0..d).map(|j| (h.get(&[i, j]) - z.get(&[i, j])).abs()).sum();
                total += l1 / d as f64;
            }
        }
    }
    let want = total / dev.len() as f64;
    assert!((got - want).abs() < 1e-10 * want.max(1.0), "{got} vs {want}");

    let mut reversed = dev.clone();
    reversed.reverse();
    let again = evaluate_dev_loss(&student, &teacher, &reversed, &cfg).unwrap();
    assert!((again - got).abs() < 1e-12 * got.max(1.0));
    assert_eq!(evaluate_dev_loss(&student, &teacher, &dev, &cfg).unwrap(), got);
    assert!(evaluate_dev_loss(&student, &teacher, &[], &cfg).is_err());
}

#[test]
fn tiny_step_descends_on_its_batch() {
    let teacher = tiny_teacher();
    let data = corpus(5, 9);
    for loss in [LossKind::Kd, LossKind::Cl, LossKind::BtReference] {
        let mut student = init_student_from_teacher(&teacher, HeadInit::Uniform, 2).unwrap();
        let cfg = TrainingConfig {
            loss,
            learning_rate: 1e-6,
            ..tiny_config()
        };
        let mut trainer = Trainer::new(cfg, &teacher, &data).unwrap();
        let batch = trainer.prepare_batch(1).unwrap();
        let before = trainer.apply_step(&mut student, &batch).unwrap().l_total;
        let after = trainer.evaluate_batch(&student, &batch).unwrap().l_total;
        assert!(before - after >= 0.0, "{loss}: {before} -> {after}");
    }
}

#[test]
fn checkpoint_selection() {
    let recs = vec![record(100, Some(3.0)), record(200, Some(2.1)), record(300, Some(2.5))];
    assert_eq!(select_checkpoint(&recs, &[100, 200, 300]).unwrap(), 200);
    let tie = vec![record(100, Some(2.0)), record(150, None), record(200, Some(2.0))];
    assert_eq!(select_checkpoint(&tie, &[100, 200]).unwrap(), 100);
    assert_eq!(select_checkpoint(&recs[2..], &[300]).unwrap(), 300);
    assert!(select_checkpoint(&recs, &[]).is_err());
    assert!(select_checkpoint(&[record(1, None)], &[1]).is_err());
}

#[test]
fn smoothing_is_a_trailing_mean() {
    assert_eq!(smoothed(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    assert_eq!(smoothed(&[], 3), Vec::<f64>::new());
}
