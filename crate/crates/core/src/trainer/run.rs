use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::fixed_length;
use crate::dsp::{AudioBuffer, SNR_MAX_DB};
use crate::error::{Error, Result};
use crate::losses::{bt_reference_loss, cl_loss, kd_terms, EffectiveWeights, LossReport};
use crate::models::{StudentModel, TeacherModel, TeacherMode};
use crate::rng::rng_for;
use crate::tensor::Tensor;

use super::views::sample_views_for;
use super::{stack_rows, Adam, Featurizer, LossKind, Setup, TrainingConfig};

const TAG_BATCH: u64 = 0xba7c;
const TAG_VIEWS: u64 = 0x71e3;

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: usize,
    #[serde(flatten)]
    pub report: LossReport,
    pub dev_loss: Option<f64>,
    pub student_snr_db: f64,
    pub teacher_snr_db: f64,
}

/// Student snapshot taken at a dev evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub dev_loss: f64,
    pub model: StudentModel,
}

/// Hooks called as training progresses, e.g. to stream the log to disk.
pub trait TrainObserver {
    fn on_record(&mut self, _record: &RunRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Model inputs and targets for one optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[B, T, F]`
    pub student_features: Tensor,
    /// `[B, P, T, D]`
    pub teacher_targets: Tensor,
    pub weights: EffectiveWeights,
    pub student_snr_db: f64,
    pub teacher_snr_db: f64,
}

/// Compute the configured loss and its report on `tape`.
fn record_loss(
    tape: &Tape,
    kind: LossKind,
    bt_lambda: f64,
    student: Var,
    teacher: Var,
    w: EffectiveWeights,
) -> Result<(Var, LossReport)> {
    match kind {
        LossKind::Kd => {
            let t = kd_terms(tape, student, teacher, w.gamma)?;
            let report = LossReport {
                l_cos: Some(tape.item(t.cos)?),
                l_total: tape.item(t.total)?,
                ..LossReport::default()
            };
            Ok((t.total, report))
        }
        LossKind::Cl => {
            let t = cl_loss(tape, student, teacher, w)?;
            Ok((t.total, t.report(tape, w)?))
        }
        LossKind::BtReference => {
            let l = bt_reference_loss(tape, student, teacher, bt_lambda)?;
            let report = LossReport {
                l_total: tape.item(l)?,
                ..LossReport::default()
            };
            Ok((l, report))
        }
    }
}

/// Clean dev utterances with their teacher targets precomputed.
pub struct DevSet {
    features: Tensor,
    targets: Tensor,
}

impl DevSet {
    pub fn new(
        teacher: &TeacherModel,
        dev: &[AudioBuffer],
        featurizer: &Featurizer,
        segment_len: usize,
    ) -> Result<Self> {
        if dev.is_empty() {
            return Err(Error::Argument("empty dev corpus".into()));
        }
        let clips = dev
            .iter()
            .map(|a| fixed_length(a, 0, segment_len))
            .collect::<Result<Vec<_>>>()?;
        let features = featurizer.batch(&clips)?;
        let targets = teacher.targets(&features)?;
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The configured loss over the whole set as one batch, both models on
    /// clean inputs.
    pub fn loss(&self, student: &StudentModel, config: &TrainingConfig) -> Result<f64> {
        let tape = Tape::new();
        let fwd = student.forward(&tape, &self.features)?;
        let h = tape.constant(self.targets.clone());
        let w = config.weights.effective(SNR_MAX_DB, SNR_MAX_DB);
        let (_, report) = record_loss(&tape, config.loss, config.bt_lambda, fwd.predictions, h, w)?;
        Ok(report.l_total)
    }
}

/// The configured loss on clean dev audio; see [`DevSet::loss`].
pub fn evaluate_dev_loss(
    student: &StudentModel,
    teacher: &TeacherModel,
    dev: &[AudioBuffer],
    config: &TrainingConfig,
) -> Result<f64> {
    let featurizer = Featurizer::new(&config.features)?;
    DevSet::new(teacher, dev, &featurizer, config.segment_len())?.loss(student, config)
}

/// Holds everything a run needs besides the student being trained.
pub struct Trainer<'a> {
    config: TrainingConfig,
    teacher: &'a TeacherModel,
    corpus: &'a [AudioBuffer],
    featurizer: Featurizer,
    optimizer: Adam,
    /// teacher targets of clean crops, keyed by (utterance, offset)
    clean_targets: HashMap<(usize, usize), Tensor>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: TrainingConfig,
        teacher: &'a TeacherModel,
        corpus: &'a [AudioBuffer],
    ) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::Argument("empty training corpus".into()));
        }
        if teacher.config().input_dim != config.features.n_mels {
            return Err(Error::Argument(format!(
                "teacher expects {} features, front end produces {}",
                teacher.config().input_dim,
                config.features.n_mels
            )));
        }
        if let Some(a) = corpus
            .iter()
            .find(|a| a.sample_rate_hz() != config.features.sample_rate_hz)
        {
            return Err(Error::Argument(format!(
                "corpus audio at {} Hz, configured {} Hz",
                a.sample_rate_hz(),
                config.features.sample_rate_hz
            )));
        }
        Ok(Self {
            featurizer: Featurizer::new(&config.features)?,
            optimizer: Adam::new(config.learning_rate),
            config,
            teacher,
            corpus,
            clean_targets: HashMap::new(),
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    fn teacher_sees_clean(&self) -> bool {
        self.config.setup == Setup::StudentOnly
            || self.config.teacher_mode == TeacherMode::OracleInvariant
    }

    /// Draw the utterances, crops and views for `step` (1-based).
    pub fn prepare_batch(&mut self, step: usize) -> Result<Batch> {
        let cfg = &self.config;
        let seg = cfg.segment_len();
        let mut rng = rng_for(cfg.seed, &[TAG_BATCH, step as u64]);
        let n = self.corpus.len();
        let picks: Vec<usize> = if cfg.batch_size <= n {
            rand::seq::index::sample(&mut rng, n, cfg.batch_size).into_vec()
        } else {
            use rand::Rng;
            (0..cfg.batch_size).map(|_| rng.gen_range(0..n)).collect()
        };
        let mut keys = Vec::with_capacity(picks.len());
        let mut clips = Vec::with_capacity(picks.len());
        for &i in &picks {
            use rand::Rng;
            let a = &self.corpus[i];
            let offset = if a.len() > seg {
                rng.gen_range(0..=a.len() - seg)
            } else {
                0
            };
            keys.push((i, offset));
            clips.push(fixed_length(a, offset, seg)?);
        }

        let clean_teacher = self.teacher_sees_clean();
        let views = sample_views_for(
            &clips,
            cfg.setup,
            &cfg.policy,
            crate::rng::derive_seed(cfg.seed, &[TAG_VIEWS, step as u64]),
            !clean_teacher,
        )?;
        let student_features = self.featurizer.batch(&views.student)?;
        let teacher_targets = if clean_teacher {
            let mut rows = Vec::with_capacity(keys.len());
            for (key, clip) in keys.iter().zip(&clips) {
                if !self.clean_targets.contains_key(key) {
                    let f = self.featurizer.features(clip)?;
                    let t = self.teacher.forward(&f)?;
                    self.clean_targets.insert(*key, stack_rows(&t)?);
                }
                rows.push(self.clean_targets[key].clone());
            }
            stack_rows(&rows)?
        } else {
            self.teacher.targets(&self.featurizer.batch(&views.teacher)?)?
        };

        let teacher_snr_db = views.mean_teacher_snr_db();
        let student_snr_db = views.mean_student_snr_db();
        Ok(Batch {
            student_features,
            teacher_targets,
            weights: self.config.weights.effective(teacher_snr_db, student_snr_db),
            student_snr_db,
            teacher_snr_db,
        })
    }

    /// Loss and report of `student` on `batch` without updating anything.
    pub fn evaluate_batch(&self, student: &StudentModel, batch: &Batch) -> Result<LossReport> {
        let tape = Tape::new();
        let fwd = student.forward(&tape, &batch.student_features)?;
        let h = tape.constant(batch.teacher_targets.clone());
        record_loss(&tape, self.config.loss, self.config.bt_lambda, fwd.predictions, h, batch.weights)
            .map(|(_, r)| r)
    }

    /// One optimization step on `batch`. The report describes the loss before
    /// the update. A non-finite loss leaves the student untouched and returns
    /// the report as an error.
    pub fn apply_step(&mut self, student: &mut StudentModel, batch: &Batch) -> Result<LossReport> {
        let tape = Tape::new();
        let fwd = student.forward(&tape, &batch.student_features)?;
        let h = tape.constant(batch.teacher_targets.clone());
        let (loss, report) = record_loss(
            &tape,
            self.config.loss,
            self.config.bt_lambda,
            fwd.predictions,
            h,
            batch.weights,
        )?;
        if !report.l_total.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss: {report:?}")));
        }
        let grads = tape.backward(loss)?;
        let g: Vec<Tensor> = fwd
            .params
            .named()
            .into_iter()
            .map(|(_, v)| grads.get_or_zeros(*v, &tape.shape(*v)))
            .collect();
        if let Some(bad) = g.iter().position(|t| !t.all_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient for {}",
                fwd.params.named()[bad].0
            )));
        }
        self.optimizer.step(student.params_mut().iter_mut(), &g)?;
        Ok(report)
    }
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// the student after the last step
    pub student: StudentModel,
    pub records: Vec<RunRecord>,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainOutcome {
    /// Checkpoint with the lowest dev loss.
    pub fn selected(&self) -> Result<&Checkpoint> {
        let steps: Vec<usize> = self.checkpoints.iter().map(|c| c.step).collect();
        let step = select_checkpoint(&self.records, &steps)?;
        Ok(self
            .checkpoints
            .iter()
            .find(|c| c.step == step)
            .expect("selected from this list"))
    }
}

/// Train `student` against the frozen `teacher`.
///
/// Every step appends one record; every `dev_eval_every` steps and at the
/// final step the dev loss is evaluated and a checkpoint is taken. A
/// non-finite loss aborts the run after reporting a diagnostic record.
pub fn train_distill(
    config: &TrainingConfig,
    teacher: &TeacherModel,
    mut student: StudentModel,
    corpus: &[AudioBuffer],
    dev: &[AudioBuffer],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), teacher, corpus)?;
    if config.loss != LossKind::Kd && dev.len() < 2 {
        return Err(Error::BatchSize {
            op: "dev loss",
            got: dev.len(),
            min: 2,
        });
    }
    let dev_set = DevSet::new(teacher, dev, &trainer.featurizer, config.segment_len())?;
    let mut records = Vec::with_capacity(config.steps);
    let mut checkpoints = Vec::new();

    for step in 1..=config.steps {
        let batch = trainer.prepare_batch(step)?;
        let report = match trainer.apply_step(&mut student, &batch) {
            Ok(r) => r,
            Err(e) => {
                let diagnostic = RunRecord {
                    step,
                    report: trainer.evaluate_batch(&student, &batch).unwrap_or_default(),
                    dev_loss: None,
                    student_snr_db: batch.student_snr_db,
                    teacher_snr_db: batch.teacher_snr_db,
                };
                observer.on_record(&diagnostic)?;
                return Err(Error::Numerical(format!("step {step}: {e}")));
            }
        };
        let dev_loss = if step % config.dev_eval_every == 0 || step == config.steps {
            Some(dev_set.loss(&student, config)?)
        } else {
            None
        };
        let record = RunRecord {
            step,
            report,
            dev_loss,
            student_snr_db: batch.student_snr_db,
            teacher_snr_db: batch.teacher_snr_db,
        };
        observer.on_record(&record)?;
        records.push(record);
        if let Some(dev_loss) = dev_loss {
            let ckpt = Checkpoint {
                step,
                dev_loss,
                model: student.clone(),
            };
            observer.on_checkpoint(&ckpt)?;
            log::info!("step {step}: dev loss {dev_loss:.6}");
            checkpoints.push(ckpt);
        }
    }
    Ok(TrainOutcome {
        student,
        records,
        checkpoints,
    })
}

/// Step of the checkpoint with the lowest dev loss; ties go to the earliest
/// step. Records without a dev loss or a NaN one are ignored.
pub fn select_checkpoint(records: &[RunRecord], checkpoint_steps: &[usize]) -> Result<usize> {
    records
        .iter()
        .filter(|r| checkpoint_steps.contains(&r.step))
        .filter_map(|r| r.dev_loss.filter(|d| !d.is_nan()).map(|d| (r.step, d)))
        .fold(None, |best: Option<(usize, f64)>, (step, d)| match best {
            Some((bs, bd)) if bd < d || (bd == d && bs <= step) => Some((bs, bd)),
            _ => Some((step, d)),
        })
        .map(|(step, _)| step)
        .ok_or_else(|| Error::Argument("no checkpoint has a dev loss".into()))
}

/// Trailing moving average of `values` over `window` entries.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}
