//! Noise-invariance probe: embed the same utterances under several
//! distortions, mean-pool over time and check how well a random forest can
//! tell the distortions apart. Lower accuracy means a more noise-invariant
//! representation.

mod forest;

pub use forest::{Forest, ForestConfig};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{apply_plan, AudioBuffer, Distortion, DistortionPlan, NoiseKind, SNR_MAX_DB, SNR_MIN_DB};
use crate::error::{Error, Result};
use crate::models::{StudentModel, TeacherModel};
use crate::rng::rng_for;
use crate::tensor::Tensor;
use crate::trainer::{Featurizer, RT60_RANGE_S};

/// Share of utterances held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

/// Distortion applied to build one probe class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeClass {
    Babble,
    Pink,
    Reverb,
    Gaussian,
}

impl ProbeClass {
    pub const DEFAULT: [ProbeClass; 4] = [
        ProbeClass::Babble,
        ProbeClass::Pink,
        ProbeClass::Reverb,
        ProbeClass::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeClass::Babble => "babble",
            ProbeClass::Pink => "pink",
            ProbeClass::Reverb => "reverb",
            ProbeClass::Gaussian => "gaussian",
        }
    }

    /// A random instance of this class's distortion.
    pub fn sample_plan<R: Rng>(self, rng: &mut R) -> Result<DistortionPlan> {
        let spec = match self {
            ProbeClass::Reverb => Distortion::Reverb {
                rt60_s: rng.gen_range(RT60_RANGE_S.0..=RT60_RANGE_S.1),
            },
            additive => Distortion::Noise {
                noise: match additive {
                    ProbeClass::Babble => NoiseKind::Babble,
                    ProbeClass::Pink => NoiseKind::Pink,
                    _ => NoiseKind::Gaussian,
                },
                snr_db: rng.gen_range(SNR_MIN_DB..SNR_MAX_DB),
            },
        };
        DistortionPlan::new(vec![spec], rng.gen())
    }
}

impl fmt::Display for ProbeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::DEFAULT
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown probe class {s:?}")))
    }
}

/// Anything that maps `[T, F]` features to `[T, D]` frame representations.
pub trait Embedder {
    fn embed_frames(&self, features: &Tensor) -> Result<Tensor>;
}

/// The student's last hidden layer.
impl Embedder for StudentModel {
    fn embed_frames(&self, features: &Tensor) -> Result<Tensor> {
        self.embed(features)
    }
}

/// The teacher's last hidden layer.
impl Embedder for TeacherModel {
    fn embed_frames(&self, features: &Tensor) -> Result<Tensor> {
        Ok(self
            .hidden_states(features)?
            .pop()
            .expect("teacher has blocks"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Mean-pooled embeddings with distortion labels and a train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDataset {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub classes: Vec<ProbeClass>,
}

/// Vectors and labels of one split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Samples {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl ProbeDataset {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn subset(&self, which: Split) -> Samples {
        let mut out = Samples::default();
        for ((v, &l), &s) in self.vectors.iter().zip(&self.labels).zip(&self.split) {
            if s == which {
                out.vectors.push(v.clone());
                out.labels.push(l);
            }
        }
        out
    }

    /// Same labels and split with every vector replaced by `f(index)`; used for
    /// chance-level checks.
    pub fn with_vectors(&self, mut f: impl FnMut(usize) -> Vec<f64>) -> Self {
        Self {
            vectors: (0..self.vectors.len()).map(&mut f).collect(),
            ..self.clone()
        }
    }
}

fn mean_pool(frames: &Tensor) -> Result<Vec<f64>> {
    let &[t, d] = frames.shape() else {
        return Err(Error::shape("mean pool", &[0, 0], frames.shape()));
    };
    if t == 0 {
        return Err(Error::Degenerate("no frames to pool".into()));
    }
    let mut out = vec![0.0; d];
    for row in frames.data().chunks(d) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(out.into_iter().map(|v| v / t as f64).collect())
}

/// Embed every utterance once per class. Test utterances are chosen per
/// utterance (all of its versions go to the same split), so each class gets
/// the same number of train and test vectors.
pub fn build_probe_dataset(
    model: &dyn Embedder,
    featurizer: &Featurizer,
    corpus: &[AudioBuffer],
    classes: &[ProbeClass],
    seed: u64,
) -> Result<ProbeDataset> {
    if corpus.len() < 2 {
        return Err(Error::Argument(format!(
            "probe needs at least 2 utterances per class, got {}",
            corpus.len()
        )));
    }
    if classes.len() < 2 {
        return Err(Error::Argument("probe needs at least 2 classes".into()));
    }
    let n = corpus.len();
    let n_test = ((n as f64 * TEST_FRACTION).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[0x5b17]));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }

    let mut data = ProbeDataset {
        vectors: Vec::with_capacity(n * classes.len()),
        labels: Vec::with_capacity(n * classes.len()),
        split: Vec::with_capacity(n * classes.len()),
        classes: classes.to_vec(),
    };
    for (u, audio) in corpus.iter().enumerate() {
        for (c, class) in classes.iter().enumerate() {
            let plan = class.sample_plan(&mut rng_for(seed, &[0x9c1a, u as u64, c as u64]))?;
            let distorted = apply_plan(audio, &plan)?;
            let frames = model.embed_frames(&featurizer.features(&distorted)?)?;
            data.vectors.push(mean_pool(&frames)?);
            data.labels.push(c);
            data.split.push(if is_test[u] { Split::Test } else { Split::Train });
        }
    }
    Ok(data)
}

/// Fit a forest on the training split.
pub fn forest_train(data: &ProbeDataset, config: &ForestConfig) -> Result<Forest> {
    let train = data.subset(Split::Train);
    if train.vectors.is_empty() {
        return Err(Error::Argument("empty training split".into()));
    }
    Forest::fit(&train.vectors, &train.labels, data.n_classes(), config)
}

/// Probe result record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub overall_acc: f64,
    /// `None` for a class with no test examples
    pub acc_per_class: Vec<Option<f64>>,
    pub n_trees: usize,
    pub seed: u64,
}

/// Accuracy of `forest` on the test split.
pub fn probe_accuracy(forest: &Forest, data: &ProbeDataset) -> Result<ProbeReport> {
    let test = data.subset(Split::Test);
    if test.vectors.is_empty() {
        return Err(Error::Argument("empty test split".into()));
    }
    let k = forest.n_classes();
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    for (v, &l) in test.vectors.iter().zip(&test.labels) {
        totals[l] += 1;
        if forest.predict(v)? == l {
            hits[l] += 1;
        }
    }
    Ok(ProbeReport {
        overall_acc: hits.iter().sum::<usize>() as f64 / test.vectors.len() as f64,
        acc_per_class: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        n_trees: forest.config().n_trees,
        seed: forest.config().seed,
    })
}
