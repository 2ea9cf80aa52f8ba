//! Flat `key = value` run configuration shared by the config file and the
//! command-line flags.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use corrkd::models::{EncoderConfig, HeadInit};
use corrkd::probe::ForestConfig;
use corrkd::rng::derive_seed;
use corrkd::trainer::TrainingConfig;

/// Synthetic corpus sizes and seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub synthetic_utterances: usize,
    pub synthetic_duration_s: f64,
    pub corpus_seed: u64,
    /// utterances held out for dev-loss checkpoint selection
    pub dev_utterances: usize,
    pub probe_utterances: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            synthetic_utterances: 256,
            synthetic_duration_s: 1.0,
            corpus_seed: 0,
            dev_utterances: 16,
            probe_utterances: 100,
        }
    }
}

impl CorpusConfig {
    pub fn train_seed(&self) -> u64 {
        derive_seed(self.corpus_seed, &[0])
    }

    pub fn dev_seed(&self) -> u64 {
        derive_seed(self.corpus_seed, &[1])
    }

    pub fn probe_seed(&self) -> u64 {
        derive_seed(self.corpus_seed, &[2])
    }
}

/// Every setting a command can take.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub training: TrainingConfig,
    pub head_init: HeadInit,
    /// teacher architecture; its input size always equals `n_mels`
    pub teacher: EncoderConfig,
    pub corpus: CorpusConfig,
    pub forest: ForestConfig,
    /// seed of the probe's distortions and split
    pub probe_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig::default(),
            head_init: HeadInit::default(),
            teacher: EncoderConfig::teacher(),
            corpus: CorpusConfig::default(),
            forest: ForestConfig::default(),
            probe_seed: 0,
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("setup", "which views are distorted: student_only | both"),
    ("loss", "training objective: kd | cl | bt_reference"),
    ("teacher_mode", "noise_variant, or oracle_invariant (teacher always sees clean audio)"),
    ("steps", "optimization steps"),
    ("batch_size", "utterances per step (at least 2 for cl and bt_reference)"),
    ("lr", "Adam learning rate"),
    ("seed", "training seed: batches, crops, views"),
    ("dev_eval_every", "dev-loss evaluation and checkpoint interval, in steps"),
    ("segment_s", "training crop length in seconds"),
    ("head_init", "prediction head initialization: uniform | identity"),
    ("gamma", "weight of the cosine term"),
    ("lambda_cc", "off-diagonal weight of the cross-correlation term"),
    ("lambda_sc", "off-diagonal weight of the self-correlation term"),
    ("heuristic", "derive lambda_cc / lambda_sc from view SNR each step: true | false"),
    ("standardization", "batch statistics used by the correlation matrices: full | mean_only"),
    ("bt_lambda", "off-diagonal weight of the Barlow Twins reference loss"),
    ("noise_gaussian", "sampling weight of gaussian noise"),
    ("noise_white", "sampling weight of uniform white noise"),
    ("noise_pink", "sampling weight of pink noise"),
    ("noise_babble", "sampling weight of babble noise"),
    ("non_additive_prob", "chance of a non-additive effect before the noise"),
    ("effect_reverb", "sampling weight of reverberation"),
    ("effect_pitch_shift", "sampling weight of pitch shifting"),
    ("effect_band_reject", "sampling weight of band rejection"),
    ("sample_rate_hz", "audio sample rate"),
    ("n_mels", "log-mel bands (model input size)"),
    ("frame_ms", "analysis window length"),
    ("hop_ms", "analysis hop"),
    ("model_dim", "encoder width"),
    ("n_blocks", "teacher depth (multiple of 3)"),
    ("n_heads", "attention heads"),
    ("mlp_dim", "feed-forward width"),
    ("teacher_seed", "teacher weight seed"),
    ("synthetic_utterances", "training utterances in the synthetic corpus"),
    ("synthetic_duration_s", "length of each synthetic utterance"),
    ("corpus_seed", "seed of the synthetic training, dev and probe corpora"),
    ("dev_utterances", "held-out utterances for dev loss"),
    ("probe_utterances", "utterances in the synthetic probe corpus"),
    ("n_trees", "random forest size"),
    ("max_depth", "maximum tree depth"),
    ("max_features", "features tried per split, or auto for ceil(sqrt(D))"),
    ("forest_seed", "random forest seed"),
    ("probe_seed", "seed of the probe distortions and train/test split"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value {value:?} for key `{key}`: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("invalid value {value:?} for key `{key}`: expected true or false"),
    }
}

impl RunConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.training;
        let w = &mut t.weights;
        let p = &mut t.policy;
        match key {
            "setup" => t.setup = parse(key, v)?,
            "loss" => t.loss = parse(key, v)?,
            "teacher_mode" => t.teacher_mode = parse(key, v)?,
            "steps" => t.steps = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "lr" => t.learning_rate = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "dev_eval_every" => t.dev_eval_every = parse(key, v)?,
            "segment_s" => t.segment_s = parse(key, v)?,
            "head_init" => self.head_init = parse(key, v)?,
            "gamma" => w.gamma = parse(key, v)?,
            "lambda_cc" => w.lambda_cc = parse(key, v)?,
            "lambda_sc" => w.lambda_sc = parse(key, v)?,
            "heuristic" => w.heuristic = parse_bool(key, v)?,
            "standardization" => w.standardization = parse(key, v)?,
            "bt_lambda" => t.bt_lambda = parse(key, v)?,
            "noise_gaussian" => p.gaussian = parse(key, v)?,
            "noise_white" => p.white = parse(key, v)?,
            "noise_pink" => p.pink = parse(key, v)?,
            "noise_babble" => p.babble = parse(key, v)?,
            "non_additive_prob" => p.non_additive_prob = parse(key, v)?,
            "effect_reverb" => p.reverb = parse(key, v)?,
            "effect_pitch_shift" => p.pitch_shift = parse(key, v)?,
            "effect_band_reject" => p.band_reject = parse(key, v)?,
            "sample_rate_hz" => t.features.sample_rate_hz = parse(key, v)?,
            "n_mels" => t.features.n_mels = parse(key, v)?,
            "frame_ms" => t.features.frame_ms = parse(key, v)?,
            "hop_ms" => t.features.hop_ms = parse(key, v)?,
            "model_dim" => self.teacher.model_dim = parse(key, v)?,
            "n_blocks" => self.teacher.n_blocks = parse(key, v)?,
            "n_heads" => self.teacher.n_heads = parse(key, v)?,
            "mlp_dim" => self.teacher.mlp_dim = parse(key, v)?,
            "teacher_seed" => self.teacher.seed = parse(key, v)?,
            "synthetic_utterances" => self.corpus.synthetic_utterances = parse(key, v)?,
            "synthetic_duration_s" => self.corpus.synthetic_duration_s = parse(key, v)?,
            "corpus_seed" => self.corpus.corpus_seed = parse(key, v)?,
            "dev_utterances" => self.corpus.dev_utterances = parse(key, v)?,
            "probe_utterances" => self.corpus.probe_utterances = parse(key, v)?,
            "n_trees" => self.forest.n_trees = parse(key, v)?,
            "max_depth" => self.forest.max_depth = parse(key, v)?,
            "max_features" => {
                self.forest.max_features = match v {
                    "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "forest_seed" => self.forest.seed = parse(key, v)?,
            "probe_seed" => self.probe_seed = parse(key, v)?,
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    /// Current value of `key`, in the form [`set`](Self::set) accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.training;
        let w = &t.weights;
        let p = &t.policy;
        Some(match key {
            "setup" => t.setup.to_string(),
            "loss" => t.loss.to_string(),
            "teacher_mode" => t.teacher_mode.to_string(),
            "steps" => t.steps.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.learning_rate.to_string(),
            "seed" => t.seed.to_string(),
            "dev_eval_every" => t.dev_eval_every.to_string(),
            "segment_s" => t.segment_s.to_string(),
            "head_init" => self.head_init.to_string(),
            "gamma" => w.gamma.to_string(),
            "lambda_cc" => w.lambda_cc.to_string(),
            "lambda_sc" => w.lambda_sc.to_string(),
            "heuristic" => w.heuristic.to_string(),
            "standardization" => w.standardization.to_string(),
            "bt_lambda" => t.bt_lambda.to_string(),
            "noise_gaussian" => p.gaussian.to_string(),
            "noise_white" => p.white.to_string(),
            "noise_pink" => p.pink.to_string(),
            "noise_babble" => p.babble.to_string(),
            "non_additive_prob" => p.non_additive_prob.to_string(),
            "effect_reverb" => p.reverb.to_string(),
            "effect_pitch_shift" => p.pitch_shift.to_string(),
            "effect_band_reject" => p.band_reject.to_string(),
            "sample_rate_hz" => t.features.sample_rate_hz.to_string(),
            "n_mels" => t.features.n_mels.to_string(),
            "frame_ms" => t.features.frame_ms.to_string(),
            "hop_ms" => t.features.hop_ms.to_string(),
            "model_dim" => self.teacher.model_dim.to_string(),
            "n_blocks" => self.teacher.n_blocks.to_string(),
            "n_heads" => self.teacher.n_heads.to_string(),
            "mlp_dim" => self.teacher.mlp_dim.to_string(),
            "teacher_seed" => self.teacher.seed.to_string(),
            "synthetic_utterances" => self.corpus.synthetic_utterances.to_string(),
            "synthetic_duration_s" => self.corpus.synthetic_duration_s.to_string(),
            "corpus_seed" => self.corpus.corpus_seed.to_string(),
            "dev_utterances" => self.corpus.dev_utterances.to_string(),
            "probe_utterances" => self.corpus.probe_utterances.to_string(),
            "n_trees" => self.forest.n_trees.to_string(),
            "max_depth" => self.forest.max_depth.to_string(),
            "max_features" => self
                .forest
                .max_features
                .map_or_else(|| "auto".to_string(), |m| m.to_string()),
            "forest_seed" => self.forest.seed.to_string(),
            "probe_seed" => self.probe_seed.to_string(),
            _ => return None,
        })
    }

    /// Defaults overridden by the `key = value` lines of `text`. `#` starts a
    /// comment; a key may appear at most once.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                bail!("line {}: key `{key}` given twice", n + 1);
            }
            cfg.set(key, value).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(cfg)
    }

    /// Every key with its current value, one per line, in [`KEYS`] order.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Teacher architecture with the input size tied to the front end.
    pub fn teacher_config(&self) -> EncoderConfig {
        EncoderConfig {
            input_dim: self.training.features.n_mels,
            ..self.teacher.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.teacher_config().validate()?;
        self.forest.validate()?;
        if self.corpus.synthetic_utterances == 0 {
            bail!("synthetic_utterances must be at least 1");
        }
        if !(self.corpus.synthetic_duration_s > 0.0) {
            bail!("synthetic_duration_s must be positive");
        }
        if self.corpus.dev_utterances == 0 {
            bail!("dev_utterances must be at least 1");
        }
        if self.corpus.probe_utterances < 2 {
            bail!("probe_utterances must be at least 2");
        }
        Ok(())
    }
}
