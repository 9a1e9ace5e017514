use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Seq2seq,
    Cvae,
    CvaeBow,
    KmeansCvaeBow,
    Sepacvae,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Seq2seq,
        Variant::Cvae,
        Variant::CvaeBow,
        Variant::KmeansCvaeBow,
        Variant::Sepacvae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Seq2seq => "seq2seq",
            Variant::Cvae => "cvae",
            Variant::CvaeBow => "cvae_bow",
            Variant::KmeansCvaeBow => "kmeans_cvae_bow",
            Variant::Sepacvae => "sepacvae",
        }
    }

    pub fn uses_bow(self) -> bool {
        matches!(self, Variant::CvaeBow | Variant::KmeansCvaeBow)
    }

    pub fn uses_latent(self) -> bool {
        self != Variant::Seq2seq
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant '{s}'")))
    }
}

/// Everything a run needs. Parsed from flat `key = value` text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    /// Number of groups `N` (also `K` of the K-means baseline).
    pub groups: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub layers: usize,
    pub max_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Stop after this many batches (0: no limit).
    pub max_batches: u64,
    pub warmup_batches: u64,
    pub seed: u64,
    /// Largest vocabulary including the reserved tokens.
    pub vocab_size: usize,
    pub group_scale: f64,
    pub averaged_positives: bool,
    /// Global gradient-norm clip (0: off).
    pub clip_norm: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub parallel: bool,
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sepacvae,
            groups: 4,
            embed_dim: 32,
            hidden: 32,
            latent: 16,
            layers: 1,
            max_len: 25,
            batch_size: 16,
            learning_rate: 0.001,
            epochs: 50,
            max_batches: 0,
            warmup_batches: 10_000,
            seed: 7,
            vocab_size: 512,
            group_scale: 1.0,
            averaged_positives: false,
            clip_norm: 5.0,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            parallel: true,
            corpus: None,
            embeddings: None,
            output: PathBuf::from("runs/default"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("invalid value '{value}' for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for {key}"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "variant" | "model_variant" => self.variant = v.parse()?,
            "groups" | "n" => self.groups = parse_value(key, v)?,
            "embed_dim" | "m" => self.embed_dim = parse_value(key, v)?,
            "hidden" => self.hidden = parse_value(key, v)?,
            "latent" => self.latent = parse_value(key, v)?,
            "layers" => self.layers = parse_value(key, v)?,
            "max_len" => self.max_len = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "max_batches" => self.max_batches = parse_value(key, v)?,
            "warmup_batches" => self.warmup_batches = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "vocab_size" => self.vocab_size = parse_value(key, v)?,
            "group_scale" => self.group_scale = parse_value(key, v)?,
            "averaged_positives" => self.averaged_positives = parse_bool(key, v)?,
            "clip_norm" => self.clip_norm = parse_value(key, v)?,
            "valid_fraction" => self.valid_fraction = parse_value(key, v)?,
            "test_fraction" => self.test_fraction = parse_value(key, v)?,
            "parallel" => self.parallel = parse_bool(key, v)?,
            "corpus" => self.corpus = optional_path(v),
            "embeddings" => self.embeddings = optional_path(v),
            "output" => self.output = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                message: "expected key = value".into(),
            })?;
            cfg.set(k, v).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Renders the configuration in the format [`RunConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        format!(
            "variant = {}\ngroups = {}\nembed_dim = {}\nhidden = {}\nlatent = {}\nlayers = {}\n\
             max_len = {}\nbatch_size = {}\nlearning_rate = {}\nepochs = {}\nmax_batches = {}\n\
             warmup_batches = {}\nseed = {}\nvocab_size = {}\ngroup_scale = {}\n\
             averaged_positives = {}\nclip_norm = {}\nvalid_fraction = {}\ntest_fraction = {}\n\
             parallel = {}\ncorpus = {}\nembeddings = {}\noutput = {}\n",
            self.variant,
            self.groups,
            self.embed_dim,
            self.hidden,
            self.latent,
            self.layers,
            self.max_len,
            self.batch_size,
            self.learning_rate,
            self.epochs,
            self.max_batches,
            self.warmup_batches,
            self.seed,
            self.vocab_size,
            self.group_scale,
            self.averaged_positives,
            self.clip_norm,
            self.valid_fraction,
            self.test_fraction,
            self.parallel,
            path(&self.corpus),
            path(&self.embeddings),
            self.output.display(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("groups", self.groups),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("layers", self.layers),
            ("max_len", self.max_len),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 || !self.group_scale.is_finite() {
            return Err(Error::Config("clip_norm must be non-negative and group_scale finite".into()));
        }
        let (v, t) = (self.valid_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return Err(Error::Config("split fractions must be in [0, 1) and sum below 1".into()));
        }
        if self.variant == Variant::Sepacvae && self.groups < 2 {
            return Err(Error::Config("sepacvae needs at least two groups".into()));
        }
        if matches!(self.variant, Variant::Sepacvae | Variant::KmeansCvaeBow) && self.groups > self.embed_dim {
            return Err(Error::Config(format!(
                "{} groups do not fit in embedding size {}",
                self.groups, self.embed_dim
            )));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            latent: self.latent,
            layers: self.layers,
            groups: self.groups,
            bow: self.variant.uses_bow(),
            seed: self.seed,
            zero_latent: self.variant == Variant::Seq2seq,
        }
    }
}
