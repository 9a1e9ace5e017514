use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::corpus::{load_embeddings, read_pair_file, DialoguePair, EmbeddingMatrix, TextPair, Vocab, RESERVED};
use crate::model::mix_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split '{s}'"))),
        }
    }
}

/// Encoded corpus split into train, validation and test pairs.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocab: Vocab,
    pub train: Vec<DialoguePair>,
    pub valid: Vec<DialoguePair>,
    pub test: Vec<DialoguePair>,
    /// Fixed word vectors from the configured embedding file.
    pub embeddings: Option<EmbeddingMatrix>,
}

impl Dataset {
    /// Shuffles pairs with the run seed, carves off the test and validation
    /// fractions, and builds the vocabulary from the training side only.
    pub fn from_pairs(pairs: &[TextPair], cfg: &RunConfig) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Format("corpus contains no pairs".into()));
        }
        let n = pairs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x5917])));
        let n_test = (n as f64 * cfg.test_fraction).round() as usize;
        let n_valid = (n as f64 * cfg.valid_fraction).round() as usize;
        if n_test + n_valid >= n {
            return Err(Error::Config(format!("{n} pairs leave nothing to train on")));
        }
        let mut test: Vec<usize> = order[..n_test].to_vec();
        let mut valid: Vec<usize> = order[n_test..n_test + n_valid].to_vec();
        let mut train: Vec<usize> = order[n_test + n_valid..].to_vec();
        for s in [&mut test, &mut valid, &mut train] {
            s.sort_unstable();
        }
        let sentences = train
            .iter()
            .flat_map(|&i| [pairs[i].context.as_str(), pairs[i].response.as_str()]);
        let limit = cfg.vocab_size.saturating_sub(RESERVED.len());
        let vocab = Vocab::build(sentences, Some(limit));
        let encode = |idx: &[usize]| -> Vec<DialoguePair> {
            idx.iter()
                .map(|&i| DialoguePair::encode(&vocab, &pairs[i].context, &pairs[i].response, cfg.max_len, i))
                .collect()
        };
        let (train, valid, test) = (encode(&train), encode(&valid), encode(&test));
        let embeddings = match &cfg.embeddings {
            Some(path) => Some(load_embeddings(path, &vocab, Some(cfg.embed_dim), cfg.seed)?),
            None => None,
        };
        Ok(Self {
            vocab,
            train,
            valid,
            test,
            embeddings,
        })
    }

    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let path = cfg
            .corpus
            .as_ref()
            .ok_or_else(|| Error::Config("no corpus path configured".into()))?;
        if !path.is_file() {
            return Err(Error::Config(format!("corpus {} does not exist", path.display())));
        }
        Self::from_pairs(&read_pair_file(path)?, cfg)
    }

    pub fn split(&self, split: Split) -> &[DialoguePair] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}
