//! Automatic evaluation metrics and latent-space geometry.

mod embedding;
mod geometry;
mod overlap;

pub use embedding::{coherence, cosine, embedding_average, mean_embedding};
pub use geometry::{geometry_analysis, geometry_by_batch, BatchGeometry, GeometryReport, Grouping};
pub use overlap::{bleu_n, distinct_n};

use serde::{Deserialize, Serialize};

use crate::corpus::DialoguePair;
use crate::model::Model;
use crate::par::{self, Execution};
use crate::Result;

/// Flat summary of one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    /// Which group-selection protocol produced the generations.
    pub protocol: String,
    pub ppl: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub mean_length: f64,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub embedding_average: f64,
    pub coherence: f64,
    pub pairs: usize,
    pub skipped_average: usize,
    pub skipped_coherence: usize,
}

/// `exp(total NLL / token count)`.
pub fn perplexity_from_nll(total_nll: f64, tokens: usize) -> f64 {
    if tokens == 0 {
        return f64::NAN;
    }
    (total_nll / tokens as f64).exp()
}

/// `exp(Σ NLL / Σ target tokens)` with teacher forcing and the prior-mean
/// latent. `conditioning`, when given, holds the group vector added to each
/// pair's context.
pub fn perplexity(
    model: &Model,
    pairs: &[DialoguePair],
    conditioning: Option<&[Vec<f64>]>,
    exec: Execution,
) -> Result<f64> {
    let parts = par::map(exec, pairs, |i, p| model.teacher_nll(p, conditioning.map(|c| c[i].as_slice())));
    let mut nll = 0.0;
    let mut tokens = 0;
    for part in parts {
        let (n, t) = part?;
        nll += n;
        tokens += t;
    }
    Ok(perplexity_from_nll(nll, tokens))
}

/// Perplexity of an add-one unigram model fitted on `train` sequences and
/// scored on `eval` sequences over a vocabulary of `vocab_size` ids.
pub fn unigram_perplexity(train: &[&[usize]], eval: &[&[usize]], vocab_size: usize) -> f64 {
    let mut counts = vec![0usize; vocab_size];
    let mut total = 0usize;
    for s in train {
        for &t in *s {
            counts[t] += 1;
            total += 1;
        }
    }
    let denom = (total + vocab_size) as f64;
    let mut nll = 0.0;
    let mut n = 0;
    for s in eval {
        for &t in *s {
            nll -= ((counts[t] + 1) as f64 / denom).ln();
            n += 1;
        }
    }
    perplexity_from_nll(nll, n)
}
