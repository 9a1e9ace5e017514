//! Templated dialogue corpus with controlled one-to-many and many-to-one
//! structure.
//!
//! Words are partitioned into function words and topic blocks. Each topic
//! block has its own context words and a few response families. A context
//! of topic `t` draws its responses from distinct families of `t`, so
//! every context has several semantically different replies. With
//! probability `sharing` a response slot reuses a reply already emitted for
//! another context of the same topic and family, which creates
//! many-to-one structure.
//!
//! The generator also writes word vectors clustered by topic and family, so
//! embedding-based metrics have meaningful geometry.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{count_one_to_many, write_embeddings, write_pair_file, CorpusStats, TextPair};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branching {
    Fixed(usize),
    /// Inclusive range, drawn uniformly per context.
    Uniform { min: usize, max: usize },
}

impl Branching {
    fn bounds(self) -> (usize, usize) {
        match self {
            Branching::Fixed(k) => (k, k),
            Branching::Uniform { min, max } => (min, max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_contexts: usize,
    pub branching: Branching,
    pub sharing: f64,
    pub vocab_size: usize,
    pub n_topics: usize,
    pub families_per_topic: usize,
    pub embedding_dim: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_contexts: 667,
            branching: Branching::Fixed(3),
            sharing: 0.3,
            vocab_size: 256,
            n_topics: 8,
            families_per_topic: 3,
            embedding_dim: 32,
        }
    }
}

/// Ground truth for one emitted pair. Never used for training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub topic: usize,
    /// Global response-cluster id, `topic * families_per_topic + family`.
    pub cluster: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub pairs: Vec<TextPair>,
    pub labels: Vec<PairLabel>,
    pub stats: CorpusStats,
    /// Requested responses per context, in context order.
    pub branching: Vec<usize>,
    /// Fraction of response slots filled by reuse.
    pub shared_fraction: f64,
    pub embeddings: Vec<(String, Vec<f64>)>,
}

impl SyntheticCorpus {
    /// Writes `pairs.tsv`, `labels.tsv` and `embeddings.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pair_file(&dir.join("pairs.tsv"), &self.pairs)?;
        let labels: String = self
            .labels
            .iter()
            .map(|l| format!("{}\t{}\n", l.topic, l.cluster))
            .collect();
        let path = dir.join("labels.tsv");
        std::fs::write(&path, labels).map_err(|e| Error::io(&path, e))?;
        write_embeddings(&dir.join("embeddings.txt"), &self.embeddings)
    }
}

struct Layout {
    function: Vec<String>,
    // per topic
    context_words: Vec<Vec<String>>,
    // per topic, per family
    family_words: Vec<Vec<Vec<String>>>,
}

fn layout(cfg: &SyntheticConfig) -> Result<Layout> {
    let f = cfg.families_per_topic;
    if cfg.vocab_size <= 10 || f == 0 || cfg.n_topics == 0 {
        return Err(Error::Config(format!(
            "synthetic corpus needs vocab_size > 10 and nonzero topics/families (got {}, {}, {})",
            cfg.vocab_size, cfg.n_topics, f
        )));
    }
    let n_function = (cfg.vocab_size / 8).max(4);
    let rest = cfg.vocab_size - n_function;
    let topics = cfg.n_topics.min(rest / (2 + f));
    if topics == 0 {
        return Err(Error::Config(format!(
            "vocab_size {} too small for {f} families per topic",
            cfg.vocab_size
        )));
    }
    let block = rest / topics;
    let n_ctx = block / 2;
    let per_family = (block - n_ctx) / f;
    if n_ctx < 2 || per_family < 1 {
        return Err(Error::Config(format!(
            "vocab_size {} leaves too few words per topic",
            cfg.vocab_size
        )));
    }
    let mut next = 0usize;
    let mut word = || {
        next += 1;
        format!("w{:03}", next - 1)
    };
    let function = (0..n_function).map(|_| word()).collect();
    let mut context_words = Vec::new();
    let mut family_words = Vec::new();
    for _ in 0..topics {
        context_words.push((0..n_ctx).map(|_| word()).collect());
        family_words.push((0..f).map(|_| (0..per_family).map(|_| word()).collect()).collect());
        // leftover words in the block stay unused
        for _ in n_ctx + per_family * f..block {
            word();
        }
    }
    Ok(Layout {
        function,
        context_words,
        family_words,
    })
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| scale * x / norm).collect()
}

fn embeddings_for(layout: &Layout, dim: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE3B0_C442_98FC_1C14);
    let mut out = Vec::new();
    for w in &layout.function {
        out.push((w.clone(), unit_gaussian(&mut rng, dim, 0.3)));
    }
    for (t, ctx_words) in layout.context_words.iter().enumerate() {
        let centroid = unit_gaussian(&mut rng, dim, 1.0);
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        for w in ctx_words {
            let noise = unit_gaussian(&mut rng, dim, 0.4);
            out.push((w.clone(), add(&centroid, &noise)));
        }
        for fam in &layout.family_words[t] {
            let offset = add(&centroid, &unit_gaussian(&mut rng, dim, 0.6));
            for w in fam {
                let noise = unit_gaussian(&mut rng, dim, 0.3);
                out.push((w.clone(), add(&offset, &noise)));
            }
        }
    }
    out
}

/// Deterministic under `cfg.seed`.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let (kmin, kmax) = cfg.branching.bounds();
    if cfg.n_contexts == 0 {
        return Err(Error::Config("n_contexts must be positive".into()));
    }
    if kmin == 0 || kmin > kmax {
        return Err(Error::Config(format!("invalid branching range {kmin}..={kmax}")));
    }
    if !(0.0..1.0).contains(&cfg.sharing) {
        return Err(Error::Config(format!(
            "sharing {} must lie in [0, 1): the first reply cannot be reused",
            cfg.sharing
        )));
    }
    if cfg.sharing > 0.0 && cfg.n_contexts < 2 {
        return Err(Error::Config("sharing needs at least two contexts".into()));
    }
    let layout = layout(cfg)?;
    let topics = layout.context_words.len();
    let families = cfg.families_per_topic;
    let per_family = layout.family_words[0][0].len();
    // distinct 2..=4-word replies a family can form, bounded loosely
    let family_capacity = per_family.pow(2).saturating_mul(per_family + 1);
    if kmax > families * family_capacity {
        return Err(Error::Config(format!(
            "branching {kmax} exceeds the {} distinct replies the vocabulary supports",
            families * family_capacity
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen_contexts: HashSet<String> = HashSet::new();
    let mut pool: HashMap<(usize, usize), Vec<String>> = HashMap::new();
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    let mut branching = Vec::with_capacity(cfg.n_contexts);
    let mut reused = 0usize;
    let mut slots = 0usize;

    for c in 0..cfg.n_contexts {
        let topic = c % topics;
        let k = rng.random_range(kmin..=kmax);
        branching.push(k);

        let mut context = None;
        for _ in 0..1000 {
            let cand = make_context(&mut rng, &layout, topic);
            if seen_contexts.insert(cand.clone()) {
                context = Some(cand);
                break;
            }
        }
        let context = context.ok_or_else(|| {
            Error::Config(format!("could not form {} distinct contexts", cfg.n_contexts))
        })?;

        let offset = rng.random_range(0..families);
        let mut replies: HashSet<String> = HashSet::new();
        for j in 0..k {
            let family = (offset + j) % families;
            slots += 1;
            let mut reply = None;
            if rng.random_bool(cfg.sharing) {
                let candidates: Vec<&String> = pool
                    .get(&(topic, family))
                    .map(|v| v.iter().filter(|r| !replies.contains(*r)).collect())
                    .unwrap_or_default();
                if let Some(r) = candidates.choose(&mut rng) {
                    reply = Some((*r).clone());
                    reused += 1;
                }
            }
            let reply = match reply {
                Some(r) => r,
                None => {
                    let mut fresh = None;
                    for _ in 0..1000 {
                        let cand = make_reply(&mut rng, &layout, topic, family);
                        if !replies.contains(&cand) {
                            fresh = Some(cand);
                            break;
                        }
                    }
                    let r = fresh.ok_or_else(|| {
                        Error::Config(format!("could not form {k} distinct replies for one context"))
                    })?;
                    pool.entry((topic, family)).or_default().push(r.clone());
                    r
                }
            };
            replies.insert(reply.clone());
            pairs.push(TextPair::new(context.clone(), reply));
            labels.push(PairLabel {
                topic,
                cluster: topic * families + family,
            });
        }
    }

    let stats = count_one_to_many(&pairs);
    Ok(SyntheticCorpus {
        pairs,
        labels,
        stats,
        branching,
        shared_fraction: reused as f64 / slots.max(1) as f64,
        embeddings: embeddings_for(&layout, cfg.embedding_dim, cfg.seed),
    })
}

fn make_context(rng: &mut ChaCha8Rng, layout: &Layout, topic: usize) -> String {
    let len = rng.random_range(3..=7);
    let mut words = Vec::with_capacity(len);
    words.push(layout.function.choose(rng).unwrap().as_str());
    for _ in 1..len {
        let w = if rng.random_bool(0.2) {
            layout.function.choose(rng).unwrap()
        } else {
            layout.context_words[topic].choose(rng).unwrap()
        };
        words.push(w);
    }
    words.join(" ")
}

fn make_reply(rng: &mut ChaCha8Rng, layout: &Layout, topic: usize, family: usize) -> String {
    let fam = &layout.family_words[topic][family];
    let len = rng.random_range(2..=4);
    // the family's first word opens every reply, a fixed stem per family
    let mut words = vec![fam[0].as_str()];
    for _ in 1..len {
        let w = if rng.random_bool(0.15) {
            layout.function.choose(rng).unwrap()
        } else {
            fam.choose(rng).unwrap()
        };
        words.push(w);
    }
    words.join(" ")
}
