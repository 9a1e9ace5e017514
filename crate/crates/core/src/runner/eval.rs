use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{RunConfig, Variant};
use super::data::{Dataset, Split};
use super::kmeans::KMeans;
use super::train::{context_feature, execution, group_set};
use crate::corpus::{load_embeddings, strip_eos, DialoguePair, EmbeddingMatrix, Vocab};
use crate::metrics::{
    bleu_n, coherence, cosine, distinct_n, embedding_average, geometry_by_batch, perplexity, EvalReport,
    GeometryReport, Grouping,
};
use crate::model::{latent_noise, mix_seed, Model};
use crate::par;
use crate::separation::{argmin_row, group_losses, GroupSet};
use crate::{Error, Result};

const EVAL_STREAM: u64 = 0xe7a1;
const PROBE_STREAM: u64 = 0x9b0e;

/// Word vectors used for clustering features and embedding metrics: the
/// configured embedding file, or the model's initial table.
pub fn reference_embeddings(cfg: &RunConfig, data: &Dataset) -> EmbeddingMatrix {
    data.embeddings
        .clone()
        .unwrap_or_else(|| EmbeddingMatrix::random(data.vocab.len(), cfg.embed_dim, mix_seed(&[cfg.seed, 1])))
}

/// [`reference_embeddings`] rebuilt from the configuration alone.
pub fn reference_embeddings_for(cfg: &RunConfig, vocab: &Vocab) -> Result<EmbeddingMatrix> {
    match &cfg.embeddings {
        Some(path) => load_embeddings(path, vocab, Some(cfg.embed_dim), cfg.seed),
        None => Ok(EmbeddingMatrix::random(vocab.len(), cfg.embed_dim, mix_seed(&[cfg.seed, 1]))),
    }
}

/// Greedy response to an encoded context. `group` forces a group; otherwise
/// sepacvae uses test-time selection and the K-means baseline its cluster.
/// Returns the tokens and the group used (if any).
pub fn respond(
    ctx: EvalContext<'_>,
    emb: &EmbeddingMatrix,
    context: &[usize],
    group: Option<usize>,
) -> Result<(Vec<usize>, Option<usize>)> {
    let cfg = ctx.cfg;
    let Some(gs) = group_set(cfg)? else {
        if group.is_some() {
            return Err(Error::Config(format!("variant {} takes no group", cfg.variant)));
        }
        return Ok((ctx.model.generate(context, None, cfg.max_len)?.tokens, None));
    };
    let k = match group {
        Some(k) if k >= gs.len() => {
            return Err(Error::Config(format!("group {k} out of range 0..{}", gs.len())));
        }
        Some(k) => k,
        None if cfg.variant == Variant::Sepacvae => {
            let sel = select_response_test(ctx.model, context, &gs, cfg.max_len)?;
            return Ok((sel.tokens, Some(sel.group)));
        }
        None => {
            let pair = DialoguePair {
                context: context.to_vec(),
                response: Vec::new(),
                pair_id: 0,
            };
            let clusters = ctx
                .clusters
                .ok_or_else(|| Error::Checkpoint("kmeans_cvae_bow model has no cluster centroids".into()))?;
            clusters.assign(&context_feature(&pair, emb))
        }
    };
    Ok((ctx.model.generate(context, Some(gs.vector(k)), cfg.max_len)?.tokens, Some(k)))
}

/// Group vector of the K-means baseline for `pair` (no vector for the other
/// variants, whose conditioning does not come from clustering).
pub fn conditioning(
    variant: Variant,
    groups: Option<&GroupSet>,
    clusters: Option<&KMeans>,
    emb: &EmbeddingMatrix,
    pair: &DialoguePair,
) -> Option<Vec<f64>> {
    if variant != Variant::KmeansCvaeBow {
        return None;
    }
    let (groups, clusters) = (groups?, clusters?);
    Some(groups.vector(clusters.assign(&context_feature(pair, emb))).to_vec())
}

/// Positive group of a pair with a known response: the group with the lowest
/// negative lower bound under a fixed evaluation noise draw.
pub fn select_group_validation(model: &Model, pair: &DialoguePair, groups: &GroupSet, seed: u64) -> Result<usize> {
    let eps = latent_noise(mix_seed(&[seed, EVAL_STREAM]), 0, pair.pair_id, model.config().latent);
    argmin_row(&group_losses(model, pair, groups, &eps)?, 0)
}

/// Outcome of test-time selection among one candidate per group.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSelection {
    pub group: usize,
    pub tokens: Vec<usize>,
    pub candidates: Vec<Vec<usize>>,
    /// Cosine between the bare context state and each candidate's state.
    pub scores: Vec<f64>,
}

/// Decodes one greedy candidate per group and keeps the one whose encoding
/// is closest (cosine) to the encoding of the context without a group
/// vector. Ties go to the lowest group index.
pub fn select_response_test(model: &Model, context: &[usize], groups: &GroupSet, max_len: usize) -> Result<TestSelection> {
    let ctx = model.encode_context(context, None)?;
    let mut candidates = Vec::with_capacity(groups.len());
    let mut scores = Vec::with_capacity(groups.len());
    for y in groups.vectors() {
        let gen = model.generate(context, Some(y), max_len)?;
        let score = if gen.tokens.is_empty() {
            f64::NEG_INFINITY
        } else {
            cosine(&ctx, &model.encode_context(&gen.tokens, None)?)
        };
        candidates.push(gen.tokens);
        scores.push(score);
    }
    let mut group = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[group] {
            group = k;
        }
    }
    Ok(TestSelection {
        group,
        tokens: candidates[group].clone(),
        candidates,
        scores,
    })
}

/// Names the selection protocol used for `split`.
pub fn protocol_name(variant: Variant, split: Split) -> &'static str {
    match (variant, split) {
        (Variant::Sepacvae, Split::Test) => "test: max cosine between bare context and candidate encodings",
        (Variant::Sepacvae, _) => "validation: min group loss on the reference response",
        (Variant::KmeansCvaeBow, _) => "kmeans: cluster of the mean context embedding",
        _ => "none",
    }
}

/// Trained model plus what evaluation needs to reproduce its conditioning.
#[derive(Clone, Copy, Debug)]
pub struct EvalContext<'a> {
    pub cfg: &'a RunConfig,
    pub model: &'a Model,
    pub clusters: Option<&'a KMeans>,
}

/// Group choice and conditioning vector for one pair.
#[derive(Clone, Debug, PartialEq)]
struct Choice {
    group: Option<usize>,
    vector: Option<Vec<f64>>,
    response: Option<Vec<usize>>,
}

fn choose(
    ctx: EvalContext<'_>,
    groups: Option<&GroupSet>,
    emb: &EmbeddingMatrix,
    split: Split,
    pair: &DialoguePair,
) -> Result<Choice> {
    let variant = ctx.cfg.variant;
    match (variant, groups) {
        (Variant::Sepacvae, Some(gs)) => {
            if split == Split::Test {
                let sel = select_response_test(ctx.model, &pair.context, gs, ctx.cfg.max_len)?;
                Ok(Choice {
                    group: Some(sel.group),
                    vector: Some(gs.vector(sel.group).to_vec()),
                    response: Some(sel.tokens),
                })
            } else {
                let k = select_group_validation(ctx.model, pair, gs, ctx.cfg.seed)?;
                Ok(Choice {
                    group: Some(k),
                    vector: Some(gs.vector(k).to_vec()),
                    response: None,
                })
            }
        }
        (Variant::KmeansCvaeBow, Some(gs)) => {
            let clusters = ctx
                .clusters
                .ok_or_else(|| Error::Checkpoint("kmeans_cvae_bow model has no cluster centroids".into()))?;
            let k = clusters.assign(&context_feature(pair, emb));
            Ok(Choice {
                group: Some(k),
                vector: Some(gs.vector(k).to_vec()),
                response: None,
            })
        }
        _ => Ok(Choice {
            group: None,
            vector: None,
            response: None,
        }),
    }
}

fn choices(ctx: EvalContext<'_>, data: &Dataset, split: Split) -> Result<(Vec<Choice>, EmbeddingMatrix)> {
    let groups = group_set(ctx.cfg)?;
    let emb = reference_embeddings(ctx.cfg, data);
    let out = par::map(execution(ctx.cfg), data.split(split), |_, p| {
        choose(ctx, groups.as_ref(), &emb, split, p)
    });
    Ok((out.into_iter().collect::<Result<Vec<_>>>()?, emb))
}

fn split_perplexity(ctx: EvalContext<'_>, pairs: &[DialoguePair], choices: &[Choice]) -> Result<f64> {
    let vectors: Option<Vec<Vec<f64>>> = choices.iter().map(|c| c.vector.clone()).collect();
    perplexity(ctx.model, pairs, vectors.as_deref(), execution(ctx.cfg))
}

/// Validation perplexity under the validation selection protocol.
pub fn validation_perplexity(ctx: EvalContext<'_>, data: &Dataset) -> Result<f64> {
    if data.valid.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let (choices, _) = choices(ctx, data, Split::Valid)?;
    split_perplexity(ctx, &data.valid, &choices)
}

/// One line of the generations file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub context: String,
    pub response: String,
    /// Selected group, `-1` for variants without groups.
    pub group: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub generations: Vec<GenerationRow>,
}

impl Evaluation {
    pub fn generations_tsv(&self) -> String {
        self.generations
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.context, r.response, r.group))
            .collect()
    }

    /// Writes `eval_<split>.json` and `generations_<split>.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("eval_{}.json", self.report.split));
        let text = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
        let tsv = dir.join(format!("generations_{}.tsv", self.report.split));
        fs::write(&tsv, self.generations_tsv()).map_err(|e| Error::io(&tsv, e))
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs the split's selection protocol, decodes every context greedily and
/// computes the metric suite.
pub fn evaluate_model(ctx: EvalContext<'_>, data: &Dataset, split: Split) -> Result<Evaluation> {
    let pairs = data.split(split);
    if pairs.is_empty() {
        return Err(Error::Config(format!("{split} split is empty")));
    }
    let (choices, emb) = choices(ctx, data, split)?;
    let ppl = split_perplexity(ctx, pairs, &choices)?;
    let exec = execution(ctx.cfg);
    let responses = par::map(exec, pairs, |i, p| -> Result<Vec<usize>> {
        match &choices[i].response {
            Some(r) => Ok(r.clone()),
            None => Ok(ctx.model.generate(&p.context, choices[i].vector.as_deref(), ctx.cfg.max_len)?.tokens),
        }
    });
    let responses = responses.into_iter().collect::<Result<Vec<_>>>()?;
    let words: Vec<&[usize]> = responses.iter().map(|r| strip_eos(r)).collect();

    let mut bleu = [Vec::new(), Vec::new(), Vec::new()];
    let mut averages = Vec::new();
    let mut coherences = Vec::new();
    for (p, w) in pairs.iter().zip(&words) {
        for (n, acc) in bleu.iter_mut().enumerate() {
            acc.push(bleu_n(w, p.response_words(), n + 1));
        }
        if let Some(a) = embedding_average(w, p.response_words(), &emb) {
            averages.push(a);
        }
        if let Some(c) = coherence(p.context_words(), w, &emb) {
            coherences.push(c);
        }
    }
    let report = EvalReport {
        split: split.name().to_string(),
        protocol: protocol_name(ctx.cfg.variant, split).to_string(),
        ppl,
        distinct_1: distinct_n(&words, 1),
        distinct_2: distinct_n(&words, 2),
        mean_length: mean(&words.iter().map(|w| w.len() as f64).collect::<Vec<_>>()),
        bleu_1: mean(&bleu[0]),
        bleu_2: mean(&bleu[1]),
        bleu_3: mean(&bleu[2]),
        embedding_average: mean(&averages),
        coherence: mean(&coherences),
        pairs: pairs.len(),
        skipped_average: pairs.len() - averages.len(),
        skipped_coherence: pairs.len() - coherences.len(),
    };
    let generations = pairs
        .iter()
        .zip(&words)
        .zip(&choices)
        .map(|((p, w), c)| GenerationRow {
            context: data.vocab.decode(p.context_words()),
            response: data.vocab.decode(w),
            group: c.group.map_or(-1, |g| g as i64),
        })
        .collect();
    Ok(Evaluation { report, generations })
}

fn check_vocab(saved: &Vocab, data: &Dataset) -> Result<()> {
    if saved.tokens() != data.vocab.tokens() {
        return Err(Error::Checkpoint(format!(
            "checkpoint vocabulary ({} entries) does not match the corpus vocabulary ({} entries)",
            saved.len(),
            data.vocab.len()
        )));
    }
    Ok(())
}

/// [`evaluate_model`] for a restored checkpoint.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, split: Split) -> Result<Evaluation> {
    check_vocab(&ckpt.vocab, data)?;
    let ctx = EvalContext {
        cfg: &ckpt.config,
        model: &ckpt.model,
        clusters: ckpt.clusters.as_ref(),
    };
    evaluate_model(ctx, data, split)
}

/// How often decoding from a perturbed latent changes the response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationProbe {
    pub pairs: usize,
    pub perturbations_per_pair: usize,
    /// Standard deviation of the Gaussian offset added to the latent.
    pub scale: f64,
    /// Fraction of perturbed decodes that differ from the unperturbed one.
    pub changed_fraction: f64,
    /// Mean number of distinct responses per pair, unperturbed included.
    pub mean_distinct_responses: f64,
}

/// Joint vectors, latent export and perturbation probe of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentAnalysis {
    pub geometry: GeometryReport,
    /// `(pair_id, group, z)`; group is `-1` for variants without groups.
    pub latents: Vec<(usize, i64, Vec<f64>)>,
    pub probe: PerturbationProbe,
}

impl LatentAnalysis {
    pub fn latent_csv(&self) -> String {
        let dz = self.latents.first().map_or(0, |r| r.2.len());
        let mut out = String::from("pair_id,group");
        for k in 0..dz {
            out.push_str(&format!(",z_{k}"));
        }
        out.push('\n');
        for (id, g, z) in &self.latents {
            out.push_str(&format!("{id},{g}"));
            for x in z {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `geometry_<split>.csv`, `latent_<split>.csv` and
    /// `probe_<split>.json` into `dir`.
    pub fn write(&self, dir: &Path, split: Split) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let probe = serde_json::to_string_pretty(&self.probe).map_err(|e| Error::Format(e.to_string()))?;
        let files = [
            (format!("geometry_{split}.csv"), self.geometry.to_csv()),
            (format!("latent_{split}.csv"), self.latent_csv()),
            (format!("probe_{split}.json"), probe + "\n"),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Cosine threshold that defines "same group" for models without groups.
pub const BASELINE_THRESHOLD: f64 = 0.9;

/// Concatenates each context state (with the group vector chosen from the
/// reference response, if any) and the prior-mean latent, then measures inner- and inter-group cosine per
/// batch. Also decodes from perturbed latents for the first `probe_pairs`
/// pairs.
pub fn analyze_latent(
    ctx: EvalContext<'_>,
    data: &Dataset,
    split: Split,
    probe_pairs: usize,
    probe_scale: f64,
) -> Result<LatentAnalysis> {
    let pairs = data.split(split);
    if pairs.len() < 2 {
        return Err(Error::Config(format!("{split} split needs at least two pairs")));
    }
    let guided = Split::Valid;
    let groups = group_set(ctx.cfg)?;
    let emb = reference_embeddings(ctx.cfg, data);
    let exec = execution(ctx.cfg);
    let rows = par::map(exec, pairs, |_, p| -> Result<(Vec<f64>, Option<usize>, Vec<f64>)> {
        let c = choose(ctx, groups.as_ref(), &emb, guided, p)?;
        let state = ctx.model.encode_context(&p.context, c.vector.as_deref())?;
        let z = if ctx.model.config().zero_latent {
            vec![0.0; ctx.model.config().latent]
        } else {
            ctx.model.prior_of(&state)?.mu
        };
        let mut joint = state;
        joint.extend_from_slice(&z);
        Ok((joint, c.group, z))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let joints: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let labels: Option<Vec<usize>> = rows.iter().map(|r| r.1).collect();
    let grouping = match &labels {
        Some(l) => Grouping::Labels(l),
        None => Grouping::Threshold(BASELINE_THRESHOLD),
    };
    let geometry = geometry_by_batch(&joints, grouping, ctx.cfg.batch_size);
    let latents = pairs
        .iter()
        .zip(rows)
        .map(|(p, (_, g, z))| (p.pair_id, g.map_or(-1, |g| g as i64), z))
        .collect();

    const PERTURBATIONS: usize = 5;
    let probed = &pairs[..probe_pairs.min(pairs.len())];
    let stats = par::map(exec, probed, |_, p| -> Result<(usize, usize)> {
        let c = choose(ctx, groups.as_ref(), &emb, guided, p)?;
        let gen = ctx.model.generate(&p.context, c.vector.as_deref(), ctx.cfg.max_len)?;
        let mut seen = vec![gen.tokens.clone()];
        let mut changed = 0;
        for k in 0..PERTURBATIONS {
            let noise = latent_noise(mix_seed(&[ctx.cfg.seed, PROBE_STREAM]), k as u64, p.pair_id, gen.z.len());
            let z: Vec<f64> = gen.z.iter().zip(&noise).map(|(a, e)| a + probe_scale * e).collect();
            let tokens = ctx.model.decode_greedy(&z, &gen.context_state, ctx.cfg.max_len)?;
            if tokens != gen.tokens {
                changed += 1;
            }
            if !seen.contains(&tokens) {
                seen.push(tokens);
            }
        }
        Ok((changed, seen.len()))
    });
    let stats = stats.into_iter().collect::<Result<Vec<_>>>()?;
    let total = (stats.len() * PERTURBATIONS).max(1) as f64;
    let probe = PerturbationProbe {
        pairs: stats.len(),
        perturbations_per_pair: PERTURBATIONS,
        scale: probe_scale,
        changed_fraction: stats.iter().map(|s| s.0).sum::<usize>() as f64 / total,
        mean_distinct_responses: mean(&stats.iter().map(|s| s.1 as f64).collect::<Vec<_>>()),
    };
    Ok(LatentAnalysis {
        geometry,
        latents,
        probe,
    })
}
