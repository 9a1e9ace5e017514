use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::config::{RunConfig, Variant};
use super::data::Dataset;
use super::eval::{conditioning, reference_embeddings, validation_perplexity, EvalContext};
use super::kmeans::KMeans;
use super::optim::Adam;
use crate::corpus::{DialoguePair, EmbeddingMatrix};
use crate::metrics::mean_embedding;
use crate::model::{latent_noise, mix_seed, Grads, Model};
use crate::par::{self, Execution};
use crate::separation::{dialogue_augment, total_loss, AnnealSchedule, GroupSet, SepaOptions, StepOutput, TrainRow};
use crate::tensor::Graph;
use crate::{Error, Result};

/// Progress bookkeeping stored with every checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub batches: u64,
    pub best_valid_ppl: f64,
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Parameters at the best validation perplexity.
    pub model: Model,
    pub clusters: Option<KMeans>,
    pub report: Vec<TrainRow>,
    /// Validation perplexity after each epoch.
    pub valid_ppl: Vec<f64>,
    pub checkpoint: PathBuf,
}

pub fn execution(cfg: &RunConfig) -> Execution {
    if cfg.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Orthogonal group vectors for the variants that condition on a group.
pub fn group_set(cfg: &RunConfig) -> Result<Option<GroupSet>> {
    match cfg.variant {
        Variant::Sepacvae | Variant::KmeansCvaeBow => {
            Ok(Some(dialogue_augment(cfg.embed_dim, cfg.groups)?.scaled(cfg.group_scale)))
        }
        _ => Ok(None),
    }
}

/// Mean context embedding used as the clustering feature (zero vector when
/// the context has no regular tokens).
pub fn context_feature(pair: &DialoguePair, emb: &EmbeddingMatrix) -> Vec<f64> {
    mean_embedding(&pair.context, emb).unwrap_or_else(|| vec![0.0; emb.dim()])
}

/// Builds the model for `cfg`, initializing word vectors from the fixed
/// embedding file when one is configured.
pub fn build_model(cfg: &RunConfig, data: &Dataset) -> Result<Model> {
    let mut model = Model::new(cfg.model_config(data.vocab.len()))?;
    if let Some(e) = &data.embeddings {
        model.set_embeddings(e)?;
    }
    Ok(model)
}

/// Plain objectives of the baselines, averaged over the batch.
pub fn baseline_step(
    model: &Model,
    variant: Variant,
    batch: &[DialoguePair],
    conds: &[Option<Vec<f64>>],
    step: u64,
    seed: u64,
    exec: Execution,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let inv = 1.0 / batch.len() as f64;
    let dz = model.config().latent;
    let parts = par::map(exec, batch, |i, pair| -> Result<(Grads, [f64; 3])> {
        let mut g = Graph::new();
        let b = model.bind(&mut g);
        let cond = conds.get(i).and_then(|c| c.as_deref());
        let (loss, rec, kl, bow) = if variant == Variant::Seq2seq {
            let c = b.encode_context(&mut g, &pair.context, cond)?;
            let z = g.constant_row(&vec![0.0; dz]);
            let (nll, _) = b.decode_teacher(&mut g, z, c, &pair.response)?;
            (nll, g.item(nll)?, 0.0, 0.0)
        } else {
            let eps = latent_noise(seed, step, pair.pair_id, dz);
            let r = b.encode_response(&mut g, &pair.response)?;
            let t = b.elbo(&mut g, pair, cond, r, &eps)?;
            let (rec, kl) = (g.item(t.reconstruction)?, g.item(t.kl)?);
            if variant.uses_bow() {
                let bow = b.bow_loss(&mut g, t.z, t.context, &pair.response)?;
                let total = g.add(t.loss, bow)?;
                (total, rec, kl, g.item(bow)?)
            } else {
                (t.loss, rec, kl, 0.0)
            }
        };
        let vars = b.vars().to_vec();
        g.backward_with_seeds(&[(loss, vec![inv])])?;
        Ok((Grads::from_graph(model.params(), &g, &vars), [rec, kl, bow]))
    });
    let mut grads = Grads::zeros(model.params());
    let mut sums = [0.0; 3];
    for part in parts {
        let (gr, v) = part?;
        grads.add_assign(&gr);
        for (s, x) in sums.iter_mut().zip(v) {
            *s += x;
        }
    }
    let mut row = TrainRow {
        batch: step,
        epoch: 0,
        alpha: 0.0,
        loss_total: 0.0,
        loss_rec: sums[0] * inv,
        loss_kl: sums[1] * inv,
        loss_bow: sums[2] * inv,
        loss_re: 0.0,
        loss_y: 0.0,
        group_counts: Vec::new(),
    };
    row.loss_total = row.components_total();
    if !row.loss_total.is_finite() || !grads.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss or gradient at batch {step}: {}",
            row.to_csv()
        )));
    }
    Ok(StepOutput {
        loss: row.loss_total,
        row,
        grads,
        selected: Vec::new(),
        group_losses: Vec::new(),
    })
}

/// Trains `cfg.variant` on `data`, writing `train_report.csv` and
/// `best.ckpt` into `cfg.output`.
pub fn train(cfg: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let exec = execution(cfg);
    let mut model = build_model(cfg, data)?;
    let groups = group_set(cfg)?;
    let cluster_emb = reference_embeddings(cfg, data);
    let clusters = if cfg.variant == Variant::KmeansCvaeBow {
        let feats: Vec<Vec<f64>> = data.train.iter().map(|p| context_feature(p, &cluster_emb)).collect();
        Some(KMeans::fit(&feats, cfg.groups, 20, mix_seed(&[cfg.seed, 0x6b6d]))?)
    } else {
        None
    };

    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let report_path = cfg.output.join("train_report.csv");
    let file = File::create(&report_path).map_err(|e| Error::io(&report_path, e))?;
    let mut writer = BufWriter::new(file);
    let io = |e| Error::io(&report_path, e);
    writeln!(writer, "{}", TrainRow::CSV_HEADER).map_err(io)?;

    let checkpoint = cfg.output.join("best.ckpt");
    let mut adam = Adam::new(model.params(), cfg.learning_rate, cfg.clip_norm);
    let mut schedule = AnnealSchedule::new(cfg.warmup_batches);
    let mut state = TrainState {
        epoch: 0,
        batches: 0,
        best_valid_ppl: f64::INFINITY,
    };
    let mut best = model.clone();
    let mut report = Vec::new();
    let mut valid_ppl = Vec::new();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let opts = SepaOptions {
        averaged_positives: cfg.averaged_positives,
        seed: cfg.seed,
        exec,
    };

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0xe90c, epoch as u64])));
        let mut first_epoch_groups = vec![0usize; cfg.groups];
        let limit_reached = |t: u64| cfg.max_batches > 0 && t >= cfg.max_batches;
        for chunk in order.chunks(cfg.batch_size) {
            if limit_reached(schedule.current_batch) {
                break;
            }
            let batch: Vec<DialoguePair> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            let t = schedule.current_batch;
            let mut out = match (&groups, cfg.variant) {
                (Some(gs), Variant::Sepacvae) => total_loss(&model, &batch, gs, schedule.alpha(), t, opts)?,
                _ => {
                    let conds: Vec<Option<Vec<f64>>> = batch
                        .iter()
                        .map(|p| conditioning(cfg.variant, groups.as_ref(), clusters.as_ref(), &cluster_emb, p))
                        .collect();
                    baseline_step(&model, cfg.variant, &batch, &conds, t, cfg.seed, exec)?
                }
            };
            out.row.epoch = epoch;
            if epoch == 0 {
                for (c, n) in first_epoch_groups.iter_mut().zip(&out.row.group_counts) {
                    *c += n;
                }
            }
            adam.update(model.params_mut(), &out.grads);
            writeln!(writer, "{}", out.row.to_csv()).map_err(io)?;
            report.push(out.row);
            schedule.advance();
        }
        if epoch == 0 && cfg.variant == Variant::Sepacvae && first_epoch_groups.contains(&0) {
            warn!("some groups were never selected in the first epoch: {first_epoch_groups:?}");
        }
        writer.flush().map_err(io)?;
        state.epoch = epoch + 1;
        state.batches = schedule.current_batch;
        let ctx = EvalContext {
            cfg,
            model: &model,
            clusters: clusters.as_ref(),
        };
        let ppl = validation_perplexity(ctx, data)?;
        info!("{} epoch {epoch}: valid ppl {ppl:.4}", cfg.variant);
        valid_ppl.push(ppl);
        if ppl < state.best_valid_ppl {
            state.best_valid_ppl = ppl;
            best = model.clone();
            save_checkpoint(&checkpoint, cfg, &data.vocab, &state, clusters.as_ref(), &best)?;
        }
        if limit_reached(schedule.current_batch) {
            break;
        }
    }
    writer.flush().map_err(io)?;
    if state.best_valid_ppl.is_infinite() {
        save_checkpoint(&checkpoint, cfg, &data.vocab, &state, clusters.as_ref(), &best)?;
    }
    Ok(TrainOutcome {
        state,
        model: best,
        clusters,
        report,
        valid_ppl,
        checkpoint,
    })
}
