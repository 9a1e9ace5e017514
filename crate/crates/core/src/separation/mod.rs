//! Dialogue augmentation with orthogonal group vectors, gradient blocking,
//! relationship enhancement and the combined training objective.

mod blocking;
mod enhance;
mod groups;

pub use blocking::{argmin_row, gradient_block, Blocking, BlockingMask};
pub use enhance::{group_prediction_loss, relationship_enhancement_loss};
pub use groups::{dialogue_augment, GroupSet};

use serde::{Deserialize, Serialize};

use crate::corpus::DialoguePair;
use crate::model::{latent_noise, Bound, Grads, Model};
use crate::par::{self, Execution};
use crate::tensor::{Graph, Var};
use crate::{Error, Result};

/// Linear ramp of the relationship-enhancement weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub warmup_batches: u64,
    pub current_batch: u64,
}

impl AnnealSchedule {
    pub fn new(warmup_batches: u64) -> Self {
        Self {
            warmup_batches,
            current_batch: 0,
        }
    }

    /// `min(1, t / warmup_batches)`; a zero warm-up means no ramp.
    pub fn alpha_at(&self, t: u64) -> f64 {
        if self.warmup_batches == 0 || t >= self.warmup_batches {
            1.0
        } else {
            t as f64 / self.warmup_batches as f64
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_at(self.current_batch)
    }

    pub fn advance(&mut self) {
        self.current_batch += 1;
    }
}

/// One line of the training report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub batch: u64,
    pub epoch: usize,
    pub alpha: f64,
    /// `loss_rec + loss_kl + loss_bow + alpha * loss_re + loss_y`.
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_kl: f64,
    pub loss_bow: f64,
    pub loss_re: f64,
    pub loss_y: f64,
    /// How many rows selected each group (empty for ungrouped variants).
    pub group_counts: Vec<usize>,
}

impl TrainRow {
    pub const CSV_HEADER: &'static str =
        "batch,epoch,alpha,loss_total,loss_rec,loss_kl,loss_bow,loss_re,loss_y,group_counts";

    pub fn components_total(&self) -> f64 {
        self.loss_rec + self.loss_kl + self.loss_bow + self.alpha * self.loss_re + self.loss_y
    }

    pub fn to_csv(&self) -> String {
        let counts: Vec<String> = self.group_counts.iter().map(usize::to_string).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.batch,
            self.epoch,
            self.alpha,
            self.loss_total,
            self.loss_rec,
            self.loss_kl,
            self.loss_bow,
            self.loss_re,
            self.loss_y,
            counts.join(";")
        )
    }
}

/// Options of the grouped objective that are not model hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SepaOptions {
    /// Average the positive inner products instead of summing them.
    pub averaged_positives: bool,
    pub seed: u64,
    pub exec: Execution,
}

/// Graph nodes of one example under every group.
#[derive(Clone, Debug)]
pub struct ExampleTerms {
    /// Negative lower bound per group.
    pub group_losses: Vec<Var>,
    pub selected: usize,
    /// Loss of the selected group, through the blocking mask.
    pub masked: Var,
    pub reconstruction: Var,
    pub kl: Var,
    /// Response-encoder state of the soft decoder output of the selected group.
    pub rep: Var,
    pub group_loss: Var,
    pub context: Var,
    pub z: Var,
}

/// Builds all group evaluations of `pair` with shared noise `eps`, selects
/// the lowest loss, and adds the group-prediction term for it.
pub fn example_terms(
    g: &mut Graph,
    b: &Bound<'_>,
    pair: &DialoguePair,
    groups: &GroupSet,
    eps: &[f64],
    row: usize,
) -> Result<ExampleTerms> {
    let response = b.encode_response(g, &pair.response)?;
    let mut terms = Vec::with_capacity(groups.len());
    for y in groups.vectors() {
        terms.push(b.elbo(g, pair, Some(y), response, eps)?);
    }
    let losses: Vec<f64> = terms.iter().map(|t| g.value(t.loss)[0]).collect();
    let selected = argmin_row(&losses, row)?;
    let mut mask = vec![0.0; groups.len()];
    mask[selected] = 1.0;
    let group_losses: Vec<Var> = terms.iter().map(|t| t.loss).collect();
    let masked = g.masked_sum(&group_losses, &mask)?;
    let best = &terms[selected];
    let rep = b.encode_soft(g, &best.logits)?;
    let group_loss = group_prediction_loss(g, b, rep, selected)?;
    Ok(ExampleTerms {
        group_losses,
        selected,
        masked,
        reconstruction: best.reconstruction,
        kl: best.kl,
        rep,
        group_loss,
        context: best.context,
        z: best.z,
    })
}

/// Negative lower bound of `pair` under every group, with shared noise.
pub fn group_losses(model: &Model, pair: &DialoguePair, groups: &GroupSet, eps: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let b = model.bind(&mut g);
    let response = b.encode_response(&mut g, &pair.response)?;
    groups
        .vectors()
        .iter()
        .map(|y| {
            let t = b.elbo(&mut g, pair, Some(y), response, eps)?;
            Ok(g.value(t.loss)[0])
        })
        .collect()
}

/// The full objective of a batch on a single graph:
/// `Σ masked / B + alpha · L_re + Σ L_Y / B`. Used as the reference for the
/// per-example evaluation in [`total_loss`].
pub fn total_loss_graph(
    g: &mut Graph,
    b: &Bound<'_>,
    batch: &[DialoguePair],
    groups: &GroupSet,
    alpha: f64,
    noise: &[Vec<f64>],
    averaged_positives: bool,
) -> Result<Var> {
    let inv = 1.0 / batch.len() as f64;
    let mut parts = Vec::new();
    let mut weights = Vec::new();
    let mut reps = Vec::new();
    let mut selected = Vec::new();
    for (i, (pair, eps)) in batch.iter().zip(noise).enumerate() {
        let t = example_terms(g, b, pair, groups, eps, i)?;
        parts.extend([t.masked, t.group_loss]);
        weights.extend([inv, inv]);
        reps.push(t.rep);
        selected.push(t.selected);
    }
    if batch.len() >= 2 {
        let re = relationship_enhancement_loss(g, &reps, &selected, groups.len(), averaged_positives)?;
        parts.push(re);
        weights.push(alpha);
    }
    Ok(g.masked_sum(&parts, &weights)?)
}

/// Result of one objective evaluation with gradients.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    pub row: TrainRow,
    pub grads: Grads,
    pub selected: Vec<usize>,
    pub group_losses: Vec<Vec<f64>>,
}

struct Pending {
    graph: Graph,
    vars: Vec<Var>,
    masked: Var,
    group_loss: Var,
    rep: Var,
    losses: Vec<f64>,
    selected: usize,
    rec: f64,
    kl: f64,
    ly: f64,
}

/// Value and parameter gradient of the grouped objective for one batch.
///
/// Examples are evaluated on independent graphs (in parallel when enabled);
/// the contrastive term couples them only through the representation
/// vectors, so it runs on a small batch graph whose input gradients are
/// then pushed back into each example graph.
pub fn total_loss(
    model: &Model,
    batch: &[DialoguePair],
    groups: &GroupSet,
    alpha: f64,
    step: u64,
    opts: SepaOptions,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    if groups.len() < 2 {
        return Err(Error::Config("the grouped objective needs at least two groups".into()));
    }
    let dz = model.config().latent;
    let stage1 = par::map(opts.exec, batch, |i, pair| -> Result<Pending> {
        let mut graph = Graph::new();
        let b = model.bind(&mut graph);
        let eps = latent_noise(opts.seed, step, pair.pair_id, dz);
        let t = example_terms(&mut graph, &b, pair, groups, &eps, i)?;
        let vars = b.vars().to_vec();
        Ok(Pending {
            losses: t.group_losses.iter().map(|&v| graph.value(v)[0]).collect(),
            rec: graph.value(t.reconstruction)[0],
            kl: graph.value(t.kl)[0],
            ly: graph.value(t.group_loss)[0],
            masked: t.masked,
            group_loss: t.group_loss,
            rep: t.rep,
            selected: t.selected,
            vars,
            graph,
        })
    });
    let pending = stage1.into_iter().collect::<Result<Vec<_>>>()?;
    let matrix: Vec<Vec<f64>> = pending.iter().map(|p| p.losses.clone()).collect();
    let blocking = gradient_block(&matrix)?;
    debug_assert!(pending.iter().zip(&blocking.selected).all(|(p, &s)| p.selected == s));

    let n = batch.len();
    let inv = 1.0 / n as f64;
    let (loss_re, rep_grads) = if n >= 2 {
        let mut g = Graph::new();
        let leaves: Vec<Var> = pending
            .iter()
            .map(|p| g.leaf(&p.graph.tensor(p.rep).with_grad(true)))
            .collect();
        let re = relationship_enhancement_loss(&mut g, &leaves, &blocking.selected, groups.len(), opts.averaged_positives)?;
        let value = g.item(re)?;
        let grads = if alpha != 0.0 {
            g.backward(re)?;
            Some(
                leaves
                    .iter()
                    .map(|&l| {
                        g.grad(l)
                            .map(|d| d.iter().map(|x| alpha * x).collect())
                            .unwrap_or_else(|| vec![0.0; g.value(l).len()])
                    })
                    .collect::<Vec<Vec<f64>>>(),
            )
        } else {
            None
        };
        (value, grads)
    } else {
        (0.0, None)
    };

    let mut jobs: Vec<(Pending, Option<Vec<f64>>)> = pending
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let rg = rep_grads.as_ref().map(|r| r[i].clone());
            (p, rg)
        })
        .collect();
    let per_example = par::map_mut(opts.exec, &mut jobs, |_, (p, rg)| -> Result<Grads> {
        let mut seeds = vec![(p.masked, vec![inv]), (p.group_loss, vec![inv])];
        if let Some(rg) = rg.take() {
            seeds.push((p.rep, rg));
        }
        p.graph.backward_with_seeds(&seeds)?;
        Ok(Grads::from_graph(model.params(), &p.graph, &p.vars))
    });
    let mut grads = Grads::zeros(model.params());
    for gr in per_example {
        grads.add_assign(&gr?);
    }

    let mean = |f: &dyn Fn(&Pending) -> f64| jobs.iter().map(|(p, _)| f(p)).sum::<f64>() * inv;
    let mut counts = vec![0usize; groups.len()];
    for &s in &blocking.selected {
        counts[s] += 1;
    }
    let mut row = TrainRow {
        batch: step,
        epoch: 0,
        alpha,
        loss_total: 0.0,
        loss_rec: mean(&|p| p.rec),
        loss_kl: mean(&|p| p.kl),
        loss_bow: 0.0,
        loss_re,
        loss_y: mean(&|p| p.ly),
        group_counts: counts,
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
        selected: blocking.selected,
        group_losses: matrix,
    })
}
