use crate::model::Bound;
use crate::tensor::{Graph, TensorError, Var};
use crate::{Error, Result};

/// Contrastive loss over the generated-response representations of a
/// batch. For anchor `i`, `a` is the sum of inner products with the other
/// examples of the same selected group (their mean when `averaged`), `b` is
/// the sum over examples of other groups divided by `groups - 1`, and the
/// anchor contributes `-log(e^a / (e^a + e^b))`. Anchors without a same-group
/// partner are skipped; the result is the mean over the remaining anchors
/// (a constant zero if there are none).
pub fn relationship_enhancement_loss(
    g: &mut Graph,
    reps: &[Var],
    selected: &[usize],
    groups: usize,
    averaged: bool,
) -> Result<Var> {
    if groups < 2 {
        return Err(Error::Config(
            "relationship enhancement needs at least two groups".into(),
        ));
    }
    if reps.len() != selected.len() {
        return Err(Error::Config(format!(
            "{} representations but {} group labels",
            reps.len(),
            selected.len()
        )));
    }
    if reps.len() < 2 {
        return Err(Error::Config(
            "relationship enhancement needs a batch of at least two".into(),
        ));
    }
    let first = g.constant_row(&[1.0, 0.0]);
    let second = g.constant_row(&[0.0, 1.0]);
    let neg_scale = 1.0 / (groups - 1) as f64;
    let mut anchors = Vec::new();
    for i in 0..reps.len() {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for j in (0..reps.len()).filter(|&j| j != i) {
            let d = g.dot(reps[i], reps[j])?;
            if selected[j] == selected[i] {
                pos.push(d);
            } else {
                neg.push(d);
            }
        }
        if pos.is_empty() {
            continue;
        }
        let a = g.masked_sum(&pos, &vec![1.0; pos.len()])?;
        let a = if averaged { g.scale(a, 1.0 / pos.len() as f64) } else { a };
        let b = if neg.is_empty() {
            g.constant_scalar(0.0)
        } else {
            g.masked_sum(&neg, &vec![neg_scale; neg.len()])?
        };
        let la = g.mul(first, a)?;
        let lb = g.mul(second, b)?;
        let logits = g.add(la, lb)?;
        anchors.push(g.softmax_cross_entropy(logits, 0)?);
    }
    if anchors.is_empty() {
        return Ok(g.constant_scalar(0.0));
    }
    let w = 1.0 / anchors.len() as f64;
    Ok(g.masked_sum(&anchors, &vec![w; anchors.len()])?)
}

/// Cross-entropy of the group classifier on `rep` against `y_plus`.
pub fn group_prediction_loss(g: &mut Graph, bound: &Bound<'_>, rep: Var, y_plus: usize) -> Result<Var> {
    let groups = bound.model().config().groups;
    if y_plus >= groups {
        return Err(TensorError::Contract(format!(
            "group index {y_plus} out of range for {groups} groups"
        ))
        .into());
    }
    let logits = bound.group_logits(g, rep)?;
    Ok(g.softmax_cross_entropy(logits, y_plus)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};
    use crate::tensor::Tensor;

    fn value(reps: &[Vec<f64>], selected: &[usize], groups: usize, averaged: bool) -> f64 {
        let mut g = Graph::new();
        let vs: Vec<Var> = reps.iter().map(|r| g.constant_row(r)).collect();
        let l = relationship_enhancement_loss(&mut g, &vs, selected, groups, averaged).unwrap();
        g.item(l).unwrap()
    }

    #[test]
    fn hand_example() {
        let reps = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        // anchors 0 and 1 each see a = 1, b = 0; anchor 2 has no partner
        let want = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((want - 0.3133).abs() < 1e-4);
        assert!((value(&reps, &[1, 1, 2], 2, false) - want).abs() < 1e-15);
    }

    #[test]
    fn symmetric_logits_give_ln2() {
        // a = b = 0 for orthogonal same-group partners with no negatives
        let reps = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((value(&reps, &[0, 0], 2, false) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn large_margin_goes_to_zero() {
        let reps = vec![vec![30.0, 0.0], vec![30.0, 0.0], vec![0.0, 1.0]];
        assert!(value(&reps, &[0, 0, 1], 2, false) < 1e-12);
    }

    #[test]
    fn averaged_variant_divides_positives() {
        let reps = vec![vec![1.0], vec![2.0], vec![3.0]];
        // anchor 0: sum a = 5, mean a = 2.5
        let sum = value(&reps, &[0, 0, 0], 2, false);
        let mean = value(&reps, &[0, 0, 0], 2, true);
        assert!(mean > sum);
    }

    #[test]
    fn permutation_invariant() {
        let reps = vec![vec![0.3, -0.2], vec![0.1, 0.5], vec![-0.4, 0.2], vec![0.2, 0.2]];
        let sel = [0, 1, 0, 1];
        let order = [2, 0, 3, 1];
        let p_reps: Vec<Vec<f64>> = order.iter().map(|&i| reps[i].clone()).collect();
        let p_sel: Vec<usize> = order.iter().map(|&i| sel[i]).collect();
        assert!((value(&reps, &sel, 3, false) - value(&p_reps, &p_sel, 3, false)).abs() < 1e-14);
    }

    #[test]
    fn configuration_errors() {
        let mut g = Graph::new();
        let a = g.constant_row(&[1.0]);
        let b = g.constant_row(&[1.0]);
        assert!(matches!(
            relationship_enhancement_loss(&mut g, &[a, b], &[0, 0], 1, false),
            Err(Error::Config(_))
        ));
        assert!(relationship_enhancement_loss(&mut g, &[a], &[0], 2, false).is_err());
    }

    fn tiny() -> Model {
        Model::new(ModelConfig {
            vocab_size: 10,
            embed_dim: 8,
            hidden: 4,
            latent: 2,
            layers: 1,
            groups: 4,
            bow: false,
            seed: 5,
            zero_latent: false,
        })
        .unwrap()
    }

    #[test]
    fn group_prediction_examples() {
        let mut m = tiny();
        let out = m.layout().group_output;
        m.params_mut().get_mut(out.w).data_mut().fill(0.0);
        m.params_mut().get_mut(out.b).data_mut().fill(0.0);
        let mut g = Graph::new();
        let b = m.bind(&mut g);
        let rep = g.constant_row(&[0.1, 0.2, 0.3, 0.4]);
        let l = group_prediction_loss(&mut g, &b, rep, 2).unwrap();
        assert!((g.item(l).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(group_prediction_loss(&mut g, &b, rep, 4).is_err());
    }

    #[test]
    fn group_prediction_gradcheck() {
        let m = tiny();
        let rep = Tensor::row(vec![0.5, -0.3, 0.2, 0.9]);
        for id in [m.layout().group_hidden.w, m.layout().group_output.w, m.layout().group_hidden.b] {
            let err = m.gradcheck_param(id, 1e-5, |b, g| {
                let r = g.constant(&rep);
                group_prediction_loss(g, b, r, 1)
            });
            assert!(err < 1e-6, "{err}");
        }
    }
}
