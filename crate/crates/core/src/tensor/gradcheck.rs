use super::{Graph, Result, Tensor, Var};

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares the reverse-mode gradient of `f` at `point` with central
/// differences of step `epsilon` and returns the largest relative error.
///
/// A failing evaluation or any non-finite value yields `NaN`.
pub fn finite_difference_check<F>(f: F, point: &Tensor, epsilon: f64) -> f64
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |t: &Tensor| -> Option<f64> {
        let mut g = Graph::new();
        let x = g.leaf(t);
        let y = f(&mut g, x).ok()?;
        g.item(y).ok()
    };

    let base = point.clone().with_grad(true);
    let analytic = {
        let mut g = Graph::new();
        let x = g.leaf(&base);
        let Ok(y) = f(&mut g, x) else {
            return f64::NAN;
        };
        if g.backward(y).is_err() {
            return f64::NAN;
        }
        g.grad(x)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; base.len()])
    };

    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = base.clone();
        plus.data_mut()[i] += epsilon;
        let mut minus = base.clone();
        minus.data_mut()[i] -= epsilon;
        let (Some(fp), Some(fm)) = (eval(&plus), eval(&minus)) else {
            return f64::NAN;
        };
        let numeric = (fp - fm) / (2.0 * epsilon);
        let err = relative_error(a, numeric);
        if !err.is_finite() {
            return f64::NAN;
        }
        worst = worst.max(err);
    }
    worst
}
