use serde::{Deserialize, Serialize};

use super::cosine;

/// How examples are assigned to groups for the distance analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grouping<'a> {
    /// Explicit group id per example (the selected positive group).
    Labels(&'a [usize]),
    /// Two examples share a group iff their cosine is at least the
    /// threshold (baseline models without group information).
    Threshold(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchGeometry {
    pub batch: usize,
    pub inner_dis: Option<f64>,
    pub inter_dis: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub batches: Vec<BatchGeometry>,
    pub mean_inner: Option<f64>,
    pub mean_inter: Option<f64>,
}

impl GeometryReport {
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("batch,inner_dis,inter_dis\n");
        for b in &self.batches {
            out.push_str(&format!("{},{},{}\n", b.batch, fmt(b.inner_dis), fmt(b.inter_dis)));
        }
        out
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Per example, the mean cosine to same-group and to other-group examples;
/// the batch value averages over examples whose comparison set is non-empty.
pub fn geometry_analysis(vectors: &[Vec<f64>], grouping: Grouping<'_>, batch: usize) -> BatchGeometry {
    let n = vectors.len();
    let mut cos = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = cosine(&vectors[i], &vectors[j]);
            cos[i * n + j] = c;
            cos[j * n + i] = c;
        }
    }
    let same = |i: usize, j: usize| match grouping {
        Grouping::Labels(l) => l[i] == l[j],
        Grouping::Threshold(t) => cos[i * n + j] >= t,
    };
    let mut inner = Vec::new();
    let mut inter = Vec::new();
    for i in 0..n {
        let (mut s_in, mut c_in, mut s_out, mut c_out) = (0.0, 0usize, 0.0, 0usize);
        for j in (0..n).filter(|&j| j != i) {
            if same(i, j) {
                s_in += cos[i * n + j];
                c_in += 1;
            } else {
                s_out += cos[i * n + j];
                c_out += 1;
            }
        }
        if c_in > 0 {
            inner.push(s_in / c_in as f64);
        }
        if c_out > 0 {
            inter.push(s_out / c_out as f64);
        }
    }
    BatchGeometry {
        batch,
        inner_dis: mean(&inner),
        inter_dis: mean(&inter),
    }
}

/// Runs [`geometry_analysis`] on consecutive batches and averages the
/// defined batch values.
pub fn geometry_by_batch(vectors: &[Vec<f64>], grouping: Grouping<'_>, batch_size: usize) -> GeometryReport {
    let mut batches = Vec::new();
    for (b, start) in (0..vectors.len()).step_by(batch_size.max(1)).enumerate() {
        let end = (start + batch_size.max(1)).min(vectors.len());
        if end - start < 2 {
            continue;
        }
        let g = match grouping {
            Grouping::Labels(l) => Grouping::Labels(&l[start..end]),
            t => t,
        };
        batches.push(geometry_analysis(&vectors[start..end], g, b));
    }
    let inner: Vec<f64> = batches.iter().filter_map(|b| b.inner_dis).collect();
    let inter: Vec<f64> = batches.iter().filter_map(|b| b.inter_dis).collect();
    GeometryReport {
        mean_inner: mean(&inner),
        mean_inter: mean(&inter),
        batches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let g = geometry_analysis(&[vec![1.0, 2.0], vec![1.0, 2.0]], Grouping::Labels(&[0, 0]), 0);
        assert!((g.inner_dis.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(g.inter_dis, None);
        let g = geometry_analysis(&[vec![1.0, 0.0], vec![0.0, 3.0]], Grouping::Labels(&[0, 1]), 0);
        assert_eq!(g.inter_dis, Some(0.0));
        assert_eq!(g.inner_dis, None);
    }

    #[test]
    fn threshold_mode() {
        let v = vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0]];
        let g = geometry_analysis(&v, Grouping::Threshold(0.9), 0);
        let c01 = cosine(&v[0], &v[1]);
        assert!((g.inner_dis.unwrap() - c01).abs() < 1e-15);
        assert!(g.inner_dis.unwrap() >= 0.9);
    }

    #[test]
    fn batching_and_csv() {
        let v: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64]).collect();
        let labels = [0, 0, 1, 1, 0];
        let r = geometry_by_batch(&v, Grouping::Labels(&labels), 2);
        // the trailing single example forms no batch
        assert_eq!(r.batches.len(), 2);
        assert!(r.to_csv().starts_with("batch,inner_dis,inter_dis\n0,"));
    }
}
