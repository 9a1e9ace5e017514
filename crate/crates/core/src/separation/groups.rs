use crate::{Error, Result};

/// `N` mutually orthogonal block-indicator vectors of size `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSet {
    m: usize,
    vectors: Vec<Vec<f64>>,
}

/// Group `i` (zero-based) has ones in slots `i·d .. (i+1)·d` with
/// `d = floor(m / N)`; any trailing `m mod N` slots are zero everywhere.
pub fn dialogue_augment(m: usize, n: usize) -> Result<GroupSet> {
    if n == 0 {
        return Err(Error::Config("the number of groups must be at least 1".into()));
    }
    if n > m {
        return Err(Error::Config(format!(
            "{n} groups do not fit in embedding size {m}"
        )));
    }
    let d = m / n;
    let vectors = (0..n)
        .map(|i| {
            let mut y = vec![0.0; m];
            y[i * d..(i + 1) * d].fill(1.0);
            y
        })
        .collect();
    Ok(GroupSet { m, vectors })
}

impl GroupSet {
    /// All-zero vectors, used to check that grouping degenerates to the
    /// plain model.
    pub fn zeroed(m: usize, n: usize) -> Self {
        Self {
            m,
            vectors: vec![vec![0.0; m]; n],
        }
    }

    /// Arbitrary vectors of a common size (test rigs, permutations).
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let m = vectors.first().map_or(0, Vec::len);
        if vectors.is_empty() || m == 0 || vectors.iter().any(|v| v.len() != m) {
            return Err(Error::Config("group vectors must be non-empty and equally sized".into()));
        }
        Ok(Self { m, vectors })
    }

    /// Every vector multiplied by `k`.
    pub fn scaled(mut self, k: f64) -> Self {
        self.vectors.iter_mut().flatten().for_each(|x| *x *= k);
        self
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let g = dialogue_augment(6, 3).unwrap();
        assert_eq!(g.vector(0), &[1., 1., 0., 0., 0., 0.]);
        assert_eq!(g.vector(1), &[0., 0., 1., 1., 0., 0.]);
        assert_eq!(g.vector(2), &[0., 0., 0., 0., 1., 1.]);
        let g = dialogue_augment(7, 3).unwrap();
        assert!(g.vectors().iter().all(|y| y[6] == 0.0 && y.iter().sum::<f64>() == 2.0));
        let g = dialogue_augment(5, 1).unwrap();
        assert_eq!(g.vector(0), &[1.0; 5]);
        assert!(dialogue_augment(3, 4).is_err());
        assert!(dialogue_augment(3, 0).is_err());
    }

    proptest! {
        #[test]
        fn pairwise_orthogonal(m in 1usize..=64, frac in 0.0f64..1.0) {
            let n = 1 + ((m - 1) as f64 * frac) as usize;
            let g = dialogue_augment(m, n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = g.vector(i).iter().zip(g.vector(j)).map(|(a, b)| a * b).sum();
                    if i == j {
                        prop_assert_eq!(dot, (m / n) as f64);
                    } else {
                        prop_assert_eq!(dot, 0.0);
                    }
                }
            }
        }
    }
}
