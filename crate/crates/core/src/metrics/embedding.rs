use crate::corpus::{EmbeddingMatrix, BOS, EOS, PAD, UNK};

/// Mean vector of the in-vocabulary tokens; `None` if there are none.
pub fn mean_embedding(tokens: &[usize], emb: &EmbeddingMatrix) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; emb.dim()];
    let mut n = 0usize;
    for &t in tokens {
        if matches!(t, PAD | UNK | BOS | EOS) || t >= emb.rows() {
            continue;
        }
        for (a, &x) in acc.iter_mut().zip(emb.row(t)) {
            *a += x;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let inv = 1.0 / n as f64;
    Some(acc.into_iter().map(|x| x * inv).collect())
}

/// Cosine similarity clamped to `[-1, 1]`; zero if either side is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine between mean embeddings of a generated and a reference response.
pub fn embedding_average(candidate: &[usize], reference: &[usize], emb: &EmbeddingMatrix) -> Option<f64> {
    Some(cosine(&mean_embedding(candidate, emb)?, &mean_embedding(reference, emb)?))
}

/// Cosine between mean embeddings of a context and a generated response.
pub fn coherence(context: &[usize], response: &[usize], emb: &EmbeddingMatrix) -> Option<f64> {
    embedding_average(response, context, emb)
}
