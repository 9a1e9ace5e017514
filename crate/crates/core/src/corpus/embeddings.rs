use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Vocab, PAD};
use crate::{Error, Result};

/// `|V| × m` word vectors. The PAD row is all zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
    /// Vocabulary ids that were found in the source file.
    found: Vec<bool>,
}

impl EmbeddingMatrix {
    /// Uniform in `[-0.1, 0.1]`; each row draws from its own stream so rows
    /// do not depend on vocabulary order.
    pub fn random(rows: usize, dim: usize, seed: u64) -> Self {
        let mut data = vec![0.0; rows * dim];
        for r in 1..rows {
            fill_uniform(&mut data[r * dim..(r + 1) * dim], seed, r);
        }
        Self {
            dim,
            data,
            found: vec![false; rows],
        }
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Format(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        let rows = data.len() / dim;
        Ok(Self {
            dim,
            data,
            found: vec![true; rows],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn found(&self, id: usize) -> bool {
        self.found.get(id).copied().unwrap_or(false)
    }
}

fn fill_uniform(out: &mut [f64], seed: u64, row: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for x in out {
        *x = rng.random_range(-0.1..=0.1);
    }
}

/// Parses GloVe-style text: a token followed by `m` decimal values per line.
/// `m` is fixed by the first line (or by `dim` when given).
pub fn parse_embedding_text(
    text: &str,
    dim: Option<usize>,
    origin: &str,
) -> Result<HashMap<String, Vec<f64>>> {
    let mut out = HashMap::new();
    let mut width = dim;
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let values: std::result::Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: format!("bad number: {e}"),
        })?;
        let m = *width.get_or_insert(values.len());
        if values.len() != m || m == 0 {
            return Err(Error::Format(format!(
                "{origin}:{}: expected {m} values, found {}",
                i + 1,
                values.len()
            )));
        }
        out.insert(token.to_string(), values);
    }
    Ok(out)
}

/// Loads vectors for every vocabulary entry. Tokens missing from the file
/// are drawn uniformly from `[-0.1, 0.1]` using `seed`; PAD is zeroed.
pub fn load_embeddings(path: &Path, vocab: &Vocab, dim: Option<usize>, seed: u64) -> Result<EmbeddingMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table = parse_embedding_text(&text, dim, &path.display().to_string())?;
    let m = dim
        .or_else(|| table.values().next().map(Vec::len))
        .ok_or_else(|| Error::Format(format!("{}: no embeddings found", path.display())))?;
    let mut mat = EmbeddingMatrix::random(vocab.len(), m, seed);
    for (id, token) in vocab.tokens().iter().enumerate() {
        if id == PAD {
            continue;
        }
        if let Some(v) = table.get(token) {
            mat.data[id * m..(id + 1) * m].copy_from_slice(v);
            mat.found[id] = true;
        }
    }
    Ok(mat)
}

pub fn write_embeddings(path: &Path, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let mut buf = Vec::new();
    for (token, v) in entries {
        write!(buf, "{token}").expect("write to Vec");
        for x in v {
            write!(buf, " {x}").expect("write to Vec");
        }
        writeln!(buf).expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_read_and_fallback_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        fs::write(&path, "the 0.1 0.2\n").unwrap();
        let vocab = Vocab::from_words(["the".to_string(), "cat".to_string()]);
        let m = load_embeddings(&path, &vocab, None, 3).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.row(vocab.id("the")), &[0.1, 0.2]);
        assert!(m.found(vocab.id("the")));
        let cat = m.row(vocab.id("cat"));
        assert!(!m.found(vocab.id("cat")));
        assert!(cat.iter().all(|x| (-0.1..=0.1).contains(x)));
        assert_eq!(m.row(PAD), &[0.0, 0.0]);
    }

    #[test]
    fn short_line_is_a_format_error() {
        let err = parse_embedding_text("a 1 2 3\nb 1 2\n", None, "x").unwrap_err();
        assert!(matches!(err, Error::Format(ref s) if s.contains(":2:")), "{err}");
        let err = parse_embedding_text("a 1 2\n", Some(3), "x").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let err = parse_embedding_text("a 1 zz\n", None, "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        write_embeddings(&path, &[("x".into(), vec![0.25, -1.5]), ("y".into(), vec![3.0, 1e-7])]).unwrap();
        let vocab = Vocab::from_words(["y".to_string(), "x".to_string()]);
        let m = load_embeddings(&path, &vocab, Some(2), 0).unwrap();
        assert_eq!(m.row(vocab.id("x")), &[0.25, -1.5]);
        assert_eq!(m.row(vocab.id("y")), &[3.0, 1e-7]);
    }
}
