use crate::{Error, Result};

/// One-hot row per example marking the selected (lowest-loss) group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockingMask {
    groups: usize,
    rows: Vec<Vec<u8>>,
}

impl BlockingMask {
    pub fn from_selection(selected: &[usize], groups: usize) -> Self {
        let rows = selected
            .iter()
            .map(|&s| {
                let mut r = vec![0u8; groups];
                r[s] = 1;
                r
            })
            .collect();
        Self { groups, rows }
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// The mask row as `f64` weights.
    pub fn weights(&self, row: usize) -> Vec<f64> {
        self.rows[row].iter().map(|&b| f64::from(b)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Blocking {
    pub mask: BlockingMask,
    pub selected: Vec<usize>,
    pub masked_loss: f64,
}

/// Index of the smallest entry, ties to the lowest index. `row` names the
/// batch row in the error for non-finite input.
pub fn argmin_row(losses: &[f64], row: usize) -> Result<usize> {
    if losses.is_empty() {
        return Err(Error::Training(format!("row {row} has no group losses")));
    }
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss {l} in row {row}, group {i}"
            )));
        }
        if l < losses[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Keeps only the lowest loss of every row: returns the mask, the selected
/// group per row, and `Σ_rows Σ_groups loss ⊙ mask`.
pub fn gradient_block(losses: &[Vec<f64>]) -> Result<Blocking> {
    let groups = losses.first().map_or(0, Vec::len);
    let mut selected = Vec::with_capacity(losses.len());
    let mut masked_loss = 0.0;
    for (r, row) in losses.iter().enumerate() {
        if row.len() != groups {
            return Err(Error::Training(format!(
                "row {r} has {} group losses, expected {groups}",
                row.len()
            )));
        }
        let s = argmin_row(row, r)?;
        masked_loss += row[s];
        selected.push(s);
    }
    Ok(Blocking {
        mask: BlockingMask::from_selection(&selected, groups),
        selected,
        masked_loss,
    })
}
