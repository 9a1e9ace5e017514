use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use crate::tensor::{Graph, Result, Var};

/// Weights of one GRU layer. Gate order in the fused matrices is
/// reset, update, candidate.
#[derive(Clone, Copy, Debug)]
pub struct GruLayer {
    pub input: usize,
    pub hidden: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b_x: ParamId,
    pub b_h: ParamId,
}

impl GruLayer {
    pub(crate) fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            input,
            hidden,
            w_x: store.add_matrix(&format!("{name}.w_x"), input, 3 * hidden, rng),
            w_h: store.add_matrix(&format!("{name}.w_h"), hidden, 3 * hidden, rng),
            b_x: store.add_zeros(&format!("{name}.b_x"), 1, 3 * hidden),
            b_h: store.add_zeros(&format!("{name}.b_h"), 1, 3 * hidden),
        }
    }

    /// `r = σ(·)`, `u = σ(·)`, `n = tanh(x W_n + b_n + r ⊙ (h U_n + c_n))`,
    /// `h' = n + u ⊙ (h - n)`.
    pub fn step(&self, g: &mut Graph, p: &[Var], x: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        let gx = g.matmul(x, p[self.w_x.0])?;
        let gx = g.add(gx, p[self.b_x.0])?;
        let gh = g.matmul(h, p[self.w_h.0])?;
        let gh = g.add(gh, p[self.b_h.0])?;
        let rz_x = g.slice_cols(gx, 0, 2 * n)?;
        let rz_h = g.slice_cols(gh, 0, 2 * n)?;
        let rz = g.add(rz_x, rz_h)?;
        let rz = g.sigmoid(rz);
        let r = g.slice_cols(rz, 0, n)?;
        let u = g.slice_cols(rz, n, 2 * n)?;
        let cx = g.slice_cols(gx, 2 * n, 3 * n)?;
        let ch = g.slice_cols(gh, 2 * n, 3 * n)?;
        let ch = g.mul(r, ch)?;
        let cand = g.add(cx, ch)?;
        let cand = g.tanh(cand);
        let diff = g.sub(h, cand)?;
        let gated = g.mul(u, diff)?;
        g.add(cand, gated)
    }
}

/// Stack of GRU layers; layer `k + 1` reads the hidden state of layer `k`.
#[derive(Clone, Debug)]
pub struct Gru {
    pub layers: Vec<GruLayer>,
}

impl Gru {
    pub(crate) fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|k| {
                let inp = if k == 0 { input } else { hidden };
                GruLayer::new(store, &format!("{name}.{k}"), inp, hidden, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    /// Advances every layer by one step; `state` holds one hidden per layer.
    pub fn step(&self, g: &mut Graph, p: &[Var], x: Var, state: &mut [Var]) -> Result<Var> {
        let mut inp = x;
        for (layer, h) in self.layers.iter().zip(state.iter_mut()) {
            *h = layer.step(g, p, inp, *h)?;
            inp = *h;
        }
        Ok(inp)
    }

    /// Runs the sequence from a zero state and returns the top-layer final
    /// hidden state.
    pub fn run(&self, g: &mut Graph, p: &[Var], inputs: &[Var]) -> Result<Var> {
        let zero = g.constant_row(&vec![0.0; self.hidden()]);
        let mut state = vec![zero; self.layers.len()];
        let mut top = zero;
        for &x in inputs {
            top = self.step(g, p, x, &mut state)?;
        }
        Ok(top)
    }
}
