//! GRU sequence-to-sequence conditional VAE.
//!
//! The model is a bag of named parameter tensors ([`ParamStore`]) plus a
//! [`Layout`] naming which tensor plays which role. Forward computations
//! are written against a [`Graph`]: [`Model::bind`] registers every
//! parameter as a leaf and returns a [`Bound`] view whose methods build the
//! encoders, the recognition and prior networks, the decoder and the
//! losses on that graph.

mod gaussian;
mod gru;
mod params;

pub use gaussian::{
    kl_diag_gauss, latent_from_noise, latent_noise, mix_seed, sample_latent, GaussianParams, LatentSample,
};
pub use gru::{Gru, GruLayer};
pub use params::{Grads, ParamId, ParamStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DialoguePair, EmbeddingMatrix, BOS, EOS};
use crate::tensor::{Graph, Tensor, TensorError, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Word embedding size `m`; group vectors have this size too.
    pub embed_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub layers: usize,
    /// Number of classes of the group-prediction classifier.
    pub groups: usize,
    /// Adds the bag-of-words projection.
    pub bow: bool,
    pub seed: u64,
    /// Decode from `z = 0` at inference (the latent-free baseline).
    #[serde(default)]
    pub zero_latent: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 256,
            embed_dim: 32,
            hidden: 32,
            latent: 16,
            layers: 1,
            groups: 4,
            bow: false,
            seed: 7,
            zero_latent: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("layers", self.layers),
            ("groups", self.groups),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size <= EOS {
            return Err(Error::Config("vocabulary must extend past the reserved tokens".into()));
        }
        Ok(())
    }
}

/// Affine map `x W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: store.add_matrix(&format!("{name}.w"), input, output, rng),
            b: store.add_zeros(&format!("{name}.b"), 1, output),
        }
    }

    pub fn apply(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.w.0])?;
        Ok(g.add(y, p[self.b.0])?)
    }
}

/// Parameter roles.
#[derive(Clone, Debug)]
pub struct Layout {
    pub embedding: ParamId,
    pub context_encoder: Gru,
    pub response_encoder: Gru,
    /// `[context; response] -> [μ; log σ²]`.
    pub recognition: Linear,
    /// `context -> [μ; log σ²]`.
    pub prior: Linear,
    /// `[z; context] -> initial decoder state` (all layers stacked).
    pub decoder_init: Linear,
    pub decoder: Gru,
    pub output: Linear,
    pub bow: Option<Linear>,
    pub group_hidden: Linear,
    pub group_output: Linear,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

/// Mean and log-variance nodes of a diagonal Gaussian.
#[derive(Clone, Copy, Debug)]
pub struct GaussVars {
    pub mu: Var,
    pub log_var: Var,
}

impl GaussVars {
    pub fn values(&self, g: &Graph) -> GaussianParams {
        GaussianParams {
            mu: g.value(self.mu).to_vec(),
            log_var: g.value(self.log_var).to_vec(),
        }
    }
}

/// Nodes produced by one evaluation of the lower bound.
#[derive(Clone, Debug)]
pub struct ElboTerms {
    pub context: Var,
    pub posterior: GaussVars,
    pub prior: GaussVars,
    pub z: Var,
    /// Negative teacher-forced log-likelihood of the response.
    pub reconstruction: Var,
    pub kl: Var,
    /// `reconstruction + kl`.
    pub loss: Var,
    /// Decoder logits per target position.
    pub logits: Vec<Var>,
}

/// Result of greedy generation with the prior-mean latent.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Generated tokens, ending with EOS unless `max_len` was reached.
    pub tokens: Vec<usize>,
    pub context_state: Vec<f64>,
    pub z: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::default();
        let (v, m, h, dz, l) = (
            config.vocab_size,
            config.embed_dim,
            config.hidden,
            config.latent,
            config.layers,
        );
        let emb = EmbeddingMatrix::random(v, m, mix_seed(&[config.seed, 1]));
        let embedding = store.add("embedding", Tensor::new(vec![v, m], emb.into_data())?);
        let layout = Layout {
            embedding,
            context_encoder: Gru::new(&mut store, "context_encoder", m, h, l, &mut rng),
            response_encoder: Gru::new(&mut store, "response_encoder", m, h, l, &mut rng),
            recognition: Linear::new(&mut store, "recognition", 2 * h, 2 * dz, &mut rng),
            prior: Linear::new(&mut store, "prior", h, 2 * dz, &mut rng),
            decoder_init: Linear::new(&mut store, "decoder_init", dz + h, h * l, &mut rng),
            decoder: Gru::new(&mut store, "decoder", m, h, l, &mut rng),
            output: Linear::new(&mut store, "output", h, v, &mut rng),
            bow: config
                .bow
                .then(|| Linear::new(&mut store, "bow", dz + h, v, &mut rng)),
            group_hidden: Linear::new(&mut store, "group_mlp.hidden", h, h, &mut rng),
            group_output: Linear::new(&mut store, "group_mlp.output", h, config.groups, &mut rng),
        };
        Ok(Self {
            config,
            params: store,
            layout,
        })
    }

    /// Replaces the word embedding table, e.g. with pretrained vectors.
    pub fn set_embeddings(&mut self, emb: &EmbeddingMatrix) -> Result<()> {
        if emb.rows() != self.config.vocab_size || emb.dim() != self.config.embed_dim {
            return Err(Error::Config(format!(
                "embedding table is {}x{}, model expects {}x{}",
                emb.rows(),
                emb.dim(),
                self.config.vocab_size,
                self.config.embed_dim
            )));
        }
        let t = self.params.get_mut(self.layout.embedding);
        t.data_mut().copy_from_slice(emb.data());
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Current embedding table as an [`EmbeddingMatrix`].
    pub fn embeddings(&self) -> EmbeddingMatrix {
        let t = self.params.get(self.layout.embedding);
        EmbeddingMatrix::from_rows(self.config.embed_dim, t.data().to_vec()).expect("table shape is consistent")
    }

    pub fn bind<'a>(&'a self, g: &mut Graph) -> Bound<'a> {
        Bound {
            model: self,
            vars: self.params.bind(g),
        }
    }

    /// Like [`Model::bind`], but parameter `id` is represented by `var`
    /// (used to differentiate with respect to a substituted tensor).
    pub fn bind_with(&self, g: &mut Graph, id: ParamId, var: Var) -> Bound<'_> {
        let mut b = self.bind(g);
        b.vars[id.0] = var;
        b
    }

    pub fn encode_context(&self, tokens: &[usize], group: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let c = b.encode_context(&mut g, tokens, group)?;
        Ok(g.value(c).to_vec())
    }

    pub fn encode_response(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let r = b.encode_response(&mut g, tokens)?;
        Ok(g.value(r).to_vec())
    }

    pub fn prior_of(&self, context_state: &[f64]) -> Result<GaussianParams> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let c = g.constant_row(context_state);
        Ok(b.prior(&mut g, c)?.values(&g))
    }

    /// Argmax rollout from `(z, context_state)`, stopping after EOS or at
    /// `max_len` tokens.
    pub fn decode_greedy(&self, z: &[f64], context_state: &[f64], max_len: usize) -> Result<Vec<usize>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let zv = g.constant_row(z);
        let cv = g.constant_row(context_state);
        b.decode_greedy(&mut g, zv, cv, max_len)
    }

    /// Greedy response for `context` (optionally augmented with `group`)
    /// using the mean of the prior as latent.
    pub fn generate(&self, context: &[usize], group: Option<&[f64]>, max_len: usize) -> Result<Generation> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let c = b.encode_context(&mut g, context, group)?;
        let z = b.inference_latent(&mut g, c)?;
        let tokens = b.decode_greedy(&mut g, z, c, max_len)?;
        Ok(Generation {
            tokens,
            context_state: g.value(c).to_vec(),
            z: g.value(z).to_vec(),
        })
    }

    /// Teacher-forced NLL of the response and its token count, with the
    /// prior mean as latent.
    pub fn teacher_nll(&self, pair: &DialoguePair, group: Option<&[f64]>) -> Result<(f64, usize)> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let c = b.encode_context(&mut g, &pair.context, group)?;
        let z = b.inference_latent(&mut g, c)?;
        let (nll, _) = b.decode_teacher(&mut g, z, c, &pair.response)?;
        Ok((g.item(nll)?, pair.response.len()))
    }

    /// Largest relative error between the reverse-mode gradient of `f` with
    /// respect to parameter `id` and central differences of step `epsilon`.
    pub fn gradcheck_param<F>(&self, id: ParamId, epsilon: f64, f: F) -> f64
    where
        F: Fn(&Bound<'_>, &mut Graph) -> Result<Var>,
    {
        let point = self.params.get(id).clone();
        crate::tensor::finite_difference_check(
            |g, x| {
                let b = self.bind_with(g, id, x);
                f(&b, g).map_err(|e| match e {
                    Error::Tensor(t) => t,
                    other => TensorError::Contract(other.to_string()),
                })
            },
            &point,
            epsilon,
        )
    }

    /// Negative lower bound of one pair for a fixed noise vector.
    pub fn elbo_loss(&self, pair: &DialoguePair, group: Option<&[f64]>, eps: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let r = b.encode_response(&mut g, &pair.response)?;
        let t = b.elbo(&mut g, pair, group, r, eps)?;
        Ok(g.item(t.loss)?)
    }
}

/// Parameters of a [`Model`] registered on one graph.
pub struct Bound<'a> {
    model: &'a Model,
    vars: Vec<Var>,
}

fn nonempty(tokens: &[usize], what: &str) -> Result<()> {
    if tokens.is_empty() {
        return Err(TensorError::Contract(format!("empty {what} sequence")).into());
    }
    Ok(())
}

impl<'a> Bound<'a> {
    pub fn model(&self) -> &'a Model {
        self.model
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn layout(&self) -> &'a Layout {
        &self.model.layout
    }

    fn embed(&self, g: &mut Graph, tokens: &[usize], shift: Option<Var>) -> Result<Vec<Var>> {
        let table = self.var(self.layout().embedding);
        tokens
            .iter()
            .map(|&t| {
                let e = g.gather_row(table, t)?;
                Ok(match shift {
                    Some(y) => g.add(e, y)?,
                    None => e,
                })
            })
            .collect()
    }

    /// Final context-encoder state; `group` is added to every token
    /// embedding when given.
    pub fn encode_context(&self, g: &mut Graph, tokens: &[usize], group: Option<&[f64]>) -> Result<Var> {
        nonempty(tokens, "context")?;
        let shift = match group {
            Some(y) => {
                if y.len() != self.model.config.embed_dim {
                    return Err(TensorError::Dimension {
                        op: "group vector",
                        lhs: vec![y.len()],
                        rhs: vec![self.model.config.embed_dim],
                    }
                    .into());
                }
                Some(g.constant_row(y))
            }
            None => None,
        };
        let xs = self.embed(g, tokens, shift)?;
        Ok(self.layout().context_encoder.run(g, &self.vars, &xs)?)
    }

    pub fn encode_response(&self, g: &mut Graph, tokens: &[usize]) -> Result<Var> {
        nonempty(tokens, "response")?;
        let xs = self.embed(g, tokens, None)?;
        Ok(self.layout().response_encoder.run(g, &self.vars, &xs)?)
    }

    /// Response-encoder state of a soft sequence: each step's input is the
    /// probability-weighted average of the embedding table.
    pub fn encode_soft(&self, g: &mut Graph, logits: &[Var]) -> Result<Var> {
        if logits.is_empty() {
            return Err(TensorError::Contract("empty soft sequence".into()).into());
        }
        let table = self.var(self.layout().embedding);
        let xs = logits
            .iter()
            .map(|&l| {
                let p = g.softmax(l);
                g.matmul(p, table)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(self.layout().response_encoder.run(g, &self.vars, &xs)?)
    }

    fn gaussian(&self, g: &mut Graph, out: Var) -> Result<GaussVars> {
        let dz = self.model.config.latent;
        Ok(GaussVars {
            mu: g.slice_cols(out, 0, dz)?,
            log_var: g.slice_cols(out, dz, 2 * dz)?,
        })
    }

    pub fn recognition(&self, g: &mut Graph, context: Var, response: Var) -> Result<GaussVars> {
        let x = g.concat(&[context, response])?;
        let out = self.layout().recognition.apply(g, &self.vars, x)?;
        self.gaussian(g, out)
    }

    pub fn prior(&self, g: &mut Graph, context: Var) -> Result<GaussVars> {
        let out = self.layout().prior.apply(g, &self.vars, context)?;
        self.gaussian(g, out)
    }

    /// Closed-form diagonal KL(q || p) as a scalar node.
    pub fn kl(&self, g: &mut Graph, q: GaussVars, p: GaussVars) -> Result<Var> {
        let dlv = g.sub(p.log_var, q.log_var)?;
        let var_q = g.exp(q.log_var);
        let dmu = g.sub(q.mu, p.mu)?;
        let dmu2 = g.mul(dmu, dmu)?;
        let num = g.add(var_q, dmu2)?;
        let neg_lp = g.scale(p.log_var, -1.0);
        let inv_var_p = g.exp(neg_lp);
        let ratio = g.mul(num, inv_var_p)?;
        let t = g.add(dlv, ratio)?;
        let s = g.sum(t);
        let s = g.scale(s, 0.5);
        let half_d = g.constant_scalar(0.5 * self.model.config.latent as f64);
        Ok(g.sub(s, half_d)?)
    }

    /// `z = μ + exp(log σ² / 2) ⊙ ε`; ε is a constant.
    pub fn sample(&self, g: &mut Graph, q: GaussVars, eps: &[f64]) -> Result<Var> {
        let half = g.scale(q.log_var, 0.5);
        let sigma = g.exp(half);
        let e = g.constant_row(eps);
        let noise = g.mul(sigma, e)?;
        Ok(g.add(q.mu, noise)?)
    }

    fn initial_state(&self, g: &mut Graph, z: Var, context: Var) -> Result<Vec<Var>> {
        let h = self.model.config.hidden;
        let x = g.concat(&[z, context])?;
        let all = self.layout().decoder_init.apply(g, &self.vars, x)?;
        (0..self.model.config.layers)
            .map(|k| Ok(g.slice_cols(all, k * h, (k + 1) * h)?))
            .collect()
    }

    /// Teacher-forced decoding of `target` (which should end with EOS).
    /// Returns the summed token NLL and the logits at each position.
    pub fn decode_teacher(&self, g: &mut Graph, z: Var, context: Var, target: &[usize]) -> Result<(Var, Vec<Var>)> {
        nonempty(target, "target")?;
        let mut state = self.initial_state(g, z, context)?;
        let mut inputs = Vec::with_capacity(target.len());
        inputs.push(BOS);
        inputs.extend_from_slice(&target[..target.len() - 1]);
        let xs = self.embed(g, &inputs, None)?;
        let mut logits = Vec::with_capacity(target.len());
        let mut terms = Vec::with_capacity(target.len());
        for (&x, &t) in xs.iter().zip(target) {
            let top = self.layout().decoder.step(g, &self.vars, x, &mut state)?;
            let l = self.layout().output.apply(g, &self.vars, top)?;
            terms.push(g.softmax_cross_entropy(l, t)?);
            logits.push(l);
        }
        let ones = vec![1.0; terms.len()];
        let nll = g.masked_sum(&terms, &ones)?;
        Ok((nll, logits))
    }

    /// Argmax rollout (ties to the lowest id), at most `max_len` tokens.
    pub fn decode_greedy(&self, g: &mut Graph, z: Var, context: Var, max_len: usize) -> Result<Vec<usize>> {
        let mut state = self.initial_state(g, z, context)?;
        let table = self.var(self.layout().embedding);
        let mut prev = BOS;
        let mut out = Vec::new();
        while out.len() < max_len {
            let x = g.gather_row(table, prev)?;
            let top = self.layout().decoder.step(g, &self.vars, x, &mut state)?;
            let l = self.layout().output.apply(g, &self.vars, top)?;
            let lv = g.value(l);
            let mut best = 0;
            for (i, &v) in lv.iter().enumerate() {
                if v > lv[best] {
                    best = i;
                }
            }
            out.push(best);
            if best == EOS {
                break;
            }
            prev = best;
        }
        Ok(out)
    }

    /// Negative lower bound of one pair: reconstruction under a
    /// reparameterized posterior sample plus KL(posterior || prior).
    pub fn elbo(
        &self,
        g: &mut Graph,
        pair: &DialoguePair,
        group: Option<&[f64]>,
        response_state: Var,
        eps: &[f64],
    ) -> Result<ElboTerms> {
        let context = self.encode_context(g, &pair.context, group)?;
        let posterior = self.recognition(g, context, response_state)?;
        let prior = self.prior(g, context)?;
        let kl = self.kl(g, posterior, prior)?;
        let z = self.sample(g, posterior, eps)?;
        let (reconstruction, logits) = self.decode_teacher(g, z, context, &pair.response)?;
        let loss = g.add(reconstruction, kl)?;
        Ok(ElboTerms {
            context,
            posterior,
            prior,
            z,
            reconstruction,
            kl,
            loss,
            logits,
        })
    }

    /// Position-independent bag-of-words NLL of `target` from `[z; context]`.
    pub fn bow_loss(&self, g: &mut Graph, z: Var, context: Var, target: &[usize]) -> Result<Var> {
        nonempty(target, "target")?;
        let lin = self
            .layout()
            .bow
            .ok_or_else(|| Error::Config("model was built without the bag-of-words head".into()))?;
        let x = g.concat(&[z, context])?;
        let logits = lin.apply(g, &self.vars, x)?;
        let terms = target
            .iter()
            .map(|&t| g.softmax_cross_entropy(logits, t))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(g.masked_sum(&terms, &vec![1.0; terms.len()])?)
    }

    /// Prior mean, or zeros for a latent-free model.
    pub fn inference_latent(&self, g: &mut Graph, context: Var) -> Result<Var> {
        if self.model.config.zero_latent {
            Ok(g.constant_row(&vec![0.0; self.model.config.latent]))
        } else {
            Ok(self.prior(g, context)?.mu)
        }
    }

    /// Logits of the group classifier (one tanh hidden layer).
    pub fn group_logits(&self, g: &mut Graph, rep: Var) -> Result<Var> {
        let h = self.layout().group_hidden.apply(g, &self.vars, rep)?;
        let h = g.tanh(h);
        self.layout().group_output.apply(g, &self.vars, h)
    }
}
