//! Why a CVAE prior drifts away from its posteriors.
//!
//! When one context has two responses whose posteriors are `N(μ1, σ1²)` and
//! `N(μ2, σ2²)`, training pushes the shared prior `N(μ, σ²)` toward the
//! minimizer of
//!
//! ```text
//! φ(μ, σ) = KL(q1 ‖ p) + KL(q2 ‖ p)
//!         = ln(σ² / (σ1 σ2)) + (σ1² + σ2² + (μ1-μ)² + (μ2-μ)²) / (2σ²) - 1
//! ```
//!
//! whose closed-form minimizer is `μ* = (μ1+μ2)/2` and
//! `σ* = sqrt((σ1²+σ2²)/2 + (μ1-μ2)²/4)`. The prior therefore sits between
//! the posteriors and widens as they separate. This module evaluates those
//! quantities, checks the minimizer numerically, and simulates the gradient
//! dynamics of one-to-many and many-to-one training. Logarithms are natural.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gauss1D {
    pub mu: f64,
    pub sigma: f64,
}

impl Gauss1D {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Numeric(format!("invalid Gaussian N({mu}, {sigma}²)")));
        }
        Ok(Self { mu, sigma })
    }

    fn var(self) -> f64 {
        self.sigma * self.sigma
    }
}

/// `KL(q ‖ p) = ln(σp/σq) + (σq² + (μq-μp)²) / (2σp²) - 1/2`.
pub fn kl_1d(q: Gauss1D, p: Gauss1D) -> f64 {
    (p.sigma / q.sigma).ln() + (q.var() + (q.mu - p.mu).powi(2)) / (2.0 * p.var()) - 0.5
}

/// The summed KL of two posteriors against the prior `N(mu, sigma²)`.
pub fn phi(mu: f64, sigma: f64, q1: Gauss1D, q2: Gauss1D) -> f64 {
    (sigma * sigma / (q1.sigma * q2.sigma)).ln()
        + (q1.var() + q2.var() + (q1.mu - mu).powi(2) + (q2.mu - mu).powi(2)) / (2.0 * sigma * sigma)
        - 1.0
}

pub fn analytic_minimizer(q1: Gauss1D, q2: Gauss1D) -> Gauss1D {
    Gauss1D {
        mu: (q1.mu + q2.mu) / 2.0,
        sigma: ((q1.var() + q2.var()) / 2.0 + (q1.mu - q2.mu).powi(2) / 4.0).sqrt(),
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Minimizes [`phi`] without using the closed form: a 200×200 grid search
/// followed by coordinate descent with golden-section line searches.
///
/// The search box is `μ ∈ [min μi - 3σmax, max μi + 3σmax]` and
/// `σ ∈ (0, 4·max(σmax, |μ1-μ2|/2)]`. A minimum on the box boundary is
/// reported as a bracketing failure.
pub fn numeric_minimizer(q1: Gauss1D, q2: Gauss1D) -> Result<Gauss1D> {
    let smax = q1.sigma.max(q2.sigma);
    let mu_lo = q1.mu.min(q2.mu) - 3.0 * smax;
    let mu_hi = q1.mu.max(q2.mu) + 3.0 * smax;
    let s_hi = 4.0 * smax.max((q1.mu - q2.mu).abs() / 2.0);
    let s_lo = s_hi * 1e-6;
    let f = |mu: f64, s: f64| phi(mu, s, q1, q2);

    const GRID: usize = 200;
    let (mut best_mu, mut best_s, mut best) = (mu_lo, s_hi, f64::INFINITY);
    for i in 0..=GRID {
        let mu = mu_lo + (mu_hi - mu_lo) * i as f64 / GRID as f64;
        for j in 1..=GRID {
            let s = s_hi * j as f64 / GRID as f64;
            let v = f(mu, s);
            if v < best {
                (best_mu, best_s, best) = (mu, s, v);
            }
        }
    }

    let mut mu_step = 2.0 * (mu_hi - mu_lo) / GRID as f64;
    let mut s_step = 2.0 * s_hi / GRID as f64;
    for _ in 0..200 {
        let mu_new = golden_section(
            |m| f(m, best_s),
            (best_mu - mu_step).max(mu_lo),
            (best_mu + mu_step).min(mu_hi),
            1e-12,
        );
        let s_new = golden_section(
            |s| f(mu_new, s),
            (best_s - s_step).max(s_lo),
            (best_s + s_step).min(s_hi),
            1e-12,
        );
        let (d_mu, d_s) = ((mu_new - best_mu).abs(), (s_new - best_s).abs());
        best_mu = mu_new;
        best_s = s_new;
        mu_step = (4.0 * d_mu).max(mu_step / 2.0).max(1e-8);
        s_step = (4.0 * d_s).max(s_step / 2.0).max(1e-8);
        if d_mu.max(d_s) < 1e-10 {
            break;
        }
    }
    let edge = 1e-7 * (1.0 + s_hi);
    if best_mu - mu_lo < edge || mu_hi - best_mu < edge || s_hi - best_s < edge || best_s - s_lo < edge {
        return Err(Error::Numeric(format!(
            "minimizer not bracketed: ({best_mu}, {best_s}) on the search box boundary"
        )));
    }
    Gauss1D::new(best_mu, best_s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    /// One context, two responses: one prior fitted to two posteriors.
    OneToMany { posteriors: [Gauss1D; 2], prior: Gauss1D },
    /// Two contexts, one response: two priors fitted to a shared posterior.
    ManyToOne { posterior: Gauss1D, priors: [Gauss1D; 2] },
}

impl Scenario {
    pub fn one_to_many() -> Self {
        Scenario::OneToMany {
            posteriors: [Gauss1D { mu: -2.0, sigma: 1.0 }, Gauss1D { mu: 2.0, sigma: 1.0 }],
            prior: Gauss1D { mu: 0.5, sigma: 0.5 },
        }
    }

    pub fn many_to_one() -> Self {
        Scenario::ManyToOne {
            posterior: Gauss1D { mu: 1.0, sigma: 0.5 },
            priors: [Gauss1D { mu: -3.0, sigma: 1.0 }, Gauss1D { mu: 3.0, sigma: 2.0 }],
        }
    }

    fn priors(&self) -> Vec<Gauss1D> {
        match self {
            Scenario::OneToMany { prior, .. } => vec![*prior],
            Scenario::ManyToOne { priors, .. } => priors.to_vec(),
        }
    }

    /// Posteriors each prior is pulled toward.
    fn targets(&self, prior: usize) -> Vec<Gauss1D> {
        match self {
            Scenario::OneToMany { posteriors, .. } => posteriors.to_vec(),
            Scenario::ManyToOne { posterior, .. } => {
                let _ = prior;
                vec![*posterior]
            }
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Prior states after each step; `states[0]` is the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<Gauss1D>>,
}

impl Trajectory {
    pub fn last(&self) -> &[Gauss1D] {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Plain gradient descent on `(μ, ln σ)` of each prior against its fixed
/// posteriors, minimizing the summed KL.
pub fn simulate_training_dynamics(scenario: Scenario, steps: usize, learning_rate: f64) -> Result<Trajectory> {
    let mut state = scenario.priors();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(state.clone());
    for step in 1..=steps {
        for (k, p) in state.iter_mut().enumerate() {
            let var = p.var();
            let (mut g_mu, mut g_s) = (0.0, 0.0);
            for q in scenario.targets(k) {
                g_mu += (p.mu - q.mu) / var;
                g_s += 1.0 - (q.var() + (q.mu - p.mu).powi(2)) / var;
            }
            let mu = p.mu - learning_rate * g_mu;
            let log_sigma = p.sigma.ln() - learning_rate * g_s;
            let sigma = log_sigma.exp();
            if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
                return Err(Error::Numeric(format!("simulation diverged at step {step}")));
            }
            *p = Gauss1D { mu, sigma };
        }
        states.push(state.clone());
    }
    Ok(Trajectory { states })
}

/// One line of the theory verification table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub instance: usize,
    pub posteriors: [Gauss1D; 2],
    pub analytic: Gauss1D,
    pub numeric: Gauss1D,
    /// Largest componentwise gap between the two minimizers.
    pub abs_delta: f64,
}

/// Random instance `i` of the verification sweep: `μ ∈ [-5, 5]`,
/// `σ ∈ [0.1, 3]`, drawn from a stream keyed by `(seed, i)`.
pub fn random_instance(seed: u64, i: usize) -> [Gauss1D; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x100_0000_01B3) ^ i as u64);
    let mut g = || Gauss1D {
        mu: rng.random_range(-5.0..=5.0),
        sigma: rng.random_range(0.1..=3.0),
    };
    [g(), g()]
}

pub fn verify_minimizers(instances: usize, seed: u64, exec: Execution) -> Result<Vec<TheoryRow>> {
    par::map_range(exec, instances, |i| {
        let [q1, q2] = random_instance(seed, i);
        let analytic = analytic_minimizer(q1, q2);
        let numeric = numeric_minimizer(q1, q2)?;
        Ok(TheoryRow {
            instance: i,
            posteriors: [q1, q2],
            analytic,
            numeric,
            abs_delta: (analytic.mu - numeric.mu)
                .abs()
                .max((analytic.sigma - numeric.sigma).abs()),
        })
    })
    .into_iter()
    .collect()
}

pub fn theory_csv(rows: &[TheoryRow]) -> String {
    let mut out = String::from("instance,mu_star,sigma_star,mu_hat,sigma_hat,abs_delta\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:e}\n",
            r.instance, r.analytic.mu, r.analytic.sigma, r.numeric.mu, r.numeric.sigma, r.abs_delta
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g(mu: f64, sigma: f64) -> Gauss1D {
        Gauss1D::new(mu, sigma).unwrap()
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_1d(g(0.3, 1.7), g(0.3, 1.7)), 0.0);
        assert_relative_eq!(kl_1d(g(1.0, 1.0), g(0.0, 1.0)), 0.5, epsilon = 1e-15);
        assert!(Gauss1D::new(0.0, 0.0).is_err());
        assert!(Gauss1D::new(0.0, -1.0).is_err());
    }

    #[test]
    fn phi_examples() {
        let q = g(0.4, 1.3);
        assert_relative_eq!(phi(q.mu, q.sigma, q, q), 0.0, epsilon = 1e-15);
        let v = phi(0.0, 5f64.sqrt(), g(-2.0, 1.0), g(2.0, 1.0));
        assert_relative_eq!(v, 5f64.ln(), epsilon = 1e-12);
        assert!((v - 1.6094).abs() < 1e-4);
    }

    #[test]
    fn phi_is_sum_of_kls() {
        for i in 0..200 {
            let [q1, q2] = random_instance(11, i);
            let p = random_instance(12, i)[0];
            let lhs = phi(p.mu, p.sigma, q1, q2);
            let rhs = kl_1d(q1, p) + kl_1d(q2, p);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn minimizer_examples() {
        let m = analytic_minimizer(g(1.5, 0.7), g(1.5, 0.7));
        assert_relative_eq!(m.mu, 1.5);
        assert_relative_eq!(m.sigma, 0.7, epsilon = 1e-15);
        let m = analytic_minimizer(g(-2.0, 1.0), g(2.0, 1.0));
        assert_eq!(m.mu, 0.0);
        assert!((m.sigma - 2.23607).abs() < 1e-5);
        let mut last = 0.0;
        for gap in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let s = analytic_minimizer(g(0.0, 1.0), g(gap, 1.0)).sigma;
            assert!(s > last || gap == 0.0);
            last = s;
        }
    }

    #[test]
    fn numeric_matches_analytic() {
        for i in 0..100 {
            let [q1, q2] = random_instance(2021, i);
            let a = analytic_minimizer(q1, q2);
            let n = numeric_minimizer(q1, q2).unwrap();
            assert!((a.mu - n.mu).abs() < 1e-3 && (a.sigma - n.sigma).abs() < 1e-3, "{i}: {a:?} {n:?}");
            assert!(phi(n.mu, n.sigma, q1, q2) <= phi(a.mu, a.sigma, q1, q2) + 1e-6);
        }
        let n = numeric_minimizer(g(-1.0, 0.5), g(1.0, 0.5)).unwrap();
        assert!(n.mu.abs() < 1e-3);
    }

    #[test]
    fn wide_separation_is_still_bracketed() {
        let n = numeric_minimizer(g(-5.0, 0.1), g(5.0, 0.1)).unwrap();
        let a = analytic_minimizer(g(-5.0, 0.1), g(5.0, 0.1));
        assert!((n.sigma - a.sigma).abs() < 1e-3);
    }

    #[test]
    fn prior_wider_than_both_posteriors_when_separated() {
        for i in 0..500 {
            let [q1, q2] = random_instance(5, i);
            if (q1.mu - q2.mu).abs() > 2f64.sqrt() * q1.sigma.max(q2.sigma) {
                let m = analytic_minimizer(q1, q2);
                assert!(m.sigma > q1.sigma && m.sigma > q2.sigma);
            }
        }
    }

    #[test]
    fn one_to_many_converges_to_closed_form() {
        let sc = Scenario::one_to_many();
        let t = simulate_training_dynamics(sc, 5000, DEFAULT_LEARNING_RATE).unwrap();
        let Scenario::OneToMany { posteriors, .. } = sc else { unreachable!() };
        let target = analytic_minimizer(posteriors[0], posteriors[1]);
        let end = t.last()[0];
        assert!((end.mu - target.mu).abs() < 1e-3);
        assert!((end.sigma - target.sigma).abs() < 1e-3);
        assert_eq!(t.states.len(), 5001);
    }

    #[test]
    fn many_to_one_priors_merge() {
        let t = simulate_training_dynamics(Scenario::many_to_one(), 2000, DEFAULT_LEARNING_RATE).unwrap();
        let gap = |s: &[Gauss1D]| (s[0].mu - s[1].mu).abs();
        assert!(gap(t.last()) < gap(&t.states[0]));
        assert!(gap(t.last()) < 1e-3);
    }

    #[test]
    fn zero_steps_and_divergence() {
        let t = simulate_training_dynamics(Scenario::one_to_many(), 0, 0.1).unwrap();
        assert_eq!(t.states.len(), 1);
        assert_eq!(t.states[0], Scenario::one_to_many().priors());
        let err = simulate_training_dynamics(Scenario::one_to_many(), 100, 1e6).unwrap_err();
        assert!(matches!(err, Error::Numeric(ref m) if m.contains("step")), "{err}");
    }

    #[test]
    fn verification_csv_is_well_formed() {
        let rows = verify_minimizers(5, 1, Execution::Sequential).unwrap();
        let par_rows = verify_minimizers(5, 1, Execution::Parallel).unwrap();
        assert_eq!(rows, par_rows);
        let csv = theory_csv(&rows);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("instance,mu_star,sigma_star,mu_hat,sigma_hat,abs_delta"));
    }
}
