//! Two-component one-dimensional Gaussian mixture fitted by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{mean_and_population_std, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Convergence when the log-likelihood gain drops below this.
    pub tol: f64,
    pub rng_seed: u64,
    pub restarts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-9,
            rng_seed: 0,
            restarts: 4,
        }
    }
}

/// Fitted mixture, ordered so that `means[0] >= means[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit<R> {
    pub weights: [R; 2],
    pub means: [R; 2],
    pub stddevs: [R; 2],
    pub log_likelihood: R,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the parameters at every EM step of the best restart.
    pub log_likelihood_history: Vec<R>,
}

impl<R: Real> GmmFit<R> {
    /// `mu_1 - epsilon * sigma_1` on the higher-mean component.
    pub fn threshold(&self, epsilon: f64) -> R {
        self.means[0] - R::lit(epsilon) * self.stddevs[0]
    }
}

#[derive(Clone, Copy)]
struct Params<R> {
    weights: [R; 2],
    means: [R; 2],
    vars: [R; 2],
}

fn log_normal<R: Real>(x: R, mean: R, var: R) -> R {
    let d = x - mean;
    -(R::lit(0.5)) * ((R::TAU() * var).ln() + d * d / var)
}

/// E-step: returns the log-likelihood of `p` and fills component-0
/// responsibilities.
fn e_step<R: Real>(data: &[R], p: &Params<R>, resp0: &mut [R]) -> R {
    let lw = [p.weights[0].ln(), p.weights[1].ln()];
    let mut ll = R::zero();
    for (x, r) in data.iter().zip(resp0.iter_mut()) {
        let a = lw[0] + log_normal(*x, p.means[0], p.vars[0]);
        let b = lw[1] + log_normal(*x, p.means[1], p.vars[1]);
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        ll += lse;
        *r = (a - lse).exp();
    }
    ll
}

fn m_step<R: Real>(data: &[R], resp0: &[R], var_floor: R) -> Params<R> {
    let n = R::lit(data.len() as f64);
    let tiny = R::min_positive_value();
    let mut nk = [R::zero(); 2];
    let mut sx = [R::zero(); 2];
    for (&x, &r) in data.iter().zip(resp0) {
        let r1 = R::one() - r;
        nk[0] += r;
        nk[1] += r1;
        sx[0] += r * x;
        sx[1] += r1 * x;
    }
    let nk = [nk[0].max(tiny), nk[1].max(tiny)];
    let means = [sx[0] / nk[0], sx[1] / nk[1]];
    let mut sv = [R::zero(); 2];
    for (&x, &r) in data.iter().zip(resp0) {
        let d0 = x - means[0];
        let d1 = x - means[1];
        sv[0] += r * d0 * d0;
        sv[1] += (R::one() - r) * d1 * d1;
    }
    Params {
        weights: [nk[0] / n, nk[1] / n],
        means,
        vars: [(sv[0] / nk[0]).max(var_floor), (sv[1] / nk[1]).max(var_floor)],
    }
}

struct Run<R> {
    params: Params<R>,
    history: Vec<R>,
    converged: bool,
}

fn run_em<R: Real>(data: &[R], init: Params<R>, config: &GmmConfig, var_floor: R) -> Run<R> {
    let mut params = init;
    let mut resp0 = vec![R::zero(); data.len()];
    let mut history = Vec::new();
    let tol = R::lit(config.tol);
    let mut converged = false;
    history.push(e_step(data, &params, &mut resp0));
    for _ in 0..config.max_iter {
        params = m_step(data, &resp0, var_floor);
        let ll = e_step(data, &params, &mut resp0);
        let gain = ll - *history.last().unwrap();
        history.push(ll);
        if gain < tol {
            converged = true;
            break;
        }
    }
    Run {
        params,
        history,
        converged,
    }
}

/// Fits the mixture, keeping the restart with the best final log-likelihood.
///
/// Each restart seeds the two means at distinct random samples, both variances
/// at the sample variance and both weights at one half.
pub fn fit_edge_weight_gmm<R: Real>(weights: &[R], config: &GmmConfig) -> Result<GmmFit<R>> {
    if weights.len() < 4 {
        return Err(Error::DegenerateInput(format!(
            "need at least 4 samples, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::DegenerateInput("non-finite sample".into()));
    }
    let (_, sd) = mean_and_population_std(weights).unwrap();
    let lo = weights.iter().copied().fold(R::infinity(), R::min);
    let hi = weights.iter().copied().fold(R::neg_infinity(), R::max);
    if hi <= lo || sd == R::zero() {
        return Err(Error::DegenerateInput("all samples are equal".into()));
    }
    let var = sd * sd;
    let var_floor = var * R::lit(1e-8);
    let half = R::lit(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut best: Option<Run<R>> = None;
    for _ in 0..config.restarts.max(1) {
        let i = rng.random_range(0..weights.len());
        let mut j = rng.random_range(0..weights.len() - 1);
        if j >= i {
            j += 1;
        }
        let init = Params {
            weights: [half, half],
            means: [weights[i], weights[j]],
            vars: [var, var],
        };
        let run = run_em(weights, init, config, var_floor);
        let better = match &best {
            None => true,
            Some(b) => run.history.last().unwrap() > b.history.last().unwrap(),
        };
        if better {
            best = Some(run);
        }
    }
    let run = best.unwrap();
    let p = run.params;
    let (a, b) = if p.means[0] >= p.means[1] { (0, 1) } else { (1, 0) };
    Ok(GmmFit {
        weights: [p.weights[a], p.weights[b]],
        means: [p.means[a], p.means[b]],
        stddevs: [p.vars[a].sqrt(), p.vars[b].sqrt()],
        log_likelihood: *run.history.last().unwrap(),
        iterations: run.history.len() - 1,
        converged: run.converged,
        log_likelihood_history: run.history,
    })
}
