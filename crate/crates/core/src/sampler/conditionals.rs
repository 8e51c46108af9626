//! Conjugate full conditionals for α, β and the two error variances.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::base_measure::LN_2PI;
use crate::error::{Error, Result};
use crate::model::{ChainState, Dataset, Hyperparameters};

/// Variances above this trigger a propriety warning under the flat prior.
pub const DIVERGENCE_WARN: f64 = 1e12;

/// Univariate normal assembled from precision-weighted pieces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalConditional {
    pub mean: f64,
    pub var: f64,
}

impl NormalConditional {
    /// From total precision and precision-weighted linear term.
    pub fn from_natural(precision: f64, linear: f64) -> Self {
        Self {
            mean: linear / precision,
            var: 1.0 / precision,
        }
    }

    pub fn log_density(&self, v: f64) -> f64 {
        -0.5 * (LN_2PI + self.var.ln() + (v - self.mean).powi(2) / self.var)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.var.sqrt() * z
    }
}

/// Gamma law (shape, rate) of an inverse variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionConditional {
    pub shape: f64,
    pub rate: f64,
}

impl PrecisionConditional {
    /// Log-density of the precision `λ`, up to a constant.
    pub fn log_kernel(&self, lambda: f64) -> f64 {
        (self.shape - 1.0) * lambda.ln() - self.rate * lambda
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let g = Gamma::new(self.shape, 1.0 / self.rate)
            .map_err(|e| Error::DegeneratePosterior(format!("precision conditional: {e}")))?;
        Ok(g.sample(rng))
    }
}

pub fn alpha_conditional(i: usize, state: &ChainState, data: &Dataset, hyper: &Hyperparameters) -> NormalConditional {
    let n = data.len();
    let resid: f64 = (0..n).map(|t| data.y[(i, t)] - data.x[t] * state.beta[(i, t)]).sum();
    NormalConditional::from_natural(
        1.0 / hyper.sigma2_alpha + n as f64 / state.sigma2_eps,
        hyper.mu[i] / hyper.sigma2_alpha + resid / state.sigma2_eps,
    )
}

/// Conditional of `β_i(t)` from the likelihood at `t`, the transition into
/// `t` (or the initial prior at `t = 0`), and the `R` transitions at `t + 1`
/// in which `β_i(t)` enters with coefficient `x(t) γ_ki(t+1)`.
pub fn beta_conditional(
    i: usize,
    t: usize,
    state: &ChainState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> NormalConditional {
    let (r, n) = (data.regions(), data.len());
    let x = &data.x;
    let (we, ww) = (1.0 / state.sigma2_eps, 1.0 / state.sigma2_omega);

    let mut prec = x[t] * x[t] * we;
    let mut lin = x[t] * (data.y[(i, t)] - state.alpha[i]) * we;
    if t == 0 {
        prec += 1.0 / hyper.sigma2_beta;
        lin += hyper.beta_bar / hyper.sigma2_beta;
    } else {
        prec += ww;
        lin += state.transition_mean(x, i, t) * ww;
    }
    if t + 1 < n {
        for k in 0..r {
            let c = x[t] * state.gamma[k * r + i][t + 1];
            if c == 0.0 {
                continue;
            }
            let mut rest = 0.0;
            for l in (0..r).filter(|l| *l != i) {
                rest += state.gamma[k * r + l][t + 1] * state.beta[(l, t)];
            }
            rest *= x[t];
            prec += c * c * ww;
            lin += c * (state.beta[(k, t + 1)] - rest) * ww;
        }
    }
    NormalConditional::from_natural(prec, lin)
}

pub fn sigma2_eps_conditional(state: &ChainState, data: &Dataset, hyper: &Hyperparameters) -> PrecisionConditional {
    let (r, n) = (data.regions(), data.len());
    let mut rss = 0.0;
    for i in 0..r {
        for t in 0..n {
            rss += (data.y[(i, t)] - state.alpha[i] - data.x[t] * state.beta[(i, t)]).powi(2);
        }
    }
    PrecisionConditional {
        shape: hyper.a + (r * n) as f64 / 2.0,
        rate: hyper.b + 0.5 * rss,
    }
}

pub fn sigma2_omega_conditional(state: &ChainState, data: &Dataset, hyper: &Hyperparameters) -> PrecisionConditional {
    let (r, n) = (data.regions(), data.len());
    let mut ss = 0.0;
    for i in 0..r {
        for t in 1..n {
            ss += (state.beta[(i, t)] - state.transition_mean(&data.x, i, t)).powi(2);
        }
    }
    PrecisionConditional {
        shape: hyper.a + (r * (n - 1)) as f64 / 2.0,
        rate: hyper.b + 0.5 * ss,
    }
}

pub fn update_alpha<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, hyper: &Hyperparameters, rng: &mut R) {
    for i in 0..data.regions() {
        state.alpha[i] = alpha_conditional(i, state, data, hyper).sample(rng);
    }
}

/// Forward sweep `t = 0..T`, regions inner.
pub fn update_beta<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, hyper: &Hyperparameters, rng: &mut R) {
    for t in 0..data.len() {
        for i in 0..data.regions() {
            state.beta[(i, t)] = beta_conditional(i, t, state, data, hyper).sample(rng);
        }
    }
}

fn draw_variance<R: Rng + ?Sized>(cond: PrecisionConditional, name: &str, rng: &mut R) -> Result<f64> {
    if !(cond.rate > 0.0) {
        return Err(Error::DegeneratePosterior(format!(
            "{name} has zero residual sum under a flat prior"
        )));
    }
    let lambda = cond.sample(rng)?;
    let var = 1.0 / lambda;
    if !var.is_finite() || lambda <= 0.0 {
        return Err(Error::DegeneratePosterior(format!("{name} draw is not finite")));
    }
    if var > DIVERGENCE_WARN {
        log::warn!("{name} draw {var:e} exceeds {DIVERGENCE_WARN:e}; the posterior may be improper");
    }
    Ok(var)
}

/// Draws `σ²_ε` then `σ²_ω`.
pub fn update_error_variances<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<()> {
    state.sigma2_eps = draw_variance(sigma2_eps_conditional(state, data, hyper), "σ²_ε", rng)?;
    state.sigma2_omega = draw_variance(sigma2_omega_conditional(state, data, hyper), "σ²_ω", rng)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(r: usize, n: usize) -> ChainState {
        ChainState {
            alpha: vec![0.0; r],
            beta: DMatrix::zeros(r, n),
            gamma: vec![vec![0.0; n]; r * r],
            sigma2_eps: 1.0,
            sigma2_omega: 1.0,
            sigma2_delta: 0.1,
            rho: 0.5,
            tau: 1.0,
            eta: 0.5,
        }
    }

    fn hyper(r: usize) -> Hyperparameters {
        Hyperparameters {
            mu: vec![0.0; r],
            sigma2_alpha: 1.0,
            beta_bar: 0.0,
            sigma2_beta: 1.0,
            gamma_bar: 0.0,
            sigma2_gamma: 1.0,
            a: 0.0,
            b: 0.0,
            c: 0.1,
            a_tau: 0.3,
            b_tau: 0.1,
        }
    }

    #[test]
    fn alpha_two_point_closed_form() {
        // Built directly: the closed form is stated for T = 2.
        let data = Dataset {
            y: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]),
            x: vec![0.0; 2],
        };
        let s = state(2, 2);
        let c = alpha_conditional(0, &s, &data, &hyper(2));
        assert!((c.mean - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.var - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_flat_likelihood_returns_prior() {
        let data = Dataset::new(DMatrix::from_element(2, 4, 3.0), vec![1.0; 4]).unwrap();
        let mut s = state(2, 4);
        s.sigma2_eps = 1e300;
        let mut h = hyper(2);
        h.mu = vec![0.7, -0.2];
        h.sigma2_alpha = 2.5;
        let c = alpha_conditional(1, &s, &data, &h);
        assert!((c.mean + 0.2).abs() < 1e-9);
        assert!((c.var - 2.5).abs() < 1e-9);
    }

    #[test]
    fn final_beta_without_coupling_is_transition_prior() {
        let y = DMatrix::from_row_slice(2, 3, &[0.5, 0.1, 0.3, 0.2, 0.4, 0.9]);
        let data = Dataset::new(y, vec![0.8, 0.0, 0.0]).unwrap();
        let mut s = state(2, 3);
        s.sigma2_omega = 0.3;
        s.beta[(0, 1)] = 1.2;
        let c = beta_conditional(0, 2, &s, &data, &hyper(2));
        assert!(c.mean.abs() < 1e-15);
        assert!((c.var - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_residuals_give_prior_shape_plus_half_count() {
        let data = Dataset::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0])
            .unwrap();
        let mut s = state(2, 3);
        s.beta = DMatrix::from_element(2, 3, 1.0);
        let mut h = hyper(2);
        h.a = 1.0;
        h.b = 1.0;
        let c = sigma2_eps_conditional(&s, &data, &h);
        assert_eq!(c.shape, 1.0 + 3.0);
        assert_eq!(c.rate, 1.0);
    }

    #[test]
    fn flat_prior_zero_rss_is_degenerate() {
        let data = Dataset::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0])
            .unwrap();
        let mut s = state(2, 3);
        s.beta = DMatrix::from_element(2, 3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = update_error_variances(&mut s, &data, &hyper(2), &mut rng).unwrap_err();
        assert!(matches!(err, Error::DegeneratePosterior(_)));
        assert_eq!(err.exit_code(), 3);
    }
}
