//! Escobar–West update of the DP precision `τ` with auxiliary `η`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{ChainState, Hyperparameters, ModelSpec};
use crate::sampler::urn::distinct_count;

/// `log Beta(η; τ + 1, m)`.
pub fn eta_log_density(eta: f64, tau: f64, m: usize) -> f64 {
    let (a, b) = (tau + 1.0, m as f64);
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * eta.ln() + (b - 1.0) * (1.0 - eta).ln()
}

fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Two-component Gamma mixture for `τ | η, d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauConditional {
    pub shape: f64,
    pub rate: f64,
    /// Weight on `Gamma(a_τ + d, rate)`; the rest goes to shape `a_τ + d - 1`.
    pub pi: f64,
}

impl TauConditional {
    /// `π/(1-π) = (a_τ + d - 1) / (m (b_τ - log η))`. When `a_τ + d - 1 ≤ 0`
    /// the second component has no valid shape and all mass goes to the first.
    pub fn new(a_tau: f64, b_tau: f64, d: usize, m: usize, eta: f64) -> Self {
        let rate = b_tau - eta.ln();
        let shape = a_tau + d as f64;
        let lower = shape - 1.0;
        let pi = if lower <= 0.0 {
            1.0
        } else {
            let odds = lower / (m as f64 * rate);
            odds / (1.0 + odds)
        };
        Self { shape, rate, pi }
    }

    pub fn log_density(&self, tau: f64) -> f64 {
        let hi = self.pi.ln() + gamma_log_pdf(tau, self.shape, self.rate);
        if self.pi >= 1.0 {
            return hi;
        }
        let lo = (1.0 - self.pi).ln() + gamma_log_pdf(tau, self.shape - 1.0, self.rate);
        let max = hi.max(lo);
        max + ((hi - max).exp() + (lo - max).exp()).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let u: f64 = rng.random();
        let shape = if u < self.pi { self.shape } else { self.shape - 1.0 };
        let g = Gamma::new(shape, 1.0 / self.rate)
            .map_err(|e| Error::NumericDegeneracy(format!("τ mixture component: {e}")))?;
        Ok(g.sample(rng))
    }
}

pub fn sample_eta<R: Rng + ?Sized>(tau: f64, m: usize, rng: &mut R) -> Result<f64> {
    let b = Beta::new(tau + 1.0, m as f64).map_err(|e| Error::NumericDegeneracy(format!("η draw: {e}")))?;
    // Keep η strictly inside (0, 1) so log η stays finite.
    Ok(b.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

/// Draws `η ~ Beta(τ + 1, m)` and then `τ` from the Gamma mixture; returns
/// `(τ, η)`.
pub fn update_tau<R: Rng + ?Sized>(
    state: &ChainState,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let free = spec.unmasked_pairs(state.regions());
    let vectors: Vec<&[f64]> = free.iter().map(|p| state.gamma[*p].as_slice()).collect();
    let (m, d) = (vectors.len(), distinct_count(&vectors));
    let eta = sample_eta(state.tau, m, rng)?;
    let tau = TauConditional::new(hyper.a_tau, hyper.b_tau, d, m, eta).sample(rng)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::NumericDegeneracy(format!("τ draw {tau} is not positive")));
    }
    Ok((tau, eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_weight_worked_example() {
        let c = TauConditional::new(0.8, 0.1, 3, 9, 0.5);
        assert!((c.rate - 0.7931).abs() < 1e-4);
        assert!((c.pi - 0.2817).abs() < 1e-4);
    }

    #[test]
    fn nonpositive_lower_shape_uses_first_component() {
        let c = TauConditional::new(0.0, 0.1, 1, 2, 0.3);
        assert_eq!(c.pi, 1.0);
        assert!(c.log_density(0.7).is_finite());
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let c = TauConditional::new(0.8, 0.1, 3, 9, 0.5);
        let h = 1e-3;
        let total: f64 = (1..200_000).map(|k| c.log_density(k as f64 * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }
}
