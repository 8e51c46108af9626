//! Random-walk Metropolis–Hastings move for the base-measure dynamics
//! `(σ²_δ, ρ)`, proposed on `(log σ²_δ, logit((ρ + 1)/2))`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::base_measure::BaseMeasure;
use crate::error::Result;
use crate::model::{ChainState, Hyperparameters, ModelSpec, Variant};
use crate::sampler::urn::distinct_vectors;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhOutcome {
    pub sigma2_delta: f64,
    pub rho: f64,
    pub accepted: bool,
}

fn logit_rho(rho: f64) -> f64 {
    let s = 0.5 * (rho + 1.0);
    (s / (1.0 - s)).ln()
}

fn rho_from_logit(u: f64) -> f64 {
    2.0 / (1.0 + (-u).exp()) - 1.0
}

/// One random-walk step. `log_target(σ²_δ, ρ)` must be the log-density with
/// respect to `(1/σ²_δ, ρ)`; the Jacobians of the transformed coordinates
/// are added here. With `move_rho == false` only `σ²_δ` moves.
pub fn random_walk_step<R, F>(
    current: (f64, f64),
    mut log_target: F,
    move_rho: bool,
    scales: [f64; 2],
    rng: &mut R,
) -> Result<MhOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(f64, f64) -> Result<f64>,
{
    let (s2, rho) = current;
    let z0: f64 = StandardNormal.sample(rng);
    let new_s2 = (s2.ln() + scales[0] * z0).exp();
    let new_rho = if move_rho {
        let z1: f64 = StandardNormal.sample(rng);
        rho_from_logit(logit_rho(rho) + scales[1] * z1)
    } else {
        rho
    };
    let reject = MhOutcome {
        sigma2_delta: s2,
        rho,
        accepted: false,
    };
    if !(new_s2 > 0.0 && new_s2.is_finite()) || (move_rho && new_rho.abs() >= 1.0) {
        let _: f64 = rng.random();
        return Ok(reject);
    }
    let jacobian = |s: f64, r: f64| -s.ln() + if move_rho { (1.0 - r * r).ln() } else { 0.0 };
    let log_ratio = log_target(new_s2, new_rho)? + jacobian(new_s2, new_rho)
        - log_target(s2, rho)?
        - jacobian(s2, rho);
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        Ok(MhOutcome {
            sigma2_delta: new_s2,
            rho: new_rho,
            accepted: true,
        })
    } else {
        Ok(reject)
    }
}

/// `Σ log g₀(Γ)` over the given vectors plus the Gamma(a, b) kernel on
/// `1/σ²_δ`. The uniform ρ prior is constant and omitted.
pub fn log_target(
    sigma2_delta: f64,
    rho: f64,
    vectors: &[&[f64]],
    hyper: &Hyperparameters,
    len: usize,
) -> Result<f64> {
    let base = BaseMeasure::new(hyper.base_measure(sigma2_delta, rho, len))?;
    let lambda = 1.0 / sigma2_delta;
    let mut acc = (hyper.a - 1.0) * lambda.ln() - hyper.b * lambda;
    for v in vectors {
        acc += base.log_density(v);
    }
    Ok(acc)
}

/// Under DP only distinct vectors enter (the urn's combinatorial factors
/// cancel); under AR/RW every unmasked trajectory does.
pub fn update_sigma_delta_rho<R: Rng + ?Sized>(
    state: &ChainState,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    rng: &mut R,
    scales: [f64; 2],
) -> Result<MhOutcome> {
    let free = spec.unmasked_pairs(state.regions());
    let all: Vec<&[f64]> = free.iter().map(|p| state.gamma[*p].as_slice()).collect();
    let vectors = match spec.variant {
        Variant::Dp => distinct_vectors(&all),
        Variant::Ar | Variant::Rw => all,
    };
    let len = state.len();
    random_walk_step(
        (state.sigma2_delta, state.rho),
        |s2, r| log_target(s2, r, &vectors, hyper, len),
        spec.variant != Variant::Rw,
        scales,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logit_round_trip() {
        for rho in [-0.99, -0.3, 0.0, 0.5, 0.95] {
            assert!((rho_from_logit(logit_rho(rho)) - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_scale_proposal_is_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let out = random_walk_step((0.3, 0.4), |s, r| Ok(-s * 10.0 - r * r), true, [0.0, 0.0], &mut rng).unwrap();
            assert!(out.accepted);
            assert_eq!(out.sigma2_delta, 0.3);
        }
    }

    #[test]
    fn random_walk_variant_keeps_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = random_walk_step((0.3, 1.0), |_, _| Ok(0.0), false, [0.5, 0.5], &mut rng).unwrap();
        assert_eq!(out.rho, 1.0);
    }
}
