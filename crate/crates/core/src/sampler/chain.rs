//! Chain driver: initialization, the fixed-scan sweep and draw storage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base_measure::{ar1_mean, BaseMeasure};
use crate::error::{Error, Result};
use crate::model::{ChainOutput, ChainState, Dataset, Hyperparameters, ModelSpec, RunMetadata, Variant};
use crate::sampler::{conditionals, gamma, mh, tau};

/// Sweeps between proposal-scale adjustments during burn-in.
pub const ADAPT_WINDOW: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainControls {
    pub burn: usize,
    pub keep: usize,
    pub thin: usize,
    pub seed: u64,
    /// Random-walk scales on `log σ²_δ` and `logit((ρ+1)/2)`.
    pub proposal_scales: [f64; 2],
    pub adapt: bool,
    pub initial_sigma2_delta: Option<f64>,
    pub initial_rho: Option<f64>,
}

impl Default for ChainControls {
    fn default() -> Self {
        Self {
            burn: 10_000,
            keep: 20_000,
            thin: 1,
            seed: 0,
            proposal_scales: [0.1, 0.1],
            adapt: true,
            initial_sigma2_delta: None,
            initial_rho: None,
        }
    }
}

impl ChainControls {
    pub fn validate(&self) -> Result<()> {
        if self.keep == 0 || self.thin == 0 {
            return Err(Error::InvalidParameter("keep and thin must be ≥ 1".into()));
        }
        if self.proposal_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter("proposal scales must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    fn dynamics(&self, variant: Variant) -> Result<(f64, f64)> {
        let s2 = self.initial_sigma2_delta.unwrap_or(0.1);
        let rho = match variant {
            Variant::Rw => 1.0,
            _ => self.initial_rho.unwrap_or(0.5),
        };
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::InvalidParameter(format!("initial σ²_δ must be positive, got {s2}")));
        }
        if variant != Variant::Rw && !(rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("initial ρ must satisfy |ρ| < 1, got {rho}")));
        }
        Ok((s2, rho))
    }
}

/// Deterministic start: per-region least squares with constant β,
/// residual mean squares for the variances, `Γ = γ̄ μ_T` on unmasked pairs.
pub fn initial_state(
    data: &Dataset,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    controls: &ChainControls,
) -> Result<ChainState> {
    let (r, n) = (data.regions(), data.len());
    let (sigma2_delta, rho) = controls.dynamics(spec.variant)?;
    let x = &data.x;
    let x_mean = x.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();

    let mut alpha = vec![0.0; r];
    let mut slope = vec![0.0; r];
    let mut rss = 0.0;
    for i in 0..r {
        let y_mean = data.y.row(i).mean();
        let b = if sxx > 0.0 {
            (0..n).map(|t| (x[t] - x_mean) * (data.y[(i, t)] - y_mean)).sum::<f64>() / sxx
        } else {
            0.0
        };
        slope[i] = b;
        alpha[i] = y_mean - b * x_mean;
        rss += (0..n).map(|t| (data.y[(i, t)] - alpha[i] - b * x[t]).powi(2)).sum::<f64>();
    }
    let sigma2_eps = (rss / (r * n) as f64).max(1e-8);

    let path = ar1_mean(&hyper.base_measure(sigma2_delta, rho, n));
    let gamma: Vec<Vec<f64>> = (0..r * r)
        .map(|p| {
            if spec.is_masked(p / r, p % r) {
                vec![0.0; n]
            } else {
                path.clone()
            }
        })
        .collect();
    let beta = nalgebra::DMatrix::from_fn(r, n, |i, _| slope[i]);

    let mut state = ChainState {
        alpha,
        beta,
        gamma,
        sigma2_eps,
        sigma2_omega: 1.0,
        sigma2_delta,
        rho,
        tau: hyper.a_tau / hyper.b_tau,
        eta: 0.5,
    };
    let mut ss = 0.0;
    for i in 0..r {
        for t in 1..n {
            ss += (state.beta[(i, t)] - state.transition_mean(x, i, t)).powi(2);
        }
    }
    state.sigma2_omega = (ss / (r * (n - 1)) as f64).max(1e-4);
    Ok(state)
}

/// One fixed-scan sweep: α, β, (σ²_ε, σ²_ω), each unmasked Γ_ij row-major,
/// (τ, η) under DP, then `(σ²_δ, ρ)`. Returns whether the MH move accepted.
pub fn sweep<R: rand::Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    scales: [f64; 2],
    rng: &mut R,
) -> Result<bool> {
    conditionals::update_alpha(state, data, hyper, rng);
    conditionals::update_beta(state, data, hyper, rng);
    conditionals::update_error_variances(state, data, hyper, rng)?;

    let base = BaseMeasure::new(state.base_measure(hyper))?;
    let r = data.regions();
    for p in spec.unmasked_pairs(r) {
        let (i, j) = (p / r, p % r);
        let next = match spec.variant {
            Variant::Dp => gamma::update_gamma_dp(i, j, state, data, spec, &base, rng)?,
            Variant::Ar | Variant::Rw => gamma::update_gamma_gaussian(i, j, state, data, &base, rng)?,
        };
        state.gamma[p] = next;
    }

    if spec.variant == Variant::Dp {
        let (t, e) = tau::update_tau(state, spec, hyper, rng)?;
        state.tau = t;
        state.eta = e;
    }

    let out = mh::update_sigma_delta_rho(state, spec, hyper, rng, scales)?;
    state.sigma2_delta = out.sigma2_delta;
    state.rho = out.rho;
    Ok(out.accepted)
}

/// Runs `burn + keep · thin` sweeps from [`initial_state`] with a ChaCha8
/// stream seeded by `controls.seed`.
pub fn run_chain(
    data: &Dataset,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    controls: &ChainControls,
) -> Result<ChainOutput> {
    data.validate()?;
    spec.validate(data.regions())?;
    hyper.validate(data.regions())?;
    controls.validate()?;
    let mut state = initial_state(data, spec, hyper, controls)?;
    let (initial_sigma2_delta, initial_rho) = (state.sigma2_delta, state.rho);
    let mut rng = ChaCha8Rng::seed_from_u64(controls.seed);

    let mut scales = controls.proposal_scales;
    let (mut acc_burn, mut acc_keep, mut window) = (0usize, 0usize, 0usize);
    let total = controls.burn + controls.keep * controls.thin;
    let mut draws = Vec::with_capacity(controls.keep);

    for s in 0..total {
        let accepted = sweep(&mut state, data, spec, hyper, scales, &mut rng).map_err(|e| e.at_sweep(s + 1))?;
        if s < controls.burn {
            acc_burn += accepted as usize;
            window += accepted as usize;
            if controls.adapt && (s + 1) % ADAPT_WINDOW == 0 {
                let rate = window as f64 / ADAPT_WINDOW as f64;
                let factor = if rate < 0.2 {
                    0.8
                } else if rate > 0.4 {
                    1.25
                } else {
                    1.0
                };
                scales.iter_mut().for_each(|v| *v *= factor);
                log::debug!("sweep {}: MH acceptance {rate:.2}, scales {scales:?}", s + 1);
                window = 0;
            }
        } else {
            acc_keep += accepted as usize;
            if (s - controls.burn + 1).is_multiple_of(controls.thin) {
                draws.push(state.clone());
            }
        }
        if (s + 1) % 5000 == 0 {
            log::info!("sweep {}/{total}", s + 1);
        }
    }

    let rate = |a: usize, n: usize| if n == 0 { 0.0 } else { a as f64 / n as f64 };
    let meta = RunMetadata {
        seed: controls.seed,
        burn: controls.burn,
        keep: controls.keep,
        thin: controls.thin,
        regions: data.regions(),
        len: data.len(),
        spec: spec.clone(),
        hyper: hyper.clone(),
        initial_sigma2_delta,
        initial_rho,
        mh_acceptance_rate: rate(acc_keep, total - controls.burn),
        mh_acceptance_rate_burn: rate(acc_burn, controls.burn),
        proposal_scales: scales,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(ChainOutput { draws, meta })
}
