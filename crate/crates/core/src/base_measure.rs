//! The AR(1) path law used as the Dirichlet-process base measure.
//!
//! Under the base measure a trajectory starts at `γ(1) ~ N(γ̄, σ²_γ)` and
//! evolves as `γ(t) = ργ(t-1) + δ(t)` with `δ(t) ~ N(0, σ²_δ)`. The whole path
//! is then `N_T(γ̄ μ_T, Σ)` with `μ_T = (1, ρ, …, ρ^{T-1})`.
//!
//! Two representations are kept: the dense covariance `Σ` (closed form,
//! factored by dense Cholesky) and the tridiagonal precision `Σ⁻¹`, which the
//! sampler uses because every conditional it needs is tridiagonal.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymTridiag;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasureParams {
    pub gamma_bar: f64,
    pub sigma2_gamma: f64,
    pub sigma2_delta: f64,
    pub rho: f64,
    pub len: usize,
}

impl BaseMeasureParams {
    pub fn new(
        gamma_bar: f64,
        sigma2_gamma: f64,
        sigma2_delta: f64,
        rho: f64,
        len: usize,
    ) -> Result<Self> {
        let p = Self {
            gamma_bar,
            sigma2_gamma,
            sigma2_delta,
            rho,
            len,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma_bar.is_finite() {
            return Err(Error::InvalidParameter("γ̄ must be finite".into()));
        }
        if !(self.sigma2_gamma > 0.0 && self.sigma2_gamma.is_finite())
            || !(self.sigma2_delta > 0.0 && self.sigma2_delta.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "base-measure variances must be positive, got σ²_γ={} σ²_δ={}",
                self.sigma2_gamma, self.sigma2_delta
            )));
        }
        if !(self.rho.abs() < 1.0 || self.rho == 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ρ must satisfy |ρ| < 1 or equal 1 (random walk), got {}",
                self.rho
            )));
        }
        if self.len == 0 {
            return Err(Error::InvalidParameter("trajectory length must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn with_dynamics(&self, sigma2_delta: f64, rho: f64) -> Self {
        Self {
            sigma2_delta,
            rho,
            ..*self
        }
    }

    pub fn is_random_walk(&self) -> bool {
        self.rho == 1.0
    }
}

/// `γ̄ (1, ρ, ρ², …, ρ^{T-1})`.
pub fn ar1_mean(params: &BaseMeasureParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len);
    let mut pow = 1.0;
    for _ in 0..params.len {
        out.push(params.gamma_bar * pow);
        pow *= params.rho;
    }
    out
}

/// Closed-form path covariance; `ρ = 1` uses the random-walk limit
/// `σ²_γ + σ²_δ (min(s,t) - 1)`.
pub fn ar1_covariance(params: &BaseMeasureParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let n = params.len;
    let (rho, sg, sd) = (params.rho, params.sigma2_gamma, params.sigma2_delta);
    let mut cov = DMatrix::zeros(n, n);
    for s in 1..=n {
        for t in s..=n {
            let v = if params.is_random_walk() {
                sg + sd * (s - 1) as f64
            } else {
                let rho2 = rho * rho;
                rho.powi((s + t - 2) as i32) * sg
                    + rho.powi((t - s) as i32) * sd * (1.0 - rho2.powi((s - 1) as i32)) / (1.0 - rho2)
            };
            cov[(s - 1, t - 1)] = v;
            cov[(t - 1, s - 1)] = v;
        }
    }
    Ok(cov)
}

/// Dense Cholesky with one jittered retry.
pub fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows().max(1) as f64;
    let jitter = 1e-10 * m.diagonal().sum() / n;
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            log::warn!("covariance factorization failed; retrying with jitter {jitter:e}");
            let mut bumped = m;
            for k in 0..bumped.nrows() {
                bumped[(k, k)] += jitter;
            }
            Cholesky::new(bumped)
                .ok_or_else(|| Error::NumericDegeneracy("Σ is not positive definite".into()))
        }
    }
}

/// Exact `log N_T(γ; γ̄μ_T, Σ)` through the dense triangular factor of `Σ`.
pub fn log_density(gamma: &[f64], params: &BaseMeasureParams) -> Result<f64> {
    let chol = cholesky_with_jitter(ar1_covariance(params)?)?;
    log_density_with_factor(gamma, params, &chol)
}

pub fn log_density_with_factor(
    gamma: &[f64],
    params: &BaseMeasureParams,
    chol: &Cholesky<f64, Dyn>,
) -> Result<f64> {
    if gamma.len() != params.len {
        return Err(Error::Contract(format!(
            "trajectory has length {}, base measure expects {}",
            gamma.len(),
            params.len
        )));
    }
    let mean = ar1_mean(params);
    let resid = DVector::from_iterator(gamma.len(), gamma.iter().zip(&mean).map(|(g, m)| g - m));
    let l = chol.l_dirty();
    let z = l
        .solve_lower_triangular(&resid)
        .ok_or_else(|| Error::NumericDegeneracy("singular Cholesky factor".into()))?;
    let half_logdet: f64 = (0..gamma.len()).map(|k| l[(k, k)].ln()).sum();
    Ok(-0.5 * z.norm_squared() - half_logdet - 0.5 * gamma.len() as f64 * LN_2PI)
}

/// Exact draw by running the recursion forward. Zero variances are honored
/// (the corresponding innovations are skipped).
pub fn sample<R: Rng + ?Sized>(params: &BaseMeasureParams, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len);
    let sd_g = params.sigma2_gamma.max(0.0).sqrt();
    let sd_d = params.sigma2_delta.max(0.0).sqrt();
    let mut prev = params.gamma_bar;
    if sd_g > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        prev += sd_g * z;
    }
    out.push(prev);
    for _ in 1..params.len {
        let mut next = params.rho * prev;
        if sd_d > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            next += sd_d * z;
        }
        out.push(next);
        prev = next;
    }
    out
}

/// Base measure with its tridiagonal precision precomputed. Rebuilt, never
/// mutated, when `(σ²_δ, ρ)` change.
#[derive(Clone, Debug)]
pub struct BaseMeasure {
    params: BaseMeasureParams,
    precision: SymTridiag,
    log_det_precision: f64,
}

impl BaseMeasure {
    pub fn new(params: BaseMeasureParams) -> Result<Self> {
        params.validate()?;
        let n = params.len;
        let (rho, sg, sd) = (params.rho, params.sigma2_gamma, params.sigma2_delta);
        let mut diag = vec![(1.0 + rho * rho) / sd; n];
        diag[0] = 1.0 / sg + if n > 1 { rho * rho / sd } else { 0.0 };
        if n > 1 {
            diag[n - 1] = 1.0 / sd;
        }
        let off = vec![-rho / sd; n.saturating_sub(1)];
        let log_det_precision = -sg.ln() - (n as f64 - 1.0) * sd.ln();
        Ok(Self {
            params,
            precision: SymTridiag::new(diag, off),
            log_det_precision,
        })
    }

    pub fn params(&self) -> &BaseMeasureParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len
    }

    pub fn is_empty(&self) -> bool {
        self.params.len == 0
    }

    pub fn precision(&self) -> &SymTridiag {
        &self.precision
    }

    pub fn mean(&self) -> Vec<f64> {
        ar1_mean(&self.params)
    }

    /// `log |Σ⁻¹| = -log σ²_γ - (T-1) log σ²_δ`.
    pub fn log_det_precision(&self) -> f64 {
        self.log_det_precision
    }

    /// `Σ⁻¹ γ̄ μ_T`, which collapses to `(γ̄/σ²_γ) e_1`.
    pub fn precision_times_mean(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.params.len];
        h[0] = self.params.gamma_bar / self.params.sigma2_gamma;
        h
    }

    /// `γ̄² μ_Tᵀ Σ⁻¹ μ_T = γ̄²/σ²_γ`.
    pub fn mean_quad(&self) -> f64 {
        self.params.gamma_bar * self.params.gamma_bar / self.params.sigma2_gamma
    }

    /// Log-density through the precision: `O(T)`.
    pub fn log_density(&self, gamma: &[f64]) -> f64 {
        let mean = self.mean();
        let resid: Vec<f64> = gamma.iter().zip(&mean).map(|(g, m)| g - m).collect();
        -0.5 * self.precision.quad_form(&resid) + 0.5 * self.log_det_precision
            - 0.5 * self.params.len as f64 * LN_2PI
    }
}

#[derive(Clone, Debug)]
pub struct StickBreakingRealization {
    pub weights: Vec<f64>,
    pub atoms: Vec<Vec<f64>>,
    pub fractions: Vec<f64>,
}

impl StickBreakingRealization {
    pub fn truncation(&self) -> usize {
        self.weights.len()
    }

    /// Unassigned mass `Π (1 - b_ℓ)`.
    pub fn deficit(&self) -> f64 {
        self.fractions.iter().map(|b| 1.0 - b).product()
    }
}

/// Weights from stick fractions: `p_1 = b_1`, `p_k = b_k Π_{ℓ<k} (1 - b_ℓ)`.
pub fn stick_weights(fractions: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    fractions
        .iter()
        .map(|b| {
            let p = b * remaining;
            remaining *= 1.0 - b;
            p
        })
        .collect()
}

/// Truncated stick-breaking draw with `b_k ~ Beta(1, τ)` and atoms i.i.d.
/// from the base measure.
pub fn stick_breaking<R: Rng + ?Sized>(
    tau: f64,
    truncation: usize,
    params: &BaseMeasureParams,
    rng: &mut R,
) -> Result<StickBreakingRealization> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("τ must be positive, got {tau}")));
    }
    if truncation == 0 {
        return Err(Error::InvalidParameter("truncation level must be ≥ 1".into()));
    }
    let beta = Beta::new(1.0, tau).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let fractions: Vec<f64> = (0..truncation).map(|_| beta.sample(rng)).collect();
    let atoms = (0..truncation).map(|_| sample(params, rng)).collect();
    Ok(StickBreakingRealization {
        weights: stick_weights(&fractions),
        atoms,
        fractions,
    })
}
