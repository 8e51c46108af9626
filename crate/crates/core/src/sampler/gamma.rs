//! Full conditionals of a connectivity trajectory `Γ_ij`.
//!
//! Only the transition equation of `β_i` involves `Γ_ij`, and it does so
//! through a Gaussian factor `exp(-½ Γᵀ A Γ + Bᵀ Γ)` with `A` diagonal.
//! Because the base-measure precision is tridiagonal, the Gaussian conditional
//! `N((Σ⁻¹ + A)⁻¹ (γ̄ Σ⁻¹ μ_T + B), (Σ⁻¹ + A)⁻¹)` is handled in `O(T)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::base_measure::{BaseMeasure, LN_2PI};
use crate::error::{Error, Result};
use crate::linalg::{BidiagCholesky, SymTridiag};
use crate::model::{ChainState, Dataset, ModelSpec};
use crate::sampler::urn::same_vector;

/// Diagonal `A_ij` and vector `B_ij`; both have a zero first entry.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaConditionalTerms {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl GammaConditionalTerms {
    /// `-½ Γᵀ A Γ + Bᵀ Γ`.
    pub fn log_factor(&self, gamma: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .zip(gamma)
            .map(|((a, b), g)| -0.5 * a * g * g + b * g)
            .sum()
    }
}

/// `A(t) = x²(t-1) β_j²(t-1) / σ²_ω` and
/// `B(t) = [β_i(t) β_j(t-1) x(t-1) - β_j(t-1) x²(t-1) Σ_{ℓ≠j} γ_iℓ(t) β_ℓ(t-1)] / σ²_ω`.
pub fn compute_gamma_terms(i: usize, j: usize, state: &ChainState, data: &Dataset) -> GammaConditionalTerms {
    let (r, n) = (state.regions(), state.len());
    let x = &data.x;
    let w = 1.0 / state.sigma2_omega;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for t in 1..n {
        let xb = x[t - 1] * state.beta[(j, t - 1)];
        a[t] = w * xb * xb;
        let mut others = 0.0;
        for l in (0..r).filter(|l| *l != j) {
            others += state.gamma[i * r + l][t] * state.beta[(l, t - 1)];
        }
        b[t] = w * (state.beta[(i, t)] * xb - xb * x[t - 1] * others);
    }
    GammaConditionalTerms { a, b }
}

/// The Gaussian conditional `G_ij^(T)` with tridiagonal precision.
#[derive(Clone, Debug)]
pub struct GaussianConditional {
    pub precision: SymTridiag,
    pub factor: BidiagCholesky,
    pub mean: Vec<f64>,
    /// `γ̄ Σ⁻¹ μ_T + B`.
    pub shift: Vec<f64>,
}

impl GaussianConditional {
    pub fn new(base: &BaseMeasure, terms: &GammaConditionalTerms) -> Result<Self> {
        let precision = base.precision().add_diagonal(&terms.a);
        let factor = precision.cholesky()?;
        let shift: Vec<f64> = base
            .precision_times_mean()
            .iter()
            .zip(&terms.b)
            .map(|(h, b)| h + b)
            .collect();
        let mean = factor.solve(&shift);
        Ok(Self {
            precision,
            factor,
            mean,
            shift,
        })
    }

    pub fn log_density(&self, gamma: &[f64]) -> f64 {
        let resid: Vec<f64> = gamma.iter().zip(&self.mean).map(|(g, m)| g - m).collect();
        -0.5 * self.precision.quad_form(&resid) + 0.5 * self.factor.log_det()
            - 0.5 * gamma.len() as f64 * LN_2PI
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.mean.len()).map(|_| StandardNormal.sample(rng)).collect();
        let noise = self.factor.backward(&z);
        self.mean.iter().zip(&noise).map(|(m, e)| m + e).collect()
    }

    /// `log ∫ exp(-½ΓᵀAΓ + BᵀΓ) G₀(dΓ)
    ///   = -½ log|I + ΣA| - ½ [γ̄² μᵀΣ⁻¹μ - shiftᵀ (Σ⁻¹+A)⁻¹ shift]`.
    pub fn log_marginal(&self, base: &BaseMeasure) -> f64 {
        let log_det_q = base.log_det_precision();
        let quad: f64 = self.shift.iter().zip(&self.mean).map(|(h, m)| h * m).sum();
        -0.5 * (self.factor.log_det() - log_det_q) - 0.5 * (base.mean_quad() - quad)
    }
}

/// Normalized urn weights: `q0` for a fresh draw from `G_ij^(T)` and one
/// weight per other unmasked pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureWeights {
    pub q0: f64,
    pub q: Vec<(usize, f64)>,
}

impl MixtureWeights {
    pub fn total(&self) -> f64 {
        self.q0 + self.q.iter().map(|(_, w)| w).sum::<f64>()
    }
}

/// Normalizes log-weights with max subtraction.
fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Full conditional of `Γ_ij` under the DP model.
#[derive(Clone, Debug)]
pub struct DpConditional {
    pub gaussian: GaussianConditional,
    pub weights: MixtureWeights,
    /// Unnormalized log-weights, fresh component first.
    pub log_weights: Vec<f64>,
    pub atoms: Vec<Vec<f64>>,
}

impl DpConditional {
    pub fn new(
        i: usize,
        j: usize,
        state: &ChainState,
        data: &Dataset,
        spec: &ModelSpec,
        base: &BaseMeasure,
    ) -> Result<Self> {
        let r = state.regions();
        let own = i * r + j;
        if spec.is_masked(i, j) {
            return Err(Error::Contract(format!("pair ({}, {}) is masked", i + 1, j + 1)));
        }
        let terms = compute_gamma_terms(i, j, state, data);
        let gaussian = GaussianConditional::new(base, &terms)?;
        let mut log_weights = vec![state.tau.ln() + gaussian.log_marginal(base)];
        let mut pairs = Vec::new();
        let mut atoms = Vec::new();
        for p in spec.unmasked_pairs(r).into_iter().filter(|p| *p != own) {
            log_weights.push(terms.log_factor(&state.gamma[p]));
            pairs.push(p);
            atoms.push(state.gamma[p].clone());
        }
        if log_weights.iter().any(|l| l.is_nan()) {
            return Err(Error::NumericDegeneracy(format!(
                "non-finite urn weight for pair ({}, {})",
                i + 1,
                j + 1
            )));
        }
        let probs = normalize_log_weights(&log_weights);
        let weights = MixtureWeights {
            q0: probs[0],
            q: pairs.into_iter().zip(probs[1..].iter().copied()).collect(),
        };
        Ok(Self {
            gaussian,
            weights,
            log_weights,
            atoms,
        })
    }

    /// Log-probability (mixed discrete/continuous) that the update yields
    /// `gamma`, up to the normalizing constant shared by all outcomes.
    pub fn log_kernel_unnormalized(&self, gamma: &[f64]) -> f64 {
        let matches: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.log_weights[1..])
            .filter(|(a, _)| same_vector(a, gamma))
            .map(|(_, l)| *l)
            .collect();
        if matches.is_empty() {
            self.log_weights[0] + self.gaussian.log_density(gamma)
        } else {
            let max = matches.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max + matches.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = self.weights.q0;
        if u < acc {
            return self.gaussian.sample(rng);
        }
        for (k, (_, w)) in self.weights.q.iter().enumerate() {
            acc += w;
            if u < acc {
                return self.atoms[k].clone();
            }
        }
        // Rounding left u beyond the cumulative sum; take the last atom.
        self.atoms.last().cloned().unwrap_or_else(|| self.gaussian.sample(rng))
    }
}

/// One Polya-urn Gibbs draw for `Γ_ij`.
pub fn update_gamma_dp<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    state: &ChainState,
    data: &Dataset,
    spec: &ModelSpec,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(DpConditional::new(i, j, state, data, spec, base)?.sample(rng))
}

/// Exact draw from `G_ij^(T)`, the full conditional under the AR/RW models.
pub fn update_gamma_gaussian<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    state: &ChainState,
    data: &Dataset,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let terms = compute_gamma_terms(i, j, state, data);
    Ok(GaussianConditional::new(base, &terms)?.sample(rng))
}
