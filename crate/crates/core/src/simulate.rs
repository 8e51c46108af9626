//! Synthetic datasets from the RW, near-RW, AR and DP generative models,
//! with the true trajectories kept for coverage scoring.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::base_measure::{stick_breaking, BaseMeasureParams};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::signal::{block_design, convolve_stimulus, HrfParams};

/// Scan interval used by [`default_regressor`]: fits the 432 s block design
/// into 285 scans.
pub const SIM_DELTA: f64 = 1.52;

/// Peak magnitude of [`default_regressor`]. At unit peak the β recursion
/// diverges for most draws of the default connectivity.
pub const REGRESSOR_PEAK: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimVariant {
    /// `γ(t) = γ(t-1) + δ(t)`.
    Rw,
    /// `γ(t) = φ γ(t-1) + δ(t)`.
    RwPrime { phi: f64 },
    /// `γ(t) = ρ γ(t-1) + δ(t)`.
    Ar { rho: f64 },
    /// Trajectories drawn from a truncated stick-breaking realization of
    /// `DP(τ G₀)` with AR(ρ) atoms.
    Dp { tau: f64, rho: f64 },
}

impl SimVariant {
    pub fn rw_prime() -> Self {
        SimVariant::RwPrime { phi: 0.999 }
    }

    fn coefficient(&self) -> f64 {
        match *self {
            SimVariant::Rw => 1.0,
            SimVariant::RwPrime { phi } => phi,
            SimVariant::Ar { rho } | SimVariant::Dp { rho, .. } => rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SimVariant::Rw => Ok(()),
            SimVariant::RwPrime { phi } if phi > 0.0 && phi <= 1.0 => Ok(()),
            SimVariant::RwPrime { phi } => Err(Error::InvalidParameter(format!("φ must lie in (0, 1], got {phi}"))),
            SimVariant::Ar { rho } if rho.abs() < 1.0 => Ok(()),
            SimVariant::Ar { rho } => Err(Error::InvalidParameter(format!("ρ must satisfy |ρ| < 1, got {rho}"))),
            SimVariant::Dp { tau, rho } if tau > 0.0 && tau.is_finite() && rho.abs() < 1.0 => Ok(()),
            SimVariant::Dp { tau, rho } => Err(Error::InvalidParameter(format!(
                "DP simulation needs τ > 0 and |ρ| < 1, got τ={tau} ρ={rho}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    /// Region intercepts; `None` means `(1, 2, …, R)`.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    pub beta_initial: f64,
    pub gamma_initial_mean: f64,
    pub gamma_initial_var: f64,
    pub sigma2_eps: f64,
    pub sigma2_omega: f64,
    pub sigma2_delta: f64,
    /// Stick-breaking truncation for the DP variant.
    pub truncation: usize,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            alpha: None,
            beta_initial: 1.0,
            gamma_initial_mean: 0.0,
            gamma_initial_var: 1.0,
            sigma2_eps: 0.01,
            sigma2_omega: 0.01,
            sigma2_delta: 0.01,
            truncation: 50,
        }
    }
}

impl SimulationParams {
    pub fn alpha_for(&self, regions: usize) -> Result<Vec<f64>> {
        match &self.alpha {
            Some(a) if a.len() == regions => Ok(a.clone()),
            Some(a) => Err(Error::Contract(format!(
                "{} intercepts supplied for {regions} regions",
                a.len()
            ))),
            None => Ok((1..=regions).map(|i| i as f64).collect()),
        }
    }

    fn validate(&self) -> Result<()> {
        let vars = [self.gamma_initial_var, self.sigma2_eps, self.sigma2_omega, self.sigma2_delta];
        if vars.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("simulation variances must be finite and ≥ 0".into()));
        }
        if self.truncation == 0 {
            return Err(Error::InvalidParameter("truncation must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub variant: SimVariant,
    pub params: SimulationParams,
    pub seed: Option<u64>,
    pub alpha: Vec<f64>,
    /// `beta[i][t]`.
    pub beta: Vec<Vec<f64>>,
    /// `gamma[i * R + j][t]`.
    pub gamma: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    /// Atom index per pair for the DP variant.
    #[serde(default)]
    pub clusters: Option<Vec<usize>>,
}

impl TruthRecord {
    pub fn regions(&self) -> usize {
        self.alpha.len()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn gamma_at(&self, i: usize, j: usize) -> &[f64] {
        &self.gamma[i * self.regions() + j]
    }
}

/// The block-design regressor (6 cycles of 18 + 18 two-second trials)
/// convolved with the default HRF at [`SIM_DELTA`] and scaled to peak
/// magnitude [`REGRESSOR_PEAK`]. Shorter horizons get a prefix of the full
/// series.
pub fn default_regressor(len: usize) -> Result<Vec<f64>> {
    let (blocks, trials, dur) = (6, 18, 2.0);
    let span = (2 * blocks * trials) as f64 * dur;
    let horizon = len.max((span / SIM_DELTA).ceil() as usize);
    let design = block_design(blocks, trials, dur, SIM_DELTA, horizon)?;
    let mut x = convolve_stimulus(&design, &HrfParams::default())?;
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::DegenerateSeries("regressor is identically zero".into()));
    }
    x.truncate(len);
    Ok(x.iter().map(|v| REGRESSOR_PEAK * v / peak).collect())
}

fn scaled(z: f64, var: f64) -> f64 {
    if var == 0.0 {
        0.0
    } else {
        var.sqrt() * z
    }
}

/// `β` by the transition recursion from `β(1)`, then `y = α + xβ + ε`.
fn propagate(
    alpha: &[f64],
    beta_initial: &[f64],
    gamma: &[Vec<f64>],
    x: &[f64],
    omega: &DMatrix<f64>,
    eps: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (r, n) = (alpha.len(), x.len());
    let mut beta = DMatrix::zeros(r, n);
    for i in 0..r {
        beta[(i, 0)] = beta_initial[i] + omega[(i, 0)];
    }
    for t in 1..n {
        for i in 0..r {
            let mut acc = 0.0;
            for l in 0..r {
                acc += gamma[i * r + l][t] * beta[(l, t - 1)];
            }
            beta[(i, t)] = x[t - 1] * acc + omega[(i, t)];
        }
    }
    let y = DMatrix::from_fn(r, n, |i, t| alpha[i] + x[t] * beta[(i, t)] + eps[(i, t)]);
    (beta, y)
}

/// Simulates `R` regions over `T = x.len()` scans. Noise arrays are drawn
/// first, in a fixed order, so variants sharing a seed differ only through
/// the connectivity recursion.
pub fn simulate_dataset<R: Rng + ?Sized>(
    variant: SimVariant,
    params: &SimulationParams,
    regions: usize,
    x: &[f64],
    rng: &mut R,
) -> Result<(Dataset, TruthRecord)> {
    variant.validate()?;
    params.validate()?;
    let n = x.len();
    if regions < 2 || n < 3 {
        return Err(Error::InvalidParameter("simulation needs R ≥ 2 and T ≥ 3".into()));
    }
    let alpha = params.alpha_for(regions)?;
    let pairs = regions * regions;
    let mut normal = || -> f64 { StandardNormal.sample(rng) };

    let g1: Vec<f64> = (0..pairs).map(|_| normal()).collect();
    let delta: Vec<Vec<f64>> = (0..pairs).map(|_| (1..n).map(|_| normal()).collect()).collect();
    let omega_z: Vec<f64> = (0..regions * (n - 1)).map(|_| normal()).collect();
    let eps_z: Vec<f64> = (0..regions * n).map(|_| normal()).collect();

    let coef = variant.coefficient();
    let path = |start: f64, innov: &[f64]| -> Vec<f64> {
        let mut g = Vec::with_capacity(n);
        g.push(params.gamma_initial_mean + scaled(start, params.gamma_initial_var));
        for t in 1..n {
            g.push(coef * g[t - 1] + scaled(innov[t - 1], params.sigma2_delta));
        }
        g
    };

    let (gamma, clusters): (Vec<Vec<f64>>, _) = match variant {
        SimVariant::Dp { tau, rho } => {
            let base = BaseMeasureParams {
                gamma_bar: params.gamma_initial_mean,
                sigma2_gamma: params.gamma_initial_var,
                sigma2_delta: params.sigma2_delta,
                rho,
                len: n,
            };
            let g = stick_breaking(tau, params.truncation, &base, rng)?;
            let total: f64 = g.weights.iter().sum();
            let mut labels = Vec::with_capacity(pairs);
            for _ in 0..pairs {
                let u: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = g.weights.len() - 1;
                for (k, w) in g.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                labels.push(pick);
            }
            let gamma = labels.iter().map(|k| g.atoms[*k].clone()).collect();
            (gamma, Some(labels))
        }
        _ => ((0..pairs).map(|p| path(g1[p], &delta[p])).collect(), None),
    };

    let mut omega = DMatrix::zeros(regions, n);
    for i in 0..regions {
        for t in 1..n {
            omega[(i, t)] = scaled(omega_z[i * (n - 1) + t - 1], params.sigma2_omega);
        }
    }
    let eps = DMatrix::from_fn(regions, n, |i, t| scaled(eps_z[i * n + t], params.sigma2_eps));
    let beta_initial = vec![params.beta_initial; regions];
    let (beta, y) = propagate(&alpha, &beta_initial, &gamma, x, &omega, &eps);

    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDegeneracy("simulated series diverged".into()));
    }
    let data = Dataset::new(y, x.to_vec())?;
    let truth = TruthRecord {
        variant,
        params: params.clone(),
        seed: None,
        alpha,
        beta: (0..regions).map(|i| beta.row(i).iter().copied().collect()).collect(),
        gamma,
        x: x.to_vec(),
        clusters,
    };
    Ok((data, truth))
}

/// Noise-free replay of a truth record: `β` re-propagated from `β(1)`
/// through the stored trajectories, then `y = α + xβ`.
pub fn regenerate(truth: &TruthRecord) -> Result<Dataset> {
    let (r, n) = (truth.regions(), truth.len());
    if truth.beta.len() != r || truth.gamma.len() != r * r || truth.gamma.iter().any(|g| g.len() != n) {
        return Err(Error::Contract("truth record dimensions are inconsistent".into()));
    }
    let beta_initial: Vec<f64> = truth.beta.iter().map(|b| b[0]).collect();
    let zeros = DMatrix::zeros(r, n);
    let (_, y) = propagate(&truth.alpha, &beta_initial, &truth.gamma, &truth.x, &zeros, &zeros);
    Dataset::new(y, truth.x.clone())
}
