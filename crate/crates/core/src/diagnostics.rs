//! Posterior summaries: HPD intervals, truth coverage, posterior-predictive
//! coverage and length, positive-support maps, connectivity/BOLD correlation
//! and convergence checks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainOutput, ChainState, Dataset};
use crate::simulate::TruthRecord;

/// Fewest draws accepted by [`hpd_interval`].
pub const MIN_HPD_SAMPLES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpdInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl HpdInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

fn check_level(n: usize, level: f64) -> Result<usize> {
    if n < MIN_HPD_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_HPD_SAMPLES,
            got: n,
        });
    }
    if !(level > 0.5 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0.5, 1), got {level}")));
    }
    Ok(((level * n as f64).ceil() as usize).min(n))
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("samples contain NaN".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Shortest window over the sorted draws holding `⌈level · n⌉` of them;
/// ties go to the lowest `lo`.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<HpdInterval> {
    let k = check_level(samples.len(), level)?;
    Ok(hpd_sorted(&sorted(samples)?, k, level))
}

fn hpd_sorted(s: &[f64], k: usize, level: f64) -> HpdInterval {
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=s.len() - k {
        let w = s[i + k - 1] - s[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    HpdInterval {
        lo: s[best],
        hi: s[best + k - 1],
        level,
    }
}

/// The central window of `⌈level · n⌉` sorted draws.
pub fn equal_tail_interval(samples: &[f64], level: f64) -> Result<HpdInterval> {
    let k = check_level(samples.len(), level)?;
    let s = sorted(samples)?;
    let lo = (s.len() - k) / 2;
    Ok(HpdInterval {
        lo: s[lo],
        hi: s[lo + k - 1],
        level,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Probabilities of the nine band edges (eight 12.5% bands).
pub fn band_probabilities() -> [f64; 9] {
    std::array::from_fn(|k| k as f64 * 0.125)
}

fn check_truth(chain: &ChainOutput, truth: &TruthRecord) -> Result<()> {
    if truth.regions() != chain.regions() || truth.len() != chain.len() {
        return Err(Error::Contract(format!(
            "truth is {}×{} but the chain is {}×{}",
            truth.regions(),
            truth.len(),
            chain.regions(),
            chain.len()
        )));
    }
    Ok(())
}

/// `R × R` matrix; entry `(i, j)` is the share of `t` with the true
/// `γ_ij(t)` inside the HPD interval of its draws.
pub fn truth_coverage(chain: &ChainOutput, truth: &TruthRecord, level: f64) -> Result<Vec<Vec<f64>>> {
    check_truth(chain, truth)?;
    let (r, n) = (chain.regions(), chain.len());
    let mut out = vec![vec![0.0; r]; r];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let truth_path = truth.gamma_at(i, j);
            let mut hits = 0;
            for (t, g) in truth_path.iter().enumerate() {
                if hpd_interval(&chain.gamma_draws(i, j, t), level)?.contains(*g) {
                    hits += 1;
                }
            }
            *cell = hits as f64 / n as f64;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictiveMode {
    /// Re-run the β recursion forward from each draw's `β(1)`.
    Resimulate,
    /// Use each draw's stored β.
    PlugIn,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub coverage: f64,
    pub mean_length: f64,
}

fn replicate<R: Rng + ?Sized>(draw: &ChainState, x: &[f64], mode: PredictiveMode, rng: &mut R) -> Vec<f64> {
    let (r, n) = (draw.regions(), draw.len());
    let (sd_e, sd_w) = (draw.sigma2_eps.sqrt(), draw.sigma2_omega.sqrt());
    let mut beta = draw.beta.clone();
    if mode == PredictiveMode::Resimulate {
        for t in 1..n {
            for i in 0..r {
                let mut acc = 0.0;
                for l in 0..r {
                    acc += draw.gamma[i * r + l][t] * beta[(l, t - 1)];
                }
                let z: f64 = StandardNormal.sample(rng);
                beta[(i, t)] = x[t - 1] * acc + sd_w * z;
            }
        }
    }
    let mut y = Vec::with_capacity(r * n);
    for i in 0..r {
        for t in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            y.push(draw.alpha[i] + x[t] * beta[(i, t)] + sd_e * z);
        }
    }
    y
}

/// Per region: share of observed `y_i(t)` inside the HPD interval of the
/// replicated draws, and the mean interval length over `t`.
pub fn posterior_predictive<R: Rng + ?Sized>(
    chain: &ChainOutput,
    data: &Dataset,
    mode: PredictiveMode,
    level: f64,
    rng: &mut R,
) -> Result<Vec<PredictiveSummary>> {
    let (r, n) = (data.regions(), data.len());
    if chain.regions() != r || chain.len() != n {
        return Err(Error::Contract("chain and dataset dimensions differ".into()));
    }
    check_level(chain.draws.len(), level)?;
    let mut cells = vec![Vec::with_capacity(chain.draws.len()); r * n];
    for draw in &chain.draws {
        for (cell, v) in cells.iter_mut().zip(replicate(draw, &data.x, mode, rng)) {
            cell.push(v);
        }
    }
    let mut out = Vec::with_capacity(r);
    for i in 0..r {
        let (mut hits, mut length) = (0usize, 0.0);
        for t in 0..n {
            let iv = hpd_interval(&cells[i * n + t], level)?;
            hits += iv.contains(data.y[(i, t)]) as usize;
            length += iv.width();
        }
        out.push(PredictiveSummary {
            coverage: hits as f64 / n as f64,
            mean_length: length / n as f64,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportMap {
    /// `values[i * R + j][t]`.
    pub values: Vec<Vec<f64>>,
    pub masked: Vec<bool>,
}

/// Share of draws with `γ_ij(t) > 0`.
pub fn positive_support_map(chain: &ChainOutput) -> SupportMap {
    let (r, n) = (chain.regions(), chain.len());
    let count = chain.draws.len().max(1) as f64;
    let mut values = vec![vec![0.0; n]; r * r];
    for draw in &chain.draws {
        for (row, g) in values.iter_mut().zip(&draw.gamma) {
            for (v, x) in row.iter_mut().zip(g) {
                if *x > 0.0 {
                    *v += 1.0;
                }
            }
        }
    }
    values.iter_mut().flatten().for_each(|v| *v /= count);
    let masked = (0..r * r).map(|p| chain.meta.spec.is_masked(p / r, p % r)).collect();
    SupportMap { values, masked }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Correlation of the smoothed regressor with each posterior-mean
/// trajectory; `None` for masked pairs and constant trajectories.
pub fn connectivity_bold_correlation(chain: &ChainOutput, smooth: &[f64]) -> Result<Vec<Option<f64>>> {
    let r = chain.regions();
    if smooth.len() != chain.len() {
        return Err(Error::Contract("smoother length differs from the chain".into()));
    }
    Ok((0..r * r)
        .map(|p| {
            if chain.meta.spec.is_masked(p / r, p % r) {
                None
            } else {
                pearson(&chain.gamma_posterior_mean(p / r, p % r), smooth)
            }
        })
        .collect())
}

/// Nine quantiles (0, 12.5%, …, 100%) of the draws of every `γ_ij(t)`;
/// indexed `[i * R + j][t]`.
pub fn quantile_bands(chain: &ChainOutput) -> Vec<Vec<[f64; 9]>> {
    let (r, n) = (chain.regions(), chain.len());
    let probs = band_probabilities();
    (0..r * r)
        .map(|p| {
            (0..n)
                .map(|t| {
                    let mut d = chain.gamma_draws(p / r, p % r, t);
                    d.sort_by(f64::total_cmp);
                    probs.map(|q| quantile_sorted(&d, q))
                })
                .collect()
        })
        .collect()
}

fn batch_means_variance(x: &[f64]) -> f64 {
    let n = x.len();
    let b = (n as f64).sqrt().floor().max(1.0) as usize;
    let batches = n / b;
    let mean = x.iter().sum::<f64>() / n as f64;
    if batches < 2 {
        return x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    }
    let bm: Vec<f64> = (0..batches)
        .map(|k| x[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let mm = bm.iter().sum::<f64>() / batches as f64;
    b as f64 * bm.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / (batches - 1) as f64
}

/// Monte-Carlo standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(x: &[f64]) -> f64 {
    (batch_means_variance(x) / x.len() as f64).sqrt()
}

/// Geweke z-score comparing the first 10% with the last 50% of a trace.
pub fn geweke_z(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 20 {
        return None;
    }
    let a = &x[..n / 10];
    let b = &x[n - n / 2..];
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = batch_means_variance(a) / a.len() as f64 + batch_means_variance(b) / b.len() as f64;
    if var > 0.0 {
        Some((mean(a) - mean(b)) / var.sqrt())
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    pub geweke_z: Option<f64>,
}

fn summarize(name: String, x: &[f64]) -> TraceSummary {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let variance = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    TraceSummary {
        name,
        mean,
        variance,
        geweke_z: geweke_z(x),
    }
}

/// Trace summaries for every scalar block plus the intercepts.
pub fn trace_summaries(chain: &ChainOutput) -> Vec<TraceSummary> {
    let pick = |f: fn(&ChainState) -> f64| chain.draws.iter().map(f).collect::<Vec<f64>>();
    let mut out = vec![
        summarize("sigma2_eps".into(), &pick(|s| s.sigma2_eps)),
        summarize("sigma2_omega".into(), &pick(|s| s.sigma2_omega)),
        summarize("sigma2_delta".into(), &pick(|s| s.sigma2_delta)),
        summarize("rho".into(), &pick(|s| s.rho)),
        summarize("tau".into(), &pick(|s| s.tau)),
    ];
    for i in 0..chain.regions() {
        let a: Vec<f64> = chain.draws.iter().map(|s| s.alpha[i]).collect();
        out.push(summarize(format!("alpha{}", i + 1), &a));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_hpd() {
        let iv = hpd_interval(&[2.5; 40], 0.9).unwrap();
        assert_eq!((iv.lo, iv.hi), (2.5, 2.5));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            hpd_interval(&[1.0; 5], 0.95),
            Err(Error::InsufficientSamples { needed: 20, got: 5 })
        ));
        assert!(hpd_interval(&[1.0; 30], 0.4).is_err());
    }

    #[test]
    fn exponential_hpd_starts_at_the_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d: Vec<f64> = (0..20_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let hpd = hpd_interval(&d, 0.95).unwrap();
        let et = equal_tail_interval(&d, 0.95).unwrap();
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hpd.lo - min < 0.01);
        assert!(hpd.width() < et.width());
    }

    #[test]
    fn ties_pick_lowest_window() {
        let d: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let iv = hpd_interval(&d, 0.9).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 17.0));
    }

    #[test]
    fn pearson_signs() {
        let a = [1.0, 2.0, 4.0, 3.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&a, &[1.0; 4]).is_none());
    }

    #[test]
    fn band_edges() {
        let p = band_probabilities();
        assert_eq!(p[0], 0.0);
        assert_eq!(p[4], 0.5);
        assert_eq!(p[8], 1.0);
    }

    #[test]
    fn geweke_is_small_for_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(geweke_z(&x).unwrap().abs() < 4.0);
    }
}
