//! Modeled BOLD regressor construction and sinusoid smoothing.
//!
//! The regressor is the stimulus boxcar convolved with the Glover double-gamma
//! hemodynamic response. The smoother fits `x(t) = b1 cos(2πωt) + b2 sin(2πωt)`
//! with ω chosen by maximizing the periodogram.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default scan repeat time in seconds.
pub const DEFAULT_DELTA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrfParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            a1: 6.0,
            a2: 12.0,
            b1: 0.9,
            b2: 0.9,
            c: 0.35,
        }
    }
}

impl HrfParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a1, self.a2, self.b1, self.b2, self.c];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "HRF parameters must be finite: {self:?}"
            )));
        }
        if self.a1 <= 0.0 || self.a2 <= 0.0 || self.b1 <= 0.0 || self.b2 <= 0.0 {
            return Err(Error::InvalidParameter(
                "HRF shapes and scales must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::InvalidParameter(format!(
                "HRF undershoot ratio must lie in [0, 1), got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Peak locations `d_k = a_k b_k` of the two gamma lobes.
    pub fn peaks(&self) -> (f64, f64) {
        (self.a1 * self.b1, self.a2 * self.b2)
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (d1, d2) = self.peaks();
        let lobe = |a: f64, b: f64, d: f64| (a * (t / d).ln() - (t - d) / b).exp();
        lobe(self.a1, self.b1, d1) - self.c * lobe(self.a2, self.b2, d2)
    }
}

/// Glover's HRF `(t/d1)^a1 e^{-(t-d1)/b1} - c (t/d2)^a2 e^{-(t-d2)/b2}`.
pub fn glover_hrf(params: &HrfParams, t: f64) -> Result<f64> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "HRF time must be nonnegative, got {t}"
        )));
    }
    Ok(params.eval_unchecked(t))
}

/// Trial onsets/durations (seconds) on a scan grid of `horizon` scans spaced
/// `delta` seconds apart. `weights` carries the boxcar height per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusDesign {
    pub onsets: Vec<f64>,
    pub durations: Vec<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub horizon: usize,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl StimulusDesign {
    pub fn new(onsets: Vec<f64>, durations: Vec<f64>, delta: f64, horizon: usize) -> Result<Self> {
        let design = Self {
            onsets,
            durations,
            weights: None,
            delta,
            horizon,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.onsets.len() != self.durations.len() {
            return Err(Error::InvalidParameter(
                "onsets and durations must have equal length".into(),
            ));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.onsets.len() || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "weights must be finite and match the trial count".into(),
                ));
            }
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter("scan interval must be positive".into()));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidParameter("horizon must be at least 2 scans".into()));
        }
        if self.onsets.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("onsets must be nondecreasing".into()));
        }
        if self.onsets.iter().any(|o| !o.is_finite() || *o < 0.0) {
            return Err(Error::InvalidParameter("onsets must be finite and nonnegative".into()));
        }
        if self.durations.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter("durations must be positive".into()));
        }
        let needed = self
            .onsets
            .iter()
            .zip(&self.durations)
            .map(|(o, d)| o + d)
            .fold(0.0, f64::max);
        let available = self.delta * self.horizon as f64;
        if needed > available + 1e-9 {
            return Err(Error::HorizonOverflow { needed, available });
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.onsets.len()
    }

    /// Boxcar stimulus averaged over each scan bin `[uΔ, (u+1)Δ)`.
    pub fn boxcar(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.horizon];
        for (k, (&onset, &dur)) in self.onsets.iter().zip(&self.durations).enumerate() {
            let w = self.weights.as_ref().map_or(1.0, |w| w[k]);
            let end = onset + dur;
            let first = (onset / self.delta).floor() as usize;
            for (u, slot) in s.iter_mut().enumerate().skip(first) {
                let lo = u as f64 * self.delta;
                let hi = lo + self.delta;
                if lo >= end {
                    break;
                }
                let overlap = hi.min(end) - lo.max(onset);
                if overlap > 0.0 {
                    *slot += w * overlap / self.delta;
                }
            }
        }
        s
    }
}

/// Alternating condition blocks: `blocks` cycles of an interference block
/// (height +1) followed by a neutral block (height -1), each holding
/// `trials_per_block` back-to-back trials.
pub fn block_design(
    blocks: usize,
    trials_per_block: usize,
    trial_duration: f64,
    delta: f64,
    horizon: usize,
) -> Result<StimulusDesign> {
    if blocks == 0 || trials_per_block == 0 {
        return Err(Error::InvalidParameter("block counts must be at least 1".into()));
    }
    if !(trial_duration > 0.0) {
        return Err(Error::InvalidParameter("trial duration must be positive".into()));
    }
    let n = 2 * blocks * trials_per_block;
    let onsets: Vec<f64> = (0..n).map(|k| k as f64 * trial_duration).collect();
    let durations = vec![trial_duration; n];
    let weights = (0..n)
        .map(|k| if (k / trials_per_block).is_multiple_of(2) { 1.0 } else { -1.0 })
        .collect();
    StimulusDesign::new(onsets, durations, delta, horizon)?.with_weights(weights)
}

fn convolve_values(s: &[f64], params: &HrfParams, delta: f64) -> Vec<f64> {
    let kernel: Vec<f64> = (0..s.len())
        .map(|k| params.eval_unchecked(k as f64 * delta) * delta)
        .collect();
    (0..s.len())
        .map(|t| (0..=t).map(|u| s[u] * kernel[t - u]).sum())
        .collect()
}

/// `x(t) = Σ_u s(u) h(t-u) Δ` on the scan grid.
pub fn convolve_stimulus(design: &StimulusDesign, params: &HrfParams) -> Result<Vec<f64>> {
    design.validate()?;
    params.validate()?;
    Ok(convolve_values(&design.boxcar(), params, design.delta))
}

/// Convolution of an arbitrary per-scan stimulus sequence.
pub fn convolve_sequence(stimulus: &[f64], params: &HrfParams, delta: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("scan interval must be positive".into()));
    }
    Ok(convolve_values(stimulus, params, delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    /// Cycles per scan.
    pub omega_hat: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub residual_variance: f64,
}

impl SinusoidFit {
    /// Smoothed value at scan `t` (1-based, matching the fit).
    pub fn evaluate(&self, t: f64) -> f64 {
        let arg = 2.0 * PI * self.omega_hat * t;
        self.beta1 * arg.cos() + self.beta2 * arg.sin()
    }

    /// The smoother on scans `1..=len`.
    pub fn fitted(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|t| self.evaluate(t as f64)).collect()
    }
}

/// Fourier frequencies `j/T`, `j = 1..⌊T/2⌋`, excluding the Nyquist point.
pub fn fourier_grid(len: usize) -> Vec<f64> {
    (1..=len / 2)
        .map(|j| j as f64 / len as f64)
        .filter(|w| *w < 0.5)
        .collect()
}

/// Raw periodogram `|Σ_t (x_t - x̄) e^{-2πiωt}|² / T` with `t = 1..T`.
pub fn periodogram(x: &[f64], omega: f64) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let arg = 2.0 * PI * omega * (k + 1) as f64;
        re += (v - mean) * arg.cos();
        im -= (v - mean) * arg.sin();
    }
    (re * re + im * im) / n
}

/// Periodogram-maximizing frequency followed by a least-squares fit of the
/// cosine/sine pair at that frequency. An empty grid means the Fourier grid.
pub fn fit_sinusoid(x: &[f64], frequency_grid: &[f64]) -> Result<SinusoidFit> {
    if x.len() < 8 {
        return Err(Error::InvalidParameter(format!(
            "sinusoid fit needs at least 8 points, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("series contains non-finite values".into()));
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    if hi - lo == 0.0 {
        return Err(Error::DegenerateSeries("series is constant".into()));
    }

    let mut grid = if frequency_grid.is_empty() {
        fourier_grid(x.len())
    } else {
        frequency_grid.to_vec()
    };
    if grid.iter().any(|w| !(*w > 0.0 && *w < 0.5)) {
        return Err(Error::InvalidParameter(
            "grid frequencies must lie in (0, 0.5)".into(),
        ));
    }
    grid.sort_by(f64::total_cmp);

    let mut best = (grid[0], f64::NEG_INFINITY);
    for &w in &grid {
        let p = periodogram(x, w);
        if p > best.1 {
            best = (w, p);
        }
    }
    let omega = best.0;

    // 2x2 normal equations for (b1, b2).
    let (mut cc, mut cs, mut ss, mut cx, mut sx) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let arg = 2.0 * PI * omega * (k + 1) as f64;
        let (c, s) = (arg.cos(), arg.sin());
        cc += c * c;
        cs += c * s;
        ss += s * s;
        cx += c * v;
        sx += s * v;
    }
    let det = cc * ss - cs * cs;
    if det.abs() < 1e-12 * (cc * ss).max(1e-300) {
        return Err(Error::DegenerateSeries(format!(
            "cosine/sine regressors are collinear at ω = {omega}"
        )));
    }
    let beta1 = (ss * cx - cs * sx) / det;
    let beta2 = (cc * sx - cs * cx) / det;

    let mut fit = SinusoidFit {
        omega_hat: omega,
        beta1,
        beta2,
        amplitude: beta1.hypot(beta2),
        phase: beta2.atan2(beta1),
        residual_variance: 0.0,
    };
    // atan2 returns -π for (-x, -0.0); fold onto the half-open range (-π, π].
    if fit.phase <= -PI {
        fit.phase += 2.0 * PI;
    }
    let rss: f64 = x
        .iter()
        .enumerate()
        .map(|(k, v)| (v - fit.evaluate((k + 1) as f64)).powi(2))
        .sum();
    fit.residual_variance = rss / (x.len() - 2) as f64;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hrf_vanishes_at_zero() {
        assert_eq!(glover_hrf(&HrfParams::default(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn hrf_peaks_near_first_lobe() {
        // 1 ms grid over [0, 30] s.
        let p = HrfParams::default();
        let (mut arg, mut best) = (0.0, f64::NEG_INFINITY);
        for k in 0..=30_000 {
            let t = k as f64 * 1e-3;
            let v = glover_hrf(&p, t).unwrap();
            if v > best {
                best = v;
                arg = t;
            }
        }
        // The rising undershoot lobe pulls the peak slightly below d1 = 5.4.
        assert!(arg < 5.4 && arg > 5.2, "argmax at {arg}");
    }

    #[test]
    fn hrf_without_undershoot_is_nonnegative() {
        let p = HrfParams { c: 0.0, ..HrfParams::default() };
        for k in 0..600 {
            assert!(glover_hrf(&p, k as f64 * 0.05).unwrap() >= 0.0);
        }
    }

    #[test]
    fn hrf_rejects_bad_params() {
        let p = HrfParams { a1: f64::NAN, ..HrfParams::default() };
        assert!(matches!(glover_hrf(&p, 1.0), Err(Error::InvalidParameter(_))));
        let p = HrfParams { c: 1.0, ..HrfParams::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn block_design_counts_trials() {
        let d = block_design(6, 18, 2.0, 2.0, 216).unwrap();
        assert_eq!(d.trial_count(), 216);
        let end = d.onsets.last().unwrap() + d.durations.last().unwrap();
        assert!((end - 432.0).abs() < 1e-12);
        let s = d.boxcar();
        assert_eq!(s[0], 1.0);
        assert_eq!(s[18], -1.0);
    }

    #[test]
    fn single_block_single_trial_is_one_pulse() {
        let d = block_design(1, 1, 2.0, 1.0, 10).unwrap();
        let s = d.boxcar();
        assert_eq!(&s[..4], &[1.0, 1.0, -1.0, -1.0]);
        assert!(s[4..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn design_overflowing_horizon_is_rejected() {
        let err = block_design(6, 18, 2.0, 2.0, 100).unwrap_err();
        assert!(matches!(err, Error::HorizonOverflow { .. }));
    }

    #[test]
    fn zero_stimulus_gives_zero_regressor() {
        let x = convolve_sequence(&[0.0; 50], &HrfParams::default(), 2.0).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let p = HrfParams::default();
        let mut s = vec![0.0; 40];
        s[0] = 1.0;
        let x = convolve_sequence(&s, &p, 1.5).unwrap();
        for (t, v) in x.iter().enumerate() {
            let h = glover_hrf(&p, t as f64 * 1.5).unwrap() * 1.5;
            assert!((v - h).abs() < 1e-15);
        }
    }

    #[test]
    fn superposition_holds() {
        let p = HrfParams::default();
        let a = StimulusDesign::new(vec![0.0, 30.0], vec![10.0, 5.0], 2.0, 60).unwrap();
        let b = StimulusDesign::new(vec![12.0, 50.0], vec![3.0, 20.0], 2.0, 60).unwrap();
        let both = StimulusDesign::new(
            vec![0.0, 12.0, 30.0, 50.0],
            vec![10.0, 3.0, 5.0, 20.0],
            2.0,
            60,
        )
        .unwrap();
        let xa = convolve_stimulus(&a, &p).unwrap();
        let xb = convolve_stimulus(&b, &p).unwrap();
        let xab = convolve_stimulus(&both, &p).unwrap();
        for t in 0..60 {
            assert!((xa[t] + xb[t] - xab[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn splitting_a_trial_is_additive() {
        let p = HrfParams::default();
        let whole = StimulusDesign::new(vec![3.3], vec![17.1], 2.0, 40).unwrap();
        let split = StimulusDesign::new(vec![3.3, 9.0, 14.2], vec![5.7, 5.2, 6.2], 2.0, 40).unwrap();
        let x1 = convolve_stimulus(&whole, &p).unwrap();
        let x2 = convolve_stimulus(&split, &p).unwrap();
        for (a, b) in x1.iter().zip(&x2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_cosine_is_recovered() {
        let x: Vec<f64> = (1..=200).map(|t| (2.0 * PI * 0.05 * t as f64).cos()).collect();
        let fit = fit_sinusoid(&x, &[]).unwrap();
        assert!((fit.omega_hat - 0.05).abs() < 1e-12);
        assert!((fit.beta1 - 1.0).abs() < 1e-6);
        assert!(fit.beta2.abs() < 1e-6);
        assert!((fit.amplitude - 1.0).abs() < 1e-6);
        assert!(fit.residual_variance < 1e-20);
    }

    #[test]
    fn phase_convention_uses_atan2() {
        let (b1, b2) = (0.3, -0.4);
        let x: Vec<f64> = (1..=100)
            .map(|t| {
                let a = 2.0 * PI * 0.1 * t as f64;
                b1 * a.cos() + b2 * a.sin()
            })
            .collect();
        let fit = fit_sinusoid(&x, &[]).unwrap();
        assert!((fit.phase - b2.atan2(b1)).abs() < 1e-9);
        assert!((fit.amplitude - 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(
            fit_sinusoid(&[2.0; 20], &[]),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn short_series_and_bad_grid_rejected() {
        assert!(fit_sinusoid(&[1.0, 2.0, 3.0], &[]).is_err());
        let x: Vec<f64> = (0..20).map(|t| t as f64).collect();
        assert!(fit_sinusoid(&x, &[0.6]).is_err());
    }
}
