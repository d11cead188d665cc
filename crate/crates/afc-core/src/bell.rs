//! Franson fringes, correlation coefficients and the CHSH statistic, with
//! Poisson bootstrap error bars.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand_distr::{Distribution, Poisson};

#[allow(unused_imports)]
use num_traits::Float;

use crate::analyzer::project_pair;
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::quantum::TwoQubitState;
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::Error;

/// Port combinations in the order used throughout: `A1B1, A1B2, A2B1, A2B2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PortCombo {
    A1B1,
    A1B2,
    A2B1,
    A2B2,
}

impl PortCombo {
    pub const ALL: [PortCombo; 4] = [PortCombo::A1B1, PortCombo::A1B2, PortCombo::A2B1, PortCombo::A2B2];

    pub fn index(self) -> usize {
        self as usize
    }

    /// `(-1)^{i+j}`
    pub fn sign(self) -> f64 {
        match self {
            PortCombo::A1B1 | PortCombo::A2B2 => 1.0,
            PortCombo::A1B2 | PortCombo::A2B1 => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PortCombo::A1B1 => "A1B1",
            PortCombo::A1B2 => "A1B2",
            PortCombo::A2B1 => "A2B1",
            PortCombo::A2B2 => "A2B2",
        }
    }
}

/// CHSH settings `(α, α′, β, β′)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ChshSettings {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub beta_prime: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        ChshSettings {
            alpha: 0.0,
            alpha_prime: FRAC_PI_2,
            beta: FRAC_PI_4,
            beta_prime: -FRAC_PI_4,
        }
    }
}

impl ChshSettings {
    /// The four `(α, β)` pairs in the order `(α,β), (α′,β), (α,β′), (α′,β′)`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.alpha, self.beta),
            (self.alpha_prime, self.beta),
            (self.alpha, self.beta_prime),
            (self.alpha_prime, self.beta_prime),
        ]
    }
}

/// `E = (C11 − C12 − C21 + C22) / (C11 + C12 + C21 + C22)`.
pub fn correlation_e(counts: [f64; 4]) -> Result<f64, Error> {
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoCounts("correlation needs a positive total count"));
    }
    Ok((counts[0] - counts[1] - counts[2] + counts[3]) / total)
}

pub fn correlation_e_counts(counts: [u64; 4]) -> Result<f64, Error> {
    correlation_e(counts.map(|c| c as f64))
}

/// `S = |E(α,β) − E(α′,β) + E(α,β′) + E(α′,β′)|`, inputs in
/// [`ChshSettings::pairs`] order.
pub fn chsh_s(e: [f64; 4]) -> f64 {
    (e[0] - e[1] + e[2] + e[3]).abs()
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChshResult {
    pub s: f64,
    pub sigma_s: f64,
    pub settings: ChshSettings,
    pub e_values: [f64; 4],
    pub e_sigmas: [f64; 4],
}

impl ChshResult {
    pub fn violation_sigmas(&self) -> Result<f64, Error> {
        bell_violation_sigmas(self.s, self.sigma_s)
    }
}

/// `(S − 2)/σ_S`.
pub fn bell_violation_sigmas(s: f64, sigma_s: f64) -> Result<f64, Error> {
    if !(sigma_s > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma_s",
            reason: String::from("must be positive"),
        });
    }
    Ok((s - 2.0) / sigma_s)
}

/// Correlation coefficient predicted for `rho` from the middle-middle
/// outcome probabilities.
pub fn analytic_correlation(rho: &TwoQubitState, alpha: f64, beta: f64) -> Result<f64, Error> {
    correlation_e(project_pair(rho, alpha, beta).middle_ports())
}

pub fn analytic_chsh(rho: &TwoQubitState, settings: &ChshSettings) -> Result<f64, Error> {
    let mut e = [0.0; 4];
    for (k, (a, b)) in settings.pairs().into_iter().enumerate() {
        e[k] = analytic_correlation(rho, a, b)?;
    }
    Ok(chsh_s(e))
}

fn poisson_resample(counts: &[u64], rng: &mut SimRng, out: &mut [u64]) {
    for (o, &c) in out.iter_mut().zip(counts) {
        *o = if c == 0 {
            0
        } else {
            // Mean is a positive finite count, so construction cannot fail.
            Poisson::new(c as f64).map(|p| p.sample(rng) as u64).unwrap_or(c)
        };
    }
}

/// Poisson parametric bootstrap: every count is redrawn with mean equal to
/// its observed value, `statistic` is recomputed per trial, and the sample
/// standard deviation of each output component is returned. Trials whose
/// statistic fails are skipped; at least two must succeed.
pub fn monte_carlo_errors(
    counts: &[u64],
    n_trials: usize,
    seed: u64,
    statistic: impl Fn(&[u64]) -> Result<Vec<f64>, Error>,
) -> Result<Vec<f64>, Error> {
    if n_trials < 2 {
        return Err(Error::InvalidParameter {
            name: "n_trials",
            reason: String::from("need at least two trials"),
        });
    }
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n_trials);
    let mut buf = vec![0u64; counts.len()];
    for t in 0..n_trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        poisson_resample(counts, &mut rng, &mut buf);
        if let Ok(v) = statistic(&buf) {
            samples.push(v);
        }
    }
    if counts.iter().all(|&c| c == 0) {
        let width = samples.first().map_or(0, Vec::len);
        return Ok(vec![0.0; width]);
    }
    sample_std(&samples)
}

/// Component-wise sample standard deviation.
pub fn sample_std(samples: &[Vec<f64>]) -> Result<Vec<f64>, Error> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(String::from("fewer than two successful bootstrap trials")));
    }
    let width = samples[0].len();
    let n = samples.len() as f64;
    let mut out = vec![0.0; width];
    for (k, o) in out.iter_mut().enumerate() {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        *o = var.sqrt();
    }
    Ok(out)
}

/// CHSH from fixed-setting counts; `counts[k]` holds the four port
/// combinations for setting pair `k` of [`ChshSettings::pairs`].
pub fn chsh_from_counts(
    counts: &[[u64; 4]; 4],
    settings: ChshSettings,
    n_trials: usize,
    seed: u64,
) -> Result<ChshResult, Error> {
    let stat = |flat: &[u64]| -> Result<Vec<f64>, Error> {
        let mut e = [0.0; 4];
        for k in 0..4 {
            e[k] = correlation_e_counts([flat[4 * k], flat[4 * k + 1], flat[4 * k + 2], flat[4 * k + 3]])?;
        }
        Ok(vec![e[0], e[1], e[2], e[3], chsh_s(e)])
    };
    let flat: Vec<u64> = counts.iter().flatten().copied().collect();
    let point = stat(&flat)?;
    let sig = monte_carlo_errors(&flat, n_trials, seed, stat)?;
    Ok(ChshResult {
        s: point[4],
        sigma_s: sig[4],
        settings,
        e_values: [point[0], point[1], point[2], point[3]],
        e_sigmas: [sig[0], sig[1], sig[2], sig[3]],
    })
}

/// Three-fold counts versus the signal phase at a fixed idler phase.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FringeScan {
    pub alpha: f64,
    pub beta_values: Vec<f64>,
    /// `counts[k]` are the four port combinations at `beta_values[k]`.
    pub counts: Vec<[u64; 4]>,
    pub integration_time_per_point_s: f64,
}

impl FringeScan {
    pub fn validate(&self) -> Result<(), Error> {
        if self.beta_values.len() != self.counts.len() {
            return Err(Error::InvalidParameter {
                name: "fringe scan",
                reason: String::from("beta_values and counts differ in length"),
            });
        }
        let mut betas = self.beta_values.clone();
        betas.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        betas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if betas.len() < 5 {
            return Err(Error::InsufficientData(String::from("need at least 5 distinct beta values")));
        }
        if betas[betas.len() - 1] - betas[0] < PI - 1e-9 {
            return Err(Error::InsufficientData(String::from("beta values must span at least pi")));
        }
        Ok(())
    }

    pub fn combo_counts(&self, combo: PortCombo) -> Vec<u64> {
        self.counts.iter().map(|c| c[combo.index()]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VisibilityFit {
    pub visibility: f64,
    pub phase_offset: f64,
    pub amplitude: f64,
    pub sigma_visibility: f64,
}

/// `A·(1 + sign·V·cos(x + φ₀))`
pub fn fringe_model(amplitude: f64, visibility: f64, phase_offset: f64, sign: f64, x: f64) -> f64 {
    amplitude * (1.0 + sign * visibility * (x + phase_offset).cos())
}

fn wrap_phase(x: f64) -> f64 {
    let y = num_traits::Euclid::rem_euclid(&(x + PI), &(2.0 * PI)) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Least-squares fit of `A·(1 + sign·V·cos(x + φ₀))` to `(x, n)` points.
/// Returns `(A, V, φ₀)` with `V` folded into `[0, 1]`.
pub fn fit_fringe(xs: &[f64], counts: &[f64], sign: f64) -> Result<(f64, f64, f64), Error> {
    let n = xs.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::NoCounts("fringe has no counts"));
    }
    // First Fourier component at the known period.
    let c1 = 2.0 / n * xs.iter().zip(counts).map(|(x, c)| c * x.cos()).sum::<f64>();
    let s1 = 2.0 / n * xs.iter().zip(counts).map(|(x, c)| c * x.sin()).sum::<f64>();
    let v0 = ((c1 * c1 + s1 * s1).sqrt() / mean).min(1.0);
    let phi0 = (-s1 * sign).atan2(c1 * sign);
    let fit = levenberg_marquardt(
        &[mean, v0, phi0],
        xs.len(),
        |p, out| {
            for (k, (x, c)) in xs.iter().zip(counts).enumerate() {
                out[k] = fringe_model(p[0], p[1], p[2], sign, *x) - c;
            }
        },
        &LmOptions::default(),
    )?;
    let (a, mut v, mut phi) = (fit.params[0], fit.params[1], fit.params[2]);
    if !(a.is_finite() && v.is_finite() && phi.is_finite()) {
        return Err(Error::FitDiverged {
            iterations: fit.iterations,
        });
    }
    if v < 0.0 {
        v = -v;
        phi += PI;
    }
    Ok((a, v.min(1.0), wrap_phase(phi)))
}

/// Fits one port combination of a scan and bootstraps `σ_V`.
pub fn fit_visibility(scan: &FringeScan, combo: PortCombo, n_trials: usize, seed: u64) -> Result<VisibilityFit, Error> {
    scan.validate()?;
    let xs: Vec<f64> = scan.beta_values.iter().map(|b| scan.alpha + b).collect();
    let raw = scan.combo_counts(combo);
    let to_f = |c: &[u64]| c.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let (a, v, phi) = fit_fringe(&xs, &to_f(&raw), combo.sign())?;
    let sig = monte_carlo_errors(&raw, n_trials, seed, |c| {
        fit_fringe(&xs, &to_f(c), combo.sign()).map(|(_, v, _)| vec![v])
    })?;
    Ok(VisibilityFit {
        visibility: v,
        phase_offset: phi,
        amplitude: a,
        sigma_visibility: sig[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::bell_psi_plus;
    use core::f64::consts::SQRT_2;

    #[test]
    fn correlation_trivial_cases() {
        assert_eq!(correlation_e([5.0, 0.0, 0.0, 5.0]).unwrap(), 1.0);
        assert_eq!(correlation_e([5.0, 5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!(correlation_e([0.0; 4]).is_err());
    }

    #[test]
    fn correlation_recovers_v_cos() {
        for k in 0..20 {
            let theta = k as f64 * 0.37;
            let v = 0.83;
            let p = 1.0 + v * theta.cos();
            let m = 1.0 - v * theta.cos();
            let e = correlation_e([400.0 * p, 400.0 * m, 400.0 * m, 400.0 * p]).unwrap();
            assert!((e - v * theta.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_plus_reaches_tsirelson() {
        let s = analytic_chsh(&bell_psi_plus().projector(), &ChshSettings::default()).unwrap();
        assert!((s - 2.0 * SQRT_2).abs() < 1e-9);
        assert_eq!(chsh_s([0.0; 4]), 0.0);
    }

    #[test]
    fn werner_chsh_scales_with_v() {
        for v in [0.0, 0.3, 0.7, 0.9, 1.0] {
            let rho = bell_psi_plus()
                .projector()
                .mix(&TwoQubitState::maximally_mixed(), 1.0 - v)
                .unwrap();
            let s = analytic_chsh(&rho, &ChshSettings::default()).unwrap();
            assert!((s - 2.0 * SQRT_2 * v).abs() < 1e-9, "v={v} s={s}");
        }
    }

    #[test]
    fn violation_sigmas_examples() {
        assert!((bell_violation_sigmas(2.549, 0.020).unwrap() - 27.45).abs() < 1e-9);
        assert_eq!(bell_violation_sigmas(2.0, 0.1).unwrap(), 0.0);
        assert!((bell_violation_sigmas(2.0 * SQRT_2, 0.001).unwrap() - 828.427).abs() < 1e-3);
        assert!(bell_violation_sigmas(2.5, 0.0).is_err());
    }

    fn synthetic_scan(v: f64, phi0: f64, scale: f64) -> FringeScan {
        let betas: Vec<f64> = (0..12).map(|k| k as f64 * PI / 6.0).collect();
        let counts = betas
            .iter()
            .map(|b| PortCombo::ALL.map(|c| fringe_model(scale, v, phi0, c.sign(), *b).round() as u64))
            .collect();
        FringeScan {
            alpha: 0.0,
            beta_values: betas,
            counts,
            integration_time_per_point_s: 250.0,
        }
    }

    #[test]
    fn noiseless_fringe_round_trip() {
        let betas: Vec<f64> = (0..12).map(|k| k as f64 * PI / 6.0).collect();
        let counts: Vec<f64> = betas.iter().map(|b| fringe_model(300.0, 0.9, 0.4, -1.0, *b)).collect();
        let (a, v, phi) = fit_fringe(&betas, &counts, -1.0).unwrap();
        assert!((v - 0.9).abs() < 1e-6);
        assert!((a - 300.0).abs() < 1e-6);
        assert!((phi - 0.4).abs() < 1e-6);
    }

    #[test]
    fn visibility_error_scale() {
        let scan = synthetic_scan(0.9, 0.0, 300.0);
        let fit = fit_visibility(&scan, PortCombo::A1B1, 100, 11).unwrap();
        assert!((fit.visibility - 0.9).abs() < 0.01);
        assert!(fit.sigma_visibility > 0.005 && fit.sigma_visibility < 0.025, "{}", fit.sigma_visibility);
    }

    #[test]
    fn scan_needs_span_and_points() {
        let mut scan = synthetic_scan(0.9, 0.0, 300.0);
        scan.beta_values.truncate(4);
        scan.counts.truncate(4);
        assert!(fit_visibility(&scan, PortCombo::A1B1, 10, 1).is_err());
    }

    #[test]
    fn bootstrap_zero_counts_have_zero_spread() {
        let sig = monte_carlo_errors(&[0, 0, 0], 10, 3, |c| Ok(vec![c.iter().sum::<u64>() as f64])).unwrap();
        assert_eq!(sig, vec![0.0]);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let stat = |c: &[u64]| Ok(vec![c[0] as f64]);
        let a = monte_carlo_errors(&[1000], 50, 9, stat).unwrap();
        let b = monte_carlo_errors(&[1000], 50, 9, stat).unwrap();
        assert_eq!(a, b);
        assert!((a[0] - 1000f64.sqrt()).abs() < 10.0);
    }
}
