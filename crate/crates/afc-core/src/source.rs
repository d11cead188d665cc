//! The double-pulse-pumped pair source: an analytic imperfect two-qubit
//! state and a seeded generator of per-cycle pair emissions.
//!
//! Imperfections are captured by four knobs: a white-noise fraction, a
//! Gaussian pump-phase jitter that damps the `ee`–`ll` coherence, a
//! late/early intensity imbalance, and a finite extinction ratio that
//! leaks weight into `|el⟩` and `|le⟩`.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};

use crate::fit::{levenberg_marquardt, LmOptions};
use crate::linalg::{CMat4, C64};
use crate::quantum::{bell_psi_plus, fidelity, purity, TimeBinKet, TwoQubitKet, TwoQubitState};
use crate::rng::{derive_seed, rng_from_seed};
use crate::Error;

/// Pump pulse train parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PumpConfig {
    pub period_ns: f64,
    pub pulse_interval_ns: f64,
    pub pulse_width_fwhm_ps: f64,
    pub extinction_ratio_db: f64,
    /// Late/early pair-generation probability ratio.
    pub intensity_imbalance: f64,
    /// Standard deviation of the per-shot phase between the two pulses, rad.
    pub phase_jitter_sigma: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        PumpConfig {
            period_ns: 16.0,
            pulse_interval_ns: 1.25,
            pulse_width_fwhm_ps: 300.0,
            extinction_ratio_db: 30.0,
            intensity_imbalance: 1.0,
            phase_jitter_sigma: 0.0,
        }
    }
}

impl PumpConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: String::from(reason),
            })
        };
        if !(self.period_ns > 0.0) {
            return bad("pump.period_ns", "must be positive");
        }
        if !(self.pulse_interval_ns > 0.0 && self.pulse_interval_ns < self.period_ns) {
            return bad("pump.pulse_interval_ns", "must be positive and shorter than the period");
        }
        if !(self.pulse_width_fwhm_ps > 0.0 && self.pulse_width_fwhm_ps < 1e3 * self.pulse_interval_ns) {
            return bad("pump.pulse_width_fwhm_ps", "must be positive and shorter than the pulse interval");
        }
        if !(self.extinction_ratio_db > 0.0) {
            return bad("pump.extinction_ratio_db", "must be positive");
        }
        if !(self.intensity_imbalance > 0.0 && self.intensity_imbalance.is_finite()) {
            return bad("pump.intensity_imbalance", "must be positive");
        }
        if !(self.phase_jitter_sigma >= 0.0 && self.phase_jitter_sigma.is_finite()) {
            return bad("pump.phase_jitter_sigma", "must be nonnegative");
        }
        Ok(())
    }

    /// Relative weight of each of `|el⟩`, `|le⟩` from finite extinction.
    pub fn leakage_weight(&self) -> f64 {
        10.0.powf(-self.extinction_ratio_db / 10.0)
    }

    /// Gaussian timing spread of one pump pulse, ps.
    pub fn pulse_sigma_ps(&self) -> f64 {
        self.pulse_width_fwhm_ps / (2.0 * (2.0 * 2.0.ln()).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SourceModel {
    pub pump: PumpConfig,
    /// Probability of at least one pair per pump cycle over the full band.
    pub pair_emission_probability_per_cycle: f64,
    pub white_noise_fraction: f64,
    pub signal_center_wavelength_nm: f64,
    pub idler_center_wavelength_nm: f64,
    pub pair_bandwidth_ghz: f64,
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel {
            pump: PumpConfig::default(),
            pair_emission_probability_per_cycle: 0.01,
            white_noise_fraction: 0.0,
            signal_center_wavelength_nm: 1531.93,
            idler_center_wavelength_nm: 1549.37,
            pair_bandwidth_ghz: 100.0,
        }
    }
}

impl SourceModel {
    /// A source with no imperfections.
    pub fn ideal() -> Self {
        SourceModel {
            pump: PumpConfig {
                extinction_ratio_db: f64::INFINITY,
                ..PumpConfig::default()
            },
            ..SourceModel::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.pump.validate()?;
        let p = self.pair_emission_probability_per_cycle;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "pair_emission_probability_per_cycle",
                reason: String::from("must lie in [0, 1)"),
            });
        }
        if !(0.0..=1.0).contains(&self.white_noise_fraction) {
            return Err(Error::InvalidParameter {
                name: "white_noise_fraction",
                reason: String::from("must lie in [0, 1]"),
            });
        }
        if !(self.pair_bandwidth_ghz > 0.0) {
            return Err(Error::InvalidParameter {
                name: "pair_bandwidth_ghz",
                reason: String::from("must be positive"),
            });
        }
        Ok(())
    }

    /// Early/late amplitudes of the coherent part, `(a, b)` with `a²+b²=1`.
    fn coherent_amplitudes(&self) -> (f64, f64) {
        let r = self.pump.intensity_imbalance;
        ((1.0 / (1.0 + r)).sqrt(), (r / (1.0 + r)).sqrt())
    }

    /// Per-cycle probability of at least one pair whose signal lands inside
    /// `windows`. Thinning the geometric pair-number law by the band
    /// fraction `q` gives another geometric law with `p' = pq/(1-p+pq)`.
    pub fn window_probability(&self, windows: &[SpectralWindow]) -> f64 {
        let q = (windows.iter().map(|w| w.width()).sum::<f64>() / self.pair_bandwidth_ghz).clamp(0.0, 1.0);
        let p = self.pair_emission_probability_per_cycle;
        if p == 0.0 || q == 0.0 {
            return 0.0;
        }
        p * q / (1.0 - p + p * q)
    }

    pub fn full_band(&self) -> SpectralWindow {
        SpectralWindow {
            lo_ghz: -0.5 * self.pair_bandwidth_ghz,
            hi_ghz: 0.5 * self.pair_bandwidth_ghz,
        }
    }
}

/// The imperfect pair state:
/// `ρ = (1-w)·ρ_coh + w·I/4` where `ρ_coh` has populations
/// `(a², ε, ε, b²)/(1+2ε)` and coherence `ab·e^{-σ²/2}/(1+2ε)`.
pub fn analytic_state(model: &SourceModel) -> Result<TwoQubitState, Error> {
    model.validate()?;
    let (a, b) = model.coherent_amplitudes();
    let eps = model.pump.leakage_weight();
    let norm = 1.0 + 2.0 * eps;
    let damping = (-0.5 * model.pump.phase_jitter_sigma * model.pump.phase_jitter_sigma).exp();
    let mut m = CMat4::diag([a * a / norm, eps / norm, eps / norm, b * b / norm]);
    let coherence = C64::new(a * b * damping / norm, 0.0);
    m.0[0][3] = coherence;
    m.0[3][0] = coherence;
    let coherent = TwoQubitState::from_trusted(m);
    coherent.mix(&TwoQubitState::maximally_mixed(), model.white_noise_fraction)
}

/// Solves for `(white_noise_fraction, phase_jitter_sigma)` such that the
/// analytic state reaches the requested fidelity to `|Ψ⁺⟩` and purity,
/// keeping every other parameter of `base`.
pub fn calibrate_noise_and_jitter(
    base: &SourceModel,
    target_fidelity: f64,
    target_purity: f64,
) -> Result<SourceModel, Error> {
    let target = bell_psi_plus().projector();
    let build = |p: &[f64]| {
        let mut m = base.clone();
        // Squares keep both knobs nonnegative during the search.
        m.white_noise_fraction = (p[0] * p[0]).min(1.0);
        m.pump.phase_jitter_sigma = p[1].abs();
        m
    };
    let fit = levenberg_marquardt(
        &[0.3, 0.3],
        2,
        |p, out| {
            let st = analytic_state(&build(p));
            match st {
                Ok(st) => {
                    out[0] = fidelity(&st, &target).unwrap_or(f64::NAN) - target_fidelity;
                    out[1] = purity(&st).unwrap_or(f64::NAN) - target_purity;
                }
                Err(_) => out.fill(f64::NAN),
            }
        },
        &LmOptions::default(),
    )?;
    if fit.cost > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "calibration target",
            reason: alloc::format!("not reachable (residual cost {:e})", fit.cost),
        });
    }
    Ok(build(&fit.params))
}

/// A contiguous range of signal-frequency offsets, GHz.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralWindow {
    pub lo_ghz: f64,
    pub hi_ghz: f64,
}

impl SpectralWindow {
    pub fn centered(center_ghz: f64, width_ghz: f64) -> Self {
        SpectralWindow {
            lo_ghz: center_ghz - 0.5 * width_ghz,
            hi_ghz: center_ghz + 0.5 * width_ghz,
        }
    }

    pub fn width(&self) -> f64 {
        (self.hi_ghz - self.lo_ghz).max(0.0)
    }

    pub fn contains(&self, offset_ghz: f64) -> bool {
        offset_ghz >= self.lo_ghz && offset_ghz <= self.hi_ghz
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TimeBin {
    Early,
    Late,
}

impl TimeBin {
    pub fn ket(self) -> TimeBinKet {
        match self {
            TimeBin::Early => TimeBinKet::early(),
            TimeBin::Late => TimeBinKet::late(),
        }
    }
}

/// Temporal content of one emitted pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemporalMode {
    /// `a|ee⟩ + b·e^{iθ}|ll⟩`, with θ carried by the record's `pair_phase`.
    Coherent { early: f64, late: f64 },
    /// Each photon in a definite, independent bin.
    Split { idler: TimeBin, signal: TimeBin },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmissionRecord {
    pub cycle_index: u64,
    pub temporal_mode: TemporalMode,
    /// Signal offset from the signal center; the idler sits at the negative.
    pub signal_frequency_offset_ghz: f64,
    pub pair_phase: f64,
}

impl EmissionRecord {
    /// The pure two-photon state carried by this emission.
    pub fn ket(&self) -> TwoQubitKet {
        match self.temporal_mode {
            TemporalMode::Coherent { early, late } => {
                let amps = [
                    C64::new(early, 0.0),
                    C64::new(0.0, 0.0),
                    C64::new(0.0, 0.0),
                    C64::from_polar(late, self.pair_phase),
                ];
                TwoQubitKet::new(amps).unwrap_or_else(|_| bell_psi_plus())
            }
            TemporalMode::Split { idler, signal } => TwoQubitKet::product(&idler.ket(), &signal.ket()),
        }
    }

    pub fn idler_frequency_offset_ghz(&self) -> f64 {
        -self.signal_frequency_offset_ghz
    }
}

/// Emissions over the full pair band for cycles `0..n_cycles`.
pub fn sample_emissions(model: &SourceModel, n_cycles: u64, seed: u64) -> Result<Vec<EmissionRecord>, Error> {
    sample_emissions_in_windows(model, &[model.full_band()], n_cycles, seed)
}

/// Emissions whose signal offset falls in `windows` (disjoint, inside the
/// pair band), sorted by cycle. Each window is an independent spectral
/// mode group: its pair number per cycle is geometric with the thinned
/// parameter of [`SourceModel::window_probability`].
pub fn sample_emissions_in_windows(
    model: &SourceModel,
    windows: &[SpectralWindow],
    n_cycles: u64,
    seed: u64,
) -> Result<Vec<EmissionRecord>, Error> {
    model.validate()?;
    if n_cycles == 0 {
        return Err(Error::InvalidParameter {
            name: "n_cycles",
            reason: String::from("must be at least 1"),
        });
    }
    let band = model.full_band();
    for w in windows {
        if w.lo_ghz < band.lo_ghz - 1e-9 || w.hi_ghz > band.hi_ghz + 1e-9 {
            return Err(Error::OutsidePairBand {
                offset_ghz: if w.lo_ghz < band.lo_ghz { w.lo_ghz } else { w.hi_ghz },
            });
        }
    }
    let mut out = Vec::new();
    for (k, w) in windows.iter().enumerate() {
        let seed_k = if windows.len() == 1 { seed } else { derive_seed(seed, k as u64) };
        sample_window(model, core::slice::from_ref(w), n_cycles, seed_k, &mut out)?;
    }
    if windows.len() > 1 {
        out.sort_by_key(|e| e.cycle_index);
    }
    Ok(out)
}

fn sample_window(
    model: &SourceModel,
    windows: &[SpectralWindow],
    n_cycles: u64,
    seed: u64,
    out: &mut Vec<EmissionRecord>,
) -> Result<(), Error> {
    let p = model.window_probability(windows);
    if p <= 0.0 {
        return Ok(());
    }
    let mut rng = rng_from_seed(seed);
    let gap = Geometric::new(p).map_err(|_| Error::InvalidParameter {
        name: "pair probability",
        reason: String::from("geometric law rejected the value"),
    })?;
    let extra = if p < 1.0 {
        Geometric::new(1.0 - p).ok()
    } else {
        None
    };
    let jitter = Normal::new(0.0, model.pump.phase_jitter_sigma.max(0.0)).map_err(|_| Error::InvalidParameter {
        name: "pump.phase_jitter_sigma",
        reason: String::from("invalid"),
    })?;
    let total_width: f64 = windows.iter().map(|w| w.width()).sum();
    let (a, b) = model.coherent_amplitudes();
    let eps = model.pump.leakage_weight();
    let leak = 2.0 * eps / (1.0 + 2.0 * eps);
    let w = model.white_noise_fraction;

    let mut cycle: u64 = 0;
    loop {
        let skip = gap.sample(&mut rng);
        cycle = match cycle.checked_add(skip) {
            Some(c) => c,
            None => break,
        };
        if cycle >= n_cycles {
            break;
        }
        let n_pairs = 1 + extra.as_ref().map_or(0, |g| g.sample(&mut rng));
        for _ in 0..n_pairs {
            let mut x = rng.random::<f64>() * total_width;
            let mut offset = windows[0].lo_ghz;
            for win in windows {
                if x <= win.width() {
                    offset = win.lo_ghz + x;
                    break;
                }
                x -= win.width();
            }
            let u: f64 = rng.random();
            let temporal_mode = if u < w {
                TemporalMode::Split {
                    idler: if rng.random::<bool>() { TimeBin::Early } else { TimeBin::Late },
                    signal: if rng.random::<bool>() { TimeBin::Early } else { TimeBin::Late },
                }
            } else if rng.random::<f64>() < leak {
                if rng.random::<bool>() {
                    TemporalMode::Split {
                        idler: TimeBin::Early,
                        signal: TimeBin::Late,
                    }
                } else {
                    TemporalMode::Split {
                        idler: TimeBin::Late,
                        signal: TimeBin::Early,
                    }
                }
            } else {
                TemporalMode::Coherent { early: a, late: b }
            };
            let pair_phase = if model.pump.phase_jitter_sigma > 0.0 {
                jitter.sample(&mut rng)
            } else {
                0.0
            };
            out.push(EmissionRecord {
                cycle_index: cycle,
                temporal_mode,
                signal_frequency_offset_ghz: offset,
                pair_phase,
            });
        }
        cycle += 1;
    }
    Ok(())
}
