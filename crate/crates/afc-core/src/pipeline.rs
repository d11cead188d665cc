//! The seeded event chain: pair source → (bypass | AFC memory) → UMZIs →
//! detectors → time-tagged streams, plus the matching first-order
//! analytic prediction of three-fold coincidence rates.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::analyzer::{
    detect, outcome_index, project_ket, project_pair_with, tally_cycles, threefold_counts, ClockFrame,
    CoincidenceConfig, CoincidenceTally, DetectionEvent, DetectorConfig, DetectorId, PhotonArrival, Port, Slot,
    ThreefoldCounts, UmziConfig,
};
use crate::memory::{apply_storage, MemoryBank};
use crate::rng::{derive_seed, rng_from_seed};
use crate::source::{analytic_state, sample_emissions_in_windows, SourceModel, SpectralWindow};
use crate::Error;

/// Fixed optics around the source and analyzers.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OpticalPaths {
    /// Idler filter bandwidth, GHz, centered on the conjugate of the
    /// channel center.
    pub idler_filter_ghz: f64,
    /// Idler transmission from source to detector, excluding the detector.
    pub idler_transmission: f64,
    /// Signal transmission when the memory is bypassed.
    pub bypass_transmission: f64,
    /// Fixed fiber delays from the clock reference to the detectors, ns.
    pub idler_delay_ns: f64,
    pub signal_delay_ns: f64,
}

impl Default for OpticalPaths {
    fn default() -> Self {
        OpticalPaths {
            idler_filter_ghz: 6.2,
            idler_transmission: 0.5,
            bypass_transmission: 0.5,
            idler_delay_ns: 3.0,
            signal_delay_ns: 5.0,
        }
    }
}

impl OpticalPaths {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: String::from(reason),
            })
        };
        if !(self.idler_filter_ghz > 0.0) {
            return bad("optics.idler_filter_ghz", "must be positive");
        }
        if !(self.idler_transmission > 0.0 && self.idler_transmission <= 1.0) {
            return bad("optics.idler_transmission", "must lie in (0, 1]");
        }
        if !(self.bypass_transmission > 0.0 && self.bypass_transmission <= 1.0) {
            return bad("optics.bypass_transmission", "must lie in (0, 1]");
        }
        if !(self.idler_delay_ns >= 0.0 && self.signal_delay_ns >= 0.0) {
            return bad("optics delays", "must be nonnegative");
        }
        Ok(())
    }
}

/// Desk-scale acceleration. When `signal_throughput` is set, the signal arm
/// (memory recall or bypass) is boosted to that end-to-end transmission and
/// the signal-side backgrounds (memory noise, signal dark counts) are
/// boosted by the same factor, which is equivalent to compressing the
/// acquisition time on the signal side.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DeskScale {
    #[cfg_attr(feature = "serde", serde(default))]
    pub signal_throughput: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SignalPath {
    /// Before storage: the signal goes straight to its analyzer.
    Bypass,
    /// After storage: the signal is stored and recalled.
    Stored,
}

impl SignalPath {
    pub fn label(self) -> &'static str {
        match self {
            SignalPath::Bypass => "before",
            SignalPath::Stored => "after",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub source: SourceModel,
    pub bank: MemoryBank,
    /// Phases are overridden per run; delay and splitting ratio are used.
    pub idler_umzi: UmziConfig,
    pub signal_umzi: UmziConfig,
    pub detector: DetectorConfig,
    pub coincidence: CoincidenceConfig,
    pub optics: OpticalPaths,
    pub desk: DeskScale,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.source.validate()?;
        self.bank.validate()?;
        self.idler_umzi.validate(self.source.pump.pulse_interval_ns)?;
        self.signal_umzi.validate(self.source.pump.pulse_interval_ns)?;
        self.detector.validate()?;
        self.coincidence.validate()?;
        self.optics.validate()?;
        if self.optics.idler_filter_ghz >= self.bank.channel_spacing_ghz {
            return Err(Error::InvalidParameter {
                name: "optics.idler_filter_ghz",
                reason: String::from("idler filters of adjacent channels would overlap"),
            });
        }
        if let Some(t) = self.desk.signal_throughput {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "desk_scale.signal_throughput",
                    reason: String::from("must lie in (0, 1]"),
                });
            }
        }
        let half_window = 0.5 * self.coincidence.window_ps;
        if half_window >= 0.5 * self.idler_umzi.arm_delay_ns * 1e3 {
            return Err(Error::InvalidParameter {
                name: "coincidence.window_ps",
                reason: String::from("window must be shorter than the slot spacing"),
            });
        }
        Ok(())
    }

    /// Physical signal-arm transmission for `channel` (before detection).
    pub fn physical_signal_throughput(&self, path: SignalPath, channel: usize) -> f64 {
        match path {
            SignalPath::Bypass => self.optics.bypass_transmission,
            SignalPath::Stored => self.bank.recall_probability(channel),
        }
    }

    /// Factor applied to the signal arm and its backgrounds at desk scale.
    pub fn signal_boost(&self, path: SignalPath, channel: usize) -> f64 {
        match self.desk.signal_throughput {
            Some(t) => (t / self.physical_signal_throughput(path, channel)).max(1.0),
            None => 1.0,
        }
    }

    /// Signal-arm transmission actually simulated.
    pub fn signal_throughput(&self, path: SignalPath, channel: usize) -> f64 {
        (self.physical_signal_throughput(path, channel) * self.signal_boost(path, channel)).min(1.0)
    }

    /// Idler filter of `channel`, expressed as a signal-offset window.
    pub fn idler_window(&self, channel: usize) -> SpectralWindow {
        SpectralWindow::centered(self.bank.center_offset_ghz(channel), self.optics.idler_filter_ghz)
    }

    /// Fraction of idler-window pairs whose signal falls in the memory
    /// passband of `channel`.
    pub fn passband_fraction(&self, channel: usize) -> f64 {
        let a = self.idler_window(channel);
        let b = self.bank.passband(channel);
        let overlap = (a.hi_ghz.min(b.hi_ghz) - a.lo_ghz.max(b.lo_ghz)).max(0.0);
        overlap / a.width()
    }

    pub fn storage_delay_ps(&self, path: SignalPath, channel: usize) -> f64 {
        match path {
            SignalPath::Bypass => 0.0,
            SignalPath::Stored => self.bank.channels[channel].storage_time_ns() * 1e3,
        }
    }

    pub fn idler_frame(&self) -> ClockFrame {
        ClockFrame {
            period_ps: self.source.pump.period_ns * 1e3,
            offset_ps: self.optics.idler_delay_ns * 1e3,
            slot_spacing_ps: self.idler_umzi.arm_delay_ns * 1e3,
        }
    }

    pub fn signal_frame(&self, path: SignalPath, channel: usize) -> ClockFrame {
        ClockFrame {
            period_ps: self.source.pump.period_ns * 1e3,
            offset_ps: self.optics.signal_delay_ns * 1e3 + self.storage_delay_ps(path, channel),
            slot_spacing_ps: self.signal_umzi.arm_delay_ns * 1e3,
        }
    }

    fn signal_detector(&self, boost: f64) -> DetectorConfig {
        DetectorConfig {
            dark_count_rate_hz: self.detector.dark_count_rate_hz * boost,
            ..self.detector.clone()
        }
    }
}

/// One simulated acquisition at fixed analyzer phases.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    /// 0-based channel indices.
    pub channels: Vec<usize>,
    pub path: SignalPath,
    pub alpha: f64,
    pub beta: f64,
    pub n_cycles: u64,
    pub seed: u64,
}

/// Detection streams of one spectral channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStreams {
    pub channel: usize,
    pub idler: Vec<DetectionEvent>,
    pub signal: Vec<DetectionEvent>,
    pub idler_frame: ClockFrame,
    pub signal_frame: ClockFrame,
    pub signal_boost: f64,
}

impl ChannelStreams {
    pub fn threefold(&self, cfg: &CoincidenceConfig) -> Result<ThreefoldCounts, Error> {
        threefold_counts(&self.idler, &self.signal, &self.idler_frame, &self.signal_frame, cfg)
    }

    pub fn tally(&self, window_ps: f64, n_cycles: u64) -> Result<CoincidenceTally, Error> {
        tally_cycles(
            &self.idler,
            &self.signal,
            &self.idler_frame,
            &self.signal_frame,
            window_ps,
            n_cycles,
        )
    }

    /// Tally of this channel's idler against another channel's signal.
    pub fn cross_tally(&self, other: &ChannelStreams, window_ps: f64, n_cycles: u64) -> Result<CoincidenceTally, Error> {
        tally_cycles(
            &self.idler,
            &other.signal,
            &self.idler_frame,
            &other.signal_frame,
            window_ps,
            n_cycles,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutput {
    pub n_cycles: u64,
    /// Simulated acquisition time, s (measurement-window time).
    pub duration_s: f64,
    pub emissions: usize,
    pub channels: Vec<ChannelStreams>,
}

impl SimulationOutput {
    pub fn channel(&self, channel: usize) -> Option<&ChannelStreams> {
        self.channels.iter().find(|c| c.channel == channel)
    }
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let mut acc = 0.0;
    let target = u * total;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if target < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Runs the event chain for `spec`. Deterministic per seed.
pub fn simulate(cfg: &PipelineConfig, spec: &RunSpec) -> Result<SimulationOutput, Error> {
    cfg.validate()?;
    if spec.channels.is_empty() {
        return Err(Error::InvalidParameter {
            name: "channels",
            reason: String::from("at least one channel is required"),
        });
    }
    let n_ch = cfg.bank.channels.len();
    if let Some(&bad) = spec.channels.iter().find(|&&c| c >= n_ch) {
        return Err(Error::InvalidParameter {
            name: "channels",
            reason: alloc::format!("channel {} does not exist (bank has {})", bad + 1, n_ch),
        });
    }
    let mut channels = spec.channels.clone();
    channels.sort_unstable();
    channels.dedup();

    let period_ps = cfg.source.pump.period_ns * 1e3;
    let duration_s = spec.n_cycles as f64 * cfg.source.pump.period_ns * 1e-9;
    let windows: Vec<SpectralWindow> = channels.iter().map(|&c| cfg.idler_window(c)).collect();
    let emissions = sample_emissions_in_windows(&cfg.source, &windows, spec.n_cycles, derive_seed(spec.seed, 1))?;

    // Signal survival.
    let mut survivors: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut noise_arrivals: Vec<(usize, f64)> = Vec::new();
    let boosts: Vec<f64> = (0..n_ch).map(|c| cfg.signal_boost(spec.path, c)).collect();
    match spec.path {
        SignalPath::Stored => {
            // One boost per channel: recall and noise scale together.
            for &ch in &channels {
                let mut bank = cfg.bank.clone();
                bank.efficiency_scale *= boosts[ch];
                bank.noise_rate_hz *= boosts[ch];
                let in_channel: Vec<_> = emissions
                    .iter()
                    .filter(|e| bank.passband(ch).contains(e.signal_frequency_offset_ghz))
                    .copied()
                    .collect();
                let out = apply_storage(
                    &bank,
                    &in_channel,
                    spec.n_cycles,
                    cfg.source.pump.period_ns,
                    derive_seed(spec.seed, 100 + ch as u64),
                )?;
                for r in &out.recalled {
                    survivors.insert((r.emission.cycle_index, r.emission.signal_frequency_offset_ghz.to_bits()));
                }
                for n in out.noise.iter().filter(|n| n.channel == ch) {
                    noise_arrivals.push((
                        ch,
                        n.cycle_index as f64 * period_ps + n.time_in_cycle_ns * 1e3 + cfg.optics.signal_delay_ns * 1e3,
                    ));
                }
            }
        }
        SignalPath::Bypass => {
            let mut rng = rng_from_seed(derive_seed(spec.seed, 2));
            for e in &emissions {
                if let Some(&ch) = channels
                    .iter()
                    .find(|&&c| cfg.bank.passband(c).contains(e.signal_frequency_offset_ghz))
                {
                    if rng.random::<f64>() < cfg.signal_throughput(SignalPath::Bypass, ch) {
                        survivors.insert((e.cycle_index, e.signal_frequency_offset_ghz.to_bits()));
                    }
                }
            }
        }
    }

    let idler_povm = UmziConfig {
        phase: spec.alpha,
        ..cfg.idler_umzi.clone()
    }
    .povm();
    let signal_povm = UmziConfig {
        phase: spec.beta,
        ..cfg.signal_umzi.clone()
    }
    .povm();
    let slot_ps_i = cfg.idler_umzi.arm_delay_ns * 1e3;
    let slot_ps_s = cfg.signal_umzi.arm_delay_ns * 1e3;
    let pulse = Normal::new(0.0, cfg.source.pump.pulse_sigma_ps()).map_err(|_| Error::InvalidParameter {
        name: "pump.pulse_width_fwhm_ps",
        reason: String::from("invalid"),
    })?;

    let mut idler_arrivals: Vec<Vec<PhotonArrival>> = (0..n_ch).map(|_| Vec::new()).collect();
    let mut signal_arrivals: Vec<Vec<PhotonArrival>> = (0..n_ch).map(|_| Vec::new()).collect();
    let mut rng = rng_from_seed(derive_seed(spec.seed, 3));
    for e in &emissions {
        let Some(ch) = channels
            .iter()
            .copied()
            .find(|&c| cfg.idler_window(c).contains(e.signal_frequency_offset_ghz))
        else {
            continue;
        };
        let idler_ok = rng.random::<f64>() < cfg.optics.idler_transmission;
        let signal_ok = survivors.contains(&(e.cycle_index, e.signal_frequency_offset_ghz.to_bits()));
        let u: f64 = rng.random();
        let t0: f64 = pulse.sample(&mut rng);
        if !(idler_ok || signal_ok) {
            continue;
        }
        let table = project_ket(&e.ket(), &idler_povm, &signal_povm);
        let flat: Vec<f64> = table.iter().flatten().copied().collect();
        let k = sample_index(&flat, u);
        let (oi, os) = (k / 6, k % 6);
        let base = e.cycle_index as f64 * period_ps + t0;
        if idler_ok {
            let port = if oi < 3 { Port::One } else { Port::Two };
            idler_arrivals[ch].push(PhotonArrival {
                detector: DetectorId::idler(port),
                time_ps: base + (oi % 3) as f64 * slot_ps_i + cfg.optics.idler_delay_ns * 1e3,
            });
        }
        if signal_ok {
            let port = if os < 3 { Port::One } else { Port::Two };
            signal_arrivals[ch].push(PhotonArrival {
                detector: DetectorId::signal(port),
                time_ps: base
                    + (os % 3) as f64 * slot_ps_s
                    + cfg.optics.signal_delay_ns * 1e3
                    + cfg.storage_delay_ps(spec.path, ch),
            });
        }
    }
    let mut noise_rng = rng_from_seed(derive_seed(spec.seed, 4));
    for (ch, t) in noise_arrivals {
        let port = if noise_rng.random::<bool>() { Port::One } else { Port::Two };
        signal_arrivals[ch].push(PhotonArrival {
            detector: DetectorId::signal(port),
            time_ps: t,
        });
    }

    let mut out = Vec::with_capacity(channels.len());
    for &ch in &channels {
        let idler = detect(
            &idler_arrivals[ch],
            &[DetectorId::A1, DetectorId::A2],
            &cfg.detector,
            duration_s,
            derive_seed(spec.seed, 200 + ch as u64),
        )?;
        let signal = detect(
            &signal_arrivals[ch],
            &[DetectorId::B1, DetectorId::B2],
            &cfg.signal_detector(boosts[ch]),
            duration_s,
            derive_seed(spec.seed, 300 + ch as u64),
        )?;
        out.push(ChannelStreams {
            channel: ch,
            idler,
            signal,
            idler_frame: cfg.idler_frame(),
            signal_frame: cfg.signal_frame(spec.path, ch),
            signal_boost: boosts[ch],
        });
    }
    Ok(SimulationOutput {
        n_cycles: spec.n_cycles,
        duration_s,
        emissions: emissions.len(),
        channels: out,
    })
}

/// Probability that a photon lands within `±half_window` of its slot
/// center, and that both photons of a pair do, given the shared pump-pulse
/// spread and independent detector jitter.
pub fn capture_probabilities(pulse_sigma_ps: f64, jitter_sigma_ps: f64, half_window_ps: f64) -> (f64, f64) {
    let single_given = |tau: f64| -> f64 {
        if jitter_sigma_ps > 0.0 {
            let s = core::f64::consts::SQRT_2 * jitter_sigma_ps;
            0.5 * (libm::erf((half_window_ps - tau) / s) + libm::erf((half_window_ps + tau) / s))
        } else if tau.abs() <= half_window_ps {
            1.0
        } else {
            0.0
        }
    };
    if !(pulse_sigma_ps > 0.0) {
        let c = single_given(0.0);
        return (c, c * c);
    }
    // Simpson's rule over ±8σ of the pulse.
    let n = 800;
    let a = -8.0 * pulse_sigma_ps;
    let h = 16.0 * pulse_sigma_ps / n as f64;
    let norm = 1.0 / (pulse_sigma_ps * (2.0 * core::f64::consts::PI).sqrt());
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 0..=n {
        let tau = a + k as f64 * h;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let g = norm * (-0.5 * (tau / pulse_sigma_ps).powi(2)).exp();
        let c = single_given(tau);
        s1 += w * g * c;
        s2 += w * g * c * c;
    }
    (s1 * h / 3.0, s2 * h / 3.0)
}

/// First-order expected per-cycle rates of clock-classified detections.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedRates {
    /// Three-fold cells `[slot_i][slot_s][port_i][port_s]`, per cycle.
    pub cells: [[[[f64; 2]; 2]; 3]; 3],
    /// Contribution of genuine pairs to `cells`, summed over all cells.
    pub true_total: f64,
    /// Probability per cycle of at least one classified idler click.
    pub idler_cycle_probability: f64,
    /// Probability per cycle of at least one classified signal click.
    pub signal_cycle_probability: f64,
    /// Probability per cycle of at least one of each.
    pub coincidence_cycle_probability: f64,
    /// Mean pairs per cycle inside the idler filter.
    pub mean_pairs: f64,
}

impl ExpectedRates {
    pub fn middle_ports(&self) -> [f64; 4] {
        let m = Slot::Middle.index();
        [
            self.cells[m][m][0][0],
            self.cells[m][m][0][1],
            self.cells[m][m][1][0],
            self.cells[m][m][1][1],
        ]
    }

    pub fn coincidence_total(&self) -> f64 {
        self.cells.iter().flatten().flatten().flatten().sum()
    }

    /// Cycle-tally `g²`.
    pub fn g2(&self) -> f64 {
        self.coincidence_cycle_probability / (self.idler_cycle_probability * self.signal_cycle_probability)
    }
}

/// Expected three-fold rates for `channel` at phases `(α, β)`: genuine
/// pairs, accidentals between distinct pairs of one cycle (the geometric
/// law gives `E[n(n−1)] = 2μ²`), and pairs against detector dark counts and
/// memory noise.
pub fn expected_rates(
    cfg: &PipelineConfig,
    channel: usize,
    path: SignalPath,
    alpha: f64,
    beta: f64,
) -> Result<ExpectedRates, Error> {
    cfg.validate()?;
    let rho = analytic_state(&cfg.source)?;
    let idler_povm = UmziConfig {
        phase: alpha,
        ..cfg.idler_umzi.clone()
    }
    .povm();
    let signal_povm = UmziConfig {
        phase: beta,
        ..cfg.signal_umzi.clone()
    }
    .povm();
    let joint = project_pair_with(&rho, &idler_povm, &signal_povm);
    let mut marg_i = [0.0; 6];
    let mut marg_s = [0.0; 6];
    for i in 0..6 {
        for j in 0..6 {
            marg_i[i] += joint.0[i][j];
            marg_s[j] += joint.0[i][j];
        }
    }
    let p = cfg.source.window_probability(&[cfg.idler_window(channel)]);
    let mu = p / (1.0 - p);
    let pair_pairs = 2.0 * mu * mu;
    let q = cfg.passband_fraction(channel);
    let half = 0.5 * cfg.coincidence.window_ps;
    let (c1, c2) = capture_probabilities(cfg.source.pump.pulse_sigma_ps(), cfg.detector.jitter_sigma_ps, half);
    let eta = cfg.detector.efficiency;
    let ti = cfg.optics.idler_transmission * eta;
    let ts = q * cfg.signal_throughput(path, channel) * eta;
    let boost = cfg.signal_boost(path, channel);
    let window_s = cfg.coincidence.window_ps * 1e-12;
    let bg_i = cfg.detector.dark_count_rate_hz * window_s;
    let mut bg_s = cfg.detector.dark_count_rate_hz * boost * window_s;
    if path == SignalPath::Stored {
        let per_detector = cfg.bank.noise_rate_hz * boost / cfg.bank.channels.len() as f64 / 2.0;
        bg_s += per_detector * eta * window_s;
    }
    let mut cells = [[[[0.0; 2]; 2]; 3]; 3];
    let mut true_total = 0.0;
    for port_i in Port::ALL {
        for port_s in Port::ALL {
            for si in Slot::ALL {
                for ss in Slot::ALL {
                    let oi = outcome_index(port_i, si);
                    let os = outcome_index(port_s, ss);
                    let a_i = ti * c1 * marg_i[oi];
                    let a_s = ts * c1 * marg_s[os];
                    let genuine = mu * ti * ts * c2 * joint.0[oi][os];
                    let value = genuine + pair_pairs * a_i * a_s + bg_s * mu * a_i + bg_i * mu * a_s + bg_i * bg_s;
                    true_total += genuine;
                    cells[si.index()][ss.index()][port_i.index()][port_s.index()] = value;
                }
            }
        }
    }
    // Cycle tallies from the pair-number generating function
    // G(z) = 1/(1 + μ(1 - z)) and Poisson backgrounds in six windows per side.
    let gen = |z: f64| 1.0 / (1.0 + mu * (1.0 - z));
    let (a_i, a_s, a_is) = (ti * c1, ts * c1, ti * ts * c2);
    let (quiet_i, quiet_s) = ((-6.0 * bg_i).exp(), (-6.0 * bg_s).exp());
    let none_i = gen(1.0 - a_i) * quiet_i;
    let none_s = gen(1.0 - a_s) * quiet_s;
    let none_both = gen(1.0 - a_i - a_s + a_is) * quiet_i * quiet_s;
    Ok(ExpectedRates {
        cells,
        true_total,
        idler_cycle_probability: 1.0 - none_i,
        signal_cycle_probability: 1.0 - none_s,
        coincidence_cycle_probability: 1.0 - none_i - none_s + none_both,
        mean_pairs: mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::correlation_e_counts;

    fn ideal_config() -> PipelineConfig {
        let mut source = SourceModel::ideal();
        source.pair_emission_probability_per_cycle = 0.05;
        PipelineConfig {
            bank: MemoryBank::five_channel(source.signal_center_wavelength_nm),
            source,
            idler_umzi: UmziConfig::default(),
            signal_umzi: UmziConfig::default(),
            detector: DetectorConfig {
                efficiency: 0.7,
                dark_count_rate_hz: 10.0,
                jitter_sigma_ps: 30.0,
            },
            coincidence: CoincidenceConfig::default(),
            optics: OpticalPaths::default(),
            desk: DeskScale {
                signal_throughput: Some(0.5),
            },
        }
    }

    #[test]
    fn capture_limits() {
        let (c1, c2) = capture_probabilities(0.0, 0.0, 300.0);
        assert_eq!((c1, c2), (1.0, 1.0));
        // Pulse spread only: P(|τ| < w) = erf(w/(√2σ)).
        let (c1, c2) = capture_probabilities(100.0, 0.0, 300.0);
        let expect = libm::erf(3.0 / core::f64::consts::SQRT_2);
        assert!((c1 - expect).abs() < 2e-3);
        assert!((c2 - expect).abs() < 2e-3);
        let (c1, c2) = capture_probabilities(100.0, 50.0, 300.0);
        let tot = (100.0f64.powi(2) + 50.0f64.powi(2)).sqrt();
        assert!((c1 - libm::erf(300.0 / (core::f64::consts::SQRT_2 * tot))).abs() < 1e-9);
        assert!(c2 < c1 && c2 > c1 * c1);
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = ideal_config();
        let spec = RunSpec {
            channels: alloc::vec![2],
            path: SignalPath::Stored,
            alpha: 0.0,
            beta: 0.0,
            n_cycles: 200_000,
            seed: 5,
        };
        let a = simulate(&cfg, &spec).unwrap();
        let b = simulate(&cfg, &spec).unwrap();
        assert_eq!(a, b);
        assert!(!a.channels[0].signal.is_empty());
    }

    #[test]
    fn sampled_cells_track_expected_rates() {
        let cfg = ideal_config();
        let n = 2_000_000;
        let spec = RunSpec {
            channels: alloc::vec![0],
            path: SignalPath::Bypass,
            alpha: 0.0,
            beta: 0.0,
            n_cycles: n,
            seed: 11,
        };
        let out = simulate(&cfg, &spec).unwrap();
        let counts = out.channels[0].threefold(&cfg.coincidence).unwrap();
        let expected = expected_rates(&cfg, 0, SignalPath::Bypass, 0.0, 0.0).unwrap();
        let total = counts.total() as f64;
        let exp_total = expected.coincidence_total() * n as f64;
        assert!((total - exp_total).abs() < 5.0 * exp_total.sqrt() + 0.02 * exp_total, "{total} vs {exp_total}");
        let e_sim = correlation_e_counts(counts.middle_ports()).unwrap();
        let m = expected.middle_ports();
        let e_exp = (m[0] - m[1] - m[2] + m[3]) / m.iter().sum::<f64>();
        assert!((e_sim - e_exp).abs() < 0.05, "{e_sim} vs {e_exp}");
        assert!(e_exp > 0.8);
    }
}
