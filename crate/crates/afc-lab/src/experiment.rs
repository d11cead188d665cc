//! Orchestration of simulated acquisitions: CHSH settings, tomography
//! settings and fringe scans, each reduced to count summaries as soon as
//! its streams are available.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use afc_core::analyzer::{
    coincidence_histogram, g2_cross, CoincidenceTally, Histogram, Port, ThreefoldCounts,
};
use afc_core::bell::{
    chsh_from_counts, correlation_e_counts, fit_visibility, monte_carlo_errors, ChshResult,
    ChshSettings, FringeScan, PortCombo, VisibilityFit,
};
use afc_core::pipeline::{expected_rates, simulate, PipelineConfig, RunSpec, SignalPath, SimulationOutput};
use afc_core::quantum::TwoQubitState;
use afc_core::rng::derive_seed;
use afc_core::tomography::{
    assemble_counts, reconstruct_with_errors, CountRecord, MleOptions, ReconstructionWithErrors, Setting,
    SettingTables,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};

const TAG_CHSH: u64 = 10;
const TAG_TOMOGRAPHY: u64 = 20;
const TAG_FRINGE: u64 = 30;
const TAG_ERRORS: u64 = 40;
const TAG_HISTOGRAM: u64 = 50;
const TAG_RAW: u64 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Estimate { value, sigma }
    }

    /// `|value − other| / σ`, with `σ` combined in quadrature.
    pub fn z_score(&self, other: f64, other_sigma: f64) -> f64 {
        let s = (self.sigma * self.sigma + other_sigma * other_sigma).sqrt();
        if s > 0.0 {
            (self.value - other).abs() / s
        } else if self.value == other {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Count summary of one channel in one fixed-setting run.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSummary {
    pub counts: ThreefoldCounts,
    pub tally: CoincidenceTally,
    /// Idler of this channel against the signal of another channel.
    pub cross: BTreeMap<usize, CoincidenceTally>,
    pub signal_boost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SettingSummary {
    pub alpha: f64,
    pub beta: f64,
    pub n_cycles: u64,
    pub channels: BTreeMap<usize, ChannelSummary>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub trials: usize,
    pub channels: Vec<usize>,
}

impl Experiment {
    /// `channels` are 0-based; empty means all.
    pub fn new(config: ExperimentConfig, seed: Option<u64>, trials: Option<usize>, channels: &[usize]) -> Result<Self> {
        config.validate()?;
        let n = config.bank.channels.len();
        let channels: Vec<usize> = if channels.is_empty() {
            (0..n).collect()
        } else {
            let mut c = channels.to_vec();
            c.sort_unstable();
            c.dedup();
            if let Some(bad) = c.iter().find(|&&k| k >= n) {
                return Err(LabError::Config(format!("channel {} does not exist (bank has {n})", bad + 1)));
            }
            c
        };
        let trials = trials.unwrap_or(config.run.monte_carlo_trials);
        if trials < 2 {
            return Err(LabError::Config("trials: need at least 2".into()));
        }
        Ok(Experiment {
            seed: seed.unwrap_or(config.seed),
            pipeline: config.pipeline(),
            config,
            trials,
            channels,
        })
    }

    pub fn setting_cycles(&self) -> u64 {
        self.config.cycles_for(self.config.run.setting_duration_s)
    }

    fn path_index(path: SignalPath) -> u64 {
        match path {
            SignalPath::Bypass => 0,
            SignalPath::Stored => 1,
        }
    }

    fn run_seed(&self, tag: u64, path: SignalPath, k: u64) -> u64 {
        derive_seed(derive_seed(derive_seed(self.seed, tag), Self::path_index(path)), k)
    }

    pub fn error_seed(&self, k: u64) -> u64 {
        derive_seed(derive_seed(self.seed, TAG_ERRORS), k)
    }

    fn summarize(&self, settings: &[(f64, f64)], path: SignalPath, channels: &[usize], cycles: u64, tag: u64) -> Result<Vec<SettingSummary>> {
        let window = self.pipeline.coincidence.window_ps;
        settings
            .par_iter()
            .enumerate()
            .map(|(k, &(alpha, beta))| {
                let spec = RunSpec {
                    channels: channels.to_vec(),
                    path,
                    alpha,
                    beta,
                    n_cycles: cycles,
                    seed: self.run_seed(tag, path, k as u64),
                };
                let out = simulate(&self.pipeline, &spec)?;
                let mut per = BTreeMap::new();
                for a in &out.channels {
                    let mut cross = BTreeMap::new();
                    for b in out.channels.iter().filter(|b| b.channel != a.channel) {
                        cross.insert(b.channel, a.cross_tally(b, window, out.n_cycles)?);
                    }
                    per.insert(
                        a.channel,
                        ChannelSummary {
                            counts: a.threefold(&self.pipeline.coincidence)?,
                            tally: a.tally(window, out.n_cycles)?,
                            cross,
                            signal_boost: a.signal_boost,
                        },
                    );
                }
                Ok(SettingSummary {
                    alpha,
                    beta,
                    n_cycles: out.n_cycles,
                    channels: per,
                })
            })
            .collect()
    }

    /// The four CHSH settings, all selected channels simulated together.
    pub fn chsh_runs(&self, path: SignalPath) -> Result<Vec<SettingSummary>> {
        let pairs = ChshSettings::default().pairs();
        self.summarize(&pairs, path, &self.channels, self.setting_cycles(), TAG_CHSH)
    }

    /// The four tomography settings DD, DR, RD, RR.
    pub fn tomography_runs(&self, path: SignalPath) -> Result<Vec<SettingSummary>> {
        let phases: Vec<(f64, f64)> = Setting::ALL.iter().map(|s| s.phases()).collect();
        self.summarize(&phases, path, &self.channels, self.setting_cycles(), TAG_TOMOGRAPHY)
    }

    /// The first CHSH setting only; its tallies give `g²`.
    pub fn g2_run(&self, path: SignalPath) -> Result<SettingSummary> {
        let pairs = ChshSettings::default().pairs();
        Ok(self.summarize(&pairs[..1], path, &self.channels, self.setting_cycles(), TAG_CHSH)?.remove(0))
    }

    /// The DD tomography setting only.
    pub fn dd_run(&self, path: SignalPath) -> Result<SettingSummary> {
        let dd = [Setting::ALL[0].phases()];
        Ok(self.summarize(&dd, path, &self.channels, self.setting_cycles(), TAG_TOMOGRAPHY)?.remove(0))
    }

    /// A short run of the first CHSH setting with its raw streams.
    pub fn raw_run(&self, path: SignalPath, n_cycles: u64) -> Result<SimulationOutput> {
        let (alpha, beta) = ChshSettings::default().pairs()[0];
        let spec = RunSpec {
            channels: self.channels.clone(),
            path,
            alpha,
            beta,
            n_cycles,
            seed: self.run_seed(TAG_RAW, path, 0),
        };
        Ok(simulate(&self.pipeline, &spec)?)
    }

    /// Fringe scan at fixed `alpha` over `fringe_points` evenly spaced `β`
    /// in `[0, 2π)`.
    pub fn fringe_scan(&self, path: SignalPath, channel: usize, alpha: f64) -> Result<FringeScan> {
        let n = self.config.run.fringe_points;
        let betas: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let settings: Vec<(f64, f64)> = betas.iter().map(|&b| (alpha, b)).collect();
        let alpha_tag = (alpha * 1e6).round() as i64 as u64;
        let cycles = self.config.cycles_for(self.config.run.fringe_point_duration_s);
        let runs = self.summarize(&settings, path, &[channel], cycles, derive_seed(derive_seed(TAG_FRINGE, alpha_tag), channel as u64))?;
        Ok(FringeScan {
            alpha,
            beta_values: betas,
            counts: runs.iter().map(|r| r.channels[&channel].counts.middle_ports()).collect(),
            integration_time_per_point_s: self.config.run.fringe_point_duration_s,
        })
    }

    /// Two-fold idler–signal histogram for one run at `(α, β)`. Delays are
    /// measured from the direct coincidence, or from the prompt (unstored)
    /// position when `from_prompt` is set.
    pub fn histogram(
        &self,
        path: SignalPath,
        channel: usize,
        (alpha, beta): (f64, f64),
        span_ns: f64,
        from_prompt: bool,
    ) -> Result<Histogram> {
        let spec = RunSpec {
            channels: vec![channel],
            path,
            alpha,
            beta,
            n_cycles: self.setting_cycles(),
            seed: self.run_seed(TAG_HISTOGRAM, path, channel as u64),
        };
        let out = simulate(&self.pipeline, &spec)?;
        let ch = &out.channels[0];
        let mut offset = ch.signal_frame.offset_ps - ch.idler_frame.offset_ps;
        if from_prompt {
            offset -= self.pipeline.storage_delay_ps(path, channel);
        }
        Ok(coincidence_histogram(&ch.idler, &ch.signal, &self.pipeline.coincidence, span_ns, offset)?)
    }

    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            exposure_model: self.config.run.exposure_model,
            ..MleOptions::default()
        }
    }
}

/// Middle-slot port counts of `channel` in CHSH-pair order.
pub fn chsh_counts(runs: &[SettingSummary], channel: usize) -> [[u64; 4]; 4] {
    core::array::from_fn(|k| runs[k].channels[&channel].counts.middle_ports())
}

pub fn chsh_result(runs: &[SettingSummary], channel: usize, trials: usize, seed: u64) -> Result<ChshResult> {
    Ok(chsh_from_counts(&chsh_counts(runs, channel), ChshSettings::default(), trials, seed)?)
}

/// `S` from the analytic three-fold rates at the CHSH settings.
pub fn analytic_s(pipeline: &PipelineConfig, channel: usize, path: SignalPath) -> Result<f64> {
    let mut e = [0.0; 4];
    for (k, (a, b)) in ChshSettings::default().pairs().into_iter().enumerate() {
        let m = expected_rates(pipeline, channel, path, a, b)?.middle_ports();
        e[k] = (m[0] - m[1] - m[2] + m[3]) / m.iter().sum::<f64>();
    }
    Ok(afc_core::bell::chsh_s(e))
}

/// `g²` with a Poisson-bootstrap error over the three tallies.
pub fn g2_estimate(tally: &CoincidenceTally, trials: usize, seed: u64) -> Result<Estimate> {
    let value = g2_cross(tally)?;
    let counts = [tally.coincidence_cycles, tally.idler_cycles, tally.signal_cycles];
    let n = tally.cycles;
    let sigma = monte_carlo_errors(&counts, trials, seed, |c| {
        let t = CoincidenceTally {
            cycles: n,
            coincidence_cycles: c[0],
            idler_cycles: c[1],
            signal_cycles: c[2],
        };
        g2_cross(&t).map(|g| vec![g])
    })?[0];
    Ok(Estimate::new(value, sigma))
}

/// Tomography sub-counts from the A1&B1 slot tables of the four settings.
pub fn tomography_record(runs: &[SettingSummary], channel: usize) -> CountRecord {
    let tables: SettingTables =
        core::array::from_fn(|s| runs[s].channels[&channel].counts.slot_table(Port::One, Port::One));
    assemble_counts(&tables)
}

pub fn reconstruct(
    exp: &Experiment,
    record: &CountRecord,
    reference: Option<&TwoQubitState>,
    seed: u64,
) -> Result<ReconstructionWithErrors> {
    Ok(reconstruct_with_errors(record, &exp.mle_options(), reference, exp.trials, seed)?)
}

/// Per-combination visibility fits of a scan.
pub fn fit_scan(scan: &FringeScan, trials: usize, seed: u64) -> Result<Vec<(PortCombo, VisibilityFit)>> {
    PortCombo::ALL
        .iter()
        .map(|&c| Ok((c, fit_visibility(scan, c, trials, derive_seed(seed, c.index() as u64))?)))
        .collect()
}

/// `E(α, β)` at each scan point with its Poisson-bootstrap error.
pub fn scan_correlations(scan: &FringeScan, trials: usize, seed: u64) -> Result<Vec<(f64, Estimate)>> {
    scan.beta_values
        .iter()
        .zip(&scan.counts)
        .enumerate()
        .map(|(k, (&b, c))| {
            let e = correlation_e_counts(*c)?;
            let samples = bootstrap_samples(c, trials, derive_seed(seed, k as u64))?;
            Ok((b, Estimate::new(e, samples)))
        })
        .collect()
}

fn bootstrap_samples(c: &[u64; 4], trials: usize, seed: u64) -> Result<f64> {
    let sig = monte_carlo_errors(c, trials, seed, |x| {
        correlation_e_counts([x[0], x[1], x[2], x[3]]).map(|e| vec![e])
    })?;
    Ok(sig[0])
}

/// The two fringe phases of the CHSH scan.
pub const FRINGE_ALPHAS: [f64; 2] = [0.0, FRAC_PI_2];
