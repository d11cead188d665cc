//! The five-channel atomic-frequency-comb memory.
//!
//! Frequencies are handled as signal-frequency offsets (GHz) from the
//! central channel; wavelengths only appear at the config boundary.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

#[allow(unused_imports)]
use num_traits::Float;

use crate::fit::{levenberg_marquardt, LmOptions};
use crate::rng::{derive_seed, rng_from_seed};
use crate::source::{EmissionRecord, SpectralWindow};
use crate::Error;

pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Optical frequency in GHz of a vacuum wavelength in nm.
pub fn wavelength_to_ghz(nm: f64) -> f64 {
    SPEED_OF_LIGHT_M_PER_S / nm
}

/// Vacuum wavelength in nm of an optical frequency in GHz.
pub fn ghz_to_wavelength(ghz: f64) -> f64 {
    SPEED_OF_LIGHT_M_PER_S / ghz
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AfcChannel {
    pub center_wavelength_nm: f64,
    pub bandwidth_ghz: f64,
    pub teeth_spacing_mhz: f64,
    /// Peak comb absorption depth at the configured teeth spacing.
    pub d1: f64,
    pub finesse: f64,
    /// Absorption background.
    pub d0: f64,
    /// Decay constant of the effective comb depth with storage time, ns.
    /// `None` means no storage-time dependence.
    #[cfg_attr(feature = "serde", serde(default))]
    pub comb_decay_time_ns: Option<f64>,
}

impl AfcChannel {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: String::from(reason),
            })
        };
        if !(self.d1 >= 0.0) {
            return bad("channel.d1", "must be nonnegative");
        }
        if !(self.d0 >= 0.0) {
            return bad("channel.d0", "must be nonnegative");
        }
        if !(self.finesse >= 1.0) {
            return bad("channel.finesse", "must be at least 1");
        }
        if !(self.teeth_spacing_mhz > 0.0) {
            return bad("channel.teeth_spacing_mhz", "must be positive");
        }
        if !(self.bandwidth_ghz > 0.0) {
            return bad("channel.bandwidth_ghz", "must be positive");
        }
        if let Some(t) = self.comb_decay_time_ns {
            if !(t > 0.0) {
                return bad("channel.comb_decay_time_ns", "must be positive");
            }
        }
        Ok(())
    }

    pub fn storage_time_ns(&self) -> f64 {
        1e3 / self.teeth_spacing_mhz
    }

    /// Efficiency at an arbitrary storage time under the comb-depth decay
    /// model `d1(t) = d1·exp(-(t - t_c)/T)`, `t_c` the configured storage time.
    pub fn efficiency_at(&self, storage_time_ns: f64) -> f64 {
        let d1 = match self.comb_decay_time_ns {
            Some(tau) => self.d1 * (-(storage_time_ns - self.storage_time_ns()) / tau).exp(),
            None => self.d1,
        };
        efficiency_formula(d1, self.finesse, self.d0)
    }
}

/// `(d1/F)² e^{-d1/F} e^{-7/F²} e^{-d0}`
pub fn efficiency_formula(d1: f64, finesse: f64, d0: f64) -> f64 {
    let x = d1 / finesse;
    x * x * (-x).exp() * (-7.0 / (finesse * finesse)).exp() * (-d0).exp()
}

pub fn afc_efficiency(channel: &AfcChannel) -> Result<f64, Error> {
    channel.validate()?;
    Ok(efficiency_formula(channel.d1, channel.finesse, channel.d0))
}

/// Storage time `1/Δ` in ns for a teeth spacing in MHz.
pub fn storage_time(teeth_spacing_mhz: f64) -> Result<f64, Error> {
    if !(teeth_spacing_mhz > 0.0) || !teeth_spacing_mhz.is_finite() {
        return Err(Error::InvalidParameter {
            name: "teeth_spacing_mhz",
            reason: String::from("must be positive"),
        });
    }
    Ok(1e3 / teeth_spacing_mhz)
}

/// Teeth spacing in MHz that yields a storage time in ns.
pub fn teeth_spacing_for(storage_time_ns: f64) -> Result<f64, Error> {
    storage_time(storage_time_ns)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MemoryBank {
    pub channels: Vec<AfcChannel>,
    pub channel_spacing_ghz: f64,
    /// Wavelength that defines zero signal-frequency offset.
    pub reference_wavelength_nm: f64,
    /// End-to-end fiber-chip-fiber transmission.
    pub transmission_efficiency: f64,
    /// Memory noise photons added to the recalled stream, Hz.
    pub noise_rate_hz: f64,
    /// Multiplier on the recall probability. 1 for physical runs; larger
    /// values trade rate realism for statistics at desk scale.
    #[cfg_attr(feature = "serde", serde(default = "unit"))]
    pub efficiency_scale: f64,
}

#[cfg(feature = "serde")]
fn unit() -> f64 {
    1.0
}

impl MemoryBank {
    /// Five 4 GHz channels on a 15 GHz grid around `reference_wavelength_nm`,
    /// channel 1 at the highest frequency. Comb parameters `d1=1.5, F=2,
    /// d0=1.7`, teeth spacing 6.58 MHz.
    pub fn five_channel(reference_wavelength_nm: f64) -> Self {
        let nu0 = wavelength_to_ghz(reference_wavelength_nm);
        let channels = (0..5)
            .map(|i| AfcChannel {
                center_wavelength_nm: ghz_to_wavelength(nu0 + 15.0 * (2.0 - i as f64)),
                bandwidth_ghz: 4.0,
                teeth_spacing_mhz: 6.58,
                d1: 1.5,
                finesse: 2.0,
                d0: 1.7,
                comb_decay_time_ns: None,
            })
            .collect();
        MemoryBank {
            channels,
            channel_spacing_ghz: 15.0,
            reference_wavelength_nm,
            transmission_efficiency: 0.26,
            noise_rate_hz: 0.0,
            efficiency_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        for ch in &self.channels {
            ch.validate()?;
            if ch.bandwidth_ghz >= self.channel_spacing_ghz {
                return Err(Error::InvalidParameter {
                    name: "channel.bandwidth_ghz",
                    reason: String::from("passbands must be narrower than the channel spacing"),
                });
            }
        }
        let mut offsets: Vec<f64> = (0..self.channels.len()).map(|i| self.center_offset_ghz(i)).collect();
        offsets.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        for w in offsets.windows(2) {
            if ((w[1] - w[0]) - self.channel_spacing_ghz).abs() > 0.5 {
                return Err(Error::InvalidParameter {
                    name: "channels",
                    reason: alloc::format!(
                        "adjacent channel centers differ by {:.3} GHz, expected {} ± 0.5",
                        w[1] - w[0],
                        self.channel_spacing_ghz
                    ),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.transmission_efficiency) {
            return Err(Error::InvalidParameter {
                name: "transmission_efficiency",
                reason: String::from("must lie in [0, 1]"),
            });
        }
        if !(self.noise_rate_hz >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "noise_rate_hz",
                reason: String::from("must be nonnegative"),
            });
        }
        if !(self.efficiency_scale > 0.0) {
            return Err(Error::InvalidParameter {
                name: "efficiency_scale",
                reason: String::from("must be positive"),
            });
        }
        Ok(())
    }

    /// Signal-frequency offset of channel `index`'s center, GHz.
    pub fn center_offset_ghz(&self, index: usize) -> f64 {
        wavelength_to_ghz(self.channels[index].center_wavelength_nm) - wavelength_to_ghz(self.reference_wavelength_nm)
    }

    pub fn passband(&self, index: usize) -> SpectralWindow {
        SpectralWindow::centered(self.center_offset_ghz(index), self.channels[index].bandwidth_ghz)
    }

    /// Probability that a photon inside channel `index` is recalled.
    pub fn recall_probability(&self, index: usize) -> f64 {
        let ch = &self.channels[index];
        (efficiency_formula(ch.d1, ch.finesse, ch.d0) * self.transmission_efficiency * self.efficiency_scale).min(1.0)
    }
}

/// Index (0-based) of the channel whose passband contains the offset.
pub fn channel_for_offset(bank: &MemoryBank, frequency_offset_ghz: f64) -> Result<Option<usize>, Error> {
    if !(frequency_offset_ghz.abs() <= 50.0) {
        return Err(Error::OutsidePairBand {
            offset_ghz: frequency_offset_ghz,
        });
    }
    Ok((0..bank.channels.len()).find(|&i| bank.passband(i).contains(frequency_offset_ghz)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecalledEvent {
    pub emission: EmissionRecord,
    pub channel: usize,
    pub delay_ns: f64,
}

/// A memory noise photon: emitted in `channel` at `time_in_cycle_ns` of
/// cycle `cycle_index` (recall-side time, delay already included).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisePhoton {
    pub cycle_index: u64,
    pub time_in_cycle_ns: f64,
    pub channel: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StorageOutput {
    pub recalled: Vec<RecalledEvent>,
    pub noise: Vec<NoisePhoton>,
}

/// Stores and recalls the signal photons of `emissions`.
///
/// `n_cycles` and `period_ns` bound the time span over which memory noise
/// is injected. Channels are processed with independent derived seeds.
pub fn apply_storage(
    bank: &MemoryBank,
    emissions: &[EmissionRecord],
    n_cycles: u64,
    period_ns: f64,
    seed: u64,
) -> Result<StorageOutput, Error> {
    bank.validate()?;
    let n_ch = bank.channels.len();
    let mut per_channel: Vec<Vec<&EmissionRecord>> = (0..n_ch).map(|_| Vec::new()).collect();
    for e in emissions {
        if let Some(ch) = (0..n_ch).find(|&i| bank.passband(i).contains(e.signal_frequency_offset_ghz)) {
            per_channel[ch].push(e);
        }
    }
    let mut out = StorageOutput::default();
    for (ch, events) in per_channel.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, ch as u64));
        let p = bank.recall_probability(ch);
        let delay_ns = bank.channels[ch].storage_time_ns();
        for e in events {
            if rng.random::<f64>() < p {
                out.recalled.push(RecalledEvent {
                    emission: **e,
                    channel: ch,
                    delay_ns,
                });
            }
        }
    }
    out.recalled.sort_by_key(|r| r.emission.cycle_index);

    if bank.noise_rate_hz > 0.0 && n_cycles > 0 {
        let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
        let span_s = n_cycles as f64 * period_ns * 1e-9;
        let mean = bank.noise_rate_hz * span_s;
        let count = Poisson::new(mean).map(|d| d.sample(&mut rng) as u64).unwrap_or(0);
        for _ in 0..count {
            out.noise.push(NoisePhoton {
                cycle_index: rng.random_range(0..n_cycles),
                time_in_cycle_ns: rng.random::<f64>() * period_ns,
                channel: rng.random_range(0..n_ch),
            });
        }
        out.noise.sort_by(|a, b| {
            (a.cycle_index, a.time_in_cycle_ns)
                .partial_cmp(&(b.cycle_index, b.time_in_cycle_ns))
                .unwrap_or(core::cmp::Ordering::Equal)
        });
    }
    Ok(out)
}

/// One row of an efficiency table.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyRow {
    pub storage_time_ns: f64,
    pub efficiencies: Vec<f64>,
}

/// Per-channel internal efficiency at each storage time.
pub fn efficiency_table(bank: &MemoryBank, storage_times_ns: &[f64]) -> Result<Vec<EfficiencyRow>, Error> {
    bank.validate()?;
    storage_times_ns
        .iter()
        .map(|&t| {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "storage time",
                    reason: String::from("must be positive"),
                });
            }
            Ok(EfficiencyRow {
                storage_time_ns: t,
                efficiencies: bank.channels.iter().map(|c| c.efficiency_at(t)).collect(),
            })
        })
        .collect()
}

/// Result of fitting the comb-depth decay model to measured efficiencies.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    /// Extrapolated comb depth at zero storage time.
    pub d1_at_zero: f64,
    pub decay_time_ns: f64,
    pub finesse: f64,
    pub d0: f64,
    /// Model minus data at each fitted point.
    pub residuals: Vec<f64>,
}

impl DecayFit {
    pub fn efficiency_at(&self, storage_time_ns: f64) -> f64 {
        efficiency_formula(
            self.d1_at_zero * (-storage_time_ns / self.decay_time_ns).exp(),
            self.finesse,
            self.d0,
        )
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Applies the fit to a channel, keeping its teeth spacing.
    pub fn apply_to(&self, channel: &AfcChannel) -> AfcChannel {
        AfcChannel {
            d1: self.d1_at_zero * (-channel.storage_time_ns() / self.decay_time_ns).exp(),
            finesse: self.finesse,
            d0: self.d0,
            comb_decay_time_ns: Some(self.decay_time_ns),
            ..channel.clone()
        }
    }
}

/// Least-squares fit of `(d1(0), T)` with `F` and `d0` held fixed.
/// Efficiencies are fractions (not percent).
pub fn fit_comb_decay(
    storage_times_ns: &[f64],
    efficiencies: &[f64],
    finesse: f64,
    d0: f64,
) -> Result<DecayFit, Error> {
    if storage_times_ns.len() != efficiencies.len() || storage_times_ns.len() < 3 {
        return Err(Error::InsufficientData(String::from(
            "decay fit needs at least three (time, efficiency) pairs",
        )));
    }
    // Work in percent so the residual scale is O(1).
    let model = |p: &[f64], t: f64| 100.0 * efficiency_formula(p[0] * (-t / p[1]).exp(), finesse, d0);
    let fit = levenberg_marquardt(
        &[2.0 * finesse * 0.7, 200.0],
        storage_times_ns.len(),
        |p, out| {
            if p[1] <= 0.0 || p[0] <= 0.0 {
                out.fill(f64::NAN);
                return;
            }
            for (k, (&t, &y)) in storage_times_ns.iter().zip(efficiencies).enumerate() {
                out[k] = model(p, t) - 100.0 * y;
            }
        },
        &LmOptions::default(),
    )?;
    let residuals = storage_times_ns
        .iter()
        .zip(efficiencies)
        .map(|(&t, &y)| (model(&fit.params, t) - 100.0 * y) / 100.0)
        .collect();
    Ok(DecayFit {
        d1_at_zero: fit.params[0],
        decay_time_ns: fit.params[1],
        finesse,
        d0,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{sample_emissions_in_windows, SourceModel};

    fn channel(d1: f64, finesse: f64, d0: f64) -> AfcChannel {
        AfcChannel {
            center_wavelength_nm: 1531.93,
            bandwidth_ghz: 4.0,
            teeth_spacing_mhz: 6.58,
            d1,
            finesse,
            d0,
            comb_decay_time_ns: None,
        }
    }

    #[test]
    fn storage_time_examples() {
        assert!((storage_time(6.58).unwrap() - 151.975_683_9).abs() < 1e-6);
        assert!((storage_time(1000.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((storage_time(10.0).unwrap() - 100.0).abs() < 1e-12);
        assert!(storage_time(0.0).is_err());
        assert!(storage_time(-1.0).is_err());
    }

    #[test]
    fn efficiency_formula_examples() {
        let e = afc_efficiency(&channel(1.5, 2.0, 1.7)).unwrap();
        // High-precision reference: 0.5625·e^{-0.75-1.75-1.7}.
        assert!((e - 0.008_435_011_961_518_7).abs() < 1e-15);
        assert_eq!(afc_efficiency(&channel(0.0, 2.0, 1.7)).unwrap(), 0.0);
        let ratio = afc_efficiency(&channel(1.5, 2.0, 2.7)).unwrap() / e;
        assert!((ratio - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn invalid_channel_rejected() {
        assert!(afc_efficiency(&channel(1.5, 0.5, 1.7)).is_err());
        assert!(afc_efficiency(&channel(-1.0, 2.0, 1.7)).is_err());
    }

    #[test]
    fn default_bank_grid() {
        let bank = MemoryBank::five_channel(1531.93);
        bank.validate().unwrap();
        assert_eq!(channel_for_offset(&bank, 0.0).unwrap(), Some(2));
        assert_eq!(channel_for_offset(&bank, 15.0).unwrap(), Some(1));
        assert_eq!(channel_for_offset(&bank, -15.0).unwrap(), Some(3));
        assert_eq!(channel_for_offset(&bank, 7.5).unwrap(), None);
        assert!(channel_for_offset(&bank, 60.0).is_err());
        assert!((bank.channels[2].center_wavelength_nm - 1531.93).abs() < 1e-9);
    }

    #[test]
    fn printed_wavelengths_fail_grid_check() {
        let mut bank = MemoryBank::five_channel(1531.93);
        for (ch, nm) in bank.channels.iter_mut().zip([1531.69, 1531.82, 1531.93, 1532.05, 1532.12]) {
            ch.center_wavelength_nm = nm;
        }
        assert!(bank.validate().is_err());
    }

    #[test]
    fn time_bandwidth_product_exceeds_3000() {
        let bank = MemoryBank::five_channel(1531.93);
        let tbp: f64 = bank
            .channels
            .iter()
            .map(|c| c.bandwidth_ghz * c.storage_time_ns())
            .sum();
        assert!(tbp >= 3000.0, "{tbp}");
    }

    #[test]
    fn perfect_memory_recalls_everything_with_fixed_delay() {
        let mut bank = MemoryBank::five_channel(1531.93);
        for ch in &mut bank.channels {
            ch.teeth_spacing_mhz = 1e3 / 152.0;
        }
        bank.transmission_efficiency = 1.0;
        bank.efficiency_scale = 1e6;
        let src = SourceModel {
            pair_emission_probability_per_cycle: 0.2,
            ..SourceModel::default()
        };
        let windows: Vec<_> = (0..5).map(|i| bank.passband(i)).collect();
        let ems = sample_emissions_in_windows(&src, &windows, 10_000, 3).unwrap();
        let out = apply_storage(&bank, &ems, 10_000, 16.0, 4).unwrap();
        assert_eq!(out.recalled.len(), ems.len());
        assert!(out.noise.is_empty());
        for r in &out.recalled {
            assert!((r.delay_ns - 152.0).abs() < 1e-9);
            // zero crosstalk: recall channel matches the input offset
            assert_eq!(channel_for_offset(&bank, r.emission.signal_frequency_offset_ghz).unwrap(), Some(r.channel));
        }
    }

    #[test]
    fn out_of_band_photons_are_lost() {
        let bank = MemoryBank::five_channel(1531.93);
        let src = SourceModel {
            pair_emission_probability_per_cycle: 0.5,
            ..SourceModel::default()
        };
        let gap = SpectralWindow { lo_ghz: 3.0, hi_ghz: 12.0 };
        let ems = sample_emissions_in_windows(&src, &[gap], 1000, 1).unwrap();
        assert!(!ems.is_empty());
        let out = apply_storage(&bank, &ems, 1000, 16.0, 2).unwrap();
        assert!(out.recalled.is_empty());
    }

    #[test]
    fn table_two_shape_and_decay_limit() {
        let mut bank = MemoryBank::five_channel(1531.93);
        for ch in &mut bank.channels {
            ch.comb_decay_time_ns = Some(185.0);
        }
        let t_c = bank.channels[0].storage_time_ns();
        let rows = efficiency_table(&bank, &[90.0, t_c, 1e6]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].efficiencies.len(), 5);
        assert!(rows[0].efficiencies[0] > rows[1].efficiencies[0]);
        assert!(rows[2].efficiencies[0] < 1e-12);
        assert!((rows[1].efficiencies[0] - afc_efficiency(&bank.channels[0]).unwrap()).abs() < 1e-15);
    }
}
