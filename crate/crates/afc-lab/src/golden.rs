//! Analyses of the published tables shipped as fixtures.

use afc_core::memory::{fit_comb_decay, DecayFit};
use afc_core::quantum::{fidelity, StateMetrics, TwoQubitState};
use afc_core::tomography::{reconstruct_with_errors, MleOptions};
use serde::Serialize;

use crate::experiment::Estimate;
use crate::fixtures::{EfficiencyTable, MatrixPair, TomographyTable};
use crate::report::{published, Check};
use crate::error::Result;

/// Decay fit of one channel of the efficiency table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelDecay {
    /// 1-based.
    pub channel: usize,
    pub d1_at_zero: f64,
    pub decay_time_ns: f64,
    pub finesse: f64,
    pub d0: f64,
    /// Storage times that rise above the preceding row, left out of the fit.
    pub excluded_ns: Vec<f64>,
    /// `(storage time, measured %, model %, model − measured in pp, fitted)`.
    pub rows: Vec<(f64, f64, f64, f64, bool)>,
    /// Largest `|model − measured|` over the fitted rows, pp.
    pub max_residual_pp: f64,
}

/// Splits a column into the rows kept for fitting and the rows flagged
/// for rising above their predecessor.
pub fn monotone_rows(times: &[f64], values: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut kept = Vec::new();
    let mut flagged = Vec::new();
    for k in 0..values.len() {
        if k > 0 && values[k] > values[k - 1] {
            flagged.push(k);
        } else {
            kept.push(k);
        }
    }
    debug_assert_eq!(kept.len() + flagged.len(), times.len());
    (kept, flagged)
}

pub fn decay_fits(table: &EfficiencyTable, finesse: f64, d0: f64) -> Result<Vec<ChannelDecay>> {
    let times = &table.storage_times_ns;
    (0..table.channels())
        .map(|ch| {
            let col = table.column(ch);
            let (kept, flagged) = monotone_rows(times, &col);
            let t: Vec<f64> = kept.iter().map(|&k| times[k]).collect();
            let y: Vec<f64> = kept.iter().map(|&k| col[k] / 100.0).collect();
            let fit: DecayFit = fit_comb_decay(&t, &y, finesse, d0)?;
            let rows: Vec<_> = times
                .iter()
                .zip(&col)
                .enumerate()
                .map(|(k, (&t, &v))| {
                    let m = 100.0 * fit.efficiency_at(t);
                    (t, v, m, m - v, kept.contains(&k))
                })
                .collect();
            let max_residual_pp = rows.iter().filter(|r| r.4).fold(0.0f64, |m, r| m.max(r.3.abs()));
            Ok(ChannelDecay {
                channel: ch + 1,
                d1_at_zero: fit.d1_at_zero,
                decay_time_ns: fit.decay_time_ns,
                finesse,
                d0,
                excluded_ns: flagged.iter().map(|&k| times[k]).collect(),
                rows,
                max_residual_pp,
            })
        })
        .collect()
}

/// Channel 1 must reproduce its fitted rows within 0.1 pp; the other
/// channels are reported.
pub fn decay_checks(fits: &[ChannelDecay]) -> Vec<Check> {
    fits.iter()
        .map(|f| {
            let name = format!("ch{} decay fit max residual (pp)", f.channel);
            if f.channel == 1 {
                Check::within(name, f.max_residual_pp, 0.0, 0.1)
            } else {
                Check::info(name, f.max_residual_pp, 0.0)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateSummary {
    pub fidelity: f64,
    pub purity: f64,
    pub concurrence: f64,
    pub entanglement_of_formation: f64,
}

impl StateSummary {
    pub fn of(rho: &TwoQubitState) -> Result<Self> {
        let m = StateMetrics::of(rho)?;
        Ok(StateSummary {
            fidelity: m.fidelity_psi_plus,
            purity: m.purity,
            concurrence: m.concurrence,
            entanglement_of_formation: m.entanglement_of_formation,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixAnalysis {
    pub before: StateSummary,
    pub after: StateSummary,
    pub input_output_fidelity: f64,
}

pub fn analyze_matrices(pair: &MatrixPair) -> Result<(MatrixAnalysis, Vec<Check>)> {
    use published::*;
    let (b, a) = pair.states()?;
    let out = MatrixAnalysis {
        before: StateSummary::of(&b)?,
        after: StateSummary::of(&a)?,
        input_output_fidelity: fidelity(&b, &a)?,
    };
    let three = |name: &str, v: f64, (e, s): (f64, f64)| Check::within(name, v, e, 3.0 * s);
    let checks = vec![
        three("before fidelity", out.before.fidelity, FIDELITY_BEFORE[0]),
        three("before purity", out.before.purity, PURITY_BEFORE[0]),
        three("before EoF", out.before.entanglement_of_formation, EOF_BEFORE[0]),
        three("input/output fidelity", out.input_output_fidelity, INPUT_OUTPUT_FIDELITY[0]),
        Check::info("after fidelity", out.after.fidelity, FIDELITY_AFTER[0].0),
        Check::info("after purity", out.after.purity, PURITY_AFTER[0].0),
        Check::info("after EoF", out.after.entanglement_of_formation, EOF_AFTER[0].0),
    ];
    Ok((out, checks))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TomographyAnalysis {
    pub fidelity_to_printed: f64,
    pub fidelity: Estimate,
    pub purity: Estimate,
    pub concurrence: Estimate,
    pub entanglement_of_formation: Estimate,
    pub converged: bool,
    pub iterations: usize,
    pub density_matrix: [[[f64; 2]; 4]; 4],
}

/// MLE on the tomography table, compared with the printed after-storage
/// matrix and the channel-1 after-storage statistics.
pub fn analyze_tomography(
    table: &TomographyTable,
    printed_after: &TwoQubitState,
    opts: &MleOptions,
    trials: usize,
    seed: u64,
) -> Result<(TomographyAnalysis, TwoQubitState, Vec<Check>)> {
    use published::*;
    let rec = reconstruct_with_errors(&table.record, opts, None, trials, seed)?;
    let rho = rec.result.rho;
    let m = &rec.metrics;
    let e = &rec.errors;
    let out = TomographyAnalysis {
        fidelity_to_printed: fidelity(&rho, printed_after)?,
        fidelity: Estimate::new(m.fidelity_psi_plus, e.fidelity_psi_plus.std),
        purity: Estimate::new(m.purity, e.purity.std),
        concurrence: Estimate::new(m.concurrence, e.concurrence.std),
        entanglement_of_formation: Estimate::new(m.entanglement_of_formation, e.entanglement_of_formation.std),
        converged: rec.result.converged,
        iterations: rec.result.iterations,
        density_matrix: core::array::from_fn(|r| core::array::from_fn(|c| [rho.entry(r, c).re, rho.entry(r, c).im])),
    };
    let three = |name: &str, v: f64, (x, s): (f64, f64)| Check::within(name, v, x, 3.0 * s);
    let checks = vec![
        Check::within("fidelity to printed after-storage matrix", out.fidelity_to_printed, 1.0, 0.03),
        three("fidelity", out.fidelity.value, FIDELITY_AFTER[0]),
        three("purity", out.purity.value, PURITY_AFTER[0]),
        three("EoF", out.entanglement_of_formation.value, EOF_AFTER[0]),
    ];
    Ok((out, rho, checks))
}
