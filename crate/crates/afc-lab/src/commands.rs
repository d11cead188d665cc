//! The `simulate`, `analyze-golden` and `reproduce` commands. Each writes
//! its artifacts plus `summary.json` into the output directory and returns
//! the checks it evaluated.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use afc_core::bell::{ChshSettings, PortCombo};
use afc_core::pipeline::SignalPath;
use afc_core::quantum::{TwoQubitState, BASIS_LABELS};
use afc_core::source::sample_emissions;
use afc_core::tomography::{Setting, TomographyBasis};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::experiment::{
    fit_scan, g2_estimate, reconstruct, scan_correlations, tomography_record, Estimate, Experiment, FRINGE_ALPHAS,
};
use crate::fixtures;
use crate::formats::{format_emissions, format_matrix, format_stream, fringe_csv, histogram_csv, table_csv};
use crate::golden;
use crate::report::{all_pass, full_run, published, published_checks, Check, FullRun, PathReport};

/// Cycles of the short run whose raw streams `simulate` writes out.
pub const RAW_CYCLES: u64 = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Table2,
    Table3,
    Table4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Fig3,
    Fig4,
    Fig5,
    Fig7,
    Table1,
    Table2,
}

/// Options shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// 1-based; empty means all.
    pub channels: Vec<usize>,
    pub trials: Option<usize>,
    /// Directory holding fixture CSVs; the embedded copies otherwise.
    pub fixtures: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub command: String,
    pub seed: Option<u64>,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub details: serde_json::Value,
}

impl Outcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
        }
        crate::formats::write_file(&path, contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, command: &str, seed: Option<u64>, checks: Vec<Check>, details: serde_json::Value) -> Result<Outcome> {
        self.files.push("summary.json".into());
        let outcome = Outcome {
            command: command.into(),
            seed,
            passed: all_pass(&checks),
            checks,
            files: self.files,
            details,
        };
        crate::formats::write_file(&self.dir.join("summary.json"), &outcome.to_json())?;
        Ok(outcome)
    }
}

pub fn load_config(opts: &Options) -> Result<ExperimentConfig> {
    match &opts.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::paper()),
    }
}

pub fn experiment(opts: &Options) -> Result<Experiment> {
    let config = load_config(opts)?;
    if opts.channels.contains(&0) {
        return Err(LabError::Config("channels are numbered from 1".into()));
    }
    let channels: Vec<usize> = opts.channels.iter().map(|c| c - 1).collect();
    Experiment::new(config, opts.seed, opts.trials, &channels)
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

fn path_tag(path: SignalPath) -> &'static str {
    path.label()
}

fn bars_rows(label: &str, rho: &TwoQubitState, rows: &mut Vec<Vec<String>>) {
    for r in 0..4 {
        for c in 0..4 {
            let z = rho.entry(r, c);
            rows.push(vec![
                label.into(),
                BASIS_LABELS[r].into(),
                BASIS_LABELS[c].into(),
                f(z.re),
                f(z.im),
            ]);
        }
    }
}

const BARS_HEADER: [&str; 5] = ["matrix", "row", "col", "re", "im"];

fn statistics_rows(p: &PathReport, channel: usize, rows: &mut Vec<Vec<String>>) {
    let mut push = |q: &str, e: Estimate| {
        rows.push(vec![channel.to_string(), p.path.into(), q.into(), f(e.value), f(e.sigma)]);
    };
    push("S", p.s);
    push("S_analytic", Estimate::new(p.s_analytic, 0.0));
    push("g2", p.g2);
    push("g2_analytic", Estimate::new(p.g2_analytic, 0.0));
    push("fidelity", p.fidelity);
    push("purity", p.purity);
    push("concurrence", p.concurrence);
    push("eof", p.entanglement_of_formation);
    push("rate_hz", p.coincidence_rate_hz);
    push("rate_hz_unboosted", p.unboosted_rate_hz);
    push("signal_boost", Estimate::new(p.signal_boost, 0.0));
}

fn run_tables(run: &FullRun, out: &mut Artifacts) -> Result<()> {
    let mut stats = Vec::new();
    let mut chsh = Vec::new();
    let mut tomo = Vec::new();
    let pairs = ChshSettings::default().pairs();
    for c in &run.report.channels {
        for p in [&c.before, &c.after] {
            statistics_rows(p, c.channel, &mut stats);
            for (k, counts) in p.chsh_counts.iter().enumerate() {
                let mut row = vec![c.channel.to_string(), p.path.into(), f(pairs[k].0), f(pairs[k].1)];
                row.extend(counts.iter().map(u64::to_string));
                chsh.push(row);
            }
            for (v, subs) in p.tomography_sub_counts.iter().enumerate() {
                let basis = TomographyBasis::new(v + 1)?;
                let mut row = vec![
                    c.channel.to_string(),
                    p.path.into(),
                    (v + 1).to_string(),
                    basis.photon1.label().into(),
                    basis.photon2.label().into(),
                ];
                row.extend(subs.iter().map(|s| s.map_or("-".into(), |n| n.to_string())));
                row.push(subs.iter().flatten().sum::<u64>().to_string());
                tomo.push(row);
            }
        }
        stats.push(vec![
            c.channel.to_string(),
            "in/out".into(),
            "input_output_fidelity".into(),
            f(c.input_output_fidelity.value),
            f(c.input_output_fidelity.sigma),
        ]);
        for (other, g) in &c.uncorrelated_g2 {
            stats.push(vec![
                c.channel.to_string(),
                "after".into(),
                format!("g2_vs_{other}"),
                f(g.value),
                f(g.sigma),
            ]);
        }
    }
    out.put("statistics.csv", &table_csv(&["channel", "path", "quantity", "value", "sigma"], &stats)?)?;
    out.put(
        "chsh_counts.csv",
        &table_csv(&["channel", "path", "alpha_rad", "beta_rad", "c11", "c12", "c21", "c22"], &chsh)?,
    )?;
    let mut header = vec!["channel", "path", "v", "photon1", "photon2"];
    header.extend(Setting::ALL.iter().map(|s| s.name()));
    header.push("n_v");
    out.put("tomography_counts.csv", &table_csv(&header, &tomo)?)?;
    for ((ch, path), rho) in &run.states {
        out.put(&format!("rho_ch{}_{}.txt", ch + 1, path_tag(*path)), &format_matrix(rho.matrix()))?;
    }
    Ok(())
}

/// Full simulated acquisition of the selected channels, both paths.
pub fn simulate(opts: &Options) -> Result<Outcome> {
    let exp = experiment(opts)?;
    let mut out = Artifacts::new(&opts.out)?;
    let run = full_run(&exp)?;
    out.put("report.json", &run.report.to_json())?;
    run_tables(&run, &mut out)?;
    let emissions = sample_emissions(&exp.config.source, RAW_CYCLES.min(20_000), exp.seed)?;
    out.put("raw/emissions.txt", &format_emissions(&emissions))?;
    for path in [SignalPath::Bypass, SignalPath::Stored] {
        let raw = exp.raw_run(path, RAW_CYCLES)?;
        for s in &raw.channels {
            let tag = format!("ch{}_{}", s.channel + 1, path_tag(path));
            out.put(&format!("raw/idler_{tag}.txt"), &format_stream(&s.idler))?;
            out.put(&format!("raw/signal_{tag}.txt"), &format_stream(&s.signal))?;
        }
        let ch = exp.channels[0];
        let h = exp.histogram(path, ch, ChshSettings::default().pairs()[0], 8.0, false)?;
        out.put(&format!("raw/histogram_ch{}_{}.csv", ch + 1, path_tag(path)), &histogram_csv(&h)?)?;
    }
    let checks = run.report.checks.clone();
    out.finish("simulate", Some(exp.seed), checks, json!({ "report": "report.json" }))
}

pub fn analyze_golden(dataset: Dataset, opts: &Options) -> Result<Outcome> {
    let dir = opts.fixtures.as_deref();
    let mut out = Artifacts::new(&opts.out)?;
    match dataset {
        Dataset::Table2 => {
            let config = load_config(opts)?;
            let (checks, details) = table2_outputs(&config, dir, &mut out)?;
            out.finish("analyze-golden table2", None, checks, details)
        }
        Dataset::Table3 => {
            let config = load_config(opts)?;
            let (_, after) = fixtures::table4(dir)?.states()?;
            let table = fixtures::table3(dir)?;
            let opts_mle = afc_core::tomography::MleOptions {
                exposure_model: config.run.exposure_model,
                ..Default::default()
            };
            let trials = opts.trials.unwrap_or(config.run.monte_carlo_trials);
            let seed = opts.seed.unwrap_or(config.seed);
            let (analysis, rho, checks) = golden::analyze_tomography(&table, &after, &opts_mle, trials, seed)?;
            out.put("rho_table3.txt", &format_matrix(rho.matrix()))?;
            let mut rows = Vec::new();
            bars_rows("reconstructed", &rho, &mut rows);
            bars_rows("printed", &after, &mut rows);
            out.put("matrix_bars.csv", &table_csv(&BARS_HEADER, &rows)?)?;
            out.finish("analyze-golden table3", Some(seed), checks, serde_json::to_value(&analysis)?)
        }
        Dataset::Table4 => {
            let pair = fixtures::table4(dir)?;
            let (analysis, checks) = golden::analyze_matrices(&pair)?;
            let (b, a) = pair.states()?;
            let mut rows = Vec::new();
            bars_rows("before", &b, &mut rows);
            bars_rows("after", &a, &mut rows);
            out.put("matrix_bars.csv", &table_csv(&BARS_HEADER, &rows)?)?;
            out.finish("analyze-golden table4", None, checks, serde_json::to_value(&analysis)?)
        }
    }
}

fn table2_outputs(
    config: &ExperimentConfig,
    dir: Option<&Path>,
    out: &mut Artifacts,
) -> Result<(Vec<Check>, serde_json::Value)> {
    let table = fixtures::table2(dir)?;
    let c = &config.bank.channels[0];
    let fits = golden::decay_fits(&table, c.finesse, c.d0)?;
    let mut rows = Vec::new();
    let mut params = Vec::new();
    for fit in &fits {
        for &(t, measured, model, residual, fitted) in &fit.rows {
            rows.push(vec![
                fit.channel.to_string(),
                format!("{t}"),
                format!("{measured:.4}"),
                format!("{model:.4}"),
                format!("{residual:.4}"),
                if fitted { "fit" } else { "excluded" }.into(),
            ]);
        }
        params.push(vec![
            fit.channel.to_string(),
            f(fit.d1_at_zero),
            f(fit.decay_time_ns),
            f(fit.finesse),
            f(fit.d0),
            format!("{:.4}", fit.max_residual_pp),
        ]);
    }
    out.put(
        "table2_residuals.csv",
        &table_csv(
            &["channel", "storage_time_ns", "measured_pct", "model_pct", "residual_pp", "status"],
            &rows,
        )?,
    )?;
    out.put(
        "table2_fit.csv",
        &table_csv(&["channel", "d1_at_zero", "decay_time_ns", "finesse", "d0", "max_residual_pp"], &params)?,
    )?;
    Ok((golden::decay_checks(&fits), serde_json::to_value(&fits)?))
}

pub fn reproduce(target: Target, opts: &Options) -> Result<Outcome> {
    if target == Target::Table2 {
        let config = load_config(opts)?;
        let mut out = Artifacts::new(&opts.out)?;
        let (checks, details) = table2_outputs(&config, opts.fixtures.as_deref(), &mut out)?;
        return out.finish("reproduce table2", None, checks, details);
    }
    let exp = experiment(opts)?;
    let mut out = Artifacts::new(&opts.out)?;
    let seed = Some(exp.seed);
    match target {
        Target::Fig3 => {
            let (checks, details) = fig3(&exp, &mut out)?;
            out.finish("reproduce fig3", seed, checks, details)
        }
        Target::Fig4 => {
            let (checks, details) = fig4(&exp, &mut out)?;
            out.finish("reproduce fig4", seed, checks, details)
        }
        Target::Fig5 => {
            let (checks, details) = fig5(&exp, &mut out)?;
            out.finish("reproduce fig5", seed, checks, details)
        }
        Target::Fig7 => {
            fig7(&exp, &mut out)?;
            out.finish("reproduce fig7", seed, Vec::new(), json!({}))
        }
        Target::Table1 => {
            let run = full_run(&exp)?;
            out.put("report.json", &run.report.to_json())?;
            run_tables(&run, &mut out)?;
            out.put("table1.csv", &table1_csv(&run)?)?;
            let mut checks = run.report.checks.clone();
            checks.extend(published_checks(&run.report));
            out.finish("reproduce table1", seed, checks, json!({ "report": "report.json" }))
        }
        Target::Table2 => unreachable!(),
    }
}

fn fig3(exp: &Experiment, out: &mut Artifacts) -> Result<(Vec<Check>, serde_json::Value)> {
    let mut checks = Vec::new();
    let mut correlated = Vec::new();
    let mut cross = Vec::new();
    for path in [SignalPath::Bypass, SignalPath::Stored] {
        let run = exp.g2_run(path)?;
        for (&ch, summary) in &run.channels {
            let k = 20_000 + 100 * ch as u64 + path as u64;
            let g = g2_estimate(&summary.tally, exp.trials, exp.error_seed(k))?;
            correlated.push(vec![(ch + 1).to_string(), path.label().into(), f(g.value), f(g.sigma)]);
            checks.push(Check::in_range(format!("ch{} {} correlated g2", ch + 1, path.label()), g.value, 14.0, 26.0));
            if path == SignalPath::Stored {
                for (&other, tally) in &summary.cross {
                    let g = g2_estimate(tally, exp.trials, exp.error_seed(k + 10 + other as u64))?;
                    cross.push(vec![(ch + 1).to_string(), (other + 1).to_string(), f(g.value), f(g.sigma)]);
                    checks.push(Check::in_range(
                        format!("ch{} idler vs ch{} signal g2", ch + 1, other + 1),
                        g.value,
                        0.8,
                        1.2,
                    ));
                }
            }
        }
    }
    out.put("g2_correlated.csv", &table_csv(&["channel", "path", "g2", "sigma"], &correlated)?)?;
    out.put(
        "g2_uncorrelated.csv",
        &table_csv(&["idler_channel", "signal_channel", "g2", "sigma"], &cross)?,
    )?;
    let ch = exp.channels[0];
    let storage_ns = exp.pipeline.storage_delay_ps(SignalPath::Stored, ch) * 1e-3;
    let h = exp.histogram(SignalPath::Stored, ch, ChshSettings::default().pairs()[0], storage_ns + 5.0, true)?;
    out.put(&format!("histogram_ch{}_after.csv", ch + 1), &histogram_csv(&h)?)?;
    Ok((checks, json!({ "storage_delay_ns": storage_ns, "published_g2": published::G2_CORRELATED })))
}

fn fig4(exp: &Experiment, out: &mut Artifacts) -> Result<(Vec<Check>, serde_json::Value)> {
    let ch = exp.channels[0];
    let mut fits_rows = Vec::new();
    let mut corr_rows = Vec::new();
    let mut checks = Vec::new();
    let mut quartet = BTreeMap::new();
    let mut scans = Vec::new();
    for (a, &alpha) in FRINGE_ALPHAS.iter().enumerate() {
        let scan = exp.fringe_scan(SignalPath::Stored, ch, alpha)?;
        let deg = (alpha.to_degrees()).round() as i64;
        out.put(&format!("fringe_ch{}_alpha{deg}.csv", ch + 1), &fringe_csv(&scan)?)?;
        let fits = fit_scan(&scan, exp.trials, exp.error_seed(30_000 + a as u64))?;
        for (combo, fit) in &fits {
            fits_rows.push(vec![
                f(alpha),
                combo.name().into(),
                f(fit.visibility),
                f(fit.sigma_visibility),
                f(fit.phase_offset),
                f(fit.amplitude),
            ]);
            if a == 0 {
                quartet.insert(combo.name(), (fit.visibility, fit.sigma_visibility));
                let (v, _) = published::VISIBILITIES[combo.index()];
                checks.push(Check::within(format!("V {}", combo.name()), fit.visibility, v, 0.05));
            }
        }
        for (beta, e) in scan_correlations(&scan, exp.trials, exp.error_seed(31_000 + a as u64))? {
            corr_rows.push(vec![f(alpha), f(beta), f(e.value), f(e.sigma)]);
        }
        scans.push(scan);
    }
    for combo in PortCombo::ALL {
        let rows: Vec<Vec<String>> = scans[0]
            .beta_values
            .iter()
            .enumerate()
            .map(|(k, b)| {
                vec![
                    f(*b),
                    scans[0].counts[k][combo.index()].to_string(),
                    scans[1].counts[k][combo.index()].to_string(),
                ]
            })
            .collect();
        out.put(
            &format!("fringe_{}.csv", combo.name().to_lowercase()),
            &table_csv(&["beta_rad", "counts_alpha0", "counts_alpha90"], &rows)?,
        )?;
    }
    out.put(
        "fringe_fits.csv",
        &table_csv(&["alpha_rad", "combo", "visibility", "sigma", "phase_offset_rad", "amplitude"], &fits_rows)?,
    )?;
    out.put("correlation.csv", &table_csv(&["alpha_rad", "beta_rad", "E", "sigma"], &corr_rows)?)?;
    debug_assert_eq!(FRINGE_ALPHAS[1], FRAC_PI_2);
    Ok((checks, json!({ "channel": ch + 1, "visibilities_alpha0": quartet })))
}

fn fig5(exp: &Experiment, out: &mut Artifacts) -> Result<(Vec<Check>, serde_json::Value)> {
    let ch = exp.channels[0];
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut before: Option<TwoQubitState> = None;
    let mut details = serde_json::Map::new();
    for (k, path) in [SignalPath::Bypass, SignalPath::Stored].into_iter().enumerate() {
        let runs = exp.tomography_runs(path)?;
        let record = tomography_record(&runs, ch);
        let rec = reconstruct(exp, &record, before.as_ref(), exp.error_seed(50_000 + k as u64))?;
        let rho = rec.result.rho;
        bars_rows(path.label(), &rho, &mut rows);
        out.put(&format!("rho_ch{}_{}.txt", ch + 1, path.label()), &format_matrix(rho.matrix()))?;
        let (fid, pub_fid) = if path == SignalPath::Bypass {
            (rec.metrics.fidelity_psi_plus, published::FIDELITY_BEFORE[0].0)
        } else {
            (rec.metrics.fidelity_psi_plus, published::FIDELITY_AFTER[0].0)
        };
        checks.push(Check::info(format!("ch{} {} fidelity", ch + 1, path.label()), fid, pub_fid));
        details.insert(
            path.label().into(),
            json!({ "fidelity": fid, "sigma": rec.errors.fidelity_psi_plus.std, "purity": rec.metrics.purity }),
        );
        before.get_or_insert(rho);
    }
    out.put("matrix_bars.csv", &table_csv(&BARS_HEADER, &rows)?)?;
    Ok((checks, serde_json::Value::Object(details)))
}

fn fig7(exp: &Experiment, out: &mut Artifacts) -> Result<()> {
    let ch = exp.channels[0];
    let dd = Setting::ALL[0].phases();
    for path in [SignalPath::Bypass, SignalPath::Stored] {
        let h = exp.histogram(path, ch, dd, 4.0, false)?;
        out.put(&format!("histogram_dd_ch{}_{}.csv", ch + 1, path.label()), &histogram_csv(&h)?)?;
        let run = exp.dd_run(path)?;
        let counts = &run.channels[&ch].counts;
        let mut rows = Vec::new();
        for (pi, port_i) in afc_core::analyzer::Port::ALL.into_iter().enumerate() {
            for (ps, port_s) in afc_core::analyzer::Port::ALL.into_iter().enumerate() {
                let t = counts.slot_table(port_i, port_s);
                for (si, row) in t.iter().enumerate() {
                    for (ss, n) in row.iter().enumerate() {
                        rows.push(vec![
                            format!("A{}", pi + 1),
                            format!("B{}", ps + 1),
                            si.to_string(),
                            ss.to_string(),
                            n.to_string(),
                        ]);
                    }
                }
            }
        }
        out.put(
            &format!("slots_dd_ch{}_{}.csv", ch + 1, path.label()),
            &table_csv(&["idler_port", "signal_port", "idler_slot", "signal_slot", "count"], &rows)?,
        )?;
    }
    Ok(())
}

fn table1_csv(run: &FullRun) -> Result<String> {
    use published::*;
    type Pick = fn(&PathReport) -> Estimate;
    type Published = Option<[(f64, f64); 5]>;
    let quantities: [(&str, Pick, Published, Published); 5] = [
        ("S", |p| p.s, Some(S_BEFORE), Some(S_AFTER)),
        ("fidelity", |p| p.fidelity, Some(FIDELITY_BEFORE), Some(FIDELITY_AFTER)),
        ("purity", |p| p.purity, Some(PURITY_BEFORE), Some(PURITY_AFTER)),
        ("eof", |p| p.entanglement_of_formation, Some(EOF_BEFORE), Some(EOF_AFTER)),
        ("rate_hz_unboosted", |p| p.unboosted_rate_hz, None, Some(RATE_AFTER_HZ)),
    ];
    let mut rows = Vec::new();
    let published_cells = |table: Option<[(f64, f64); 5]>, i: usize| match table.and_then(|t| t.get(i).copied()) {
        Some((v, s)) => [f(v), f(s)],
        None => [String::new(), String::new()],
    };
    for (name, pick, before, after) in quantities {
        for (column, table, is_after) in [("in", before, false), ("out", after, true)] {
            for c in &run.report.channels {
                let e = pick(if is_after { &c.after } else { &c.before });
                let [pv, ps] = published_cells(table, c.channel - 1);
                rows.push(vec![name.into(), column.into(), c.channel.to_string(), f(e.value), f(e.sigma), pv, ps]);
            }
        }
    }
    for c in &run.report.channels {
        let [pv, ps] = published_cells(Some(INPUT_OUTPUT_FIDELITY), c.channel - 1);
        rows.push(vec![
            "input_output_fidelity".into(),
            "in/out".into(),
            c.channel.to_string(),
            f(c.input_output_fidelity.value),
            f(c.input_output_fidelity.sigma),
            pv,
            ps,
        ]);
    }
    table_csv(
        &["quantity", "column", "channel", "value", "sigma", "published", "published_sigma"],
        &rows,
    )
}
