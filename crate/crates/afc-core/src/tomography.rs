//! Two-qubit state tomography from the sixteen product bases over
//! `{e, l, D, R}`, measured with four interferometer phase settings.
//!
//! Counts are assembled from per-setting slot tables of one detector pair,
//! and the state is reconstructed by Poisson maximum likelihood over
//! `ρ = T†T / tr(T†T)` with `T` lower triangular.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use core::fmt;

use rand_distr::{Distribution, Poisson};

#[allow(unused_imports)]
use num_traits::Float;

use crate::bell::sample_std;
use crate::linalg::{solve_dense, symmetric_eigen, CMat4, C64, I, ONE, ZERO};
use crate::quantum::{bell_psi_plus, fidelity, StateMetrics, TimeBinKet, TwoQubitKet, TwoQubitState};
use crate::rng::{derive_seed, rng_from_seed};
use crate::Error;

/// Single-photon tomography state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BasisState {
    E,
    L,
    D,
    R,
}

impl BasisState {
    pub const ALL: [BasisState; 4] = [BasisState::E, BasisState::L, BasisState::D, BasisState::R];

    pub fn ket(self) -> TimeBinKet {
        match self {
            BasisState::E => TimeBinKet::early(),
            BasisState::L => TimeBinKet::late(),
            BasisState::D => TimeBinKet::diagonal(),
            BasisState::R => TimeBinKet::right(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BasisState::E => "e",
            BasisState::L => "l",
            BasisState::D => "D",
            BasisState::R => "R",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "e" => Some(BasisState::E),
            "l" => Some(BasisState::L),
            "D" => Some(BasisState::D),
            "R" => Some(BasisState::R),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Energy-basis interferometer setting: `D` is phase 0, `R` is `-π/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Setting {
    DD,
    DR,
    RD,
    RR,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::DD, Setting::DR, Setting::RD, Setting::RR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::DD => "DD",
            Setting::DR => "DR",
            Setting::RD => "RD",
            Setting::RR => "RR",
        }
    }

    /// Middle-slot states selected on photon 1 and photon 2.
    pub fn states(self) -> (BasisState, BasisState) {
        match self {
            Setting::DD => (BasisState::D, BasisState::D),
            Setting::DR => (BasisState::D, BasisState::R),
            Setting::RD => (BasisState::R, BasisState::D),
            Setting::RR => (BasisState::R, BasisState::R),
        }
    }

    /// Interferometer phases `(α, β)` for photon 1 and photon 2.
    pub fn phases(self) -> (f64, f64) {
        let p = |b: BasisState| if b == BasisState::D { 0.0 } else { -FRAC_PI_2 };
        let (a, b) = self.states();
        (p(a), p(b))
    }

    /// Whether this setting projects photon 1 / photon 2 onto `(a, b)`.
    pub fn measures(self, a: BasisState, b: BasisState) -> bool {
        let (x, y) = self.states();
        let ok = |s: BasisState, m: BasisState| matches!(s, BasisState::E | BasisState::L) || s == m;
        ok(a, x) && ok(b, y)
    }

    /// Slot that selects `state` under this setting's middle state `m`.
    fn slot_for(state: BasisState, m: BasisState) -> Option<usize> {
        match state {
            BasisState::E => Some(0),
            BasisState::L => Some(2),
            s if s == m => Some(1),
            _ => None,
        }
    }
}

/// Post-selection weight of one photon's outcome on a single detector:
/// `¼` for the early or late slot, `½` for the middle slot.
pub fn slot_weight(state: BasisState) -> f64 {
    match state {
        BasisState::E | BasisState::L => 0.25,
        BasisState::D | BasisState::R => 0.5,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TomographyBasis {
    /// 1..=16
    pub index: usize,
    /// First tensor factor (idler).
    pub photon1: BasisState,
    /// Second tensor factor (signal).
    pub photon2: BasisState,
}

impl TomographyBasis {
    pub fn new(index: usize) -> Result<Self, Error> {
        if !(1..=16).contains(&index) {
            return Err(Error::BasisIndex(index));
        }
        let k = index - 1;
        Ok(TomographyBasis {
            index,
            photon1: BasisState::ALL[k / 4],
            photon2: BasisState::ALL[k % 4],
        })
    }

    pub fn all() -> [TomographyBasis; 16] {
        core::array::from_fn(|k| TomographyBasis {
            index: k + 1,
            photon1: BasisState::ALL[k / 4],
            photon2: BasisState::ALL[k % 4],
        })
    }

    pub fn of(photon1: BasisState, photon2: BasisState) -> Self {
        TomographyBasis {
            index: 4 * photon1.index() + photon2.index() + 1,
            photon1,
            photon2,
        }
    }

    pub fn ket(&self) -> TwoQubitKet {
        TwoQubitKet::product(&self.photon1.ket(), &self.photon2.ket())
    }

    pub fn projector(&self) -> CMat4 {
        *self.ket().projector().matrix()
    }

    /// Per-setting detection weight, the product of the two slot weights.
    pub fn weight(&self) -> f64 {
        slot_weight(self.photon1) * slot_weight(self.photon2)
    }

    pub fn settings(&self) -> impl Iterator<Item = Setting> + '_ {
        Setting::ALL.into_iter().filter(move |s| s.measures(self.photon1, self.photon2))
    }
}

impl fmt::Display for TomographyBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.photon1.label(), self.photon2.label())
    }
}

/// `|ψ₁⟩⟨ψ₁| ⊗ |ψ₂⟩⟨ψ₂|` for basis `v` in 1..=16.
pub fn basis_projector(v: usize) -> Result<CMat4, Error> {
    Ok(TomographyBasis::new(v)?.projector())
}

/// Tomography counts: per-basis totals plus per-setting sub-counts, `None`
/// where a setting cannot project onto that basis.
#[derive(Clone, Debug, PartialEq)]
pub struct CountRecord {
    pub sub_counts: [[Option<u64>; 4]; 16],
}

impl CountRecord {
    pub fn zeros() -> Self {
        let mut sub_counts = [[None; 4]; 16];
        for b in TomographyBasis::all() {
            for s in b.settings() {
                sub_counts[b.index - 1][s.index()] = Some(0);
            }
        }
        CountRecord { sub_counts }
    }

    /// Builds a record from sub-count rows, checking that the present
    /// cells match the setting pattern.
    pub fn from_sub_counts(rows: [[Option<u64>; 4]; 16]) -> Result<Self, Error> {
        let template = CountRecord::zeros();
        for (v, (row, t)) in rows.iter().zip(template.sub_counts.iter()).enumerate() {
            for s in Setting::ALL {
                match (row[s.index()], t[s.index()]) {
                    (Some(_), None) => {
                        return Err(Error::InvalidParameter {
                            name: "count record",
                            reason: format!("basis {} cannot be measured in setting {}", v + 1, s.name()),
                        })
                    }
                    (None, Some(_)) => {
                        return Err(Error::MissingCell(format!("basis {} setting {}", v + 1, s.name())));
                    }
                    _ => {}
                }
            }
        }
        Ok(CountRecord { sub_counts: rows })
    }

    pub fn totals(&self) -> [u64; 16] {
        core::array::from_fn(|v| self.sub_counts[v].iter().flatten().sum())
    }

    pub fn totals_f64(&self) -> [f64; 16] {
        self.totals().map(|x| x as f64)
    }

    /// Total counts per setting.
    pub fn setting_totals(&self) -> [u64; 4] {
        core::array::from_fn(|s| self.sub_counts.iter().filter_map(|r| r[s]).sum())
    }

    /// Present sub-counts flattened in `(basis, setting)` order.
    pub fn flatten(&self) -> Vec<u64> {
        self.sub_counts.iter().flatten().flatten().copied().collect()
    }

    /// Inverse of [`CountRecord::flatten`].
    pub fn with_flat(&self, flat: &[u64]) -> CountRecord {
        let mut out = self.clone();
        let mut k = 0;
        for row in out.sub_counts.iter_mut() {
            for cell in row.iter_mut().flatten() {
                *cell = flat[k];
                k += 1;
            }
        }
        out
    }
}

/// Per-setting 3×3 slot tables (`[photon1 slot][photon2 slot]`) for one
/// detector pair, settings in [`Setting::ALL`] order.
pub type SettingTables = [[[u64; 3]; 3]; 4];

/// Maps every slot-pair cell of every setting onto its tomography basis and
/// sums duplicated bases.
pub fn assemble_counts(settings: &SettingTables) -> CountRecord {
    let mut rec = CountRecord::zeros();
    for s in Setting::ALL {
        let (m1, m2) = s.states();
        for b in TomographyBasis::all() {
            if let (Some(i), Some(j)) = (Setting::slot_for(b.photon1, m1), Setting::slot_for(b.photon2, m2)) {
                rec.sub_counts[b.index - 1][s.index()] = Some(settings[s.index()][i][j]);
            }
        }
    }
    rec
}

/// How per-basis exposures are derived from the acquisition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ExposureModel {
    /// Every setting integrates equally long; a basis collects its slot
    /// weight once per setting that measures it.
    #[default]
    EqualAcquisition,
    /// Like [`ExposureModel::EqualAcquisition`], with each setting's
    /// contribution scaled by its share of the total counts.
    SettingTotals,
}

/// Relative exposure of each basis. Only ratios matter: the overall
/// intensity is profiled out of the likelihood.
pub fn exposures(record: &CountRecord, model: ExposureModel) -> [f64; 16] {
    let scale: [f64; 4] = match model {
        ExposureModel::EqualAcquisition => [1.0; 4],
        ExposureModel::SettingTotals => {
            let t = record.setting_totals();
            let mean = t.iter().sum::<u64>() as f64 / 4.0;
            if mean > 0.0 {
                t.map(|x| x as f64 / mean)
            } else {
                [1.0; 4]
            }
        }
    };
    let mut e = [0.0; 16];
    for b in TomographyBasis::all() {
        e[b.index - 1] = b.settings().map(|s| scale[s.index()] * b.weight()).sum();
    }
    e
}

/// `μ_v = exposure_v · tr[ρ Π_v]`
pub fn expected_counts(rho: &TwoQubitState, exposure: &[f64; 16]) -> Result<[f64; 16], Error> {
    if exposure.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "exposure",
            reason: String::from("every basis needs a positive exposure"),
        });
    }
    let projectors = projectors();
    Ok(core::array::from_fn(|v| {
        exposure[v] * rho.matrix().trace_product(&projectors[v]).re.max(0.0)
    }))
}

fn projectors() -> [CMat4; 16] {
    TomographyBasis::all().map(|b| b.projector())
}

/// Condition number of the 16×16 Gram matrix `tr(Π_v Π_w)`.
pub fn gram_condition_number() -> f64 {
    let p = projectors();
    let mut g = [0.0; 256];
    for v in 0..16 {
        for w in 0..16 {
            g[16 * v + w] = p[v].trace_product(&p[w]).re;
        }
    }
    let mut vals = [0.0; 16];
    let mut vecs = [0.0; 256];
    symmetric_eigen(&mut g, 16, &mut vals, &mut vecs);
    let max = vals.iter().fold(f64::MIN, |a, &b| a.max(b));
    let min = vals.iter().fold(f64::MAX, |a, &b| a.min(b.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Condition number of the linear map from Hermitian matrices to the 16
/// outcome probabilities, `√` of [`gram_condition_number`].
pub fn measurement_condition_number() -> f64 {
    gram_condition_number().sqrt()
}

/// Informational-completeness guard on [`measurement_condition_number`].
pub const MAX_CONDITION_NUMBER: f64 = 100.0;

/// Hermitian basis of 4×4 matrices: diagonal units, then symmetric and
/// antisymmetric off-diagonal pairs.
fn hermitian_basis() -> [CMat4; 16] {
    let mut out = [CMat4::zeros(); 16];
    let mut k = 0;
    for d in 0..4 {
        out[k].0[d][d] = ONE;
        k += 1;
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            out[k].0[i][j] = ONE;
            out[k].0[j][i] = ONE;
            out[k + 1].0[i][j] = I;
            out[k + 1].0[j][i] = -I;
            k += 2;
        }
    }
    out
}

/// Unconstrained linear inversion of `p_v ∝ n_v / exposure_v`, normalized to
/// unit trace. The result is Hermitian but may be indefinite.
pub fn linear_inversion(counts: &[f64; 16], exposure: &[f64; 16]) -> Result<CMat4, Error> {
    let p = projectors();
    let basis = hermitian_basis();
    let mut m = [0.0; 256];
    let mut rhs = [0.0; 16];
    for v in 0..16 {
        for k in 0..16 {
            m[16 * v + k] = p[v].trace_product(&basis[k]).re;
        }
        rhs[v] = counts[v] / exposure[v];
    }
    solve_dense(&mut m, &mut rhs, 16).ok_or(Error::NotInformationallyComplete {
        condition: f64::INFINITY,
    })?;
    let mut rho = CMat4::zeros();
    for k in 0..16 {
        rho = rho + basis[k].scale(rhs[k]);
    }
    let tr = rho.trace().re;
    if !(tr > 0.0) {
        return Err(Error::NoCounts("linear inversion has nonpositive trace"));
    }
    Ok(rho.scale(1.0 / tr))
}

/// Number of real parameters of the triangular factor.
pub const N_PARAMS: usize = 16;

const OFF_DIAG: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

/// Lower-triangular `T` from its 16 real parameters: four real diagonal
/// entries, then real and imaginary parts of the six sub-diagonal entries.
pub fn t_from_params(x: &[f64; N_PARAMS]) -> CMat4 {
    let mut t = CMat4::zeros();
    for d in 0..4 {
        t.0[d][d] = C64::new(x[d], 0.0);
    }
    for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
        t.0[i][j] = C64::new(x[4 + 2 * k], x[5 + 2 * k]);
    }
    t
}

pub fn params_from_t(t: &CMat4) -> [f64; N_PARAMS] {
    let mut x = [0.0; N_PARAMS];
    for d in 0..4 {
        x[d] = t.0[d][d].re;
    }
    for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
        x[4 + 2 * k] = t.0[i][j].re;
        x[5 + 2 * k] = t.0[i][j].im;
    }
    x
}

/// `ρ = T†T / tr(T†T)`; `None` when `T = 0`.
pub fn rho_from_params(x: &[f64; N_PARAMS]) -> Option<CMat4> {
    let t = t_from_params(x);
    let m = t.adjoint() * t;
    let tr = m.trace().re;
    if tr > 0.0 && tr.is_finite() {
        Some(m.scale(1.0 / tr))
    } else {
        None
    }
}

/// Parameters with `T†T = ρ` for a positive definite `ρ`.
fn params_from_rho(rho: &CMat4) -> Option<[f64; N_PARAMS]> {
    // Cholesky of the index-reversed matrix: JρJ = L L†, then T = J L† J.
    let mut a = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = rho.0[3 - i][3 - j];
        }
    }
    let mut l = [[ZERO; 4]; 4];
    for j in 0..4 {
        let mut d = a[j][j].re;
        for k in 0..j {
            d -= l[j][k].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j][j] = C64::new(d, 0.0);
        for i in (j + 1)..4 {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k].conj();
            }
            l[i][j] = s / d;
        }
    }
    let mut t = CMat4::zeros();
    for i in 0..4 {
        for j in 0..=i {
            t.0[i][j] = l[3 - j][3 - i].conj();
        }
    }
    Some(params_from_t(&t))
}

/// Poisson log-likelihood with the overall intensity profiled out:
/// `L = Σ n_v ln(E_v p_v) − N ln(Σ E_v p_v)` (constants dropped), where
/// `p_v = tr[ρ Π_v]`.
#[derive(Clone, Debug)]
pub struct Likelihood {
    counts: [f64; 16],
    exposure: [f64; 16],
    projectors: [CMat4; 16],
    total: f64,
}

impl Likelihood {
    pub fn new(counts: [f64; 16], exposure: [f64; 16]) -> Result<Self, Error> {
        if counts.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "counts",
                reason: String::from("counts must be finite and nonnegative"),
            });
        }
        if exposure.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "exposure",
                reason: String::from("every basis needs a positive exposure"),
            });
        }
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NoCounts("tomography record is empty"));
        }
        Ok(Likelihood {
            counts,
            exposure,
            projectors: projectors(),
            total,
        })
    }

    pub fn of_state(&self, rho: &CMat4) -> f64 {
        let mut sum_ep = 0.0;
        let mut l = 0.0;
        for v in 0..16 {
            let p = rho.trace_product(&self.projectors[v]).re;
            let ep = self.exposure[v] * p;
            sum_ep += ep;
            if self.counts[v] > 0.0 {
                if !(ep > 0.0) {
                    return f64::NEG_INFINITY;
                }
                l += self.counts[v] * ep.ln();
            }
        }
        l - self.total * sum_ep.ln()
    }

    pub fn value(&self, x: &[f64; N_PARAMS]) -> f64 {
        match rho_from_params(x) {
            Some(rho) => self.of_state(&rho),
            None => f64::NEG_INFINITY,
        }
    }

    /// Analytic gradient of [`Likelihood::value`].
    pub fn gradient(&self, x: &[f64; N_PARAMS]) -> [f64; N_PARAMS] {
        let t = t_from_params(x);
        let m = t.adjoint() * t;
        let tr = m.trace().re;
        let rho = m.scale(1.0 / tr);
        let mut sum_ep = 0.0;
        let mut p = [0.0; 16];
        for v in 0..16 {
            p[v] = rho.trace_product(&self.projectors[v]).re;
            sum_ep += self.exposure[v] * p[v];
        }
        // dL/dp_v, then K = Σ (dL/dp_v) Π_v and H = (K − tr(ρK)) / tr M.
        let mut k = CMat4::zeros();
        let mut c = 0.0;
        for v in 0..16 {
            let mut d = -self.total * self.exposure[v] / sum_ep;
            if self.counts[v] > 0.0 {
                d += self.counts[v] / p[v];
            }
            c += d * p[v];
            k = k + self.projectors[v].scale(d);
        }
        let h = (k - CMat4::identity().scale(c)).scale(1.0 / tr);
        t_gradient(&h, &t)
    }
}

/// Gradient of `tr(T†T H)` with respect to the parameters of `T`.
fn t_gradient(h: &CMat4, t: &CMat4) -> [f64; N_PARAMS] {
    let ht = *h * t.adjoint();
    let mut g = [0.0; N_PARAMS];
    for d in 0..4 {
        g[d] = 2.0 * ht.0[d][d].re;
    }
    for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
        g[4 + 2 * k] = 2.0 * ht.0[j][i].re;
        g[5 + 2 * k] = -2.0 * ht.0[j][i].im;
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub exposure_model: ExposureModel,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iterations: 10_000,
            tolerance: 1e-9,
            exposure_model: ExposureModel::EqualAcquisition,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    pub rho: TwoQubitState,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximum-likelihood reconstruction from a count record.
pub fn mle_reconstruct(record: &CountRecord, opts: &MleOptions) -> Result<ReconstructionResult, Error> {
    let exposure = exposures(record, opts.exposure_model);
    mle_from_totals(&record.totals_f64(), &exposure, opts)
}

/// Maximum-likelihood reconstruction from per-basis totals (possibly
/// non-integer) and relative exposures.
pub fn mle_from_totals(counts: &[f64; 16], exposure: &[f64; 16], opts: &MleOptions) -> Result<ReconstructionResult, Error> {
    let cond = measurement_condition_number();
    if !(cond < MAX_CONDITION_NUMBER) {
        return Err(Error::NotInformationallyComplete { condition: cond });
    }
    let lik = Likelihood::new(*counts, *exposure)?;
    let start = initial_params(counts, exposure);
    let (x, value, iterations, converged) = maximize(&lik, start, opts);
    let rho = rho_from_params(&x).ok_or(Error::FitDiverged { iterations })?;
    Ok(ReconstructionResult {
        rho: TwoQubitState::from_trusted(rho.hermitian_part()),
        log_likelihood: value,
        iterations,
        converged,
    })
}

fn initial_params(counts: &[f64; 16], exposure: &[f64; 16]) -> [f64; N_PARAMS] {
    let fallback = CMat4::identity().scale(0.25);
    let rho = linear_inversion(counts, exposure)
        .map(|r| {
            let clipped = r.hermitian_map(|x| x.max(0.0));
            let tr = clipped.trace().re;
            if tr > 0.0 {
                clipped.scale(0.98 / tr) + fallback.scale(0.02)
            } else {
                fallback
            }
        })
        .unwrap_or(fallback);
    params_from_rho(&rho)
        .or_else(|| params_from_rho(&fallback))
        .unwrap_or([0.0; N_PARAMS])
}

// Objective for the optimizer: the likelihood with a quadratic pin on
// tr(T†T) = 1, which removes the flat scaling direction.
fn objective(lik: &Likelihood, x: &[f64; N_PARAMS]) -> f64 {
    let tr: f64 = x.iter().map(|v| v * v).sum();
    lik.value(x) - (tr - 1.0).powi(2)
}

fn objective_gradient(lik: &Likelihood, x: &[f64; N_PARAMS]) -> [f64; N_PARAMS] {
    let tr: f64 = x.iter().map(|v| v * v).sum();
    let mut g = lik.gradient(x);
    for (gi, xi) in g.iter_mut().zip(x) {
        *gi -= 4.0 * (tr - 1.0) * xi;
    }
    g
}

/// BFGS ascent with backtracking (Armijo) line search.
fn maximize(lik: &Likelihood, start: [f64; N_PARAMS], opts: &MleOptions) -> ([f64; N_PARAMS], f64, usize, bool) {
    const N: usize = N_PARAMS;
    let mut x = start;
    let mut f = objective(lik, &x);
    let mut g = objective_gradient(lik, &x);
    let mut hinv = [[0.0; N]; N];
    let reset = |h: &mut [[f64; N]; N], scale: f64| {
        for (i, row) in h.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { scale } else { 0.0 };
            }
        }
    };
    let gnorm0 = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    reset(&mut hinv, 0.1 / gnorm0);
    let mut small_steps = 0;
    for iter in 0..opts.max_iterations {
        // ascent direction d = H g
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (0..N).map(|j| hinv[i][j] * g[j]).sum();
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            reset(&mut hinv, 0.1 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12));
            for i in 0..N {
                d[i] = hinv[i][i] * g[i];
            }
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope > 0.0) {
                return (x, lik.value(&x), iter, true);
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = x;
            for i in 0..N {
                trial[i] += step * d[i];
            }
            let ft = objective(lik, &trial);
            if ft.is_finite() && ft >= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            return (x, lik.value(&x), iter, true);
        };
        let gn = objective_gradient(lik, &xn);
        let s: [f64; N] = core::array::from_fn(|i| xn[i] - x[i]);
        // BFGS on the minimization of −f: y = ∇(−f)(x_new) − ∇(−f)(x).
        let y: [f64; N] = core::array::from_fn(|i| g[i] - gn[i]);
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let improvement = fnew - f;
        let step_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = xn;
        f = fnew;
        g = gn;
        if sy > 1e-300 {
            let hy: [f64; N] = core::array::from_fn(|i| (0..N).map(|j| hinv[i][j] * y[j]).sum());
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..N {
                for j in 0..N {
                    hinv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        if step_norm < opts.tolerance {
            return (x, lik.value(&x), iter + 1, true);
        }
        if improvement < opts.tolerance {
            small_steps += 1;
            if small_steps >= 3 {
                return (x, lik.value(&x), iter + 1, true);
            }
        } else {
            small_steps = 0;
        }
    }
    (x, lik.value(&x), opts.max_iterations, false)
}

/// Mean and standard deviation of one metric over bootstrap trials.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSpread {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricErrors {
    pub fidelity_psi_plus: MetricSpread,
    pub purity: MetricSpread,
    pub concurrence: MetricSpread,
    pub entanglement_of_formation: MetricSpread,
    /// Fidelity to the supplied reference state, if any.
    pub fidelity_reference: Option<MetricSpread>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionWithErrors {
    pub result: ReconstructionResult,
    pub metrics: StateMetrics,
    pub errors: MetricErrors,
    pub trials: usize,
}

fn spread(values: &[f64]) -> Result<MetricSpread, Error> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = sample_std(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>())?[0];
    Ok(MetricSpread { mean, std })
}

/// Reconstructs `record`, then Poisson-resamples every sub-count `n_trials`
/// times and reports the spread of the state metrics over reconstructions.
pub fn reconstruct_with_errors(
    record: &CountRecord,
    opts: &MleOptions,
    reference: Option<&TwoQubitState>,
    n_trials: usize,
    seed: u64,
) -> Result<ReconstructionWithErrors, Error> {
    if n_trials < 2 {
        return Err(Error::InvalidParameter {
            name: "n_trials",
            reason: String::from("need at least two trials"),
        });
    }
    let result = mle_reconstruct(record, opts)?;
    let metrics = StateMetrics::of(&result.rho)?;
    let flat = record.flatten();
    let mut samples: [Vec<f64>; 5] = Default::default();
    for t in 0..n_trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let resampled: Vec<u64> = flat
            .iter()
            .map(|&c| {
                if c == 0 {
                    0
                } else {
                    Poisson::new(c as f64).map(|p| p.sample(&mut rng) as u64).unwrap_or(c)
                }
            })
            .collect();
        let Ok(r) = mle_reconstruct(&record.with_flat(&resampled), opts) else {
            continue;
        };
        let Ok(m) = StateMetrics::of(&r.rho) else {
            continue;
        };
        samples[0].push(m.fidelity_psi_plus);
        samples[1].push(m.purity);
        samples[2].push(m.concurrence);
        samples[3].push(m.entanglement_of_formation);
        if let Some(reference) = reference {
            samples[4].push(fidelity(&r.rho, reference)?);
        }
    }
    let errors = MetricErrors {
        fidelity_psi_plus: spread(&samples[0])?,
        purity: spread(&samples[1])?,
        concurrence: spread(&samples[2])?,
        entanglement_of_formation: spread(&samples[3])?,
        fidelity_reference: match reference {
            Some(_) => Some(spread(&samples[4])?),
            None => None,
        },
    };
    Ok(ReconstructionWithErrors {
        result,
        metrics,
        errors,
        trials: samples[0].len(),
    })
}

/// Ideal Bell-state target, for convenience in reports.
pub fn psi_plus_state() -> TwoQubitState {
    bell_psi_plus().projector()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{project_pair, Port, Slot};

    fn table3() -> CountRecord {
        let d = None;
        let s = Some;
        CountRecord::from_sub_counts([
            [s(328), s(366), s(282), s(276)],
            [s(39), s(37), s(31), s(38)],
            [s(390), d, s(369), d],
            [d, s(416), d, s(359)],
            [s(50), s(43), s(51), s(59)],
            [s(355), s(403), s(350), s(388)],
            [s(395), d, s(390), d],
            [d, s(406), d, s(358)],
            [s(366), s(379), d, d],
            [s(438), s(418), d, d],
            [s(1485), d, d, d],
            [d, s(838), d, d],
            [d, d, s(324), s(393)],
            [d, d, s(390), s(379)],
            [d, d, s(596), d],
            [d, d, d, s(106)],
        ])
        .unwrap()
    }

    #[test]
    fn projector_examples() {
        let p1 = basis_projector(1).unwrap();
        assert_eq!(p1, CMat4::diag([1.0, 0.0, 0.0, 0.0]));
        let p11 = basis_projector(11).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!((p11.0[r][c] - C64::new(0.25, 0.0)).norm() < 1e-15);
            }
        }
        let rr = psi_plus_state().matrix().trace_product(&basis_projector(16).unwrap());
        assert!(rr.norm() < 1e-15);
        assert!(basis_projector(0).is_err());
        assert!(basis_projector(17).is_err());
    }

    #[test]
    fn table3_totals_and_dash_pattern() {
        let rec = table3();
        let n = rec.totals();
        assert_eq!(n[0], 1252);
        assert_eq!(n[15], 106);
        assert_eq!(
            n,
            [1252, 145, 759, 775, 203, 1496, 785, 764, 745, 856, 1485, 838, 717, 769, 596, 106]
        );
        let mut bad = rec.sub_counts;
        bad[2][1] = Some(1);
        assert!(CountRecord::from_sub_counts(bad).is_err());
        let mut missing = rec.sub_counts;
        missing[0][0] = None;
        assert!(matches!(CountRecord::from_sub_counts(missing), Err(Error::MissingCell(_))));
    }

    #[test]
    fn equal_acquisition_exposure_is_uniform() {
        let e = exposures(&table3(), ExposureModel::EqualAcquisition);
        for x in e {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn assembled_counts_follow_born_rule() {
        // Slot tables of the A1B1 pair, scaled to expected counts.
        let rho = psi_plus_state();
        let mut tables: SettingTables = [[[0; 3]; 3]; 4];
        for s in Setting::ALL {
            let (a, b) = s.phases();
            let joint = project_pair(&rho, a, b);
            for i in 0..3 {
                for j in 0..3 {
                    let p = joint.get((Port::One, Slot::from_index(i)), (Port::One, Slot::from_index(j)));
                    tables[s.index()][i][j] = (p * 1.0e6).round() as u64;
                }
            }
        }
        let rec = assemble_counts(&tables);
        let mu = expected_counts(&rho, &exposures(&rec, ExposureModel::EqualAcquisition)).unwrap();
        for (n, m) in rec.totals().iter().zip(mu) {
            assert!((*n as f64 - 1.0e6 * m).abs() <= 4.0, "{n} vs {}", 1.0e6 * m);
        }
        assert_eq!(assemble_counts(&[[[0; 3]; 3]; 4]).totals(), [0; 16]);
    }

    #[test]
    fn expected_count_examples() {
        let e = [100.0; 16];
        let mu = expected_counts(&psi_plus_state(), &e).unwrap();
        assert!((mu[0] - 50.0).abs() < 1e-12);
        assert!(mu[1].abs() < 1e-12);
        let mu = expected_counts(&TwoQubitState::maximally_mixed(), &e).unwrap();
        for m in mu {
            assert!((m - 25.0).abs() < 1e-12);
        }
        assert!(expected_counts(&psi_plus_state(), &[0.0; 16]).is_err());
    }

    #[test]
    fn gram_is_well_conditioned() {
        // numpy: eigvalsh of tr(Π_v Π_w)
        assert!((gram_condition_number() - 108.240761336).abs() < 1e-6);
        let c = measurement_condition_number();
        assert!((c - 10.403882032).abs() < 1e-6);
        assert!(c < MAX_CONDITION_NUMBER);
    }

    #[test]
    fn factor_round_trip() {
        let rho = psi_plus_state()
            .mix(&TwoQubitState::maximally_mixed(), 0.3)
            .unwrap();
        let x = params_from_rho(rho.matrix()).unwrap();
        let back = rho_from_params(&x).unwrap();
        assert!((back - *rho.matrix()).frobenius_norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let lik = Likelihood::new(table3().totals_f64(), [0.25; 16]).unwrap();
        let x: [f64; N_PARAMS] = core::array::from_fn(|i| 0.3 + 0.05 * i as f64 - 0.02 * (i % 3) as f64);
        let g = lik.gradient(&x);
        for i in 0..N_PARAMS {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (lik.value(&xp) - lik.value(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(1.0), "i={i} fd={fd} g={}", g[i]);
        }
    }

    #[test]
    fn exact_counts_round_trip_for_psi_plus() {
        let mu = expected_counts(&psi_plus_state(), &[2500.0; 16]).unwrap();
        let r = mle_from_totals(&mu, &[0.25; 16], &MleOptions::default()).unwrap();
        let f = fidelity(&r.rho, &psi_plus_state()).unwrap();
        assert!(f > 0.9999, "{f}");
    }

    #[test]
    fn table3_reproduces_after_storage_matrix() {
        let r = mle_reconstruct(&table3(), &MleOptions::default()).unwrap();
        assert!(r.converged);
        let m = StateMetrics::of(&r.rho).unwrap();
        assert!((m.fidelity_psi_plus - 0.8652).abs() < 2e-3, "{m:?}");
        assert!((m.purity - 0.7726).abs() < 3e-3, "{m:?}");
    }
}
