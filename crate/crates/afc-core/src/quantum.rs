//! Two-qubit time-bin states and the scalar metrics used to characterize
//! them: Uhlmann fidelity, purity, Wootters concurrence and entanglement
//! of formation.
//!
//! Basis order is fixed to `(ee, el, le, ll)`, first label = idler photon,
//! second label = signal photon.

use alloc::string::String;
use core::fmt;


#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{CMat2, CMat4, C64, ONE, ZERO};
use crate::Error;

/// Tolerance on ket normalization.
pub const KET_NORM_TOL: f64 = 1e-12;
/// Tolerance on Hermiticity and trace for a stored state.
pub const STATE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a stored state.
pub const PSD_FLOOR: f64 = -1e-8;
/// Inputs further than this from unit trace are rejected by the metrics.
pub const METRIC_TRACE_TOL: f64 = 1e-6;
/// `nearest_psd` refuses matrices whose smallest eigenvalue is below this.
pub const CORRUPTION_FLOOR: f64 = -0.05;

/// Labels of the computational basis, in storage order.
pub const BASIS_LABELS: [&str; 4] = ["ee", "el", "le", "ll"];

/// Single time-bin qubit `a|e⟩ + b|l⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBinKet {
    early: C64,
    late: C64,
}

impl TimeBinKet {
    pub fn new(early: C64, late: C64) -> Result<Self, Error> {
        let norm = early.norm_sqr() + late.norm_sqr();
        if !((norm - 1.0).abs() <= KET_NORM_TOL) {
            return Err(Error::NotNormalized { norm });
        }
        Ok(TimeBinKet { early, late })
    }

    pub fn early() -> Self {
        TimeBinKet { early: ONE, late: ZERO }
    }

    pub fn late() -> Self {
        TimeBinKet { early: ZERO, late: ONE }
    }

    /// `(|e⟩ + e^{-iφ}|l⟩)/√2`, the state selected by the middle slot of an
    /// interferometer with phase `φ`.
    pub fn energy_basis(phase: f64) -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        TimeBinKet {
            early: C64::new(s, 0.0),
            late: C64::from_polar(s, -phase),
        }
    }

    /// `|D⟩ = (|e⟩ + |l⟩)/√2`
    pub fn diagonal() -> Self {
        Self::energy_basis(0.0)
    }

    /// `|R⟩ = (|e⟩ + i|l⟩)/√2`
    pub fn right() -> Self {
        Self::energy_basis(-core::f64::consts::FRAC_PI_2)
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        [self.early, self.late]
    }

    pub fn projector(&self) -> CMat2 {
        CMat2::outer(self.amplitudes())
    }
}

/// Pure two-photon state over `(ee, el, le, ll)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitKet {
    amplitudes: [C64; 4],
}

impl TwoQubitKet {
    pub fn new(amplitudes: [C64; 4]) -> Result<Self, Error> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !((norm - 1.0).abs() <= KET_NORM_TOL) {
            return Err(Error::NotNormalized { norm });
        }
        Ok(TwoQubitKet { amplitudes })
    }

    /// `|idler⟩ ⊗ |signal⟩`
    pub fn product(idler: &TimeBinKet, signal: &TimeBinKet) -> Self {
        let a = idler.amplitudes();
        let b = signal.amplitudes();
        TwoQubitKet {
            amplitudes: [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]],
        }
    }

    pub fn amplitudes(&self) -> &[C64; 4] {
        &self.amplitudes
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &TwoQubitKet) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn projector(&self) -> TwoQubitState {
        TwoQubitState {
            matrix: CMat4::outer(&self.amplitudes),
        }
    }
}

/// `(|ee⟩ + |ll⟩)/√2`
pub fn bell_psi_plus() -> TwoQubitKet {
    let s = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
    TwoQubitKet {
        amplitudes: [s, ZERO, ZERO, s],
    }
}

/// A validated two-qubit density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitState {
    matrix: CMat4,
}

impl TwoQubitState {
    /// Accepts `matrix` only if it already satisfies the state invariants.
    pub fn new(matrix: CMat4) -> Result<Self, Error> {
        check_hermitian_trace(&matrix, STATE_TOL)?;
        let min = matrix.hermitian_eigenvalues()[0];
        if min < PSD_FLOOR {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(TwoQubitState {
            matrix: matrix.hermitian_part(),
        })
    }

    /// `I/4`
    pub fn maximally_mixed() -> Self {
        TwoQubitState {
            matrix: CMat4::diag([0.25; 4]),
        }
    }

    /// Convex mixture `(1-w)·self + w·other`. `w` must lie in `[0,1]`.
    pub fn mix(&self, other: &TwoQubitState, w: f64) -> Result<Self, Error> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter {
                name: "mixture weight",
                reason: String::from("must lie in [0, 1]"),
            });
        }
        Ok(TwoQubitState {
            matrix: self.matrix.scale(1.0 - w) + other.matrix.scale(w),
        })
    }

    /// Crate-internal constructor for matrices that are states by construction.
    pub(crate) fn from_trusted(matrix: CMat4) -> Self {
        TwoQubitState { matrix }
    }

    pub fn matrix(&self) -> &CMat4 {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix.0[row][col]
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        self.matrix.hermitian_eigenvalues()
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn overlap(&self, ket: &TwoQubitKet) -> f64 {
        self.matrix.expectation(ket.amplitudes()).re
    }

    /// `½‖ρ − σ‖₁`
    pub fn trace_distance(&self, other: &TwoQubitState) -> f64 {
        let diff = self.matrix - other.matrix;
        0.5 * diff.hermitian_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
    }
}

impl fmt::Display for TwoQubitState {
    /// Writes the text matrix format: one header line naming the basis order,
    /// then four rows of four `re+imj` entries.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# basis: ee el le ll (row-major, idler first)")?;
        for r in 0..4 {
            for c in 0..4 {
                if c > 0 {
                    f.write_str(" ")?;
                }
                let z = self.matrix.0[r][c];
                write!(f, "{:.6}{:+.6}j", z.re, z.im)?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

fn check_hermitian_trace(m: &CMat4, trace_tol: f64) -> Result<(), Error> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let defect = m.hermiticity_defect();
    if defect > STATE_TOL.max(trace_tol) {
        return Err(Error::NotHermitian { defect });
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
        return Err(Error::BadTrace { trace: tr.re });
    }
    Ok(())
}

/// Projects a (nearly) Hermitian, (nearly) unit-trace matrix onto the
/// closest physical state by clipping negative eigenvalues and
/// renormalizing the trace.
pub fn nearest_psd(matrix: &CMat4) -> Result<TwoQubitState, Error> {
    if !matrix.is_finite() {
        return Err(Error::NonFinite);
    }
    let defect = matrix.hermiticity_defect();
    if defect > 1e-6 {
        return Err(Error::NotHermitian { defect });
    }
    let tr = matrix.trace().re;
    if (tr - 1.0).abs() > 1e-2 {
        return Err(Error::BadTrace { trace: tr });
    }
    let eig = matrix.hermitian_eigen();
    let min = eig.values[0];
    if min < CORRUPTION_FLOOR {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    let clipped_trace: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    let out = eig.map(|v| v.max(0.0) / clipped_trace);
    Ok(TwoQubitState::from_trusted(out.hermitian_part()))
}

/// Routes a state through the same validation the metrics apply to raw
/// matrices. A valid state comes back unchanged up to rounding.
fn sanitize(rho: &TwoQubitState) -> Result<TwoQubitState, Error> {
    check_hermitian_trace(rho.matrix(), METRIC_TRACE_TOL)?;
    nearest_psd(rho.matrix())
}

fn is_rank_one(rho: &TwoQubitState) -> bool {
    rho.eigenvalues()[2] < 1e-14
}

fn psd_sqrt(m: &CMat4) -> CMat4 {
    m.hermitian_map(|x| x.max(0.0).sqrt())
}

/// Uhlmann fidelity `(tr√(√ρ σ √ρ))²`.
pub fn fidelity(rho: &TwoQubitState, sigma: &TwoQubitState) -> Result<f64, Error> {
    let rho = sanitize(rho)?;
    let sigma = sanitize(sigma)?;
    // For a rank-1 argument F = tr(ρσ) exactly; the square-root route would
    // amplify rounding in the zero eigenvalues to ~1e-8.
    if is_rank_one(&sigma) || is_rank_one(&rho) {
        return Ok(rho.matrix().trace_product(sigma.matrix()).re.clamp(0.0, 1.0));
    }
    let root = psd_sqrt(rho.matrix());
    let inner = root * *sigma.matrix() * root;
    let tr: f64 = inner
        .hermitian_eigenvalues()
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// `tr(ρ²)`
pub fn purity(rho: &TwoQubitState) -> Result<f64, Error> {
    let rho = sanitize(rho)?;
    let p: f64 = rho
        .matrix()
        .0
        .iter()
        .flat_map(|row| row.iter())
        .map(|x| x.norm_sqr())
        .sum();
    Ok(p.clamp(0.25, 1.0))
}

/// `σ_y ⊗ σ_y` in the `(ee, el, le, ll)` basis.
fn sigma_yy() -> CMat4 {
    // σ_y ⊗ σ_y is real: anti-diagonal (-1, 1, 1, -1).
    let mut m = CMat4::zeros();
    m.0[0][3] = C64::new(-1.0, 0.0);
    m.0[1][2] = C64::new(1.0, 0.0);
    m.0[2][1] = C64::new(1.0, 0.0);
    m.0[3][0] = C64::new(-1.0, 0.0);
    m
}

/// Wootters concurrence.
///
/// The square roots of the eigenvalues of `ρ ρ̃` are obtained from the
/// Hermitian matrix `√ρ ρ̃ √ρ`, which has the same spectrum.
pub fn concurrence(rho: &TwoQubitState) -> Result<f64, Error> {
    let rho = sanitize(rho)?;
    let yy = sigma_yy();
    let tilde = yy * rho.matrix().conj() * yy;
    let root = psd_sqrt(rho.matrix());
    let mut lambdas = (root * tilde * root)
        .hermitian_eigenvalues()
        .map(|x| x.max(0.0).sqrt());
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0))
}

/// Base-2 binary entropy.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Entanglement of formation from a concurrence value.
pub fn eof_from_concurrence(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy(0.5 * (1.0 + (1.0 - c * c).max(0.0).sqrt()))
}

pub fn entanglement_of_formation(rho: &TwoQubitState) -> Result<f64, Error> {
    Ok(eof_from_concurrence(concurrence(rho)?))
}

/// The scalar summary reported for every characterized state.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateMetrics {
    pub fidelity_psi_plus: f64,
    pub purity: f64,
    pub concurrence: f64,
    pub entanglement_of_formation: f64,
}

impl StateMetrics {
    pub fn of(rho: &TwoQubitState) -> Result<Self, Error> {
        let target = bell_psi_plus().projector();
        let c = concurrence(rho)?;
        Ok(StateMetrics {
            fidelity_psi_plus: fidelity(rho, &target)?,
            purity: purity(rho)?,
            concurrence: c,
            entanglement_of_formation: eof_from_concurrence(c),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn werner(v: f64) -> TwoQubitState {
        bell_psi_plus()
            .projector()
            .mix(&TwoQubitState::maximally_mixed(), 1.0 - v)
            .unwrap()
    }

    #[test]
    fn psi_plus_amplitudes() {
        let k = bell_psi_plus();
        let a = k.amplitudes();
        assert!((a[0].re - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(a[1], ZERO);
        assert_eq!(a[2], ZERO);
        assert!((a[3].re - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let el = TwoQubitKet::product(&TimeBinKet::early(), &TimeBinKet::late());
        assert_eq!(k.inner(&el), ZERO);
    }

    #[test]
    fn pure_and_mixed_extremes() {
        let p = bell_psi_plus().projector();
        let mm = TwoQubitState::maximally_mixed();
        assert!((fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-10);
        assert!((purity(&p).unwrap() - 1.0).abs() < 1e-12);
        assert!((purity(&mm).unwrap() - 0.25).abs() < 1e-12);
        assert!((concurrence(&p).unwrap() - 1.0).abs() < 1e-7);
        assert!(concurrence(&mm).unwrap().abs() < 1e-12);
        assert!((entanglement_of_formation(&p).unwrap() - 1.0).abs() < 1e-6);
        assert!(entanglement_of_formation(&mm).unwrap().abs() < 1e-12);
    }

    #[test]
    fn werner_concurrence_is_linear_above_threshold() {
        // C(ρ_V) = max(0, (3V-1)/2)
        for v in [0.2, 1.0 / 3.0, 0.5, 0.8, 0.95] {
            let c = concurrence(&werner(v)).unwrap();
            let expect = ((3.0 * v - 1.0) / 2.0).max(0.0);
            assert!((c - expect).abs() < 1e-9, "v={v} c={c}");
        }
    }

    #[test]
    fn ket_norm_enforced() {
        assert!(TimeBinKet::new(ONE, ONE).is_err());
        assert!(TwoQubitKet::new([ONE, ONE, ZERO, ZERO]).is_err());
        let r = TimeBinKet::right();
        assert!((r.amplitudes()[1] - C64::new(0.0, core::f64::consts::FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn nearest_psd_clips_and_renormalizes() {
        let m = CMat4::diag([1.001, 0.0, 0.0, -0.001]);
        let s = nearest_psd(&m).unwrap();
        assert!((*s.matrix() - CMat4::diag([1.0, 0.0, 0.0, 0.0])).frobenius_norm() < 1e-12);
        let again = nearest_psd(s.matrix()).unwrap();
        assert!((*again.matrix() - *s.matrix()).frobenius_norm() < 1e-12);
    }

    #[test]
    fn nearest_psd_rejects_corruption() {
        let m = CMat4::diag([0.6, 0.3, 0.2, -0.1]);
        assert!(matches!(nearest_psd(&m), Err(Error::NotPositive { .. })));
        let mut skew = CMat4::diag([0.25; 4]);
        skew.0[0][1] = C64::new(0.1, 0.0);
        assert!(matches!(nearest_psd(&skew), Err(Error::NotHermitian { .. })));
        assert!(matches!(
            nearest_psd(&CMat4::diag([0.5, 0.2, 0.2, 0.2])),
            Err(Error::BadTrace { .. })
        ));
    }

    #[test]
    fn metrics_reject_bad_trace() {
        let s = TwoQubitState::from_trusted(CMat4::diag([0.5, 0.25, 0.25, 0.1]));
        assert!(matches!(purity(&s), Err(Error::BadTrace { .. })));
        assert!(matches!(fidelity(&s, &s), Err(Error::BadTrace { .. })));
    }

    #[test]
    fn text_format_has_header_and_four_rows() {
        let text = alloc::format!("{}", bell_psi_plus().projector());
        let lines: alloc::vec::Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with('#'));
        assert!(lines[1].starts_with("0.500000+0.000000j"));
    }
}
