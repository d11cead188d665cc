//! Small dense linear algebra for two-qubit work.
//!
//! Everything here is fixed-size and allocation-free except the generic
//! symmetric eigensolver, which works on a caller-provided row-major slice.
//! Hermitian 4×4 problems are solved through the real 8×8 embedding
//! `[[Re H, -Im H], [Im H, Re H]]`, whose spectrum is the spectrum of `H`
//! with every eigenvalue doubled. Matrix functions are evaluated on the
//! embedding and read back from its left block column, which sidesteps
//! the pairing of degenerate eigenvectors entirely.

use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// 2×2 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat2(pub [[C64; 2]; 2]);

impl CMat2 {
    pub fn zeros() -> Self {
        CMat2([[ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        CMat2([[ONE, ZERO], [ZERO, ONE]])
    }

    /// `|v⟩⟨v|`
    pub fn outer(v: [C64; 2]) -> Self {
        let mut m = Self::zeros();
        for r in 0..2 {
            for c in 0..2 {
                m.0[r][c] = v[r] * v[c].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    pub fn kron(&self, other: &CMat2) -> CMat4 {
        let mut out = CMat4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        out.0[2 * a + c][2 * b + d] = self.0[a][b] * other.0[c][d];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }
}

impl Add for CMat2 {
    type Output = CMat2;
    fn add(self, rhs: CMat2) -> CMat2 {
        let mut m = self;
        for r in 0..2 {
            for c in 0..2 {
                m.0[r][c] += rhs.0[r][c];
            }
        }
        m
    }
}

/// 4×4 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat4(pub [[C64; 4]; 4]);

impl Index<(usize, usize)> for CMat4 {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.0[r][c]
    }
}

impl IndexMut<(usize, usize)> for CMat4 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.0[r][c]
    }
}

impl CMat4 {
    pub fn zeros() -> Self {
        CMat4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::diag([1.0; 4])
    }

    pub fn diag(d: [f64; 4]) -> Self {
        let mut m = Self::zeros();
        for (i, v) in d.iter().enumerate() {
            m.0[i][i] = C64::new(*v, 0.0);
        }
        m
    }

    /// `|v⟩⟨v|`
    pub fn outer(v: &[C64; 4]) -> Self {
        let mut m = Self::zeros();
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] = v[r] * v[c].conj();
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] = self.0[c][r].conj();
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x = x.conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    /// `tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &CMat4) -> C64 {
        let mut acc = ZERO;
        for r in 0..4 {
            for k in 0..4 {
                acc += self.0[r][k] * other.0[k][r];
            }
        }
        acc
    }

    /// `⟨v|A|v⟩`
    pub fn expectation(&self, v: &[C64; 4]) -> C64 {
        let mut acc = ZERO;
        for r in 0..4 {
            for c in 0..4 {
                acc += v[r].conj() * self.0[r][c] * v[c];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|row| row.iter())
            .map(|x| x.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entry-wise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..4 {
            for c in 0..4 {
                worst = worst.max((self.0[r][c] - self.0[c][r].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A†) / 2`
    pub fn hermitian_part(&self) -> Self {
        let adj = self.adjoint();
        let mut m = *self;
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] = (self.0[r][c] + adj.0[r][c]) * 0.5;
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flat_map(|row| row.iter())
            .all(|x| x.re.is_finite() && x.im.is_finite())
    }

    /// Eigen-decomposition of the Hermitian part of `self`.
    pub fn hermitian_eigen(&self) -> HermitianEigen {
        HermitianEigen::new(self)
    }

    /// Ascending eigenvalues of the Hermitian part of `self`.
    pub fn hermitian_eigenvalues(&self) -> [f64; 4] {
        self.hermitian_eigen().values
    }

    /// Applies `f` to the spectrum of the Hermitian part of `self`.
    pub fn hermitian_map(&self, f: impl Fn(f64) -> f64) -> CMat4 {
        self.hermitian_eigen().map(f)
    }
}

impl Add for CMat4 {
    type Output = CMat4;
    fn add(self, rhs: CMat4) -> CMat4 {
        let mut m = self;
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] += rhs.0[r][c];
            }
        }
        m
    }
}

impl Sub for CMat4 {
    type Output = CMat4;
    fn sub(self, rhs: CMat4) -> CMat4 {
        let mut m = self;
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] -= rhs.0[r][c];
            }
        }
        m
    }
}

impl Mul for CMat4 {
    type Output = CMat4;
    fn mul(self, rhs: CMat4) -> CMat4 {
        let mut m = CMat4::zeros();
        for r in 0..4 {
            for k in 0..4 {
                let a = self.0[r][k];
                if a == ZERO {
                    continue;
                }
                for c in 0..4 {
                    m.0[r][c] += a * rhs.0[k][c];
                }
            }
        }
        m
    }
}

/// Spectrum of a 4×4 Hermitian matrix, held as the eigen-decomposition of
/// its real 8×8 embedding.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Ascending eigenvalues.
    pub values: [f64; 4],
    embedded_values: [f64; 8],
    embedded_vectors: [f64; 64],
}

impl HermitianEigen {
    fn new(m: &CMat4) -> Self {
        let h = m.hermitian_part();
        let mut a = [0.0; 64];
        for r in 0..4 {
            for c in 0..4 {
                let z = h.0[r][c];
                a[r * 8 + c] = z.re;
                a[(r + 4) * 8 + (c + 4)] = z.re;
                a[r * 8 + (c + 4)] = -z.im;
                a[(r + 4) * 8 + c] = z.im;
            }
        }
        let mut vectors = [0.0; 64];
        let mut vals = [0.0; 8];
        symmetric_eigen(&mut a, 8, &mut vals, &mut vectors);
        let mut sorted = vals;
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        let values = [
            0.5 * (sorted[0] + sorted[1]),
            0.5 * (sorted[2] + sorted[3]),
            0.5 * (sorted[4] + sorted[5]),
            0.5 * (sorted[6] + sorted[7]),
        ];
        HermitianEigen {
            values,
            embedded_values: vals,
            embedded_vectors: vectors,
        }
    }

    /// `V f(Λ) V†`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat4 {
        let fv: [f64; 8] = core::array::from_fn(|k| f(self.embedded_values[k]));
        let v = &self.embedded_vectors;
        let mut out = CMat4::zeros();
        // Left block column of V f(Λ) Vᵀ: rows 0..4 give Re, rows 4..8 give Im.
        for r in 0..4 {
            for c in 0..4 {
                let mut re = 0.0;
                let mut im = 0.0;
                for k in 0..8 {
                    re += v[r * 8 + k] * fv[k] * v[c * 8 + k];
                    im += v[(r + 4) * 8 + k] * fv[k] * v[c * 8 + k];
                }
                out.0[r][c] = C64::new(re, im);
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver for a real symmetric `n×n` matrix stored
/// row-major in `a` (destroyed). Eigenvalues land in `values[..n]`
/// (unsorted), eigenvectors in the columns of `vectors`.
pub fn symmetric_eigen(a: &mut [f64], n: usize, values: &mut [f64], vectors: &mut [f64]) {
    debug_assert!(a.len() >= n * n && vectors.len() >= n * n && values.len() >= n);
    for r in 0..n {
        for c in 0..n {
            vectors[r * n + c] = if r == c { 1.0 } else { 0.0 };
        }
    }
    let scale: f64 = a[..n * n].iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        values[..n].fill(0.0);
        return;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vectors[k * n + p];
                    let vkq = vectors[k * n + q];
                    vectors[k * n + p] = c * vkp - s * vkq;
                    vectors[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for i in 0..n {
        values[i] = a[i * n + i];
    }
}

/// Solves the dense system `m x = b` (row-major `n×n`) by Gaussian
/// elimination with partial pivoting. Returns `None` when singular.
pub fn solve_dense(m: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| {
            m[x * n + col]
                .abs()
                .partial_cmp(&m[y * n + col].abs())
                .unwrap_or(core::cmp::Ordering::Equal)
        })?;
        if m[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        for row in (col + 1)..n {
            let factor = m[row * n + col] / m[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= m[col * n + k] * b[k];
        }
        b[col] = acc / m[col * n + col];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hermitian() -> CMat4 {
        let mut m = CMat4::zeros();
        let entries = [
            (0, 0, 0.7, 0.0),
            (1, 1, -0.2, 0.0),
            (2, 2, 0.4, 0.0),
            (3, 3, 1.3, 0.0),
            (0, 1, 0.1, 0.3),
            (0, 3, -0.5, 0.2),
            (1, 2, 0.25, -0.1),
            (2, 3, 0.05, 0.6),
        ];
        for (r, c, re, im) in entries {
            m.0[r][c] = C64::new(re, im);
            m.0[c][r] = C64::new(re, -im);
        }
        m
    }

    #[test]
    fn identity_map_reconstructs_matrix() {
        let h = sample_hermitian();
        let back = h.hermitian_map(|x| x);
        assert!((back - h).frobenius_norm() < 1e-12);
    }

    #[test]
    fn trace_equals_eigenvalue_sum() {
        let h = sample_hermitian();
        let vals = h.hermitian_eigenvalues();
        let sum: f64 = vals.iter().sum();
        assert!((sum - h.trace().re).abs() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn square_of_sqrt_is_original_for_psd() {
        let h = sample_hermitian();
        let psd = h * h;
        let root = psd.hermitian_map(|x| x.max(0.0).sqrt());
        assert!((root * root - psd).frobenius_norm() < 1e-10);
    }

    #[test]
    fn degenerate_spectrum() {
        let m = CMat4::diag([0.5, 0.5, 0.0, 0.0]);
        let vals = m.hermitian_eigenvalues();
        assert!((vals[0]).abs() < 1e-15 && (vals[3] - 0.5).abs() < 1e-15);
        let back = m.hermitian_map(|x| x * 2.0);
        assert!((back - m.scale(2.0)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn kron_layout_matches_basis_order() {
        let e = CMat2::outer([ONE, ZERO]);
        let l = CMat2::outer([ZERO, ONE]);
        // |e⟩⟨e| ⊗ |l⟩⟨l| = |el⟩⟨el| which is basis index 1.
        let el = e.kron(&l);
        assert_eq!(el, CMat4::diag([0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn dense_solve() {
        let mut m = [2.0, 1.0, 1.0, 3.0];
        let mut b = [3.0, 5.0];
        solve_dense(&mut m, &mut b, 2).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-14 && (b[1] - 1.4).abs() < 1e-14);
    }
}
