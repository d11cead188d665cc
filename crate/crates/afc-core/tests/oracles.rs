//! Cross-checks of the hand-written linear algebra against nalgebra.

use afc_core::linalg::{CMat4, C64};
use afc_core::quantum::{concurrence, fidelity, purity, TwoQubitState};
use afc_core::rng::rng_from_seed;
use nalgebra::{Complex, Matrix4};
use rand::Rng;

fn random_state(rng: &mut impl Rng, rank: usize) -> TwoQubitState {
    let mut m = CMat4::zeros();
    for _ in 0..rank {
        let v: [C64; 4] = core::array::from_fn(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        m = m + CMat4::outer(&v);
    }
    let tr = m.trace().re;
    TwoQubitState::new(m.scale(1.0 / tr).hermitian_part()).unwrap()
}

fn to_na(m: &CMat4) -> Matrix4<Complex<f64>> {
    Matrix4::from_fn(|r, c| m.0[r][c])
}

fn na_sqrt(m: &Matrix4<Complex<f64>>) -> Matrix4<Complex<f64>> {
    let eig = m.symmetric_eigen();
    let d = eig.eigenvalues.map(|x| Complex::new(x.max(0.0).sqrt(), 0.0));
    eig.eigenvectors * Matrix4::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

#[test]
fn eigenvalues_match_nalgebra() {
    let mut rng = rng_from_seed(1);
    for rank in 1..=4 {
        for _ in 0..50 {
            let rho = random_state(&mut rng, rank);
            let mut ours = rho.eigenvalues();
            ours.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut theirs: Vec<f64> = to_na(rho.matrix()).symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in 0..4 {
                assert!((ours[k] - theirs[k]).abs() < 1e-10, "{ours:?} vs {theirs:?}");
            }
        }
    }
}

#[test]
fn uhlmann_fidelity_matches_nalgebra() {
    let mut rng = rng_from_seed(2);
    for k in 0..100 {
        let a = random_state(&mut rng, 4);
        let rank = if k % 2 == 0 { 4 } else { 3 };
        let b = random_state(&mut rng, rank);
        let sa = na_sqrt(&to_na(a.matrix()));
        let inner = na_sqrt(&(sa * to_na(b.matrix()) * sa));
        let oracle = inner.trace().re.powi(2);
        let ours = fidelity(&a, &b).unwrap();
        // A singular argument leaves a zero eigenvalue under the square root.
        let tol = if rank == 4 { 1e-9 } else { 1e-6 };
        assert!((ours - oracle).abs() < tol, "{ours} vs {oracle}");
    }
}

#[test]
fn purity_and_concurrence_match_nalgebra() {
    let mut rng = rng_from_seed(3);
    let sy = Matrix4::from_fn(|r, c| {
        // σ_y ⊗ σ_y
        let table = [[0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]];
        Complex::new(table[r][c], 0.0)
    });
    for rank in 1..=4 {
        for _ in 0..50 {
            let rho = random_state(&mut rng, rank);
            let m = to_na(rho.matrix());
            assert!((purity(&rho).unwrap() - (m * m).trace().re).abs() < 1e-12);
            let sq = na_sqrt(&m);
            let tilde = sy * m.conjugate() * sy;
            let r = na_sqrt(&(sq * tilde * sq));
            let mut l: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().copied().collect();
            l.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let oracle = (l[0] - l[1] - l[2] - l[3]).max(0.0);
            assert!((concurrence(&rho).unwrap() - oracle).abs() < 1e-7);
        }
    }
}
