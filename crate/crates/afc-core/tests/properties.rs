use afc_core::analyzer::{project_pair, umzi_povm, umzi_povm_with_ratio};
use afc_core::bell::{analytic_chsh, chsh_s, correlation_e, ChshSettings};
use afc_core::linalg::{CMat2, CMat4, C64};
use afc_core::quantum::{
    bell_psi_plus, concurrence, entanglement_of_formation, fidelity, purity, TwoQubitState,
};
use afc_core::tomography::{params_from_t, rho_from_params, t_from_params, N_PARAMS};
use proptest::prelude::*;

fn state_from(entries: &[f64]) -> TwoQubitState {
    let mut t = [[C64::new(0.0, 0.0); 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            t[r][c] = C64::new(entries[8 * r + 2 * c], entries[8 * r + 2 * c + 1]);
        }
    }
    let t = CMat4(t);
    let mut m = t.adjoint() * t;
    let tr = m.trace().re;
    m = m.scale(1.0 / tr);
    TwoQubitState::new(m.hermitian_part()).unwrap()
}

fn arb_state() -> impl Strategy<Value = TwoQubitState> {
    prop::collection::vec(-1.0f64..1.0, 32)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| state_from(&v))
}

proptest! {
    #[test]
    fn povm_sums_to_identity(phase in -10.0f64..10.0, ratio in 0.0f64..=1.0) {
        for povm in [umzi_povm(phase), umzi_povm_with_ratio(phase, ratio)] {
            let mut sum = CMat2::zeros();
            for e in povm.iter() {
                sum = sum + e.operator();
            }
            let id = CMat2::identity();
            for r in 0..2 {
                for c in 0..2 {
                    prop_assert!((sum.0[r][c] - id.0[r][c]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn joint_tables_are_distributions(rho in arb_state(), a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let table = project_pair(&rho, a, b);
        let mut total = 0.0;
        for row in table.0.iter() {
            for &p in row {
                prop_assert!(p >= -1e-12);
                total += p;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_stay_in_range(rho in arb_state()) {
        let p = purity(&rho).unwrap();
        prop_assert!((0.25 - 1e-9..=1.0 + 1e-9).contains(&p));
        let c = concurrence(&rho).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&c));
        let e = entanglement_of_formation(&rho).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&e));
        let f = fidelity(&rho, &bell_psi_plus().projector()).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&f));
    }

    #[test]
    fn fidelity_is_symmetric(a in arb_state(), b in arb_state()) {
        let fab = fidelity(&a, &b).unwrap();
        let fba = fidelity(&b, &a).unwrap();
        prop_assert!((fab - fba).abs() < 1e-7);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn chsh_never_exceeds_tsirelson(rho in arb_state(), a in -4.0f64..4.0, a2 in -4.0f64..4.0,
                                    b in -4.0f64..4.0, b2 in -4.0f64..4.0) {
        let s = analytic_chsh(&rho, &ChshSettings { alpha: a, alpha_prime: a2, beta: b, beta_prime: b2 }).unwrap();
        prop_assert!(s <= 2.0 * core::f64::consts::SQRT_2 + 1e-9);
    }

    #[test]
    fn correlation_is_bounded(c in prop::array::uniform4(0.0f64..1000.0)) {
        prop_assume!(c.iter().sum::<f64>() > 0.0);
        let e = correlation_e(c).unwrap();
        prop_assert!(e.abs() <= 1.0 + 1e-12);
        prop_assert!(chsh_s([e, e, e, e]) <= 4.0 + 1e-12);
    }

    #[test]
    fn cholesky_parameters_round_trip(x in prop::array::uniform16(-1.0f64..1.0)) {
        let t = t_from_params(&x);
        let back = params_from_t(&t);
        for k in 0..N_PARAMS {
            prop_assert!((x[k] - back[k]).abs() < 1e-12);
        }
        if let Some(rho) = rho_from_params(&x) {
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-9);
            prop_assert!(TwoQubitState::new(rho).is_ok());
        }
    }
}
