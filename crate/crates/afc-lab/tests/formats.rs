use afc_core::analyzer::{DetectionEvent, DetectorId};
use afc_core::bell::FringeScan;
use afc_core::linalg::{CMat4, C64};
use afc_lab::config::ExperimentConfig;
use afc_lab::formats::{format_matrix, format_stream, fringe_csv, parse_fringe_csv, parse_matrix, parse_stream};
use proptest::prelude::*;

fn detector(k: u8) -> DetectorId {
    [DetectorId::A1, DetectorId::A2, DetectorId::B1, DetectorId::B2][k as usize % 4]
}

proptest! {
    #[test]
    fn matrices_round_trip_to_print_precision(v in prop::collection::vec(-1e3f64..1e3, 32)) {
        let m = CMat4(core::array::from_fn(|r| core::array::from_fn(|c| C64::new(v[8 * r + 2 * c], v[8 * r + 2 * c + 1]))));
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                prop_assert!((back.0[r][c] - m.0[r][c]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn streams_round_trip(events in prop::collection::vec((0u64..u64::MAX / 2, 0u8..4), 0..50)) {
        let mut events: Vec<DetectionEvent> = events
            .into_iter()
            .map(|(t, d)| DetectionEvent { timestamp_ps: t, detector: detector(d) })
            .collect();
        events.sort_by_key(|e| e.timestamp_ps);
        prop_assert_eq!(parse_stream(&format_stream(&events)).unwrap(), events);
    }

    #[test]
    fn fringe_scans_round_trip(counts in prop::collection::vec(prop::array::uniform4(0u64..1_000_000), 1..24)) {
        let n = counts.len();
        let scan = FringeScan {
            alpha: 0.0,
            beta_values: (0..n).map(|k| k as f64 * 0.25).collect(),
            counts,
            integration_time_per_point_s: 1.0,
        };
        let back = parse_fringe_csv(&fringe_csv(&scan).unwrap(), 0.0, 1.0).unwrap();
        prop_assert_eq!(back, scan);
    }

    #[test]
    fn seed_survives_config_round_trip(seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::paper();
        cfg.seed = seed;
        match cfg.to_toml_string() {
            Ok(text) => prop_assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg),
            Err(_) => prop_assert!(seed > i64::MAX as u64),
        }
    }
}
