//! Plain-text and CSV artifact formats.
//!
//! | artifact | columns |
//! |---|---|
//! | density matrix | `# basis: ee el le ll` header, four rows of `re±imj` |
//! | detection stream | `detector_id timestamp_ps`, one event per line |
//! | emissions | `cycle mode offset_GHz phase`, mode `coherent` or `split-<idler><signal>` |
//! | fringe scan | `beta_rad,c11,c12,c21,c22` |
//! | histogram | `bin_center_ps,count` |
//! | efficiency | `storage_time_ns,ch1..chN` (percent) |

use std::fmt::Write as _;
use std::path::Path;

use afc_core::analyzer::{DetectionEvent, DetectorId, Histogram};
use afc_core::bell::FringeScan;
use afc_core::linalg::{CMat4, C64};
use afc_core::source::{EmissionRecord, TemporalMode, TimeBin};

use crate::error::{LabError, Result};

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

pub fn format_matrix(m: &CMat4) -> String {
    let mut s = String::from("# basis: ee el le ll (row-major, idler first)\n");
    for row in &m.0 {
        let cells: Vec<String> = row.iter().map(|z| format!("{:.6}{:+.6}j", z.re, z.im)).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

fn parse_complex(tok: &str) -> Option<C64> {
    let body = tok.strip_suffix('j').or_else(|| tok.strip_suffix('i'));
    let Some(body) = body else {
        return tok.parse().ok().map(|re| C64::new(re, 0.0));
    };
    // Split at the sign that starts the imaginary part (not an exponent sign).
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))?;
    let re = body[..split].parse().ok()?;
    let im = body[split..].parse().ok()?;
    Some(C64::new(re, im))
}

pub fn parse_matrix(text: &str) -> Result<CMat4> {
    let rows: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if rows.len() != 4 {
        return Err(LabError::Format(format!("matrix needs 4 rows, found {}", rows.len())));
    }
    let mut m = CMat4::zeros();
    for (r, line) in rows.iter().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(LabError::Format(format!("matrix row {} needs 4 entries", r + 1)));
        }
        for (c, t) in toks.iter().enumerate() {
            m.0[r][c] = parse_complex(t).ok_or_else(|| LabError::Format(format!("bad matrix entry {t:?}")))?;
        }
    }
    Ok(m)
}

pub fn format_stream(events: &[DetectionEvent]) -> String {
    let mut s = String::with_capacity(events.len() * 20);
    for e in events {
        let _ = writeln!(s, "{} {}", e.detector, e.timestamp_ps);
    }
    s
}

pub fn parse_stream(text: &str) -> Result<Vec<DetectionEvent>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(d), Some(t), None) = (it.next(), it.next(), it.next()) else {
            return Err(LabError::Format(format!("stream line {}: expected `detector timestamp`", n + 1)));
        };
        let detector =
            DetectorId::parse(d).ok_or_else(|| LabError::Format(format!("stream line {}: detector {d:?}", n + 1)))?;
        let timestamp_ps = t
            .parse()
            .map_err(|_| LabError::Format(format!("stream line {}: timestamp {t:?}", n + 1)))?;
        out.push(DetectionEvent { timestamp_ps, detector });
    }
    Ok(out)
}

fn bin_char(b: TimeBin) -> char {
    match b {
        TimeBin::Early => 'e',
        TimeBin::Late => 'l',
    }
}

pub fn format_emissions(records: &[EmissionRecord]) -> String {
    let mut s = String::from("# cycle mode offset_GHz phase\n");
    for r in records {
        let mode = match r.temporal_mode {
            TemporalMode::Coherent { .. } => String::from("coherent"),
            TemporalMode::Split { idler, signal } => format!("split-{}{}", bin_char(idler), bin_char(signal)),
        };
        let _ = writeln!(
            s,
            "{} {} {:.6} {:.6}",
            r.cycle_index, mode, r.signal_frequency_offset_ghz, r.pair_phase
        );
    }
    s
}

fn csv_string<F>(f: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w)?;
    let bytes = w.into_inner().map_err(|e| LabError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Format(e.to_string()))
}

pub fn fringe_csv(scan: &FringeScan) -> Result<String> {
    csv_string(|w| {
        w.write_record(["beta_rad", "c11", "c12", "c21", "c22"])?;
        for (b, c) in scan.beta_values.iter().zip(&scan.counts) {
            w.write_record([
                format!("{b:.6}"),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                c[3].to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn parse_fringe_csv(text: &str, alpha: f64, integration_time_per_point_s: f64) -> Result<FringeScan> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    if rdr.headers()?.iter().ne(["beta_rad", "c11", "c12", "c21", "c22"]) {
        return Err(LabError::Format("fringe CSV needs beta_rad,c11,c12,c21,c22".into()));
    }
    let mut beta_values = Vec::new();
    let mut counts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |s: &str| LabError::Format(format!("fringe CSV: bad value {s:?}"));
        beta_values.push(rec[0].parse::<f64>().map_err(|_| bad(&rec[0]))?);
        let mut c = [0u64; 4];
        for k in 0..4 {
            c[k] = rec[k + 1].parse().map_err(|_| bad(&rec[k + 1]))?;
        }
        counts.push(c);
    }
    Ok(FringeScan {
        alpha,
        beta_values,
        counts,
        integration_time_per_point_s,
    })
}

pub fn histogram_csv(h: &Histogram) -> Result<String> {
    csv_string(|w| {
        w.write_record(["bin_center_ps", "count"])?;
        for (center, n) in &h.bins {
            w.write_record([format!("{center:.1}"), n.to_string()])?;
        }
        Ok(())
    })
}

/// `rows` are `(storage_time_ns, efficiencies in percent)`.
pub fn efficiency_csv(rows: &[(f64, Vec<f64>)]) -> Result<String> {
    let n = rows.first().map_or(0, |r| r.1.len());
    csv_string(|w| {
        let mut header = vec![String::from("storage_time_ns")];
        header.extend((1..=n).map(|k| format!("ch{k}")));
        w.write_record(&header)?;
        for (t, effs) in rows {
            let mut rec = vec![format!("{t}")];
            rec.extend(effs.iter().map(|e| format!("{e:.4}")));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// Generic CSV from a header and string rows.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    csv_string(|w| {
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use afc_core::quantum::{bell_psi_plus, TwoQubitState};

    #[test]
    fn matrix_text_round_trip() {
        let rho = bell_psi_plus().projector();
        let text = format_matrix(rho.matrix());
        let back = parse_matrix(&text).unwrap();
        assert!((back - *rho.matrix()).frobenius_norm() < 1e-6);
        // The core Display impl writes the same format.
        let from_display = parse_matrix(&rho.to_string()).unwrap();
        assert_eq!(from_display, back);
        let mixed = TwoQubitState::maximally_mixed();
        assert!((parse_matrix(&format_matrix(mixed.matrix())).unwrap() - *mixed.matrix()).frobenius_norm() < 1e-6);
    }

    #[test]
    fn complex_tokens() {
        assert_eq!(parse_complex("0.5-0.25j"), Some(C64::new(0.5, -0.25)));
        assert_eq!(parse_complex("-1e-3+2E-2j"), Some(C64::new(-1e-3, 2e-2)));
        assert_eq!(parse_complex("0.3"), Some(C64::new(0.3, 0.0)));
        assert_eq!(parse_complex("abc"), None);
        assert!(parse_matrix("1 0 0 0\n0 1 0 0\n").is_err());
    }

    #[test]
    fn stream_round_trip() {
        let events = vec![
            DetectionEvent {
                timestamp_ps: 10,
                detector: DetectorId::A1,
            },
            DetectionEvent {
                timestamp_ps: 12_345,
                detector: DetectorId::B2,
            },
        ];
        assert_eq!(parse_stream(&format_stream(&events)).unwrap(), events);
        assert!(parse_stream("C3 100\n").is_err());
        assert!(parse_stream("A1 x\n").is_err());
    }

    #[test]
    fn fringe_round_trip() {
        let scan = FringeScan {
            alpha: 0.0,
            beta_values: vec![0.0, 0.5, 1.0],
            counts: vec![[1, 2, 3, 4], [5, 6, 7, 8], [9, 10, 11, 12]],
            integration_time_per_point_s: 250.0,
        };
        let back = parse_fringe_csv(&fringe_csv(&scan).unwrap(), 0.0, 250.0).unwrap();
        assert_eq!(back, scan);
    }
}
