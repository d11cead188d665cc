//! Published tables shipped as CSV, each guarded by a SHA-256 checksum.

use std::path::Path;

use afc_core::linalg::{CMat4, C64};
use afc_core::quantum::{nearest_psd, TwoQubitState};
use afc_core::tomography::CountRecord;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const CHECKSUMS: &str = include_str!("../fixtures/SHA256SUMS");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fixture {
    /// Internal storage efficiency vs storage time, five channels.
    Table2,
    /// Tomography sub-counts after storage, channel 1.
    Table3,
    /// Density matrices before and after storage, channel 1.
    Table4,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Fixture::Table2, Fixture::Table3, Fixture::Table4];

    pub fn file_name(self) -> &'static str {
        match self {
            Fixture::Table2 => "table2_storage_efficiency.csv",
            Fixture::Table3 => "table3_tomography_counts.csv",
            Fixture::Table4 => "table4_density_matrices.csv",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Table2 => "table2",
            Fixture::Table3 => "table3",
            Fixture::Table4 => "table4",
        }
    }

    pub fn parse(name: &str) -> Option<Fixture> {
        Fixture::ALL.into_iter().find(|f| f.name() == name)
    }

    fn embedded(self) -> &'static str {
        match self {
            Fixture::Table2 => include_str!("../fixtures/table2_storage_efficiency.csv"),
            Fixture::Table3 => include_str!("../fixtures/table3_tomography_counts.csv"),
            Fixture::Table4 => include_str!("../fixtures/table4_density_matrices.csv"),
        }
    }

    pub fn expected_checksum(self) -> Result<&'static str> {
        CHECKSUMS
            .lines()
            .filter_map(|l| l.split_once(char::is_whitespace))
            .find(|(_, file)| file.trim() == self.file_name())
            .map(|(sum, _)| sum)
            .ok_or_else(|| LabError::Fixture {
                name: self.file_name().into(),
                reason: "no checksum listed".into(),
            })
    }

    /// Checks `text` against the listed checksum.
    pub fn verify(self, text: &str) -> Result<()> {
        let actual = sha256_hex(text.as_bytes());
        let expected = self.expected_checksum()?;
        if actual != expected {
            return Err(LabError::Fixture {
                name: self.file_name().into(),
                reason: format!("checksum mismatch: expected {expected}, found {actual}"),
            });
        }
        Ok(())
    }

    /// Fixture text, read from `dir` when given, verified either way.
    pub fn load_text(self, dir: Option<&Path>) -> Result<String> {
        let text = match dir {
            Some(d) => {
                let p = d.join(self.file_name());
                std::fs::read_to_string(&p).map_err(|e| LabError::io(p, e))?
            }
            None => self.embedded().to_string(),
        };
        self.verify(&text)?;
        Ok(text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn bad(f: Fixture, reason: impl Into<String>) -> LabError {
    LabError::Fixture {
        name: f.file_name().into(),
        reason: reason.into(),
    }
}

/// Storage efficiency table, percent.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyTable {
    pub storage_times_ns: Vec<f64>,
    /// `[row][channel]`
    pub efficiencies_percent: Vec<Vec<f64>>,
    pub sigma_percent: Vec<f64>,
}

impl EfficiencyTable {
    pub fn channels(&self) -> usize {
        self.efficiencies_percent.first().map_or(0, Vec::len)
    }

    pub fn column(&self, channel: usize) -> Vec<f64> {
        self.efficiencies_percent.iter().map(|r| r[channel]).collect()
    }
}

pub fn parse_table2(text: &str) -> Result<EfficiencyTable> {
    let f = Fixture::Table2;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let n_ch = headers.iter().filter(|h| h.starts_with("ch")).count();
    if n_ch == 0 || headers.get(0) != Some("storage_time_ns") || headers.get(n_ch + 1) != Some("sigma") {
        return Err(bad(f, "expected columns storage_time_ns,ch1..chN,sigma"));
    }
    let mut out = EfficiencyTable {
        storage_times_ns: Vec::new(),
        efficiencies_percent: Vec::new(),
        sigma_percent: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(f, format!("line {}: {e}", rec.position().map_or(0, |p| p.line()))))?;
        if nums.len() != n_ch + 2 {
            return Err(bad(f, "ragged row"));
        }
        out.storage_times_ns.push(nums[0]);
        out.efficiencies_percent.push(nums[1..=n_ch].to_vec());
        out.sigma_percent.push(nums[n_ch + 1]);
    }
    Ok(out)
}

/// Tomography table: the sub-count record plus the printed `n_v` column.
#[derive(Clone, Debug, PartialEq)]
pub struct TomographyTable {
    pub record: CountRecord,
    pub printed_totals: [u64; 16],
}

pub fn parse_table3(text: &str) -> Result<TomographyTable> {
    let f = Fixture::Table3;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let expected = ["v", "photon1", "photon2", "DD", "DR", "RD", "RR", "n_v"];
    if rdr.headers()?.iter().ne(expected) {
        return Err(bad(f, format!("expected columns {}", expected.join(","))));
    }
    let mut rows = [[None; 4]; 16];
    let mut totals = [0u64; 16];
    let mut seen = [false; 16];
    for rec in rdr.records() {
        let rec = rec?;
        let v: usize = rec[0].parse().map_err(|_| bad(f, "bad basis index"))?;
        if !(1..=16).contains(&v) || seen[v - 1] {
            return Err(bad(f, format!("basis index {v} out of range or repeated")));
        }
        seen[v - 1] = true;
        let basis = afc_core::tomography::TomographyBasis::new(v)?;
        if rec[1].trim() != basis.photon1.label() || rec[2].trim() != basis.photon2.label() {
            return Err(bad(f, format!("basis {v} labels do not match the basis order")));
        }
        for s in 0..4 {
            let cell = rec[3 + s].trim();
            rows[v - 1][s] = if cell == "-" {
                None
            } else {
                Some(cell.parse().map_err(|_| bad(f, format!("basis {v}: bad count {cell:?}")))?)
            };
        }
        totals[v - 1] = rec[7].trim().parse().map_err(|_| bad(f, format!("basis {v}: bad n_v")))?;
    }
    if seen.iter().any(|s| !s) {
        return Err(bad(f, "all 16 bases are required"));
    }
    let record = CountRecord::from_sub_counts(rows)?;
    if record.totals() != totals {
        return Err(bad(f, "n_v column does not equal the row sums"));
    }
    Ok(TomographyTable {
        record,
        printed_totals: totals,
    })
}

/// Printed density matrices (3-decimal, trace ≈ 1).
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPair {
    pub before: CMat4,
    pub after: CMat4,
}

impl MatrixPair {
    /// Closest physical states to the printed matrices.
    pub fn states(&self) -> Result<(TwoQubitState, TwoQubitState)> {
        Ok((nearest_psd(&self.before)?, nearest_psd(&self.after)?))
    }
}

pub fn parse_table4(text: &str) -> Result<MatrixPair> {
    let f = Fixture::Table4;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut before = [[None; 4]; 4];
    let mut after = [[None; 4]; 4];
    for rec in rdr.records() {
        let rec = rec?;
        let target = match rec[0].trim() {
            "before" => &mut before,
            "after" => &mut after,
            other => return Err(bad(f, format!("unknown matrix {other:?}"))),
        };
        let idx = |s: &str| s.trim().parse::<usize>().ok().filter(|&i| i < 4);
        let (Some(r), Some(c)) = (idx(&rec[1]), idx(&rec[2])) else {
            return Err(bad(f, "row/col must be 0..3"));
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(f, format!("bad number {s:?}")));
        target[r][c] = Some(C64::new(num(&rec[3])?, num(&rec[4])?));
    }
    let finish = |m: [[Option<C64>; 4]; 4], name: &str| -> Result<CMat4> {
        let mut out = CMat4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                out.0[r][c] = m[r][c].ok_or_else(|| bad(f, format!("{name} entry ({r},{c}) missing")))?;
            }
        }
        Ok(out)
    };
    Ok(MatrixPair {
        before: finish(before, "before")?,
        after: finish(after, "after")?,
    })
}

pub fn table2(dir: Option<&Path>) -> Result<EfficiencyTable> {
    parse_table2(&Fixture::Table2.load_text(dir)?)
}

pub fn table3(dir: Option<&Path>) -> Result<TomographyTable> {
    parse_table3(&Fixture::Table3.load_text(dir)?)
}

pub fn table4(dir: Option<&Path>) -> Result<MatrixPair> {
    parse_table4(&Fixture::Table4.load_text(dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_fixtures_verify_and_parse() {
        let t2 = table2(None).unwrap();
        assert_eq!(t2.storage_times_ns.len(), 9);
        assert_eq!(t2.channels(), 5);
        assert_eq!(t2.column(0)[4], 0.56);
        let t3 = table3(None).unwrap();
        assert_eq!(t3.printed_totals[10], 1485);
        let t4 = table4(None).unwrap();
        assert_eq!(t4.before.0[0][3], C64::new(0.440, -0.009));
        assert_eq!(t4.after.0[3][0], C64::new(0.421, -0.042));
    }

    #[test]
    fn corrupted_fixture_is_rejected() {
        let text = Fixture::Table3.embedded().replace("1485", "1486");
        let err = Fixture::Table3.verify(&text).unwrap_err();
        assert!(err.to_string().contains("checksum mismatch"));
    }

    #[test]
    fn row_sum_mismatch_is_rejected() {
        let text = Fixture::Table3.embedded().replace("16,R,R,-,-,-,106,106", "16,R,R,-,-,-,106,107");
        assert!(parse_table3(&text).is_err());
    }

    #[test]
    fn dash_pattern_is_checked() {
        let text = Fixture::Table3.embedded().replace("11,D,D,1485,-,-,-,1485", "11,D,D,1485,0,-,-,1485");
        assert!(parse_table3(&text).is_err());
    }

    #[test]
    fn reads_fixtures_from_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        for f in Fixture::ALL {
            std::fs::write(dir.path().join(f.file_name()), f.embedded()).unwrap();
        }
        assert!(table4(Some(dir.path())).is_ok());
        std::fs::write(dir.path().join(Fixture::Table2.file_name()), "storage_time_ns,ch1,sigma\n").unwrap();
        assert!(table2(Some(dir.path())).is_err());
    }
}
