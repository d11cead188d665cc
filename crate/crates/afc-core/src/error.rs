use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("state is not normalized (squared norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("matrix is not Hermitian (max defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("matrix trace {trace} is too far from 1")]
    BadTrace { trace: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("frequency offset {offset_ghz} GHz lies outside the pair band")]
    OutsidePairBand { offset_ghz: f64 },
    #[error("event stream is not sorted by timestamp at index {index}")]
    UnsortedStream { index: usize },
    #[error("no counts: {0}")]
    NoCounts(&'static str),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("fit did not converge after {iterations} iterations")]
    FitDiverged { iterations: usize },
    #[error("tomography basis index {0} out of range 1..=16")]
    BasisIndex(usize),
    #[error("missing count cell: {0}")]
    MissingCell(String),
    #[error("measurement set is not informationally complete (condition number {condition})")]
    NotInformationallyComplete { condition: f64 },
}
