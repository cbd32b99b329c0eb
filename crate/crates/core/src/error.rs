use thiserror::Error;

/// Unified error type for the engine and toolchain.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A spatial region falls outside the tensor it addresses.
    #[error("range error: {0}")]
    Range(String),

    /// The model file is not well-formed text.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// The model file is well-formed but violates a structural rule.
    #[error("validation error at layer {layer}: {message}")]
    Validation { layer: usize, message: String },

    /// A patch plan cannot be constructed or an in-place buffer is undersized.
    #[error("plan error: {0}")]
    Plan(String),

    /// The simulated SRAM arena exceeded its configured budget.
    #[error("budget exceeded at layer {layer}: {live} bytes live, budget {budget} bytes")]
    Budget { layer: usize, live: u64, budget: u64 },

    /// I/O failed while streaming layers out of a model file.
    #[error("stream error after layer {last_good}: {source}")]
    Stream {
        /// Index of the last layer that was yielded intact.
        last_good: usize,
        source: std::io::Error,
    },

    /// A feature window is too short or geometrically infeasible.
    #[error("window error: {0}")]
    Window(String),

    /// A spectral feature was requested on an all-zero window.
    #[error("silent window: total spectral power is zero")]
    SilentWindow,

    /// A data file failed ingestion.
    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
