use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `line` is 0 when the problem is found after parsing.
    #[error("config {}{key}: {msg}", if *line > 0 { format!("line {line}: ") } else { String::new() })]
    Config { line: usize, key: String, msg: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invariant violated at point {point} seed {seed}: {detail}")]
    Invariant { point: String, seed: u64, detail: String },

    #[error("placement failed: {0}")]
    Placement(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
