use thiserror::Error;

/// Errors produced anywhere in the solver and pipeline stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate motion: relative translation is numerically zero")]
    DegenerateMotion,
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("epipolar system is rank deficient (degenerate configuration)")]
    RankDeficient,
    #[error("gauss-jordan elimination hit a vanishing pivot in column {column}")]
    EliminationFailed { column: usize },
    #[error("no valid hypothesis could be generated")]
    NoValidHypothesis,
    #[error("rotation graph is disconnected ({unreached} cameras unreachable from camera 0)")]
    DisconnectedGraph { unreached: usize },
    #[error("inverse depth system is ill-conditioned (no parallax)")]
    IllConditioned,
    #[error("problem generation failed after {attempts} rejection retries")]
    GenerationFailed { attempts: usize },
    #[error("parse error in {source_name} at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        source_name: String,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("observation ({x:.1}, {y:.1}) in frame {frame} lies far outside the {width}x{height} image")]
    CalibrationMismatch {
        frame: usize,
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
