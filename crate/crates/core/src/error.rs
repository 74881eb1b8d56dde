use thiserror::Error;

use crate::tissue::Tissue;

#[derive(Debug, Error)]
pub enum Error {
    #[error("body mass {mass} kg is outside the supported range [{min}, {max}] kg")]
    MassOutOfRange { mass: f64, min: f64, max: f64 },

    #[error("depth {depth} mm is beyond the modelled region (total depth {total} mm)")]
    DepthOutOfModel { depth: f64, total: f64 },

    #[error("invalid depth {0} mm")]
    InvalidDepth(f64),

    #[error("invalid force table: {0}")]
    Table(String),

    #[error("no {stage} region for {tissue:?}")]
    MissingRegion { tissue: Tissue, stage: &'static str },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("state error: {0}")]
    State(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("record format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
