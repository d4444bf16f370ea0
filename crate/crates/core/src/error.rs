use thiserror::Error;

pub type Result<T> = std::result::Result<T, HalfordError>;

/// Which generating model a draw came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SideId {
    #[serde(rename = "H1")]
    H1,
    #[serde(rename = "H2")]
    H2,
}

impl std::fmt::Display for SideId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SideId::H1 => f.write_str("H1"),
            SideId::H2 => f.write_str("H2"),
        }
    }
}

#[derive(Debug, Error)]
pub enum HalfordError {
    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("observation {x} lies outside the declared support ({support})")]
    Support { x: f64, support: String },

    #[error(
        "mutual absolute continuity violated at x = {x} (log p1 = {log_p1}, log p2 = {log_p2}){}",
        draw.map(|(side, i)| format!(", draw #{i} from {side}")).unwrap_or_default()
    )]
    AbsoluteContinuity {
        x: f64,
        log_p1: f64,
        log_p2: f64,
        draw: Option<(SideId, usize)>,
    },

    #[error("method `{method}` is not available for this pair: {reason}")]
    Method {
        method: &'static str,
        reason: String,
    },

    #[error("I({t}) is infinite; t lies outside the effective domain")]
    OutsideDomain { t: f64 },

    #[error("Renyi order t = {t} is unsupported: {reason}")]
    UnsupportedOrder { t: f64, reason: &'static str },

    #[error("convexity certificate needs at least 3 finite grid values, got {finite}")]
    InsufficientGrid { finite: usize },

    #[error("quadrature did not converge after {cells} nodes (last estimate {estimate})")]
    QuadratureNotConverged { estimate: f64, cells: usize },

    #[error("invalid check plan: {0}")]
    Plan(String),

    #[error("budget N = {0} is too small (need N >= 4)")]
    Budget(u64),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("indeterminate result: {0}")]
    Indeterminate(String),

    #[error("unknown format `{0}`")]
    Format(String),

    #[error("replication {index} (seed {seed:#018x}) failed: {source}")]
    Replication {
        index: usize,
        seed: u64,
        #[source]
        source: Box<HalfordError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HalfordError {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        HalfordError::ParameterDomain {
            name,
            value,
            reason,
        }
    }
}
