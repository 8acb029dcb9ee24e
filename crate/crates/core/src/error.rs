use thiserror::Error;

/// Errors raised by the toolkit.
///
/// `Input` covers malformed arguments (dimension mismatches, bad files);
/// the other variants carry the diagnostic a failed numerical check needs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("non-constant rank: rank {rank_a} at {xi_a:?} but rank {rank_b} at {xi_b:?}")]
    NonConstantRank {
        xi_a: Vec<f64>,
        rank_a: usize,
        xi_b: Vec<f64>,
        rank_b: usize,
    },

    #[error("LP solver failure: {reason}\ninstance: {dump}")]
    Lp { reason: String, dump: String },

    #[error("optimizer diverged to {value} (floor {floor}): suspected non-spanning cone or bad growth constant")]
    Divergence { value: f64, floor: f64 },

    #[error("recession function of `{0}` did not converge")]
    Recession(String),

    #[error("potential budget exceeded: used {used}, allowed {allowed}")]
    Budget { used: f64, allowed: f64 },

    #[error("boundary margin violated: atom at {location:?} is {distance} from the boundary, need > {required}")]
    Margin {
        location: Vec<f64>,
        distance: f64,
        required: f64,
    },

    #[error("direction {direction:?} is not in the wave cone (residual {residual})")]
    NotInCone { direction: Vec<f64>, residual: f64 },

    #[error("certificate violated by `{integrand}` with slack {slack}")]
    Certificate { integrand: String, slack: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
