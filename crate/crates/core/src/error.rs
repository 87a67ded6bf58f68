use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "deadline {tau_a_s} s not above T_R {t_r_s} s plus worst-case pool duration {max_pool_s} s"
    )]
    Infeasible {
        tau_a_s: f64,
        t_r_s: f64,
        max_pool_s: f64,
    },

    #[error("activation curve cannot be fitted: {0}")]
    Unfittable(String),

    #[error("every grid point is infeasible")]
    NoFeasiblePoint,

    #[error("no scenarios")]
    NoScenarios,

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable category, used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::Infeasible { .. } => "infeasible",
            Error::Unfittable(_) => "unfittable",
            Error::NoFeasiblePoint => "infeasible",
            Error::NoScenarios => "config",
            Error::Config(_) => "config",
        }
    }
}
