use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rf drive is resonant with the Zeeman splitting: nu = {nu} rad/s, Omega_rf = {omega_rf} rad/s")]
    Resonance { nu: f64, omega_rf: f64 },

    #[error("singular separation denominator: 5 g_D - chi g_S = {0}")]
    SingularSeparation(f64),

    #[error("position {x} m lies outside the field domain [{min}, {max}] m")]
    OutOfDomain { x: f64, min: f64, max: f64 },

    #[error("posterior mass underflow: the outcome is inconsistent with the prior support")]
    MassUnderflow,

    #[error("outcome has no repetitions in either basis")]
    EmptyOutcome,

    #[error("underdetermined fit: {0} point(s), at least 2 distinct interrogation times needed")]
    Underdetermined(usize),

    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_cycle(self, cycle: usize) -> Self {
        Error::Cycle {
            cycle,
            source: Box::new(self),
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
