use thiserror::Error;

use crate::model::MacrospinState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid integrator: {0}")]
    InvalidIntegrator(String),

    /// A non-finite component appeared; carries the last finite state.
    #[error("numerical blow-up at t = {time}: last finite state {last_valid}")]
    BlowUp {
        time: f64,
        last_valid: MacrospinState,
    },

    #[error("quantum evolution failed at t = {time}: {reason}")]
    QuantumDrift { time: f64, reason: String },

    #[error("too many unresolved basin cells: {fraction:.3} of the grid")]
    Unresolved { fraction: f64 },

    #[error("analysis failed: {0}")]
    Analysis(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::QuantumDrift { .. }
                | Error::Unresolved { .. }
                | Error::Analysis(_)
        )
    }
}
