//! Lindblad dynamics in Bloch form and Kibble-Zurek scaling of open
//! Landau-Zener and transverse-field Ising quenches.
//!
//! A qubit density matrix `ρ = (I + R·σ)/2` evolves as `dR/dt = M R + b`.
//! [`liouville`] builds `(M, b)` from a Hamiltonian and jump operators,
//! [`propagate`] integrates it, and [`lz`] / [`ising`] apply it to the two
//! driven models. [`oracle`] is a dense `2^N` reference for small chains.

pub mod bloch;
pub mod correlate;
pub mod io;
pub mod ising;
pub mod liouville;
pub mod lz;
pub mod oracle;
pub mod propagate;
pub mod scaling;

use thiserror::Error;

pub use bloch::{BlochError, BlochVector, DensityMatrix, GellMannBasis};
pub use correlate::{corr_zz, correlation_profile, pair_correlators, CorrelateError, CorrelationProfile};
pub use ising::{run_quench, DefectResult, IsingError, IsingParams, ModeEnsemble};
pub use liouville::{assemble, spectrum, steady_states, ChannelClass, JumpChannel, LiouvilleError, LiouvillianSystem, QubitHamiltonian};
pub use lz::{kz_predict, simulate_excitation, LzError, LzParams};
pub use oracle::OracleError;
pub use propagate::{integrate, IntegrationError, TimeDependentSystem, Tolerances, Trajectory};
pub use scaling::{fit_power_law, FitError, ScalingFit};

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Liouville(#[from] LiouvilleError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Lz(#[from] LzError),
    #[error(transparent)]
    Ising(#[from] IsingError),
    #[error(transparent)]
    Correlate(#[from] CorrelateError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

impl Error {
    /// True for failures of the integrator (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Integration(_) | Error::Oracle(OracleError::Integration(_)) => true,
            Error::Lz(LzError::Integration(_)) => true,
            Error::Ising(IsingError::Mode { .. }) | Error::Ising(IsingError::NoRelaxation { .. }) => true,
            Error::Liouville(LiouvilleError::Defective { .. }) => true,
            _ => false,
        }
    }
}
