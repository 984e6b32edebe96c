//! Uniform-ergodicity constants that hold for every kernel `B ⪰_γ A`.
//!
//! The chain driven by `B` is split into two layers: from the upper layer
//! it moves by `A`, from the lower layer by `C = (B − γA)/(1 − γ)`, and the
//! landing layer is upper with probability `γ`. Meeting-time bounds for two
//! split chains then depend on `B` only through `A` and `γ`.
//!
//! [`certificate`] turns `(A, γ, ε)` into `(R, ρ)` with
//! `sup_x ‖B^t δ_x − π_B‖_TV ≤ R e^{−ρt}`; [`verify_envelope`] checks that
//! inequality exactly on sampled `B`.

use core::fmt;

use crate::chain::ChainError;

mod certificate;
mod coupling;
mod meeting;
mod split;

pub use certificate::{
    beta_from_geometrics, certificate, geometric_mgf, geometric_pair_mgf, improve_bound,
    envelope_sample, verify_envelope, EnvelopeReport, ErgodicityCertificate, DEFAULT_EPSILON, DEFAULT_T_MAX,
};
pub use coupling::{
    simulate_coupling, simulate_meeting_unsplit, CouplingOptions, CouplingReport, Estimate, KBin,
    MeetingReport,
};
pub use meeting::{meeting_mgf, meeting_pgf, q_gamma, MeetingMgf, INFINITE_MARGIN};
pub use split::{build_split, collapse, split_commutation_check, split_vector, SplitKernel};

#[derive(Clone, Debug, PartialEq)]
pub enum ErgodicityError {
    NotGammaControlled,
    InvalidGamma(f64),
    InvalidEpsilon(f64),
    DimensionMismatch { expected: usize, found: usize },
    Chain(ChainError),
}

impl fmt::Display for ErgodicityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErgodicityError::NotGammaControlled => {
                write!(f, "B is not gamma-controlled by A")
            }
            ErgodicityError::InvalidGamma(g) => write!(f, "gamma must lie in (0, 1), got {}", g),
            ErgodicityError::InvalidEpsilon(e) => write!(f, "epsilon must be positive, got {}", e),
            ErgodicityError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {}, found {}", expected, found)
            }
            ErgodicityError::Chain(e) => write!(f, "{}", e),
        }
    }
}

impl core::error::Error for ErgodicityError {}

impl From<ChainError> for ErgodicityError {
    fn from(e: ChainError) -> Self {
        ErgodicityError::Chain(e)
    }
}

pub(crate) fn check_open_gamma(gamma: f64) -> Result<(), ErgodicityError> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(ErgodicityError::InvalidGamma(gamma))
    }
}
