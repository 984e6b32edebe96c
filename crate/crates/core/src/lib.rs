//! Backward stochastic difference equations on finite-state Markov chains:
//! finite-horizon, discounted and ergodic equations, explicit
//! uniform-ergodicity constants from a splitting of the chain, and ergodic
//! optimal control.
//!
//! Kernels are column-stochastic: `a_ij = P(X_{t+1} = e_i | X_t = e_j)`.
//! The crate is `no_std` with `alloc`.

#![no_std]

extern crate alloc;

use core::fmt;

pub mod bsde;
pub mod chain;
pub mod control;
pub mod driver;
pub mod ebsde;
pub mod ergodicity;
pub mod linalg;
pub mod random;

pub use bsde::{BsdeError, ValueTable};
pub use chain::{ChainError, Distribution, TransitionMatrix};
pub use control::{ControlError, ControlModel};
pub use driver::{Driver, DriverError};
pub use ebsde::EbsdeError;
pub use ergodicity::ErgodicityError;

/// Any error raised by the crate.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    Chain(ChainError),
    Driver(DriverError),
    Bsde(BsdeError),
    Ergodicity(ErgodicityError),
    Ebsde(EbsdeError),
    Control(ControlError),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Chain(e) => e.fmt(f),
            Error::Driver(e) => e.fmt(f),
            Error::Bsde(e) => e.fmt(f),
            Error::Ergodicity(e) => e.fmt(f),
            Error::Ebsde(e) => e.fmt(f),
            Error::Control(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! from_error {
    ($($variant:ident($ty:ty)),*) => {
        $(impl From<$ty> for Error {
            fn from(e: $ty) -> Self {
                Error::$variant(e)
            }
        })*
    };
}

from_error!(
    Chain(ChainError),
    Driver(DriverError),
    Bsde(BsdeError),
    Ergodicity(ErgodicityError),
    Ebsde(EbsdeError),
    Control(ControlError)
);
