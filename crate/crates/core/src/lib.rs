//! Finite-blocklength achievability and converse bounds for Rician
//! block-fading channels without a priori channel state information.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod error;
pub mod infodens;
pub mod mc;
pub mod numerics;
pub mod solvers;

pub use error::{Error, Result};
