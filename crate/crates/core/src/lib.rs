#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod csvio;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod gap_constants;
pub mod linear_spectrum;
pub mod potential;
pub mod quad;
pub mod radial_field;
pub mod steady_state;
pub mod trap_constants;

pub use error::{Error, Result};
