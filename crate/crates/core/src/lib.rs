// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod clifford;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod hamiltonian;
pub mod noise;
pub mod spectrum;
pub mod spin;

pub use error::{Error, Result};
