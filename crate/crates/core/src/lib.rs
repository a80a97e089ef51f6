//! Dual-pixel defocus deblurring.
//!
//! The crate covers the whole pipeline: a dual-pixel image formation
//! simulator ([`sim`]), dataset preparation ([`data`]), a from-scratch
//! encoder-decoder network with its differentiation engine ([`tensor`],
//! [`model`]), training ([`train`]) and evaluation ([`eval`]).

mod error;
pub mod data;
pub mod eval;
pub mod imaging;
pub mod model;
pub mod sim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
