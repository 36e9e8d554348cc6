//! Tensors, a reverse-mode tape, temporal patch and channel shifts, windowed
//! attention and a small video transformer built from them.
//!
//! `no_std` with `alloc`; all arithmetic is `f64`.

#![no_std]

extern crate alloc;

pub mod attention;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod model;
pub mod ops;
pub mod oracle;
pub mod patterns;
pub mod shift;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
