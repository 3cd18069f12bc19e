//! Numerical core for the Rankin–Selberg second-moment laboratory.
//!
//! Everything here is `no_std` with `alloc`: exponential sums, Bessel kernels,
//! the smooth delta symbol, eta-product newforms, Petersson and Voronoi
//! summation, the shifted-convolution pipeline and the L-function experiments.
//! File IO, the command line and thread pools live in the `lfunlab` crate.

#![no_std]

extern crate alloc;

pub mod arith;
pub mod bessel;
pub mod deltamethod;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod modforms;
pub mod par;
pub mod quad;
pub mod shifted;
pub mod special;
pub mod spectral;
pub mod sum;
pub mod voronoi;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use par::{Parallel, Sequential};
