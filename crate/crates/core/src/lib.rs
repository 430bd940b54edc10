//! Numerical core of bogotool.
//!
//! Everything in this crate is `no_std` (with `alloc`): N-function calculus,
//! power-law stress tensors, uniform-grid fields and difference quotients,
//! Whitney decompositions into dyadic cubes, singular integral kernels with
//! measured operator bounds, the Bogovskii solution operator on cubes and a
//! stream-function solver for the stationary p-Stokes problem.
//!
//! File formats, reports and the command line live in the `bogotool` crate.

#![no_std]
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

extern crate alloc;

pub mod bogovskii;
pub mod czop;
mod error;
pub mod grid;
pub mod linalg;
pub mod math;
pub mod nfunc;
pub mod pstokes;
pub mod quad;
pub mod tensor;
pub mod whitney;

pub use error::{Error, Result};
pub use grid::{Field, Rank, Sign, UniformGrid};
pub use nfunc::{NFunction, NFunctionPD, ShiftedNFunction};
pub use tensor::{StressModel, SymTensor};
