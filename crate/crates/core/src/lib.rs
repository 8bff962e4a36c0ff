//! Numerical laboratory for rate-quantified ergodic theorems.
//!
//! Modules: [`coeffs`] (slowly varying kernels and their power series),
//! [`spectral`] (atomic spectral measures and convergence criteria),
//! [`models`] (linear processes, the rotation chain, ρ-mixing bounds),
//! [`approx`] (martingale approximations and remainder bounds) and
//! [`mc`] (Monte Carlo checks of CLT, LIL and rates).

pub mod approx;
pub mod coeffs;
pub mod criterion;
pub mod error;
pub mod mc;
pub mod models;
pub mod numerics;
pub mod spectral;

pub use error::{LabError, Result};
pub use num_complex::Complex64;
