//! Tomographic-probability representation of continuous-variable quantum
//! states.
//!
//! Density matrices in the number basis map to Wigner functions, Wigner
//! functions to optical and symplectic tomograms, and tomograms back to
//! density matrices. On top of that sit tomographic moments, uncertainty
//! and entropic checks, four-cut subadditivity-type inequalities,
//! residual checks of the tomographic evolution equations for quadratic
//! Hamiltonians, and a simulated homodyne measurement loop.

pub mod error;
pub mod evolution;
pub mod grid;
pub mod homodyne;
pub mod inequalities;
pub mod phasespace;
pub mod special;
pub mod statekit;
pub mod statistics;
pub mod tomography;

pub use error::{Error, Result};
