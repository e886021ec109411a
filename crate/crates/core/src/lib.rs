//! Nilpotent Lie group extensions of an abstract Wiener space, their
//! geometry, hypoelliptic Brownian motion and Monte Carlo checks of
//! heat-kernel functional inequalities.
//!
//! All objects live on finite truncations `g = ℝ^m ⊕ v`; see
//! [`algebra::ExtensionSpec`].

pub mod algebra;
pub mod error;
pub mod geometry;
pub mod heatkernel;
pub mod norms;
pub mod stochastic;
pub mod zoo;

pub use algebra::{
    apply_equivalence, detect_step, validate_extension, Check, CheckResult, Element, ExtensionSpec,
    Isomorphism, Permutation, SpecParts, ValidationReport,
};
pub use error::{NilError, Result};
