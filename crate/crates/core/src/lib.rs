//! Non-Hermitian multistate Landau-Zener models.
//!
//! Models of the form `H(t) = B t + E + G` with diagonal `B`, `E` and an
//! anti-Hermitian (or, for comparison, Hermitian) coupling `G`. The crate
//! integrates the Schrodinger equation to obtain non-unitary scattering
//! matrices, evaluates the known closed forms for solvable models, and
//! provides the semiclassical and two-time integrability machinery used to
//! analyse models without a closed-form solution.

pub mod adiabatic;
pub mod analytic;
pub mod bdg;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod integrability;
pub mod matrix;
pub mod model;
pub mod numeric;
pub mod ode;
pub mod output;
pub mod propagator;
pub mod quadrature;
pub mod recipes;
pub mod semiclassic;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, C64};
pub use model::{EigenvalueTrace, Hermiticity, NmlzModel};
pub use propagator::{PropagationSettings, ScatteringResult, TransitionTable};
