//! Steady-state simulation of a three-level Lambda atom coupled to two
//! counterpropagating whispering-gallery mode pairs driven through a fiber.
//!
//! Two solvers are provided: a Liouvillian solve on a truncated Fock space
//! ([`th`]) and adiabatic elimination of the cavity modes ([`ae`]).
//! Frequencies are in units of the atomic decay rate and `hbar = 1`.

// `!(x < tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod ae;
pub mod dressed;
pub mod emit;
pub mod fockspace;
mod linalg;
pub mod observables;
pub mod params;
pub mod scalar;
pub mod scan;
pub mod th;

pub use num_complex::Complex64;

pub type Params = params::PhysicalParams<f64>;
pub type Validated = params::ValidatedParams<f64>;
pub type Couplings = params::ModeCouplings<f64>;
pub type Constants = ae::EffectiveConstants<f64>;
pub type AtomModel = ae::EffectiveAtomModel<f64>;
pub type AtomState = ae::AtomicDM<f64>;
pub type Coefficients = observables::OutputCoefficients<f64>;
