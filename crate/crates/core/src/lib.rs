//! A numerical laboratory for rotationally symmetric mean curvature flow
//! near degenerate neckpinches.
//!
//! The crate builds a closed "peanut" initial surface (a Hermite-perturbed
//! superellipsoid with bowl-soliton tip caps), selects the borderline
//! gluing coefficients by a shooting argument, perturbs the resulting
//! flow inside a two-parameter family, and tracks each perturbation in
//! self-similar variables until its unstable spectral content exits a
//! shrinking funnel. The exit direction decides the run's fate: one side
//! turns convex and shrinks to a round point, the other develops a neck
//! pinch at the origin with two surviving lobes. Supporting machinery:
//! a Gaussian-weighted Hermite calculus, the translating bowl soliton,
//! sub/supersolution barriers with certified residual signs, and
//! comparison-principle diagnostics.

pub mod barriers;
pub mod bowl;
pub mod config;
pub mod peanut;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod grid;
pub mod hermite;

pub use error::{Error, Result};
