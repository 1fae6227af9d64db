//! Calculus on post-critically finite self-similar sets.
//!
//! The library works with a purely combinatorial description of a p.c.f.
//! fractal (an iterated function system plus a finite list of gluing
//! relations) together with a regular harmonic structure (level-0
//! conductances, renormalization weights, and a self-similar measure).
//! On top of that it provides:
//!
//! * vertex combinatorics: canonical addresses, level-`m` vertex sets,
//!   junction classification, and shrinking cell neighborhoods,
//! * the harmonic extension matrices `M_j` and their spectral data,
//!   which drive both harmonic interpolation and vertex derivatives,
//! * graph energies, discrete Laplacians, Dirichlet/Poisson solvers, and
//!   exact integration of piecewise-harmonic functions,
//! * the level-1 Green kernel and a Green series evaluator that computes
//!   Dirichlet solutions and their boundary derivatives without grids,
//! * vertex derivatives of all orders (normal and transverse), weak
//!   tangents, and harmonic approximants at junctions,
//! * a suite of experiment drivers reproducing boundedness and decay
//!   rates of derivatives of Poisson solutions, together with the
//!   classical counter-examples that delimit those rates.
//!
//! Everything is generic over the scalar: `f64` for fast floating-point
//! work and arbitrary-precision rationals for exact runs.

pub mod calculus;
pub mod derivatives;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod scalar;
pub mod structure;
pub mod topology;

pub use error::Error;
pub use scalar::{Rational, Scalar};

/// Convenient alias used throughout: a result with the crate error type.
pub type Result<T> = std::result::Result<T, Error>;
