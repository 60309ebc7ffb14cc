//! Numerical toolkit for graph submanifolds of Euclidean space: discrete
//! geometry of `f : D ⊂ R^n -> R^m` (jets, induced metric, adapted
//! frames, second fundamental form), the closed-form slope and density
//! stability constants with criterion checks, an exact pointwise algebra
//! engine with randomized inequality verification, the second-variation
//! quadratic form with finite-difference and spectral oracles, and a
//! mean-curvature flow that produces approximately minimal graphs for the
//! full pipeline.

pub mod algebra;
pub mod criterion;
pub mod eigen;
pub mod error;
pub mod fields;
pub mod flow;
pub mod frame;
pub mod grid;
pub mod variation;

pub use error::{Error, Result};
