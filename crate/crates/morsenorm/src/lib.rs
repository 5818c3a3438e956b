//! Linearization of Morse gradient flows near non-degenerate critical
//! points.
//!
//! Given a Morse function `f` and a Riemannian metric `g` (or a raw
//! polynomial vector field), this crate computes the Morse eigenvalues and
//! the diagonal standard form `V₀ = ∑ λᵢxᵢ∂ᵢ` at a critical point, decides
//! the ℕ-linearity (non-resonance) condition with explicit witnesses,
//! constructs normalizing coordinate changes as truncated power-series jets
//! order by order, and numerically builds and verifies the conjugacy `Φ`
//! between the nonlinear gradient flow `G_t` and the linear flow `F_t`,
//! both by exit-time composition and through the weighted-Sobolev
//! contraction operator whose fixed point reconstructs `Φ(x) = p(0,x) + x`.
//!
//! The guide under `book/` walks through the concepts chapter by chapter;
//! its code snippets compile as doc-tests of this crate.

pub mod change;
pub mod cli;
pub mod coeff;
pub mod field;
pub mod flow;
pub mod jet;
pub mod matrix;
pub mod multi_index;

pub mod normal;
pub mod parse;
pub mod pipeline;
pub mod sobolev;
pub mod report;
pub mod spectrum;
pub mod verify;
pub mod problem;

pub use change::CoordinateChange;
pub use coeff::{Coefficient, Rat};
pub use field::{bracket, lie_derivative, pullback_field, PolyVectorField};
pub use jet::Jet;
pub use matrix::Matrix;
pub use multi_index::MultiIndex;
