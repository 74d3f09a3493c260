//! Travelling-front structure of nonlocally coupled gradient-like systems.
//!
//! The model is a first-order equation on the real line,
//!
//! ```text
//! u'(x) + Phi(u)(x) = 0,
//! Phi(u) = beta * G(u)^-1 DS(u)^T N[S(u)] + G(u)^-1 grad F(u),
//! ```
//!
//! where `N` is a convolution operator (integrable matrix kernel plus finitely
//! many shifted point masses), `S` a coupling map, `F` a local potential and
//! `G` a Riemannian metric. Restricted to constant states the equation reduces
//! to the gradient of a scalar potential `h`, whose nondegenerate zeros carry a
//! Morse index. Front profiles connect such states, mod-2 counts of index-gap-1
//! connections assemble into a chain complex, and the homology of that complex
//! is matched against the relative homology of isolating blocks.
//!
//! Module map:
//! - [`kernel`]: convolution kernels, their discrete operators and transforms;
//! - [`poly`]: multivariate polynomials used by the builtin model maps;
//! - [`system`]: the model data `(S, F, G, N, beta)` and the reduced potential;
//! - [`critical`]: constant states, Morse indices, hyperbolicity margins;
//! - [`localiser`]: smooth bump profiles around constant states;
//! - [`symbol`]: the linearisation symbol `L(xi)` and hyperbolicity scans;
//! - [`grid`]: uniform grids and profiles with constant tail extensions;
//! - [`energy`]: residuals, kinetic energy, the shift Lyapunov function and
//!   the energy identity, sojourn sets;
//! - [`front`]: the collocation Newton solver, homotopy continuation and
//!   deterministic connection counting;
//! - [`decay`]: tail decay rates, predicted (characteristic roots) and fitted;
//! - [`gf2`]: dense GF(2) matrices and ranks;
//! - [`floer`]: the mod-2 chain complex of constant states and its homology;
//! - [`blocks`]: isolating-block verification, relative homology of block
//!   pairs and the forcing bound.

pub mod blocks;
pub mod critical;
pub mod decay;
pub mod energy;
pub mod error;
pub mod floer;
pub mod front;
pub mod gf2;
pub mod grid;
pub mod kernel;
pub mod linsolve;
pub mod localiser;
pub mod poly;
pub mod symbol;
pub mod system;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
