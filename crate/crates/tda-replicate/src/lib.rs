//! Gibbs point-process modeling of persistence diagrams.
//!
//! The crate implements a complete replicate-and-compare pipeline for
//! topological summaries of point clouds:
//!
//! 1. sample a synthetic shape ([`synthetic`]),
//! 2. smooth it into a density field and take superlevel-set persistent
//!    homology ([`kde`], [`cubical`]),
//! 3. project the diagram to (birth, persistence) coordinates ([`diagram`]),
//! 4. fit a nearest-neighbor Gibbs model to the projected points by maximum
//!    pseudolikelihood ([`gibbs`], [`fit`]),
//! 5. draw replicated diagrams from the fitted model with a
//!    Metropolis-Hastings sampler ([`mcmc`]),
//! 6. score replicates against the original with bottleneck / Wasserstein
//!    distances and nearest-neighbor statistics ([`gof`]).
//!
//! [`harness`] orchestrates the whole study over many replications and
//! exposes the `tda-replicate` command-line interface.
//!
//! Two model variants are available: the *original* density, which weights the
//! whole configuration by `KDE(x)^alpha`, and the *modified* density, which
//! moves that weight inside the exponent so the interaction term itself is
//! damped where the diagram is dense. See [`gibbs::Variant`].
//!
//! Everything is deterministic given explicit seeds; see [`rng`].

pub mod cubical;
pub mod diagram;
pub mod error;
pub mod fit;
pub mod gibbs;
pub mod gof;
pub mod harness;
pub mod kde;
pub mod mcmc;
pub mod rng;
pub mod synthetic;
mod util;

pub use error::{Error, Result};
