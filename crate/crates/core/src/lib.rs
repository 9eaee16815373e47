//! Hyperbolic geometry for point clouds.
//!
//! Poincaré-ball maps and distances ([`hypergeo`]), Euclidean and
//! hyperbolic Chamfer distances ([`chamfer`]), the part/whole
//! regularizer and triplet losses with exact gradients ([`losses`]),
//! Gromov δ-hyperbolicity ([`hyperbolicity`]), reconstruction metrics
//! ([`metrics`]), a synthetic part/whole dataset ([`hierdata`]) and a
//! trainer that embeds it in the ball ([`embedopt`]).

pub mod chamfer;
pub mod cli;
pub mod embedopt;
pub mod error;
pub mod gradcheck;
pub mod hierdata;
pub mod hyperbolicity;
pub mod hypergeo;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod svg;

pub use error::{Error, Result};
