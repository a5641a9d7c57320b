//! Joint sparse-view CT reconstruction with implicit neural representations.
//!
//! The crate simulates parallel-beam tomography of families of similar
//! objects and reconstructs them with a range of methods:
//!
//! * classical filtered back projection and SIRT ([`classical`]),
//! * per-object coordinate-network fits ([`train`]),
//! * joint baselines that learn a shared initialization or a shared
//!   static component ([`fedavg`], [`maml`], [`wild`]),
//! * a variational-EM scheme that couples all objects through a latent
//!   Gaussian prior over network weights ([`bayes`]).
//!
//! Everything is seed-deterministic. The [`harness`] module runs whole
//! experiments from a TOML config and writes images, metric traces and a
//! report; the `inrtomo` binary is a thin wrapper around it. The
//! `examples/` directory demonstrates each capability on its own.

pub mod adam;
pub mod bayes;
pub mod classical;
pub mod config;
pub mod embedding;
pub mod error;
pub mod fastmath;
pub mod fedavg;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod imageio;
pub mod maml;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod projector;
pub mod siren;
pub mod train;
pub mod wild;

pub use error::{Error, Result};
pub use geometry::{ProjectionGeometry, Sinogram};
pub use grid::ImageGrid;
pub use projector::Projector;
