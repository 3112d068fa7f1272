//! Convex relaxations of geometric clustering and their exact-recovery
//! certificates.
//!
//! The crate covers three relaxations of the clustering problem on planted
//! ball instances:
//!
//! - the k-median LP, certified by cluster-constant duals ([`kmedian`]);
//! - the k-means LP, certified by a scalar window ([`kmeans_lp`]);
//! - the k-means SDP, certified by an explicit `(z, α, β, Q)` dual and solved
//!   numerically by consensus ADMM ([`sdp`]).
//!
//! Around them sit the supporting pieces: instance sampling and brute-force
//! oracles ([`geometry`]), a dense symmetric eigensolver ([`linalg`]), a
//! bounded revised simplex ([`lp`]), Lloyd / kmeans++ baselines
//! ([`heuristics`]), the Jain–Vazirani primal-dual k-median algorithm
//! ([`primal_dual`]) and the phase-diagram harness ([`experiments`]).
//!
//! Trial batches run on rayon when the `parallel` feature is enabled (the
//! default); see [`exec`].

pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod geometry;
pub mod heuristics;
pub mod kmeans_lp;
pub mod kmedian;
pub mod linalg;
pub mod lp;
pub mod primal_dual;
pub mod rng;
pub mod sdp;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use geometry::{ClusterInstance, ClusteringAssignment, Distribution, SquaredDistanceMatrix};
