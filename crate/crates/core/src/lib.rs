//! Cluster-based POD stochastic reduced-order modeling.
//!
//! The pipeline clusters an ensemble of space-time solutions with a
//! time-dependent generalized centroidal Voronoi tessellation whose
//! generators are POD subspaces, trains a Gaussian naive Bayes
//! pre-classifier on the random inputs labelled by that clustering, and
//! evaluates Galerkin reduced-order models with the basis of the predicted
//! cluster. A 1D viscous Burgers full-order model with a stochastic inflow
//! strength drives everything end to end.
//!
//! Module map:
//!
//! * [`ensemble`] grids, snapshots, trajectories and the binary container
//! * [`pod`] method-of-snapshots POD
//! * [`tgcvt`] modified t-gCVT clustering and the classic vector CVT
//! * [`nbayes`] Gaussian naive Bayes pre-classifier and error-rate estimate
//! * [`fom`] Burgers full-order model, strength generators, lifting
//! * [`rom`] Galerkin reduced model, true labels and error statistics
//! * [`pipeline`] end-to-end generate / train / evaluate / report

pub mod ensemble;
pub mod error;
pub mod fom;
pub mod linalg;
pub mod nbayes;
pub mod pipeline;
pub mod pod;
pub mod rom;
pub mod seeds;
pub mod tgcvt;

pub use error::{Error, Result};
