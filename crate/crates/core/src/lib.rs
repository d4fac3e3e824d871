//! Clustering and density estimation driven by pseudo-volumes.
//!
//! The pseudo-volume of a density is the square root of the determinant of its
//! covariance matrix. A density is *decomposable* when it can be written as a
//! mixture whose components have a smaller summed pseudo-volume than the whole;
//! elliptical unimodal densities never are. This crate uses that criterion to
//!
//! * split and merge clusters without knowing their number in advance
//!   ([`cluster::split_merge_cluster`]),
//! * pick per-segment bandwidths for a mixture kernel density estimator
//!   ([`kde::mixture_kde`]),
//! * numerically check the inequalities the criterion rests on ([`verify`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod data;
pub mod em;
pub mod error;
pub mod kde;
pub mod kmeans;
pub mod metrics;
pub mod sampling;
pub mod stats;
pub mod verify;

pub use cluster::{
    merge_test, split_merge_cluster, split_test, ClusterTree, ClusterView, ClusteringConfig,
    Decision,
};
pub use em::{em_two_gaussian, hard_partition, EmConfig, EmFit, GaussianComponent, SplitResult};
pub use error::{Error, Result};
pub use kde::{mixture_kde, KdeConfig, KdeModel, Kernel};
pub use stats::{
    min_pseudo_volume_bound, pseudo_volume, sample_moments, spherical_uniform_covariance,
    CovarianceDivisor, DataMatrix, Moments, PseudoVolume,
};
