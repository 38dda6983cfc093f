//! Re-identification of 3D point clusters across observation frames.
//!
//! A cluster of detected points (for example the flower centers on one
//! raceme) is summarized by a two-component descriptor, inertia and average
//! distance to the centroid, both functions of centroid-relative distances
//! and therefore invariant to rigid motion of the whole cluster. Positional
//! uncertainty of the detections is propagated into descriptor space with
//! the unscented transform, which yields a Gaussian tolerance region per
//! reference cluster. A candidate frame matches a reference when the squared
//! Mahalanobis distance of its descriptor falls below a chi-square gate and
//! the point counts agree. A seeded Monte Carlo simulator provides the
//! empirical cross-check on the propagated statistics.
//!
//! ```text
//! pixels + depth ─lift─▶ world points ─▶ descriptor (inertia, avg dist)
//!                                              │
//!            unscented transform ──▶ mean, covariance (+ padding)
//!                                              │
//!              observed descriptor ──▶ Mahalanobis² < χ² gate ──▶ match
//! ```
//!
//! Start with [`descriptor::compute_descriptor`] and
//! [`unscented::ut_descriptor_distribution`]; the `examples/` directory walks
//! through each stage end to end.

pub mod cli;
pub mod datasets;
pub mod descriptor;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod montecarlo;
pub mod unscented;

pub use datasets::{
    load_dataset, load_dataset_majority, CountRule, Dataset, FrameRecord, PruneReport,
};
pub use descriptor::{centroid, compute_descriptor, Cluster, Descriptor};
pub use geometry::{
    frame_to_cluster, lift_pixel, to_world, CameraIntrinsics, CameraPose, DepthModel,
    PixelDetection, Point3,
};
pub use matching::{
    is_match, mahalanobis, mahalanobis_sq, match_datasets, MatchConfig, MatchReport, MatchResult,
    PairOutcome,
};
pub use metrics::{chi2_threshold, confidence_ellipse, frobenius_distance, frobenius_norm};
pub use montecarlo::{
    mc_descriptor_stats, noise_sweep, outlier_percentage, padding_study, perturb,
    sample_descriptors, simulate_initial_cluster, trial_rng, McConfig, McStats,
};
pub use unscented::{
    sigma_points, ut_descriptor_distribution, ut_lambda, ut_weights, DescriptorDistribution,
    NoiseModel, SigmaPointSet, UtParams,
};
