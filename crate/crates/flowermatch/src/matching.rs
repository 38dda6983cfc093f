//! Gating observed descriptors against stored tolerance regions.
//!
//! A candidate matches a region when (a) the flower counts agree and (b) the
//! squared Mahalanobis distance of its descriptor falls strictly inside the
//! chi-square quantile for 2 degrees of freedom at the configured
//! confidence. Covariance padding from [`MatchConfig`] is baked into the
//! regions when [`match_datasets`] builds them; the point-wise gate
//! [`is_match`] always evaluates the region exactly as stored.

use crate::datasets::Dataset;
use crate::descriptor::{compute_descriptor, Descriptor, DescriptorError};
use crate::metrics::{self, MetricsError};
use crate::unscented::{ut_descriptor_distribution, DescriptorDistribution, NoiseModel, UtError};
use rayon::prelude::*;
use thiserror::Error;

/// Covariances whose eigenvalue spread exceeds this are rejected as
/// numerically untrustworthy rather than inverted.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("tolerance covariance is singular (smallest eigenvalue {min_eig:.3e})")]
    SingularCovariance { min_eig: f64 },
    #[error(
        "tolerance covariance condition number {condition:.3e} exceeds {MAX_CONDITION_NUMBER:.0e}"
    )]
    IllConditioned { condition: f64 },
    #[error("negative covariance padding {padding}")]
    InvalidPadding { padding: f64 },
    #[error("the {role} dataset has no frames")]
    EmptyDataset { role: &'static str },
    #[error("aligned comparison needs equal frame counts, got {reference} vs {observed}")]
    LengthMismatch { reference: usize, observed: usize },
    #[error("frame {index} of the {role} dataset: {source}")]
    Frame {
        role: &'static str,
        index: usize,
        #[source]
        source: Box<MatchError>,
    },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Unscented(#[from] UtError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Gate settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Chi-square confidence of the acceptance region.
    pub confidence: f64,
    /// Extra diagonal covariance added to each reference region when
    /// [`match_datasets`] builds it; [`is_match`] itself never pads.
    pub padding: f64,
    /// Reject pairs with differing flower counts.
    pub require_count: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            confidence: 0.95,
            padding: 0.0,
            require_count: true,
        }
    }
}

/// Outcome of gating one descriptor against one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    /// True exactly when `d2 < threshold` and `count_ok`.
    pub matched: bool,
    /// Squared Mahalanobis distance, computed even when the counts disagree.
    pub d2: f64,
    pub threshold: f64,
    /// Whether the flower counts agreed (always true when the count
    /// requirement is disabled).
    pub count_ok: bool,
    /// Identifier of the observed frame, echoed for reporting.
    pub frame_id: i64,
}

/// Squared Mahalanobis distance of `x` from the region.
pub fn mahalanobis_sq(x: &Descriptor, dist: &DescriptorDistribution) -> Result<f64, MatchError> {
    let cov = dist.cov;
    let (eigs, _) = metrics::sym_eigen_2x2(&cov);
    if eigs[1] <= 0.0 {
        return Err(MatchError::SingularCovariance { min_eig: eigs[1] });
    }
    let condition = eigs[0] / eigs[1];
    if condition > MAX_CONDITION_NUMBER {
        return Err(MatchError::IllConditioned { condition });
    }

    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    let inv11 = cov[(1, 1)] / det;
    let inv12 = -cov[(0, 1)] / det;
    let inv22 = cov[(0, 0)] / det;
    let dx = x.inertia - dist.mean.x;
    let dy = x.avg_distance - dist.mean.y;
    // Rounding can push a near-zero quadratic form slightly negative.
    Ok((inv11 * dx * dx + 2.0 * inv12 * dx * dy + inv22 * dy * dy).max(0.0))
}

/// Mahalanobis distance of `x` from the region.
pub fn mahalanobis(x: &Descriptor, dist: &DescriptorDistribution) -> Result<f64, MatchError> {
    Ok(mahalanobis_sq(x, dist)?.sqrt())
}

/// Gates one observed descriptor (with `n_observed` flowers, from frame
/// `frame_id`) against a stored region. The distance is reported even when
/// the count check already rules the pair out.
pub fn is_match(
    x: &Descriptor,
    n_observed: usize,
    frame_id: i64,
    dist: &DescriptorDistribution,
    cfg: &MatchConfig,
) -> Result<MatchResult, MatchError> {
    let threshold = metrics::chi2_threshold(cfg.confidence, 2)?;
    let count_ok = !cfg.require_count || n_observed == dist.flower_count;
    let d2 = mahalanobis_sq(x, dist)?;
    Ok(MatchResult {
        matched: count_ok && d2 < threshold,
        d2,
        threshold,
        count_ok,
        frame_id,
    })
}

/// Gate outcome of one reference/observed frame pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    pub reference_index: usize,
    pub observed_index: usize,
    pub reference_frame: i64,
    pub observed_frame: i64,
    pub d2: f64,
    pub threshold: f64,
    pub count_ok: bool,
    pub matched: bool,
}

/// All-pairs match outcome of two datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// Every evaluated pair in (reference_index, observed_index) order.
    pub pairs: Vec<PairOutcome>,
    pub reference_frames: usize,
    pub observed_frames: usize,
    pub total_matches: usize,
    /// Diagonal matches; only meaningful for aligned datasets.
    pub correct_matches: Option<usize>,
    /// Off-diagonal matches; only meaningful for aligned datasets.
    pub total_false_positives: Option<u64>,
    /// Off-diagonal matches per correct match; `None` when unaligned or when
    /// nothing matched correctly.
    pub avg_false_positives: Option<f64>,
}

impl MatchReport {
    /// The pairs that passed both gate conditions.
    pub fn matched_pairs(&self) -> impl Iterator<Item = &PairOutcome> {
        self.pairs.iter().filter(|p| p.matched)
    }
}

/// Matches every observed frame against every reference frame.
///
/// Each reference frame becomes a tolerance region by propagating `noise`
/// through its descriptor, widened by `cfg.padding` on the diagonal; each
/// observed frame is reduced to its plain descriptor. With `aligned` set,
/// frame i of both datasets is the same physical cluster, so diagonal pairs
/// count as correct matches and off-diagonal ones as false positives.
pub fn match_datasets(
    reference: &Dataset,
    observed: &Dataset,
    noise: &NoiseModel,
    params: &crate::unscented::UtParams,
    cfg: &MatchConfig,
    aligned: bool,
) -> Result<MatchReport, MatchError> {
    if cfg.padding < 0.0 || !cfg.padding.is_finite() {
        return Err(MatchError::InvalidPadding {
            padding: cfg.padding,
        });
    }
    if reference.is_empty() {
        return Err(MatchError::EmptyDataset { role: "reference" });
    }
    if observed.is_empty() {
        return Err(MatchError::EmptyDataset { role: "observed" });
    }
    if aligned && reference.len() != observed.len() {
        return Err(MatchError::LengthMismatch {
            reference: reference.len(),
            observed: observed.len(),
        });
    }
    let frame_err = |role: &'static str, index: usize| {
        move |source: MatchError| MatchError::Frame {
            role,
            index,
            source: Box::new(source),
        }
    };

    let regions: Vec<DescriptorDistribution> = reference
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            ut_descriptor_distribution(frame, noise, params, cfg.padding)
                .map_err(MatchError::from)
                .map_err(frame_err("reference", i))
        })
        .collect::<Result<_, _>>()?;
    let descriptors: Vec<Descriptor> = observed
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            compute_descriptor(frame)
                .map_err(MatchError::from)
                .map_err(frame_err("observed", i))
        })
        .collect::<Result<_, _>>()?;

    let pairs: Vec<PairOutcome> = regions
        .par_iter()
        .enumerate()
        .map(|(r, region)| {
            let mut rows = Vec::with_capacity(descriptors.len());
            for (o, x) in descriptors.iter().enumerate() {
                let obs_frame = &observed.frames[o];
                let result = is_match(x, obs_frame.len(), obs_frame.frame_id, region, cfg)
                    .map_err(frame_err("reference", r))?;
                rows.push(PairOutcome {
                    reference_index: r,
                    observed_index: o,
                    reference_frame: reference.frames[r].frame_id,
                    observed_frame: obs_frame.frame_id,
                    d2: result.d2,
                    threshold: result.threshold,
                    count_ok: result.count_ok,
                    matched: result.matched,
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, MatchError>>()?
        .into_iter()
        .flatten()
        .collect();

    let total_matches = pairs.iter().filter(|p| p.matched).count();
    let (correct_matches, total_false_positives, avg_false_positives) = if aligned {
        let correct = pairs
            .iter()
            .filter(|p| p.matched && p.reference_index == p.observed_index)
            .count();
        let fp = (total_matches - correct) as u64;
        let avg = (correct > 0).then(|| fp as f64 / correct as f64);
        (Some(correct), Some(fp), avg)
    } else {
        (None, None, None)
    };

    Ok(MatchReport {
        pairs,
        reference_frames: reference.len(),
        observed_frames: observed.len(),
        total_matches,
        correct_matches,
        total_false_positives,
        avg_false_positives,
    })
}
