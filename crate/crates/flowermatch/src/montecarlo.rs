//! Monte Carlo validation of the propagated descriptor statistics, plus the
//! synthetic-cluster experiment protocols built on it.
//!
//! Every trial runs on its own counter-based RNG substream
//! (`trial_rng(seed, trial)`), so results are bit-identical no matter how the
//! trials are scheduled across threads. A trial draws, in order: the flower
//! count (when randomized), the initial cluster coordinates, then the
//! per-coordinate Gaussian perturbations.
//!
//! [`mc_descriptor_stats`] estimates the empirical descriptor mean and
//! covariance of a perturbed cluster; [`noise_sweep`] compares it against the
//! unscented prediction across noise levels; [`padding_study`] measures how
//! covariance padding trades correct matches against false positives on a
//! population of random clusters.

use crate::descriptor::{compute_descriptor, Cluster, Descriptor, DescriptorError};
use crate::geometry::Point3;
use crate::matching::{self, MatchConfig, MatchError};
use crate::metrics::{self, MetricsError};
use crate::unscented::{
    ut_descriptor_distribution, DescriptorDistribution, NoiseModel, UtError, UtParams,
};
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("trial count must be at least 1")]
    InvalidTrials,
    #[error("no samples to evaluate")]
    EmptySamples,
    #[error("flower range {lo}..={hi} is invalid (need 2 <= lo <= hi)")]
    InvalidFlowerRange { lo: usize, hi: usize },
    #[error("cluster extent must be positive and finite, got {extent}")]
    InvalidExtent { extent: f64 },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Unscented(#[from] UtError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Simulation settings shared by the Monte Carlo entry points.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub noise: NoiseModel,
    /// Cluster size used when the protocol synthesizes its own clusters.
    pub n_flowers: usize,
    /// Edge length of the `[0, extent)³` cube initial positions are drawn from.
    pub extent: f64,
    /// Keep the per-trial descriptors in [`McStats::samples`].
    pub retain_samples: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 42,
            noise: NoiseModel::isotropic(0.01),
            n_flowers: 3,
            extent: 1.0,
            retain_samples: false,
        }
    }
}

/// Empirical descriptor statistics over the Monte Carlo trials.
#[derive(Debug, Clone, PartialEq)]
pub struct McStats {
    pub mean: Vector2<f64>,
    /// Sample covariance with the N−1 normalization.
    pub cov: Matrix2<f64>,
    pub samples: Option<Vec<Descriptor>>,
    /// Set when a single trial leaves the covariance undefined (reported as
    /// zero).
    pub degenerate_cov: bool,
}

/// The RNG substream for one trial: same key for every trial of a run, the
/// trial index as the stream counter. Draws never cross streams, which keeps
/// parallel execution order-independent.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Stream index reserved for synthesizing the base cluster of a run, so it
/// never collides with a trial stream.
pub const CLUSTER_STREAM: u64 = u64::MAX;

/// Draws an initial cluster of `n` points uniform in `[0, extent)³`.
pub fn simulate_initial_cluster(
    n: usize,
    extent: f64,
    rng: &mut impl Rng,
) -> Result<Cluster, McError> {
    if n < 2 {
        return Err(DescriptorError::TooFewPoints { found: n }.into());
    }
    if extent <= 0.0 || !extent.is_finite() {
        return Err(McError::InvalidExtent { extent });
    }
    let points = (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..extent),
                rng.random_range(0.0..extent),
                rng.random_range(0.0..extent),
            )
        })
        .collect();
    Ok(Cluster::new(points, 0))
}

/// Adds zero-mean Gaussian noise to every coordinate, point by point in
/// x, y, z order.
pub fn perturb(
    cluster: &Cluster,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Result<Cluster, McError> {
    cluster.validate()?;
    noise.validate()?;
    let points = cluster
        .points
        .iter()
        .map(|p| {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let dz: f64 = rng.sample(StandardNormal);
            Point3::new(
                p.x + noise.sigma[0] * dx,
                p.y + noise.sigma[1] * dy,
                p.z + noise.sigma[2] * dz,
            )
        })
        .collect();
    Ok(Cluster {
        points,
        frame_id: cluster.frame_id,
        source: cluster.source.clone(),
    })
}

/// Empirical descriptor mean and covariance of `cfg.trials` independent
/// perturbations of `cluster`.
///
/// Identical `(cluster, cfg)` inputs give bit-identical results regardless
/// of how many threads the run uses.
pub fn mc_descriptor_stats(cluster: &Cluster, cfg: &McConfig) -> Result<McStats, McError> {
    if cfg.trials == 0 {
        return Err(McError::InvalidTrials);
    }
    compute_descriptor(cluster)?; // fail fast on unusable clusters
    let samples: Vec<Descriptor> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial as u64);
            let perturbed = perturb(cluster, &cfg.noise, &mut rng)?;
            Ok(compute_descriptor(&perturbed)?)
        })
        .collect::<Result<_, McError>>()?;

    // Serial reduction over the ordered samples keeps the result independent
    // of the parallel schedule above.
    let n = samples.len() as f64;
    let mut mean = Vector2::zeros();
    for d in &samples {
        mean += d.as_vector();
    }
    mean /= n;

    let degenerate_cov = samples.len() < 2;
    let mut cov = Matrix2::zeros();
    if !degenerate_cov {
        for d in &samples {
            let z = d.as_vector() - mean;
            cov.m11 += z.x * z.x;
            cov.m12 += z.x * z.y;
            cov.m22 += z.y * z.y;
        }
        cov /= n - 1.0;
        cov.m21 = cov.m12;
    }

    Ok(McStats {
        mean,
        cov,
        samples: cfg.retain_samples.then_some(samples),
        degenerate_cov,
    })
}

/// Percentage (0..=100) of descriptor samples whose squared Mahalanobis
/// distance from `dist` exceeds the chi-square gate at `confidence`.
pub fn outlier_percentage(
    samples: &[Descriptor],
    dist: &DescriptorDistribution,
    confidence: f64,
) -> Result<f64, McError> {
    if samples.is_empty() {
        return Err(McError::EmptySamples);
    }
    let threshold = metrics::chi2_threshold(confidence, 2)?;
    let mut outliers = 0usize;
    for d in samples {
        if matching::mahalanobis_sq(d, dist)? > threshold {
            outliers += 1;
        }
    }
    Ok(100.0 * outliers as f64 / samples.len() as f64)
}

/// Draws descriptor-space samples from the Gaussian `dist` itself (not from
/// perturbed geometry); used to calibrate the gate's nominal miss rate.
pub fn sample_descriptors(
    dist: &DescriptorDistribution,
    count: usize,
    seed: u64,
) -> Result<Vec<Descriptor>, McError> {
    dist.validate()?;
    // Lower Cholesky factor of the 2x2 covariance, tolerating zero variance.
    let a = dist.cov[(0, 0)].max(0.0);
    let l11 = a.sqrt();
    let l21 = if l11 > 0.0 {
        dist.cov[(1, 0)] / l11
    } else {
        0.0
    };
    let l22 = (dist.cov[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Ok((0..count)
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            Descriptor {
                inertia: dist.mean.x + l11 * z1,
                avg_distance: dist.mean.y + l21 * z1 + l22 * z2,
            }
        })
        .collect())
}

/// One row of the noise sweep: Monte Carlo vs. unscented covariance
/// agreement and the empirical outlier rate at the configured gate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub noise: f64,
    /// Frobenius distance between the Monte Carlo and unscented covariances.
    pub frobenius_norm: f64,
    /// Percentage of Monte Carlo descriptors outside the chi-square gate.
    pub outlier_pct: f64,
}

/// Runs [`mc_descriptor_stats`] against [`ut_descriptor_distribution`] for
/// every noise level in `grid`.
///
/// All levels reuse the same trial substreams (common random numbers), so the
/// agreement trend over the grid is smooth in the noise rather than jittered
/// by resampling.
pub fn noise_sweep(
    cluster: &Cluster,
    grid: &[f64],
    trials: usize,
    seed: u64,
    params: &UtParams,
    confidence: f64,
) -> Result<Vec<SweepRow>, McError> {
    let mut rows = Vec::with_capacity(grid.len());
    for &sigma in grid {
        let noise = NoiseModel::isotropic(sigma);
        noise.validate()?;
        let cfg = McConfig {
            trials,
            seed,
            noise,
            retain_samples: true,
            ..McConfig::default()
        };
        let mc = mc_descriptor_stats(cluster, &cfg)?;
        let ut = ut_descriptor_distribution(cluster, &noise, params, 0.0)?;
        let samples = mc.samples.as_deref().expect("samples retained");
        rows.push(SweepRow {
            noise: sigma,
            frobenius_norm: metrics::frobenius_distance(&mc.cov, &ut.cov),
            outlier_pct: outlier_percentage(samples, &ut, confidence)?,
        });
    }
    Ok(rows)
}

/// Settings for the two-arm padding study.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddingStudyConfig {
    pub trials: usize,
    pub seed: u64,
    pub confidence: f64,
    /// Detection noise of the unpadded arm.
    pub baseline_noise: f64,
    /// Detection noise of the padded arm; keep equal to `baseline_noise` for
    /// a controlled comparison, or raise it to pair padding with a noisier
    /// sensor.
    pub padded_noise: f64,
    /// Covariance padding applied in the padded arm.
    pub padding: f64,
    /// Inclusive range the per-trial flower count is drawn from.
    pub flower_range: (usize, usize),
    pub extent: f64,
    pub params: UtParams,
}

impl Default for PaddingStudyConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 42,
            confidence: 0.95,
            baseline_noise: 0.01,
            padded_noise: 0.01,
            padding: 0.005,
            flower_range: (3, 6),
            extent: 1.0,
            params: UtParams::default(),
        }
    }
}

/// Match statistics of one study arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmOutcome {
    pub label: String,
    pub noise: f64,
    pub padding: f64,
    /// Trials whose perturbed descriptor matched their own tolerance region.
    pub correct_matches: usize,
    /// Matches of a descriptor against a foreign tolerance region, summed
    /// over all ordered pairs.
    pub total_false_positives: u64,
    /// `total_false_positives / correct_matches`; `None` when nothing
    /// matched correctly.
    pub avg_false_positives: Option<f64>,
}

/// Runs the all-pairs match experiment with and without padding.
///
/// Each trial draws a random cluster (flower count uniform in
/// `flower_range`), builds its unscented tolerance region, perturbs the
/// cluster once, and records whether the perturbed descriptor matches its
/// own region (correct) or someone else's (false positive, counted over all
/// count-compatible ordered pairs). Both arms replay the same substreams, so
/// with equal noise they see identical clusters and perturbations.
pub fn padding_study(cfg: &PaddingStudyConfig) -> Result<[ArmOutcome; 2], McError> {
    let baseline = run_study_arm("baseline", cfg, cfg.baseline_noise, 0.0)?;
    let padded = run_study_arm("padded", cfg, cfg.padded_noise, cfg.padding)?;
    Ok([baseline, padded])
}

fn run_study_arm(
    label: &str,
    cfg: &PaddingStudyConfig,
    sigma: f64,
    padding: f64,
) -> Result<ArmOutcome, McError> {
    if cfg.trials == 0 {
        return Err(McError::InvalidTrials);
    }
    let (lo, hi) = cfg.flower_range;
    if lo < 2 || lo > hi {
        return Err(McError::InvalidFlowerRange { lo, hi });
    }
    let noise = NoiseModel::isotropic(sigma);
    noise.validate()?;
    // The per-arm padding is baked into the stored regions at build time;
    // the point-wise gate never pads.
    let match_cfg = MatchConfig {
        confidence: cfg.confidence,
        padding: 0.0,
        require_count: true,
    };

    struct TrialData {
        n: usize,
        region: DescriptorDistribution,
        observed: Descriptor,
    }
    let trials: Vec<TrialData> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial as u64);
            let n = rng.random_range(lo..=hi);
            let cluster = simulate_initial_cluster(n, cfg.extent, &mut rng)?;
            let region = ut_descriptor_distribution(&cluster, &noise, &cfg.params, padding)?;
            let perturbed = perturb(&cluster, &noise, &mut rng)?;
            let observed = compute_descriptor(&perturbed)?;
            Ok(TrialData {
                n,
                region,
                observed,
            })
        })
        .collect::<Result<_, McError>>()?;

    let correct_matches = trials
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let result = matching::is_match(&t.observed, t.n, i as i64, &t.region, &match_cfg)?;
            Ok::<usize, McError>(result.matched as usize)
        })
        .try_reduce(|| 0usize, |a, b| Ok(a + b))?;

    // Bucket trials by flower count: pairs with differing counts are gated
    // out before any distance test, so only same-count pairs are evaluated.
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); hi + 1];
    for (i, t) in trials.iter().enumerate() {
        buckets[t.n].push(i);
    }
    let total_false_positives = trials
        .par_iter()
        .enumerate()
        .map(|(j, t)| {
            let mut count = 0u64;
            for &i in &buckets[t.n] {
                if i == j {
                    continue;
                }
                let result = matching::is_match(
                    &trials[i].observed,
                    trials[i].n,
                    i as i64,
                    &t.region,
                    &match_cfg,
                )?;
                count += result.matched as u64;
            }
            Ok::<u64, McError>(count)
        })
        .try_reduce(|| 0u64, |a, b| Ok(a + b))?;

    Ok(ArmOutcome {
        label: label.to_string(),
        noise: sigma,
        padding,
        correct_matches,
        total_false_positives,
        avg_false_positives: (correct_matches > 0)
            .then(|| total_false_positives as f64 / correct_matches as f64),
    })
}
