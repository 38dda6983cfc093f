//! Unscented propagation of detection noise into descriptor space.
//!
//! The cluster's N points are flattened into a state vector
//! `x = (x₁, y₁, z₁, …, x_N, y_N, z_N)` of dimension `L = 3N` with prior
//! covariance `σ²·I` (per-axis σ when the noise model is anisotropic). The
//! scaled unscented transform draws `2L + 1` sigma points
//!
//! ```text
//! λ  = α²(L + κ) − L
//! χ  = [ x̄,  x̄ + √(L+λ)·√Pₓ,  x̄ − √(L+λ)·√Pₓ ]      (√Pₓ via Cholesky)
//! η₀ᵐ = λ/(L+λ)        η₀ᶜ = λ/(L+λ) + 1 − α² + β
//! ηᵢᵐ = ηᵢᶜ = 1/(2(L+λ))                    i = 1 … 2L
//! ```
//!
//! pushes each through the descriptor map, and summarizes the images by
//! their weighted mean and covariance. An optional padding term is added to
//! the covariance diagonal afterwards to widen the match gate.
//!
//! Defaults α = 1e-3, β = 2 (optimal for a Gaussian prior), κ = 0.

use crate::descriptor::{descriptor_unchecked, Cluster, DescriptorError};
use crate::geometry::Point3;
use crate::metrics;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UtError {
    #[error("degenerate sigma-point scaling: L + lambda = {scaled} must be positive")]
    DegenerateScaling { scaled: f64 },
    #[error("covariance is not positive semi-definite (Cholesky failed after {attempts} jitter attempts)")]
    CholeskyFailure { attempts: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid unscented parameters: {reason}")]
    InvalidParams { reason: String },
    #[error("padding must be finite and non-negative, got {padding}")]
    InvalidPadding { padding: f64 },
    #[error("noise sigma must be positive and finite, got {sigma:?}")]
    InvalidNoise { sigma: [f64; 3] },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// Per-axis standard deviation of the detection noise, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: [f64; 3],
}

impl NoiseModel {
    /// The common case: the same standard deviation on every axis.
    pub fn isotropic(sigma: f64) -> Self {
        Self { sigma: [sigma; 3] }
    }

    pub fn per_axis(sx: f64, sy: f64, sz: f64) -> Self {
        Self {
            sigma: [sx, sy, sz],
        }
    }

    /// Strictly positive and finite on every axis.
    pub fn validate(&self) -> Result<(), UtError> {
        if self.sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(UtError::InvalidNoise { sigma: self.sigma })
        }
    }

    /// Relaxed check for propagation, where a zero sigma is a legitimate
    /// degenerate prior (all sigma points collapse onto the mean).
    fn validate_propagation(&self) -> Result<(), UtError> {
        if self.sigma.iter().all(|s| s.is_finite() && *s >= 0.0) {
            Ok(())
        } else {
            Err(UtError::InvalidNoise { sigma: self.sigma })
        }
    }
}

/// Scaling parameters of the unscented transform.
///
/// `alpha` controls the sigma-point spread (recommended range 1e-4 ..= 1,
/// see [`UtParams::alpha_in_recommended_range`]); `beta` folds in prior
/// knowledge about the distribution shape (2 is optimal for a Gaussian);
/// `kappa` is a secondary scale, usually 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UtParams {
    pub fn new(alpha: f64, beta: f64, kappa: f64) -> Result<Self, UtError> {
        let p = Self { alpha, beta, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), UtError> {
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(UtError::InvalidParams {
                reason: format!("alpha must be positive and finite, got {}", self.alpha),
            });
        }
        if !self.beta.is_finite() || !self.kappa.is_finite() {
            return Err(UtError::InvalidParams {
                reason: "beta and kappa must be finite".into(),
            });
        }
        Ok(())
    }

    /// Whether `alpha` sits in the commonly recommended 1e-4 ..= 1 band.
    /// Values outside still work; the CLI warns about them.
    pub fn alpha_in_recommended_range(&self) -> bool {
        (1e-4..=1.0).contains(&self.alpha)
    }

    /// `L + λ = α²(L + κ)`, computed directly to avoid cancellation.
    fn scaled_dim(&self, dim: usize) -> f64 {
        self.alpha * self.alpha * (dim as f64 + self.kappa)
    }
}

/// Sigma points (one per column, `L x (2L+1)`) with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    pub points: DMatrix<f64>,
    pub mean_weights: DVector<f64>,
    pub cov_weights: DVector<f64>,
}

impl SigmaPointSet {
    /// State dimension L.
    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    /// Number of sigma points, always `2·dim() + 1`.
    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }
}

/// Gaussian tolerance region in descriptor space for one reference cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDistribution {
    /// Mean in descriptor coordinates (inertia, avg_distance).
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    /// Point count of the cluster the distribution was built from; the
    /// matcher gates on it before any distance test.
    pub flower_count: usize,
}

impl DescriptorDistribution {
    /// Finite, symmetric within 1e-12, positive semi-definite, and built
    /// from a matchable cluster (at least 2 points).
    pub fn validate(&self) -> Result<(), UtError> {
        if !self.mean.iter().all(|v| v.is_finite()) || !self.cov.iter().all(|v| v.is_finite()) {
            return Err(UtError::InvalidParams {
                reason: "distribution has non-finite entries".into(),
            });
        }
        let asym = (self.cov[(0, 1)] - self.cov[(1, 0)]).abs();
        if asym > 1e-12 {
            return Err(UtError::InvalidParams {
                reason: format!("covariance asymmetry {asym:e} exceeds 1e-12"),
            });
        }
        let ([_, lo], _) = metrics::sym_eigen_2x2(&self.cov);
        let floor = -1e-12 * self.cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if lo < floor {
            return Err(UtError::InvalidParams {
                reason: format!("covariance has negative eigenvalue {lo:e}"),
            });
        }
        if self.flower_count < 2 {
            return Err(UtError::InvalidParams {
                reason: format!("flower_count must be at least 2, got {}", self.flower_count),
            });
        }
        Ok(())
    }
}

/// `λ = α²(L + κ) − L` for state dimension `dim`.
pub fn ut_lambda(params: &UtParams, dim: usize) -> Result<f64, UtError> {
    params.validate()?;
    if dim == 0 {
        return Err(UtError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let scaled = params.scaled_dim(dim);
    if scaled == 0.0 {
        return Err(UtError::DegenerateScaling { scaled });
    }
    Ok(scaled - dim as f64)
}

/// Mean and covariance weights for `2·dim + 1` sigma points.
pub fn ut_weights(params: &UtParams, dim: usize) -> Result<(DVector<f64>, DVector<f64>), UtError> {
    let lambda = ut_lambda(params, dim)?;
    let scaled = params.scaled_dim(dim);
    let count = 2 * dim + 1;
    let side = 1.0 / (2.0 * scaled);
    let mut mean_w = DVector::from_element(count, side);
    let mut cov_w = mean_w.clone();
    mean_w[0] = lambda / scaled;
    cov_w[0] = mean_w[0] + 1.0 - params.alpha * params.alpha + params.beta;
    Ok((mean_w, cov_w))
}

/// Builds the `2L + 1` sigma points of a Gaussian prior.
///
/// Column 0 is the mean; columns `i` and `i + L` mirror each other through
/// the mean exactly (the lower block is materialized as `2·mean − upper`, so
/// the pair sum reproduces `2·mean` bit for bit).
pub fn sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    params: &UtParams,
) -> Result<SigmaPointSet, UtError> {
    let dim = mean.len();
    if dim == 0 {
        return Err(UtError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(UtError::DimensionMismatch {
            expected: dim,
            found: cov.nrows().max(cov.ncols()),
        });
    }
    let scaled = params.scaled_dim(dim);
    if scaled <= 0.0 {
        return Err(UtError::DegenerateScaling { scaled });
    }
    let (mean_weights, cov_weights) = ut_weights(params, dim)?;
    let root = psd_cholesky_with_jitter(cov)?;
    let spread = scaled.sqrt();

    let mut points = DMatrix::zeros(dim, 2 * dim + 1);
    points.column_mut(0).copy_from(mean);
    let double_mean = mean * 2.0;
    for i in 0..dim {
        let upper = mean + root.column(i) * spread;
        let lower = &double_mean - &upper;
        points.column_mut(1 + i).copy_from(&upper);
        points.column_mut(1 + dim + i).copy_from(&lower);
    }
    Ok(SigmaPointSet {
        points,
        mean_weights,
        cov_weights,
    })
}

/// Pushes a Gaussian prior through an arbitrary map and summarizes the
/// sigma-point images by their weighted mean and covariance.
///
/// The output covariance is exactly symmetric by construction. The map must
/// return vectors of one consistent dimension.
///
/// Small `alpha` makes the center weights huge (O(1/α²)) while the images
/// stay close together, so the textbook sums `Σηᵢyᵢ` lose most of their
/// precision to cancellation. The moments are therefore accumulated over the
/// center-relative deviations `zᵢ = yᵢ − y₀`, substituting the analytic
/// weight sums `Σηᵐ = 1` and `Σηᶜ = 2 − α² + β`:
///
/// ```text
/// mean = y₀ + Σᵢ ηᵢᵐ zᵢ                                  (z₀ = 0)
/// cov  = Σᵢ ηᵢᶜ zᵢzᵢᵀ − u·vᵀ − v·uᵀ + (Σηᶜ)·u·uᵀ
///        u = mean − y₀,  v = Σᵢ ηᵢᶜ zᵢ
/// ```
pub fn propagate<F>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    params: &UtParams,
    mut map: F,
) -> Result<(DVector<f64>, DMatrix<f64>), UtError>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let set = sigma_points(mean, cov, params)?;
    let center = map(&set.points.column(0).clone_owned());
    let out_dim = center.len();
    // z_i = y_i − y_0 for the 2L side points.
    let mut deviations = Vec::with_capacity(set.len() - 1);
    for i in 1..set.len() {
        let image = map(&set.points.column(i).clone_owned());
        if image.len() != out_dim {
            return Err(UtError::DimensionMismatch {
                expected: out_dim,
                found: image.len(),
            });
        }
        deviations.push(image - &center);
    }

    let mut shift: DVector<f64> = DVector::zeros(out_dim); // u = mean − y₀
    let mut v: DVector<f64> = DVector::zeros(out_dim);
    let mut s: DMatrix<f64> = DMatrix::zeros(out_dim, out_dim); // Σ ηᶜ z zᵀ, upper triangle
    for (z, i) in deviations.iter().zip(1..) {
        shift.axpy(set.mean_weights[i], z, 1.0);
        v.axpy(set.cov_weights[i], z, 1.0);
        let w = set.cov_weights[i];
        for a in 0..out_dim {
            for b in a..out_dim {
                s[(a, b)] += w * (z[a] * z[b]);
            }
        }
    }

    let out_mean = &center + &shift;
    let total_cov_weight = 2.0 - params.alpha * params.alpha + params.beta;
    let mut out_cov = DMatrix::zeros(out_dim, out_dim);
    for a in 0..out_dim {
        for b in a..out_dim {
            let entry = s[(a, b)] - (shift[a] * v[b] + v[a] * shift[b])
                + total_cov_weight * (shift[a] * shift[b]);
            out_cov[(a, b)] = entry;
            out_cov[(b, a)] = entry;
        }
    }
    Ok((out_mean, out_cov))
}

/// Propagates per-point detection noise through the descriptor map and
/// returns the resulting tolerance region, with `padding` added to both
/// covariance diagonal entries.
pub fn ut_descriptor_distribution(
    cluster: &Cluster,
    noise: &NoiseModel,
    params: &UtParams,
    padding: f64,
) -> Result<DescriptorDistribution, UtError> {
    cluster.validate()?;
    let n = cluster.len();
    if n < 2 {
        return Err(DescriptorError::TooFewPoints { found: n }.into());
    }
    noise.validate_propagation()?;
    if !padding.is_finite() || padding < 0.0 {
        return Err(UtError::InvalidPadding { padding });
    }

    // State layout: point-major (x₁, y₁, z₁, x₂, ...).
    let dim = 3 * n;
    let mut mean = DVector::zeros(dim);
    let mut variances = DVector::zeros(dim);
    for (i, p) in cluster.points.iter().enumerate() {
        for axis in 0..3 {
            mean[3 * i + axis] = p.coords[axis];
            variances[3 * i + axis] = noise.sigma[axis] * noise.sigma[axis];
        }
    }
    let cov = DMatrix::from_diagonal(&variances);

    let mut scratch = vec![Point3::origin(); n];
    let (out_mean, out_cov) = propagate(&mean, &cov, params, |x| {
        for (i, p) in scratch.iter_mut().enumerate() {
            *p = Point3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
        }
        let d = descriptor_unchecked(&scratch);
        DVector::from_column_slice(&[d.inertia, d.avg_distance])
    })?;

    let mut cov2 = Matrix2::new(
        out_cov[(0, 0)],
        out_cov[(0, 1)],
        out_cov[(1, 0)],
        out_cov[(1, 1)],
    );
    cov2[(0, 0)] += padding;
    cov2[(1, 1)] += padding;
    Ok(DescriptorDistribution {
        mean: Vector2::new(out_mean[0], out_mean[1]),
        cov: cov2,
        flower_count: n,
    })
}

// ── Positive semi-definite Cholesky ─────────────────────────────────────────

/// Lower-triangular `L` with `A = L·Lᵀ`, tolerating zero pivots so that
/// exactly semi-definite priors (e.g. zero noise) factor cleanly. Returns
/// `None` when the matrix is indefinite beyond rounding tolerance.
fn psd_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = scale * 1e-12;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let pivot = d.sqrt();
            l[(j, j)] = pivot;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / pivot;
            }
        } else if d >= -tol {
            // Zero pivot of a semi-definite matrix: the whole column must
            // vanish, otherwise the matrix is indefinite.
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > (scale + 1.0) * 1e-9 {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

/// [`psd_cholesky`] with the retry policy: on failure, add
/// `1e-12·trace/L` to the diagonal and try again, at most 3 times.
fn psd_cholesky_with_jitter(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, UtError> {
    if let Some(l) = psd_cholesky(cov) {
        return Ok(l);
    }
    let n = cov.nrows();
    let jitter = 1e-12 * cov.trace() / n as f64;
    let mut attempt = cov.clone();
    for round in 1..=3 {
        for i in 0..n {
            attempt[(i, i)] += jitter;
        }
        if let Some(l) = psd_cholesky(&attempt) {
            return Ok(l);
        }
        let _ = round;
    }
    Err(UtError::CholeskyFailure { attempts: 3 })
}
