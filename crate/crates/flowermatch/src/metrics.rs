//! Matrix comparison and chi-square gating utilities.
//!
//! The matcher gates squared Mahalanobis distances against the chi-square
//! quantile `chi2inv(confidence, dof)`. Descriptor space is two-dimensional,
//! where the quantile has the closed form `-2·ln(1 - confidence)`; for any
//! other degrees of freedom the quantile is recovered by bisecting the
//! regularized lower incomplete gamma function. Frobenius norms quantify how
//! far two covariance estimates (unscented vs. Monte Carlo) are apart.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("confidence must lie strictly between 0 and 1, got {confidence}")]
    InvalidConfidence { confidence: f64 },
    #[error("degrees of freedom must be at least 1, got {dof}")]
    InvalidDof { dof: usize },
    #[error("covariance is not positive semi-definite (eigenvalue {eigenvalue})")]
    NotPositiveSemiDefinite { eigenvalue: f64 },
}

/// Frobenius norm `sqrt(Σ aᵢⱼ²)` of a 2x2 matrix.
pub fn frobenius_norm(a: &Matrix2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius norm of the difference `a - b`.
///
/// Symmetric in its arguments and zero exactly when `a == b`.
pub fn frobenius_distance(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
    frobenius_norm(&(a - b))
}

/// Chi-square quantile used as the squared-Mahalanobis match gate.
///
/// `confidence` is a fraction in (0, 1). For `dof == 2` the quantile is the
/// exact closed form `-2·ln(1 - confidence)`; otherwise it is found by
/// bisection on the regularized lower incomplete gamma function to an
/// absolute tolerance of 1e-8.
pub fn chi2_threshold(confidence: f64, dof: usize) -> Result<f64, MetricsError> {
    if !(confidence > 0.0 && confidence < 1.0) || !confidence.is_finite() {
        return Err(MetricsError::InvalidConfidence { confidence });
    }
    if dof < 1 {
        return Err(MetricsError::InvalidDof { dof });
    }
    if dof == 2 {
        return Ok(-2.0 * (1.0 - confidence).ln());
    }

    // chi2_cdf(x; dof) = P(dof/2, x/2), monotone increasing in x.
    let a = dof as f64 / 2.0;
    let cdf = |x: f64| gamma_p(a, x / 2.0);

    let mut lo = 0.0_f64;
    let mut hi = dof as f64 + 20.0 * (2.0 * dof as f64).sqrt();
    // The initial bracket covers every practical confidence; extend it for
    // quantiles in the extreme upper tail rather than returning a clipped root.
    while cdf(hi) < confidence {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(MetricsError::InvalidConfidence { confidence });
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < confidence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Confidence ellipse of a 2D Gaussian at a given confidence level.
///
/// Axis directions are the covariance eigenvectors; the semi-axis lengths are
/// `sqrt(eigenvalue · chi2_threshold(confidence, 2))`, so a point lies inside
/// the ellipse exactly when its squared Mahalanobis distance is below the
/// gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceEllipse {
    pub center: [f64; 2],
    /// Semi-axis lengths, longest first.
    pub semi_axes: [f64; 2],
    /// Unit axis directions, same order as `semi_axes`.
    pub axes: [[f64; 2]; 2],
    /// The chi-square gate the ellipse corresponds to.
    pub threshold: f64,
}

pub fn confidence_ellipse(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    confidence: f64,
) -> Result<ConfidenceEllipse, MetricsError> {
    let threshold = chi2_threshold(confidence, 2)?;
    let (eigenvalues, eigenvectors) = sym_eigen_2x2(cov);
    // Tiny negative eigenvalues are rounding noise on a degenerate ellipse;
    // anything beyond that means the matrix is not a covariance.
    let floor = -1e-12 * eigenvalues[0].abs().max(1.0);
    if eigenvalues[1] < floor {
        return Err(MetricsError::NotPositiveSemiDefinite {
            eigenvalue: eigenvalues[1],
        });
    }
    Ok(ConfidenceEllipse {
        center: [mean.x, mean.y],
        semi_axes: [
            (eigenvalues[0].max(0.0) * threshold).sqrt(),
            (eigenvalues[1].max(0.0) * threshold).sqrt(),
        ],
        axes: [
            [eigenvectors[0].x, eigenvectors[0].y],
            [eigenvectors[1].x, eigenvectors[1].y],
        ],
        threshold,
    })
}

/// Eigenvalues (descending) and unit eigenvectors of a symmetric 2x2 matrix.
///
/// Only the lower-left/upper-right average enters, so slightly asymmetric
/// input behaves as its symmetric part.
pub(crate) fn sym_eigen_2x2(m: &Matrix2<f64>) -> ([f64; 2], [Vector2<f64>; 2]) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let half_trace = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let hi = half_trace + disc;
    let lo = half_trace - disc;
    let v_hi = if b != 0.0 {
        Vector2::new(hi - c, b).normalize()
    } else if a >= c {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(0.0, 1.0)
    };
    // Perpendicular by construction for a symmetric matrix.
    let v_lo = Vector2::new(-v_hi.y, v_hi.x);
    ([hi, lo], [v_hi, v_lo])
}

// ── Regularized lower incomplete gamma ──────────────────────────────────────
//
// P(a, x) = γ(a, x) / Γ(a), evaluated by the series for x < a + 1 and by the
// continued fraction of Q(a, x) = 1 - P(a, x) otherwise. Both converge to
// near machine precision in well under 200 terms for the arguments reached
// from chi-square gating.

fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..500 {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction
    // Q(a,x) = e^(-x) x^a / Γ(a) · 1/(x+1-a- 1·(1-a)/(x+3-a- ...)).
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos approximation (g = 7, 9 coefficients), accurate to ~1e-13 relative
/// for positive arguments.
// The published coefficients carry more digits than f64 resolves; they are
// kept verbatim so the table matches its source.
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    // Reflection is unnecessary: chi-square arguments are always positive.
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &coeff) in COEFFS.iter().enumerate() {
        acc += coeff / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
