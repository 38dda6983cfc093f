//! Cluster descriptors: inertia and average distance about the centroid.
//!
//! With centroid `c` of the cluster points `pᵢ`,
//!
//! ```text
//! inertia      = Σᵢ ‖pᵢ − c‖²      (m²)
//! avg_distance = (1/N) Σᵢ ‖pᵢ − c‖ (m)
//! ```
//!
//! Both components depend only on centroid-relative distances, so they are
//! invariant to translation, rotation, and point ordering. They are not
//! normalized by cluster size: a 3-point and a 6-point cluster of the same
//! spatial extent produce different inertias, which is intended since the
//! matcher additionally gates on the point count.

use crate::geometry::Point3;
use nalgebra::{Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("cluster has no points")]
    EmptyCluster,
    #[error("descriptor requires at least 2 points, got {found}")]
    TooFewPoints { found: usize },
    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },
}

/// A set of 3D points observed together in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub points: Vec<Point3>,
    pub frame_id: i64,
    /// Free-form origin tag (dataset name, sensor id, ...).
    pub source: Option<String>,
}

impl Cluster {
    pub fn new(points: Vec<Point3>, frame_id: i64) -> Self {
        Self {
            points,
            frame_id,
            source: None,
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Non-empty with all coordinates finite.
    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.points.is_empty() {
            return Err(DescriptorError::EmptyCluster);
        }
        for (index, p) in self.points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(DescriptorError::NonFinitePoint { index });
            }
        }
        Ok(())
    }

    /// The same cluster shifted by `t`; handy for invariance checks.
    pub fn translated(&self, t: &Vector3<f64>) -> Cluster {
        Cluster {
            points: self.points.iter().map(|p| p + t).collect(),
            frame_id: self.frame_id,
            source: self.source.clone(),
        }
    }
}

/// The two-component cluster summary. Units: `inertia` m², `avg_distance` m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor {
    pub inertia: f64,
    pub avg_distance: f64,
}

impl Descriptor {
    /// Descriptor-space coordinates, ordered (inertia, avg_distance).
    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.inertia, self.avg_distance)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self {
            inertia: v.x,
            avg_distance: v.y,
        }
    }
}

/// Arithmetic mean of the cluster points.
pub fn centroid(cluster: &Cluster) -> Result<Point3, DescriptorError> {
    cluster.validate()?;
    Ok(centroid_unchecked(&cluster.points))
}

/// Computes the (inertia, average distance) descriptor of a cluster.
///
/// A single point has no spread, so clusters need at least 2 points; both
/// components are zero exactly when all points coincide.
pub fn compute_descriptor(cluster: &Cluster) -> Result<Descriptor, DescriptorError> {
    cluster.validate()?;
    if cluster.len() < 2 {
        return Err(DescriptorError::TooFewPoints {
            found: cluster.len(),
        });
    }
    Ok(descriptor_unchecked(&cluster.points))
}

pub(crate) fn centroid_unchecked(points: &[Point3]) -> Point3 {
    let n = points.len() as f64;
    let sum = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / n)
}

/// Descriptor core without validation; callers guarantee `points.len() >= 2`
/// and finite coordinates. Shared with the unscented propagation hot path.
pub(crate) fn descriptor_unchecked(points: &[Point3]) -> Descriptor {
    let c = centroid_unchecked(points);
    let mut inertia = 0.0;
    let mut dist_sum = 0.0;
    for p in points {
        let d2 = (p - c).norm_squared();
        inertia += d2;
        dist_sum += d2.sqrt();
    }
    Descriptor {
        inertia,
        avg_distance: dist_sum / points.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn equilateral_triangle() -> Cluster {
        Cluster::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.5, 3.0_f64.sqrt() / 2.0, 0.0),
            ],
            0,
        )
    }

    #[test]
    fn centroid_of_two_points_is_the_midpoint() {
        let c = Cluster::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            0,
        );
        assert_eq!(centroid(&c).unwrap(), Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn centroid_of_single_point_is_the_point() {
        let p = Point3::new(-0.4, 2.0, 7.5);
        let c = Cluster::new(vec![p], 0);
        assert_eq!(centroid(&c).unwrap(), p);
    }

    #[test]
    fn centroid_of_equilateral_triangle() {
        let c = centroid(&equilateral_triangle()).unwrap();
        assert_relative_eq!(c.x, 0.5, epsilon = 1e-15);
        // sqrt(3)/6: one third of the apex height.
        assert_relative_eq!(c.y, 0.28867513459481287, epsilon = 1e-15);
        assert_eq!(c.z, 0.0);
    }

    #[test]
    fn centroid_of_empty_cluster_is_an_error() {
        let c = Cluster::new(vec![], 0);
        assert!(matches!(centroid(&c), Err(DescriptorError::EmptyCluster)));
    }

    #[test]
    fn equilateral_triangle_descriptor() {
        // Each vertex sits 1/sqrt(3) from the centroid, so inertia is
        // 3 * (1/3) = 1 and the average distance is 1/sqrt(3).
        let d = compute_descriptor(&equilateral_triangle()).unwrap();
        assert_relative_eq!(d.inertia, 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.avg_distance, 0.5773502691896258, epsilon = 1e-12);
    }

    #[test]
    fn coincident_points_have_zero_descriptor() {
        let p = Point3::new(0.3, 0.3, 0.3);
        let c = Cluster::new(vec![p, p], 0);
        let d = compute_descriptor(&c).unwrap();
        assert_eq!(d.inertia, 0.0);
        assert_eq!(d.avg_distance, 0.0);
    }

    #[test]
    fn translation_leaves_descriptor_unchanged() {
        let base = equilateral_triangle();
        let moved = base.translated(&Vector3::new(5.0, -3.0, 2.0));
        let d0 = compute_descriptor(&base).unwrap();
        let d1 = compute_descriptor(&moved).unwrap();
        assert!((d0.inertia - d1.inertia).abs() <= 1e-12);
        assert!((d0.avg_distance - d1.avg_distance).abs() <= 1e-12);
    }

    #[test]
    fn single_point_cluster_is_rejected() {
        let c = Cluster::new(vec![Point3::new(1.0, 1.0, 1.0)], 0);
        assert!(matches!(
            compute_descriptor(&c),
            Err(DescriptorError::TooFewPoints { found: 1 })
        ));
    }

    #[test]
    fn empty_cluster_is_rejected() {
        let c = Cluster::new(vec![], 0);
        assert!(matches!(
            compute_descriptor(&c),
            Err(DescriptorError::EmptyCluster)
        ));
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let c = Cluster::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(f64::NAN, 0.0, 0.0)],
            0,
        );
        assert!(matches!(
            compute_descriptor(&c),
            Err(DescriptorError::NonFinitePoint { index: 1 })
        ));
    }

    #[test]
    fn descriptor_vector_roundtrip() {
        let d = Descriptor {
            inertia: 1.25,
            avg_distance: 0.5,
        };
        assert_eq!(Descriptor::from_vector(&d.as_vector()), d);
    }

    fn arbitrary_cluster() -> impl Strategy<Value = Cluster> {
        proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 2..8).prop_map(
            |coords| {
                Cluster::new(
                    coords
                        .into_iter()
                        .map(|[x, y, z]| Point3::new(x, y, z))
                        .collect(),
                    0,
                )
            },
        )
    }

    proptest! {
        #[test]
        fn descriptor_components_are_nonnegative(cluster in arbitrary_cluster()) {
            let d = compute_descriptor(&cluster).unwrap();
            prop_assert!(d.inertia >= 0.0);
            prop_assert!(d.avg_distance >= 0.0);
        }

        #[test]
        fn inertia_dominates_squared_average_distance(cluster in arbitrary_cluster()) {
            // Cauchy-Schwarz: Σdᵢ² ≥ (Σdᵢ)²/N = N·avg².
            let d = compute_descriptor(&cluster).unwrap();
            let n = cluster.len() as f64;
            prop_assert!(d.inertia + 1e-12 >= n * d.avg_distance * d.avg_distance);
        }

        #[test]
        fn translation_invariance(
            cluster in arbitrary_cluster(),
            t in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let moved = cluster.translated(&Vector3::new(t[0], t[1], t[2]));
            let d0 = compute_descriptor(&cluster).unwrap();
            let d1 = compute_descriptor(&moved).unwrap();
            prop_assert!((d0.inertia - d1.inertia).abs() <= 1e-9);
            prop_assert!((d0.avg_distance - d1.avg_distance).abs() <= 1e-9);
        }

        #[test]
        fn rotation_invariance(
            cluster in arbitrary_cluster(),
            axis in proptest::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let axis = Vector3::new(axis[0], axis[1], axis[2]);
            prop_assume!(axis.norm() > 1e-3);
            let rot = nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(axis),
                angle,
            );
            let rotated = Cluster::new(
                cluster.points.iter().map(|p| rot * p).collect(),
                cluster.frame_id,
            );
            let d0 = compute_descriptor(&cluster).unwrap();
            let d1 = compute_descriptor(&rotated).unwrap();
            prop_assert!((d0.inertia - d1.inertia).abs() <= 1e-9);
            prop_assert!((d0.avg_distance - d1.avg_distance).abs() <= 1e-9);
        }

        #[test]
        fn permutation_invariance(
            cluster in arbitrary_cluster(),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = cluster.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            shuffled.points.shuffle(&mut rng);
            let d0 = compute_descriptor(&cluster).unwrap();
            let d1 = compute_descriptor(&shuffled).unwrap();
            prop_assert!((d0.inertia - d1.inertia).abs() <= 1e-9);
            prop_assert!((d0.avg_distance - d1.avg_distance).abs() <= 1e-9);
        }

        #[test]
        fn scaling_law(cluster in arbitrary_cluster(), scale in 0.1f64..10.0) {
            let scaled = Cluster::new(
                cluster.points.iter().map(|p| Point3::from(p.coords * scale)).collect(),
                cluster.frame_id,
            );
            let d0 = compute_descriptor(&cluster).unwrap();
            let d1 = compute_descriptor(&scaled).unwrap();
            prop_assert!((d1.inertia - scale * scale * d0.inertia).abs()
                <= 1e-9 * (1.0 + d1.inertia));
            prop_assert!((d1.avg_distance - scale * d0.avg_distance).abs()
                <= 1e-9 * (1.0 + d1.avg_distance));
        }
    }
}
