//! Back-projection of pixel detections into 3D and rigid placement in the
//! world frame.
//!
//! A detection is a pixel (u, v) with a depth reading. The camera ray through
//! the pixel is `K⁻¹·(u, v, 1)ᵀ`; under the default [`DepthModel::Ray`] the
//! depth is the distance along that ray, so the lifted camera-frame point is
//!
//! ```text
//! x = depth · K⁻¹ũ / ‖K⁻¹ũ‖,   ũ = (u, v, 1)ᵀ
//! ```
//!
//! and `‖x‖` equals the measured depth. Sensors that report plane depth
//! (z along the optical axis) use [`DepthModel::ZAxis`] instead. World-frame
//! placement applies the camera pose `x_w = R·x + t`.

use crate::descriptor::Cluster;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// 3D position in meters; camera frame or world frame depending on context.
pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance for the pose rotation block: `RᵀR = I` and `det R = 1` must hold
/// to within this amount per entry.
pub const POSE_ORTHONORMALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("depth must be strictly positive, got {depth}")]
    NonPositiveDepth { depth: f64 },
    #[error("invalid intrinsics: {reason}")]
    InvalidIntrinsics { reason: String },
    #[error("invalid pose: {reason}")]
    InvalidPose { reason: String },
    #[error("frame contains no detections")]
    EmptyFrame,
    #[error("detection {index}: {source}")]
    Detection {
        index: usize,
        #[source]
        source: Box<GeometryError>,
    },
}

/// A 2D detection with its depth reading, all in pixels except `depth` (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDetection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl PixelDetection {
    pub fn new(u: f64, v: f64, depth: f64) -> Self {
        Self { u, v, depth }
    }
}

/// How the sensor's depth reading relates to the camera ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthModel {
    /// Depth is the Euclidean distance along the viewing ray (default).
    #[default]
    Ray,
    /// Depth is the z coordinate along the optical axis.
    ZAxis,
}

/// Pinhole intrinsics with zero skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    /// Ingest a full 3x3 intrinsic matrix (row-major), rejecting nonzero skew
    /// or a non-standard bottom row.
    pub fn from_matrix(k: &[[f64; 3]; 3]) -> Result<Self, GeometryError> {
        if k[0][1] != 0.0 {
            return Err(GeometryError::InvalidIntrinsics {
                reason: format!("skew must be zero, got {}", k[0][1]),
            });
        }
        if k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 || k[2][2] != 1.0 {
            return Err(GeometryError::InvalidIntrinsics {
                reason: "matrix is not an upper-triangular pinhole K with unit scale".into(),
            });
        }
        Self::new(k[0][0], k[1][1], k[0][2], k[1][2])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics {
                reason: format!(
                    "focal lengths must be positive, got ({}, {})",
                    self.fx, self.fy
                ),
            });
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics {
                reason: "principal point must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Ingest a row-major 4x4 homogeneous transform. The bottom row must be
    /// exactly `[0, 0, 0, 1]`; the rotation block must pass [`Self::validate`].
    pub fn from_homogeneous(m: &[[f64; 4]; 4]) -> Result<Self, GeometryError> {
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::InvalidPose {
                reason: format!("bottom row must be [0, 0, 0, 1], got {:?}", m[3]),
            });
        }
        Self::new(
            Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            Vector3::new(m[0][3], m[1][3], m[2][3]),
        )
    }

    /// Checks `RᵀR = I` and `det R = 1` within [`POSE_ORTHONORMALITY_TOL`],
    /// and that the translation is finite.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let gram = self.rotation.transpose() * self.rotation;
        let max_dev = (gram - Matrix3::identity()).abs().max();
        if !max_dev.is_finite() || max_dev > POSE_ORTHONORMALITY_TOL {
            return Err(GeometryError::InvalidPose {
                reason: format!("rotation block is not orthonormal (deviation {max_dev:e})"),
            });
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > POSE_ORTHONORMALITY_TOL {
            return Err(GeometryError::InvalidPose {
                reason: format!("rotation block must have determinant +1, got {det}"),
            });
        }
        if !self.translation.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::InvalidPose {
                reason: "translation must be finite".into(),
            });
        }
        Ok(())
    }

    /// Applies the transform without re-validating; callers are expected to
    /// hold a pose that passed [`Self::validate`].
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Lifts one detection into the camera frame under the default ray-depth
/// model.
pub fn lift_pixel(det: &PixelDetection, k: &CameraIntrinsics) -> Result<Point3, GeometryError> {
    lift_pixel_with_model(det, k, DepthModel::Ray)
}

/// Lifts one detection into the camera frame under an explicit depth model.
pub fn lift_pixel_with_model(
    det: &PixelDetection,
    k: &CameraIntrinsics,
    model: DepthModel,
) -> Result<Point3, GeometryError> {
    k.validate()?;
    if det.depth <= 0.0 || !det.depth.is_finite() {
        return Err(GeometryError::NonPositiveDepth { depth: det.depth });
    }
    let dir = Vector3::new((det.u - k.cx) / k.fx, (det.v - k.cy) / k.fy, 1.0);
    let scale = match model {
        DepthModel::Ray => det.depth / dir.norm(),
        DepthModel::ZAxis => det.depth,
    };
    Ok(Point3::from(dir * scale))
}

/// Places a camera-frame point in the world frame: `R·p + t`.
pub fn to_world(p: &Point3, pose: &CameraPose) -> Result<Point3, GeometryError> {
    pose.validate()?;
    Ok(pose.apply(p))
}

/// Lifts a whole frame of detections and places them in the world frame,
/// under the default ray-depth model.
pub fn frame_to_cluster(
    detections: &[PixelDetection],
    k: &CameraIntrinsics,
    pose: &CameraPose,
    frame_id: i64,
) -> Result<Cluster, GeometryError> {
    frame_to_cluster_with_model(detections, k, pose, frame_id, DepthModel::Ray)
}

/// Lifts a whole frame of detections under an explicit depth model.
///
/// Per-detection failures carry the detection index; the pose and intrinsics
/// are validated once up front.
pub fn frame_to_cluster_with_model(
    detections: &[PixelDetection],
    k: &CameraIntrinsics,
    pose: &CameraPose,
    frame_id: i64,
    model: DepthModel,
) -> Result<Cluster, GeometryError> {
    if detections.is_empty() {
        return Err(GeometryError::EmptyFrame);
    }
    k.validate()?;
    pose.validate()?;
    let points = detections
        .iter()
        .enumerate()
        .map(|(index, det)| {
            lift_pixel_with_model(det, k, model)
                .map(|p| pose.apply(&p))
                .map_err(|source| GeometryError::Detection {
                    index,
                    source: Box::new(source),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Cluster::new(points, frame_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5).unwrap()
    }

    #[test]
    fn principal_point_lifts_onto_optical_axis() {
        let k = test_intrinsics();
        let p = lift_pixel(&PixelDetection::new(k.cx, k.cy, 2.5), &k).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 2.5));
    }

    #[test]
    fn unit_focal_diagonal_pixel() {
        // (u, v) = (1, 0) with unit focal length is the 45 degree ray in the
        // xz plane; ray depth sqrt(2) lands on (1, 0, 1).
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let p = lift_pixel(&PixelDetection::new(1.0, 0.0, 2.0_f64.sqrt()), &k).unwrap();
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zaxis_model_keeps_plane_depth() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let det = PixelDetection::new(1.0, 0.0, 1.0);
        let p = lift_pixel_with_model(&det, &k, DepthModel::ZAxis).unwrap();
        assert_eq!(p, Point3::new(1.0, 0.0, 1.0));
        // The same detection under ray depth lands closer to the camera.
        let q = lift_pixel(&det, &k).unwrap();
        assert!(q.z < 1.0);
    }

    #[test]
    fn nonpositive_depth_is_rejected() {
        let k = test_intrinsics();
        for depth in [0.0, -1.0, f64::NAN] {
            let got = lift_pixel(&PixelDetection::new(10.0, 10.0, depth), &k);
            assert!(matches!(got, Err(GeometryError::NonPositiveDepth { .. })));
        }
    }

    #[test]
    fn intrinsic_matrix_with_skew_is_rejected() {
        let m = [[525.0, 0.5, 319.5], [0.0, 525.0, 239.5], [0.0, 0.0, 1.0]];
        assert!(matches!(
            CameraIntrinsics::from_matrix(&m),
            Err(GeometryError::InvalidIntrinsics { .. })
        ));
    }

    #[test]
    fn intrinsic_matrix_roundtrip() {
        let m = [[525.0, 0.0, 319.5], [0.0, 520.0, 239.5], [0.0, 0.0, 1.0]];
        let k = CameraIntrinsics::from_matrix(&m).unwrap();
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (525.0, 520.0, 319.5, 239.5));
    }

    #[test]
    fn identity_pose_leaves_points_unchanged() {
        let p = Point3::new(0.3, -1.2, 4.0);
        assert_eq!(to_world(&p, &CameraPose::identity()).unwrap(), p);
    }

    #[test]
    fn pure_translation_shifts_points() {
        let pose = CameraPose::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let p = to_world(&Point3::new(0.5, 0.5, 0.5), &pose).unwrap();
        assert_eq!(p, Point3::new(1.5, 2.5, 3.5));
    }

    #[test]
    fn quarter_turn_about_z() {
        let rot =
            nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let pose = CameraPose::new(rot.into_inner(), Vector3::zeros()).unwrap();
        let p = to_world(&Point3::new(1.0, 0.0, 0.0), &pose).unwrap();
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.y, 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let mut rot = Matrix3::identity();
        rot[(0, 0)] = 1.0 + 1e-3;
        assert!(matches!(
            CameraPose::new(rot, Vector3::zeros()),
            Err(GeometryError::InvalidPose { .. })
        ));
    }

    #[test]
    fn reflection_is_rejected() {
        let mut rot = Matrix3::identity();
        rot[(2, 2)] = -1.0; // orthonormal but det = -1
        assert!(matches!(
            CameraPose::new(rot, Vector3::zeros()),
            Err(GeometryError::InvalidPose { .. })
        ));
    }

    #[test]
    fn homogeneous_ingestion_requires_exact_bottom_row() {
        let mut m = [
            [1.0, 0.0, 0.0, 0.5],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        assert!(CameraPose::from_homogeneous(&m).is_ok());
        m[3][0] = 1e-15;
        assert!(matches!(
            CameraPose::from_homogeneous(&m),
            Err(GeometryError::InvalidPose { .. })
        ));
    }

    #[test]
    fn frame_lifting_preserves_detection_count() {
        let k = test_intrinsics();
        let pose = CameraPose::identity();
        let one = [PixelDetection::new(100.0, 100.0, 1.0)];
        assert_eq!(frame_to_cluster(&one, &k, &pose, 0).unwrap().len(), 1);
        let three = [
            PixelDetection::new(100.0, 100.0, 1.0),
            PixelDetection::new(200.0, 150.0, 1.2),
            PixelDetection::new(300.0, 210.0, 0.8),
        ];
        let cluster = frame_to_cluster(&three, &k, &pose, 7).unwrap();
        assert_eq!(cluster.len(), 3);
        assert_eq!(cluster.frame_id, 7);
    }

    #[test]
    fn empty_frame_is_rejected() {
        let got = frame_to_cluster(&[], &test_intrinsics(), &CameraPose::identity(), 0);
        assert!(matches!(got, Err(GeometryError::EmptyFrame)));
    }

    #[test]
    fn frame_lifting_reports_failing_detection_index() {
        let k = test_intrinsics();
        let dets = [
            PixelDetection::new(100.0, 100.0, 1.0),
            PixelDetection::new(200.0, 150.0, -1.0),
        ];
        match frame_to_cluster(&dets, &k, &CameraPose::identity(), 0) {
            Err(GeometryError::Detection { index: 1, source }) => {
                assert!(matches!(*source, GeometryError::NonPositiveDepth { .. }));
            }
            other => panic!("expected Detection error at index 1, got {other:?}"),
        }
    }

    fn arbitrary_pose() -> impl Strategy<Value = CameraPose> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            0.0f64..std::f64::consts::TAU,
            proptest::array::uniform3(-5.0f64..5.0),
        )
            .prop_filter_map("zero axis", |(ax, ay, az, angle, t)| {
                let axis = Vector3::new(ax, ay, az);
                if axis.norm() < 1e-3 {
                    return None;
                }
                let rot = nalgebra::Rotation3::from_axis_angle(
                    &nalgebra::Unit::new_normalize(axis),
                    angle,
                );
                Some(CameraPose {
                    rotation: rot.into_inner(),
                    translation: Vector3::new(t[0], t[1], t[2]),
                })
            })
    }

    proptest! {
        #[test]
        fn ray_depth_equals_lifted_norm(
            u in 0.0f64..640.0,
            v in 0.0f64..480.0,
            depth in 0.05f64..10.0,
        ) {
            let k = test_intrinsics();
            let p = lift_pixel(&PixelDetection::new(u, v, depth), &k).unwrap();
            let norm = p.coords.norm();
            prop_assert!((norm - depth).abs() <= 1e-12 * depth.max(1.0));
        }

        #[test]
        fn rigid_transform_preserves_pairwise_distances(
            pose in arbitrary_pose(),
            a in proptest::array::uniform3(-2.0f64..2.0),
            b in proptest::array::uniform3(-2.0f64..2.0),
        ) {
            let pa = Point3::new(a[0], a[1], a[2]);
            let pb = Point3::new(b[0], b[1], b[2]);
            let before = (pa - pb).norm();
            let after = (pose.apply(&pa) - pose.apply(&pb)).norm();
            prop_assert!((before - after).abs() <= 1e-9 * (1.0 + before));
        }

        #[test]
        fn pose_composition_matches_sequential_application(
            p1 in arbitrary_pose(),
            p2 in arbitrary_pose(),
            point in proptest::array::uniform3(-2.0f64..2.0),
        ) {
            let p = Point3::new(point[0], point[1], point[2]);
            let sequential = p2.apply(&p1.apply(&p));
            let composed = p2.compose(&p1).apply(&p);
            prop_assert!((sequential - composed).norm() <= 1e-12 * (1.0 + sequential.coords.norm()));
        }
    }
}
