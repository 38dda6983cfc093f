//! Lift pixel detections with depth into world-space flower positions.
//!
//! Shows the two depth conventions (distance along the viewing ray vs.
//! camera-space z) and how a camera pose moves points into the world frame.

use flowermatch::geometry::{frame_to_cluster_with_model, lift_pixel_with_model, DepthModel};
use flowermatch::{CameraIntrinsics, CameraPose, PixelDetection};
use nalgebra::{Matrix3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5)?;

    // A detection away from the principal point makes the two depth models
    // disagree: the ray model preserves the Euclidean distance, the z model
    // preserves the depth coordinate.
    let det = PixelDetection::new(420.0, 300.0, 2.0);
    let ray = lift_pixel_with_model(&det, &k, DepthModel::Ray)?;
    let z = lift_pixel_with_model(&det, &k, DepthModel::ZAxis)?;
    println!("pixel ({}, {}) at depth {} m", det.u, det.v, det.depth);
    println!("  ray model:    {:.4} (norm {:.4})", ray, ray.coords.norm());
    println!("  z-axis model: {:.4} (z     {:.4})", z, z.z);

    // Camera one meter up, looking along the same axes.
    let pose = CameraPose::new(Matrix3::identity(), Vector3::new(0.0, 1.0, 0.0))?;
    let detections = [
        PixelDetection::new(319.5, 239.5, 1.5),
        PixelDetection::new(340.0, 260.0, 1.6),
        PixelDetection::new(300.0, 220.0, 1.7),
    ];
    let cluster = frame_to_cluster_with_model(&detections, &k, &pose, 0, DepthModel::Ray)?;
    println!("\nframe {} in world space:", cluster.frame_id);
    for (i, p) in cluster.points.iter().enumerate() {
        println!("  flower {i}: {:.4}", p);
    }
    Ok(())
}
