//! Compute the centroid-relative cluster descriptor and demonstrate the
//! invariances that make it usable for re-identification: rigid motions and
//! point reordering leave it unchanged, scaling moves it predictably.

use flowermatch::{compute_descriptor, Cluster, Point3};
use nalgebra::{Rotation3, Vector3};

fn show(label: &str, cluster: &Cluster) -> Result<(), Box<dyn std::error::Error>> {
    let d = compute_descriptor(cluster)?;
    println!(
        "{label:<22} inertia {:.6} m^2   avg distance {:.6} m",
        d.inertia, d.avg_distance
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = Cluster::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, 3.0_f64.sqrt() / 2.0, 0.0),
            Point3::new(0.5, 0.29, 0.8),
        ],
        0,
    );
    show("original", &base)?;

    let shifted = base.translated(&Vector3::new(4.0, -2.0, 7.5));
    show("translated", &shifted)?;

    let rot = Rotation3::from_euler_angles(0.4, -1.1, 2.2);
    let rotated = Cluster::new(base.points.iter().map(|p| rot * p).collect(), 0);
    show("rotated", &rotated)?;

    let mut reordered_points = base.points.clone();
    reordered_points.reverse();
    show("reordered", &Cluster::new(reordered_points, 0))?;

    // Scaling by s multiplies avg distance by s and inertia by s^2.
    let doubled = Cluster::new(
        base.points
            .iter()
            .map(|p| Point3::from(p.coords * 2.0))
            .collect(),
        0,
    );
    show("scaled by 2", &doubled)?;
    Ok(())
}
