//! Relate chi-square gates to the acceptance ellipse they draw in
//! descriptor space.
//!
//! The gate accepts a descriptor when its squared Mahalanobis distance is
//! under the chi-square quantile for 2 degrees of freedom; geometrically,
//! that is an ellipse around the propagated mean whose semi-axes grow with
//! the confidence.

use flowermatch::{
    chi2_threshold, confidence_ellipse, ut_descriptor_distribution, Cluster, NoiseModel, Point3,
    UtParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("chi-square gates (2 degrees of freedom):");
    for confidence in [0.5, 0.9, 0.95, 0.99, 0.999] {
        println!(
            "  {:>5.1}% -> d^2 < {:.4}",
            100.0 * confidence,
            chi2_threshold(confidence, 2)?
        );
    }

    let cluster = Cluster::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, 3.0_f64.sqrt() / 2.0, 0.0),
        ],
        0,
    );
    let dist = ut_descriptor_distribution(
        &cluster,
        &NoiseModel::isotropic(0.01),
        &UtParams::default(),
        0.0,
    )?;
    println!("\nacceptance ellipse around the propagated descriptor:");
    for confidence in [0.5, 0.95, 0.999] {
        let e = confidence_ellipse(&dist.mean, &dist.cov, confidence)?;
        println!(
            "  {:>5.1}%: center ({:.4}, {:.4}), semi-axes {:.5} x {:.5}, major axis ({:+.4}, {:+.4})",
            100.0 * confidence,
            e.center[0],
            e.center[1],
            e.semi_axes[0],
            e.semi_axes[1],
            e.axes[0][0],
            e.axes[0][1],
        );
    }
    println!(
        "\nthe two descriptor components are correlated (corr = {:.4}), so the \
         ellipse is long and thin",
        dist.cov[(0, 1)] / (dist.cov[(0, 0)].sqrt() * dist.cov[(1, 1)].sqrt())
    );
    Ok(())
}
