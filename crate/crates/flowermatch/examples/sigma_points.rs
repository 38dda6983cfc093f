//! Inspect the deterministic sample set the unscented transform pushes
//! through a nonlinearity: 2L+1 sigma points, their weights, and the exact
//! pairwise symmetry around the mean.

use flowermatch::{sigma_points, ut_lambda, ut_weights, UtParams};
use nalgebra::{DMatrix, DVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 0.01, 0.09]));
    let params = UtParams::default();
    let dim = mean.len();

    let lambda = ut_lambda(&params, dim)?;
    println!(
        "L = {dim}, alpha = {}, beta = {}, kappa = {}  =>  lambda = {lambda}",
        params.alpha, params.beta, params.kappa
    );

    let (mean_w, cov_w) = ut_weights(&params, dim)?;
    println!(
        "center weights: mean {:.6}, covariance {:.6}",
        mean_w[0], cov_w[0]
    );
    println!(
        "wing weights:   {:.6} each, {} of them (mean weights sum to {})",
        mean_w[1],
        2 * dim,
        mean_w.sum()
    );

    let set = sigma_points(&mean, &cov, &params)?;
    println!("\n{} sigma points (columns):", set.len());
    for i in 0..set.len() {
        let col = set.points.column(i);
        println!(
            "  chi_{i:<2} = [{:+.6}, {:+.6}, {:+.6}]",
            col[0], col[1], col[2]
        );
    }

    // chi_i and chi_{i+L} mirror each other through the mean bit-exactly.
    for i in 1..=dim {
        let sum = set.points.column(i) + set.points.column(i + dim);
        assert_eq!(sum, 2.0 * &mean);
    }
    println!("\npair symmetry holds exactly: chi_i + chi_(i+L) == 2 * mean");
    Ok(())
}
