//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see every line.
//!
//! The criteria pin the numerical behavior end to end: gate quantiles,
//! exactness of the propagation on linear maps, agreement with Monte Carlo
//! across noise levels, the padding trade-off, re-identification quality on
//! synthetic populations, descriptor invariances, gate calibration, and
//! byte-deterministic command-line runs.

use flowermatch::datasets::{save_dataset, Dataset};
use flowermatch::montecarlo::{
    perturb, simulate_initial_cluster, trial_rng, PaddingStudyConfig, CLUSTER_STREAM,
};
use flowermatch::unscented::propagate;
use flowermatch::{
    chi2_threshold, compute_descriptor, is_match, match_datasets, noise_sweep, outlier_percentage,
    padding_study, sample_descriptors, ut_descriptor_distribution, Cluster, DescriptorDistribution,
    MatchConfig, NoiseModel, Point3, UtParams,
};
use nalgebra::{DMatrix, DVector, Rotation3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

/// Prints the verdict line and fails the test on unmet criteria.
fn criterion(name: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("[PASS] {name}");
    } else {
        println!("[FAIL] {name}: {}", failures.join("; "));
        panic!("criterion {name:?} failed: {}", failures.join("; "));
    }
}

fn check(failures: &mut Vec<String>, ok: bool, detail: String) {
    if !ok {
        failures.push(detail);
    }
}

#[test]
fn criterion_1_chi_square_gate_quantiles() {
    let mut failures = Vec::new();
    let cases = [
        (0.95, 2, 5.9915, 1e-3),
        (0.99, 2, 9.21034, 1e-5),
        (0.95, 1, 3.84146, 1e-5),
    ];
    for (confidence, dof, expected, tol) in cases {
        let got = chi2_threshold(confidence, dof).unwrap();
        check(
            &mut failures,
            (got - expected).abs() <= tol,
            format!("chi2({confidence}, {dof}) = {got}, expected {expected} +- {tol}"),
        );
    }
    criterion("1 chi-square gate quantiles", failures);
}

#[test]
fn criterion_2_propagation_is_exact_on_linear_maps() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(271);
    let params = UtParams::default();
    for case in 0..20 {
        let dim = rng.random_range(3..=18usize);
        let out_dim = rng.random_range(2..=dim);
        let mean = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let cov = &b * b.transpose() + DMatrix::identity(dim, dim) * 0.1;
        let a = DMatrix::from_fn(out_dim, dim, |_, _| rng.random_range(-1.0..1.0));

        let (got_mean, got_cov) = propagate(&mean, &cov, &params, |x| &a * x).unwrap();
        let want_mean = &a * &mean;
        let want_cov = &a * &cov * a.transpose();
        let mean_err = (&got_mean - &want_mean).norm() / (1.0 + want_mean.norm());
        let cov_err = (&got_cov - &want_cov).norm() / (1.0 + want_cov.norm());
        check(
            &mut failures,
            mean_err <= 1e-9,
            format!("case {case} (dim {dim}->{out_dim}): mean error {mean_err:.3e} > 1e-9"),
        );
        check(
            &mut failures,
            cov_err <= 1e-9,
            format!("case {case} (dim {dim}->{out_dim}): covariance error {cov_err:.3e} > 1e-9"),
        );
    }
    criterion(
        "2 propagation exact on linear maps (20 random priors)",
        failures,
    );
}

#[test]
fn criterion_3_noise_sweep_tracks_monte_carlo() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let grid = [0.01, 0.02, 0.03, 0.04, 0.05];
    let mut rng = trial_rng(42, CLUSTER_STREAM);
    let cluster = simulate_initial_cluster(3, 1.0, &mut rng).unwrap();
    let rows = noise_sweep(&cluster, &grid, 10_000, 42, &UtParams::default(), 0.95).unwrap();

    for row in &rows {
        check(
            &mut failures,
            (4.0..=6.0).contains(&row.outlier_pct),
            format!(
                "outlier rate {}% at sigma {} outside [4, 6]",
                row.outlier_pct, row.noise
            ),
        );
    }
    for pair in rows.windows(2) {
        check(
            &mut failures,
            pair[1].frobenius_norm > pair[0].frobenius_norm,
            format!(
                "frobenius not increasing: {} at sigma {} vs {} at sigma {}",
                pair[1].frobenius_norm, pair[1].noise, pair[0].frobenius_norm, pair[0].noise
            ),
        );
    }
    let (lo, hi) = (rows[0].frobenius_norm, rows[4].frobenius_norm);
    check(
        &mut failures,
        hi >= 10.0 * lo,
        format!("frobenius span {hi} < 10 x {lo}"),
    );
    let elapsed = start.elapsed();
    check(
        &mut failures,
        elapsed.as_secs_f64() < 30.0,
        format!("sweep took {elapsed:?}, budget 30 s"),
    );
    criterion(
        "3 noise sweep agreement and outlier band (10k trials)",
        failures,
    );
}

#[test]
fn criterion_4_padding_increases_matches_and_false_positives() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let cfg = PaddingStudyConfig::default(); // 10k trials, seed 42, padding 0.005
    let [baseline, padded] = padding_study(&cfg).unwrap();
    check(
        &mut failures,
        padded.correct_matches > baseline.correct_matches,
        format!(
            "correct matches {} -> {} did not increase",
            baseline.correct_matches, padded.correct_matches
        ),
    );
    let (base_avg, pad_avg) = (
        baseline.avg_false_positives.unwrap_or(0.0),
        padded.avg_false_positives.unwrap_or(0.0),
    );
    check(
        &mut failures,
        pad_avg > base_avg,
        format!("avg false positives {base_avg} -> {pad_avg} did not increase"),
    );
    let elapsed = start.elapsed();
    check(
        &mut failures,
        elapsed.as_secs_f64() < 60.0,
        format!("study took {elapsed:?}, budget 60 s"),
    );
    criterion("4 padding trade-off direction (10k trials)", failures);
}

#[test]
fn criterion_5_synthetic_self_match_reidentifies() {
    let mut failures = Vec::new();
    let start = Instant::now();
    // One physical cluster observed 1000 times under sigma = 0.01 noise;
    // the dataset matched against itself must light up the diagonal.
    let frames = 1000usize;
    let noise = NoiseModel::isotropic(0.01);
    let mut rng = trial_rng(42, CLUSTER_STREAM);
    let base = simulate_initial_cluster(4, 1.0, &mut rng).unwrap();
    let mut observed = Vec::with_capacity(frames);
    for i in 0..frames {
        let mut rng = trial_rng(42, i as u64);
        let mut frame = perturb(&base, &noise, &mut rng).unwrap();
        frame.frame_id = i as i64;
        observed.push(frame);
    }
    let dataset = Dataset::new(observed, 4);
    let report = match_datasets(
        &dataset,
        &dataset,
        &noise,
        &UtParams::default(),
        &MatchConfig::default(),
        true,
    )
    .unwrap();
    let diagonal_rate = report.correct_matches.unwrap() as f64 / frames as f64;
    check(
        &mut failures,
        diagonal_rate >= 0.93,
        format!(
            "only {} of {frames} frames matched themselves ({:.1}%), need 93%",
            report.correct_matches.unwrap(),
            100.0 * diagonal_rate
        ),
    );
    let elapsed = start.elapsed();
    check(
        &mut failures,
        elapsed.as_secs_f64() < 30.0,
        format!("matching took {elapsed:?}, budget 30 s"),
    );
    criterion(
        "5 synthetic self-match re-identification (1000 frames)",
        failures,
    );
}

#[test]
fn criterion_6_flower_count_gate_is_absolute() {
    let mut failures = Vec::new();
    // A four-flower cluster whose descriptor coincides with a three-flower
    // region's mean must still be rejected.
    let region = DescriptorDistribution {
        mean: Vector2::new(1.0, 0.55),
        cov: nalgebra::Matrix2::new(4e-4, 1e-4, 1e-4, 4e-5),
        flower_count: 3,
    };
    let x = flowermatch::Descriptor {
        inertia: region.mean.x,
        avg_distance: region.mean.y,
    };
    let result = is_match(&x, 4, 0, &region, &MatchConfig::default()).unwrap();
    check(
        &mut failures,
        !result.matched && !result.count_ok && result.d2 == 0.0,
        format!(
            "3-vs-4 pair produced matched={} count_ok={} d2={}",
            result.matched, result.count_ok, result.d2
        ),
    );

    // Dataset level: 3-flower references vs 4-flower observations.
    let tri = |id| {
        Cluster::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.5, 0.9, 0.0),
            ],
            id,
        )
    };
    let quad = |id| {
        Cluster::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.5, 0.9, 0.0),
                Point3::new(0.5, 0.3, 0.0),
            ],
            id,
        )
    };
    let report = match_datasets(
        &Dataset::new(vec![tri(0), tri(1)], 3),
        &Dataset::new(vec![quad(0), quad(1)], 4),
        &NoiseModel::isotropic(0.01),
        &UtParams::default(),
        &MatchConfig::default(),
        false,
    )
    .unwrap();
    check(
        &mut failures,
        report.total_matches == 0,
        format!("{} matches across differing counts", report.total_matches),
    );
    criterion("6 flower-count gate", failures);
}

#[test]
fn criterion_7_descriptor_invariances() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(137);
    let mut worst_rel: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(2..=8usize);
        let points: Vec<Point3> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let cluster = Cluster::new(points.clone(), 0);
        let d = compute_descriptor(&cluster).unwrap();

        let rot = Rotation3::from_euler_angles(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        let shift = Vector3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        );
        let mut moved: Vec<Point3> = points.iter().map(|p| rot * p + shift).collect();
        moved.shuffle(&mut rng);
        let d2 = compute_descriptor(&Cluster::new(moved, 0)).unwrap();

        let rel = ((d.inertia - d2.inertia).abs() / (1.0 + d.inertia))
            .max((d.avg_distance - d2.avg_distance).abs() / (1.0 + d.avg_distance));
        worst_rel = worst_rel.max(rel);
        if rel > 1e-9 {
            failures.push(format!(
                "case {case}: rigid-motion deviation {rel:.3e} > 1e-9"
            ));
            break;
        }
        if d.inertia < n as f64 * d.avg_distance * d.avg_distance * (1.0 - 1e-12) {
            failures.push(format!(
                "case {case}: inertia {} below N * avg^2 = {}",
                d.inertia,
                n as f64 * d.avg_distance * d.avg_distance
            ));
            break;
        }

        // Uniform scaling by s multiplies inertia by s^2 and the average
        // distance by s.
        let s = 2.5;
        let grown: Vec<Point3> = points.iter().map(|p| p * s).collect();
        let dg = compute_descriptor(&Cluster::new(grown, 0)).unwrap();
        let scale_rel = ((dg.inertia - s * s * d.inertia).abs() / (1.0 + s * s * d.inertia))
            .max((dg.avg_distance - s * d.avg_distance).abs() / (1.0 + s * d.avg_distance));
        worst_rel = worst_rel.max(scale_rel);
        if scale_rel > 1e-9 {
            failures.push(format!(
                "case {case}: scaling-law deviation {scale_rel:.3e} > 1e-9"
            ));
            break;
        }
    }
    if failures.is_empty() {
        println!("       worst invariance deviation over 1000 clusters: {worst_rel:.3e}");
    }
    criterion("7 descriptor invariances (1000 random clusters)", failures);
}

#[test]
fn criterion_8_gate_calibration() {
    let mut failures = Vec::new();
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
    )
    .unwrap();
    let samples = sample_descriptors(&dist, 10_000, 42).unwrap();
    let miss_rate = outlier_percentage(&samples, &dist, 0.95).unwrap();
    check(
        &mut failures,
        (miss_rate - 5.0).abs() <= 0.6,
        format!("95% gate missed {miss_rate}% of its own samples, expected 5.0 +- 0.6"),
    );
    criterion("8 gate calibration (10k draws)", failures);
}

fn run_cli(dir: &Path, args: &[&str]) -> (String, Vec<(String, Vec<u8>)>) {
    std::fs::create_dir_all(dir).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_flowermatch"))
        .args(args)
        .args(["--out", dir.to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "flowermatch {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    // Strip the output directory from stdout so runs in different
    // directories stay comparable.
    let stdout = String::from_utf8(output.stdout)
        .unwrap()
        .replace(dir.to_str().unwrap(), "<out>");
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|entry| {
            let entry = entry.unwrap();
            (
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            )
        })
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    (stdout, files)
}

#[test]
fn criterion_9_cli_runs_are_byte_deterministic() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let root = tempfile::tempdir().unwrap();

    // Shared input datasets for `match` and `describe`.
    let noise = NoiseModel::isotropic(0.01);
    let mut reference = Vec::new();
    let mut observed = Vec::new();
    for i in 0..20u64 {
        let mut rng = trial_rng(7, i);
        let mut cluster = simulate_initial_cluster(4, 1.0, &mut rng).unwrap();
        cluster.frame_id = i as i64;
        observed.push(perturb(&cluster, &noise, &mut rng).unwrap());
        reference.push(cluster);
    }
    let ref_path = root.path().join("ref.jsonl");
    let obs_path = root.path().join("obs.jsonl");
    save_dataset(&Dataset::new(reference, 4), &ref_path).unwrap();
    save_dataset(&Dataset::new(observed, 4), &obs_path).unwrap();
    let (ref_str, obs_str) = (ref_path.to_str().unwrap(), obs_path.to_str().unwrap());

    let commands: Vec<(&str, Vec<&str>)> = vec![
        (
            "simulate",
            vec!["simulate", "--trials", "2000", "--seed", "42"],
        ),
        (
            "padding-study",
            vec!["padding-study", "--trials", "2000", "--seed", "42"],
        ),
        ("match", vec!["match", ref_str, obs_str, "--flowers", "4"]),
        ("describe", vec!["describe", ref_str, "--frame", "3"]),
    ];
    for (name, args) in &commands {
        let first = run_cli(&root.path().join(format!("{name}-a")), args);
        let second = run_cli(&root.path().join(format!("{name}-b")), args);
        check(
            &mut failures,
            first.0 == second.0,
            format!("{name}: stdout differs between runs"),
        );
        check(
            &mut failures,
            first.1 == second.1,
            format!("{name}: output files differ between runs"),
        );
        check(
            &mut failures,
            !first.1.is_empty(),
            format!("{name}: produced no output files"),
        );
    }
    let elapsed = start.elapsed();
    check(
        &mut failures,
        elapsed.as_secs_f64() < 60.0,
        format!("CLI determinism checks took {elapsed:?}, budget 60 s"),
    );
    criterion(
        "9 byte-deterministic CLI runs (all 4 subcommands)",
        failures,
    );
}
