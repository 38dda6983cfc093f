//! Re-identify clusters between two observation passes.
//!
//! The reference pass records 12 clusters; the observed pass sees the same
//! clusters again under fresh detection noise. Every observed frame is gated
//! against every reference tolerance region; the diagonal should light up.

use flowermatch::datasets::Dataset;
use flowermatch::montecarlo::{perturb, simulate_initial_cluster, trial_rng};
use flowermatch::{match_datasets, MatchConfig, NoiseModel, UtParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let noise = NoiseModel::isotropic(0.01);
    let mut reference = Vec::new();
    let mut observed = Vec::new();
    for i in 0..12u64 {
        let mut rng = trial_rng(2024, i);
        let mut cluster = simulate_initial_cluster(4, 1.0, &mut rng)?;
        cluster.frame_id = i as i64;
        observed.push(perturb(&cluster, &noise, &mut rng)?);
        reference.push(cluster);
    }
    let reference = Dataset::new(reference, 4);
    let observed = Dataset::new(observed, 4);

    let report = match_datasets(
        &reference,
        &observed,
        &noise,
        &UtParams::default(),
        &MatchConfig::default(),
        true,
    )?;

    println!(
        "{} reference x {} observed frames, 95% gate",
        report.reference_frames, report.observed_frames
    );
    for pair in report.matched_pairs() {
        let kind = if pair.reference_index == pair.observed_index {
            "correct"
        } else {
            "false positive"
        };
        println!(
            "  ref {:>2} ~ obs {:>2}   d^2 = {:>8.4} < {:.4}   ({kind})",
            pair.reference_frame, pair.observed_frame, pair.d2, pair.threshold
        );
    }
    println!(
        "total {} / correct {} / false positives {}",
        report.total_matches,
        report.correct_matches.unwrap(),
        report.total_false_positives.unwrap()
    );
    Ok(())
}
