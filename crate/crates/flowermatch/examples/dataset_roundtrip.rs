//! Persist and reload the two file formats: JSONL frame datasets (with
//! count pruning on load) and JSON tolerance regions (bit-exact floats).

use flowermatch::datasets::{
    load_dataset, load_distribution, save_dataset, save_distribution, Dataset,
};
use flowermatch::{ut_descriptor_distribution, Cluster, NoiseModel, Point3, UtParams};

fn square(frame_id: i64, size: f64) -> Cluster {
    Cluster::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(size, 0.0, 0.0),
            Point3::new(size, size, 0.0),
            Point3::new(0.0, size, 0.0),
        ],
        frame_id,
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("flowermatch_roundtrip");
    std::fs::create_dir_all(&dir)?;

    // One frame has a missed detection; loading prunes it.
    let mut incomplete = square(2, 1.0);
    incomplete.points.pop();
    let dataset = Dataset::new(
        vec![square(0, 1.0), square(1, 1.1), incomplete, square(3, 0.9)],
        4,
    );
    let data_path = dir.join("clusters.jsonl");
    save_dataset(&dataset, &data_path)?;
    let (loaded, report) = load_dataset(&data_path, 4)?;
    println!(
        "loaded {} of {} frames (declared flower count {})",
        loaded.len(),
        dataset.len(),
        report.declared_count
    );
    for pruned in &report.pruned {
        println!(
            "  pruned frame {} on line {}: {} flowers",
            pruned.frame_id, pruned.line, pruned.found
        );
    }

    // Tolerance regions survive the disk round trip bit for bit.
    let dist = ut_descriptor_distribution(
        &loaded.frames[0],
        &NoiseModel::isotropic(0.01),
        &UtParams::default(),
        0.0,
    )?;
    let dist_path = dir.join("region.json");
    save_distribution(&dist, &dist_path)?;
    let reloaded = load_distribution(&dist_path)?;
    assert_eq!(reloaded.mean, dist.mean);
    assert_eq!(reloaded.cov, dist.cov);
    println!(
        "tolerance region round-tripped exactly through {}",
        dist_path.display()
    );
    Ok(())
}
