//! File formats for observation datasets and stored tolerance regions.
//!
//! Frame datasets are JSON Lines, one frame record per line. A record carries
//! either world-space flower positions (`flowers`) or raw pixel detections
//! with camera calibration (`raw`), never both; raw records are lifted to
//! world space on load and must contain at least one detection. Unknown
//! fields are ignored so readers stay compatible with annotated files; the
//! optional `timestamp` field is reserved metadata and is not preserved by
//! [`save_dataset`], which always writes canonical flowers-form records.
//!
//! Loading prunes frames whose flower count disagrees with the declared
//! count (count gating requires a uniform count) and reports what was
//! dropped; [`CountRule::Majority`] infers the declaration from the most
//! common count instead. A CSV fallback (`frame_id,flower_idx,x,y,z`)
//! covers exports from spreadsheet tooling.
//!
//! Tolerance regions persist as a single JSON document. Floating-point
//! values round-trip bit-exactly through both formats.

use crate::descriptor::Cluster;
use crate::geometry::{
    frame_to_cluster_with_model, CameraIntrinsics, CameraPose, DepthModel, GeometryError,
    PixelDetection, Point3,
};
use crate::unscented::{DescriptorDistribution, UtError};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Schema version accepted by the readers and stamped by the writers.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: schema version {found} is unsupported (expected {SCHEMA_VERSION})")]
    SchemaVersion {
        path: String,
        line: usize,
        found: u32,
    },
    #[error("{path}:{line}: record must carry exactly one of `flowers` or `raw`")]
    AmbiguousRecord { path: String, line: usize },
    #[error("{path}:{line}: {source}")]
    Geometry {
        path: String,
        line: usize,
        #[source]
        source: GeometryError,
    },
    #[error("{path}: dataset contains no frames")]
    EmptyDataset { path: String },
    #[error("declared flower count {declared} is below the descriptor minimum of 2")]
    InvalidFlowerCount { declared: usize },
    #[error("no frames carry the declared flower count {declared}")]
    EmptyAfterPruning { declared: usize },
    #[error("distribution file version {found} is unsupported (expected {SCHEMA_VERSION})")]
    DistributionVersion { found: u32 },
    #[error("distribution covariance is asymmetric by {delta:.3e}")]
    AsymmetricCovariance { delta: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(#[from] UtError),
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// One line of a JSONL dataset, as written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub version: u32,
    pub frame_id: i64,
    /// Reserved acquisition-time metadata; readers accept it, writers drop it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    /// World-space flower positions, one `[x, y, z]` per flower.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flowers: Option<Vec<[f64; 3]>>,
    /// Pixel detections plus calibration, lifted to world space on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawFrame>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawFrame {
    /// Pinhole intrinsics as `[fx, fy, cx, cy]`.
    pub intrinsics: [f64; 4],
    pub pose: PoseRecord,
    /// One `[u, v, depth]` per detection.
    pub detections: Vec<[f64; 3]>,
}

/// Camera-to-world rigid transform, rotation in row-major order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

/// Frames that survived loading and pruning, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Cluster>,
    /// Flower count every retained frame was validated against.
    pub declared_flower_count: usize,
    /// Origin label; loaders fill in the file stem.
    pub name: Option<String>,
}

impl Dataset {
    pub fn new(frames: Vec<Cluster>, declared_flower_count: usize) -> Self {
        Self {
            frames,
            declared_flower_count,
            name: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// How the declared flower count is chosen when pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountRule {
    /// Keep frames with exactly this count.
    Declared(usize),
    /// Keep frames matching the most common count; ties go to the smaller
    /// count so the rule is deterministic.
    Majority,
}

/// A frame removed because its flower count disagreed with the declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedFrame {
    pub frame_id: i64,
    /// 1-based line (JSONL) or record group (CSV) the frame came from.
    pub line: usize,
    pub found: usize,
}

/// What pruning kept and dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneReport {
    /// The count frames were pruned against (the majority count under
    /// [`CountRule::Majority`]).
    pub declared_count: usize,
    pub kept: usize,
    pub pruned: Vec<PrunedFrame>,
}

impl PruneReport {
    /// CSV rendering of the dropped frames (`frame_id,line,flower_count`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_id,line,flower_count\n");
        for p in &self.pruned {
            out.push_str(&format!("{},{},{}\n", p.frame_id, p.line, p.found));
        }
        out
    }
}

fn read_file(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn record_to_cluster(
    record: &FrameRecord,
    model: DepthModel,
    path: &str,
    line: usize,
) -> Result<Cluster, DatasetError> {
    let geometry_at = |source| DatasetError::Geometry {
        path: path.to_string(),
        line,
        source,
    };
    match (&record.flowers, &record.raw) {
        (Some(flowers), None) => Ok(Cluster::new(
            flowers
                .iter()
                .map(|&[x, y, z]| Point3::new(x, y, z))
                .collect(),
            record.frame_id,
        )),
        (None, Some(raw)) => {
            let [fx, fy, cx, cy] = raw.intrinsics;
            let k = CameraIntrinsics::new(fx, fy, cx, cy).map_err(geometry_at)?;
            let rotation = Matrix3::from_fn(|r, c| raw.pose.rotation[r][c]);
            let translation = Vector3::from(raw.pose.translation);
            let pose = CameraPose::new(rotation, translation).map_err(geometry_at)?;
            let detections: Vec<PixelDetection> = raw
                .detections
                .iter()
                .map(|&[u, v, depth]| PixelDetection::new(u, v, depth))
                .collect();
            frame_to_cluster_with_model(&detections, &k, &pose, record.frame_id, model)
                .map_err(geometry_at)
        }
        _ => Err(DatasetError::AmbiguousRecord {
            path: path.to_string(),
            line,
        }),
    }
}

/// Keeps the frames whose flower count matches `rule` and reports the rest.
/// `lines` gives each frame's source line for the report.
pub fn prune_by_count(
    frames: Vec<Cluster>,
    lines: &[usize],
    rule: CountRule,
) -> Result<(Dataset, PruneReport), DatasetError> {
    let declared = match rule {
        CountRule::Declared(count) => count,
        CountRule::Majority => {
            let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
            for frame in &frames {
                *histogram.entry(frame.len()).or_insert(0) += 1;
            }
            // BTreeMap iterates counts in ascending order, so requiring a
            // strictly larger frequency keeps the smaller count on ties.
            let mut majority = 0usize;
            let mut best_freq = 0usize;
            for (&count, &freq) in &histogram {
                if freq > best_freq {
                    best_freq = freq;
                    majority = count;
                }
            }
            majority
        }
    };
    if declared < 2 {
        return Err(DatasetError::InvalidFlowerCount { declared });
    }
    let mut kept = Vec::new();
    let mut pruned = Vec::new();
    for (frame, &line) in frames.into_iter().zip(lines) {
        if frame.len() == declared {
            kept.push(frame);
        } else {
            pruned.push(PrunedFrame {
                frame_id: frame.frame_id,
                line,
                found: frame.len(),
            });
        }
    }
    if kept.is_empty() {
        return Err(DatasetError::EmptyAfterPruning { declared });
    }
    let report = PruneReport {
        declared_count: declared,
        kept: kept.len(),
        pruned,
    };
    Ok((Dataset::new(kept, declared), report))
}

fn stem_name(path: &Path) -> Option<String> {
    path.file_stem().map(|s| s.to_string_lossy().into_owned())
}

/// Loads a JSONL dataset pruned to `expected_count` flowers per frame,
/// lifting raw records with the ray depth model.
pub fn load_dataset(
    path: impl AsRef<Path>,
    expected_count: usize,
) -> Result<(Dataset, PruneReport), DatasetError> {
    load_dataset_with(path, DepthModel::Ray, CountRule::Declared(expected_count))
}

/// [`load_dataset`] with the flower count inferred by majority vote.
pub fn load_dataset_majority(
    path: impl AsRef<Path>,
) -> Result<(Dataset, PruneReport), DatasetError> {
    load_dataset_with(path, DepthModel::Ray, CountRule::Majority)
}

/// Loads a JSONL dataset with an explicit depth model for raw records.
pub fn load_dataset_with(
    path: impl AsRef<Path>,
    model: DepthModel,
    rule: CountRule,
) -> Result<(Dataset, PruneReport), DatasetError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let path_str = path.display().to_string();
    let mut frames = Vec::new();
    let mut lines = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord =
            serde_json::from_str(raw_line).map_err(|source| DatasetError::Parse {
                path: path_str.clone(),
                line,
                source,
            })?;
        if record.version != SCHEMA_VERSION {
            return Err(DatasetError::SchemaVersion {
                path: path_str.clone(),
                line,
                found: record.version,
            });
        }
        frames.push(record_to_cluster(&record, model, &path_str, line)?);
        lines.push(line);
    }
    if frames.is_empty() {
        return Err(DatasetError::EmptyDataset { path: path_str });
    }
    let (mut dataset, report) = prune_by_count(frames, &lines, rule)?;
    dataset.name = stem_name(path);
    Ok((dataset, report))
}

/// Writes the dataset as flowers-form JSONL, one frame per line.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut out = String::new();
    for frame in &dataset.frames {
        let record = FrameRecord {
            version: SCHEMA_VERSION,
            frame_id: frame.frame_id,
            timestamp: None,
            flowers: Some(frame.points.iter().map(|p| [p.x, p.y, p.z]).collect()),
            raw: None,
        };
        out.push_str(&serde_json::to_string(&record).expect("record serialization is infallible"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads the CSV fallback format (`frame_id,flower_idx,x,y,z`, header
/// required). Rows group by `frame_id` in first-appearance order; each
/// frame's flowers sort by `flower_idx`.
pub fn load_dataset_csv(
    path: impl AsRef<Path>,
    rule: CountRule,
) -> Result<(Dataset, PruneReport), DatasetError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let csv_at = |source| DatasetError::Csv {
        path: path_str.clone(),
        source,
    };

    #[derive(Deserialize)]
    struct Row {
        frame_id: i64,
        flower_idx: usize,
        x: f64,
        y: f64,
        z: f64,
    }

    let mut reader = csv::Reader::from_path(path).map_err(csv_at)?;
    let mut order: Vec<i64> = Vec::new();
    let mut groups: BTreeMap<i64, Vec<(usize, Point3)>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: Row = row.map_err(csv_at)?;
        let group = groups.entry(row.frame_id).or_insert_with(|| {
            order.push(row.frame_id);
            Vec::new()
        });
        group.push((row.flower_idx, Point3::new(row.x, row.y, row.z)));
    }
    if order.is_empty() {
        return Err(DatasetError::EmptyDataset { path: path_str });
    }
    let mut frames = Vec::with_capacity(order.len());
    let mut lines = Vec::with_capacity(order.len());
    for (group_idx, frame_id) in order.iter().enumerate() {
        let mut flowers = groups.remove(frame_id).expect("group exists");
        flowers.sort_by_key(|&(idx, _)| idx);
        frames.push(Cluster::new(
            flowers.into_iter().map(|(_, p)| p).collect(),
            *frame_id,
        ));
        lines.push(group_idx + 1);
    }
    let (mut dataset, report) = prune_by_count(frames, &lines, rule)?;
    dataset.name = stem_name(path);
    Ok((dataset, report))
}

/// Writes the CSV fallback format with 0-based flower indices.
pub fn save_dataset_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let csv_at = |source| DatasetError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_at)?;
    writer
        .write_record(["frame_id", "flower_idx", "x", "y", "z"])
        .map_err(csv_at)?;
    for frame in &dataset.frames {
        for (idx, p) in frame.points.iter().enumerate() {
            writer
                .write_record([
                    frame.frame_id.to_string(),
                    idx.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    p.z.to_string(),
                ])
                .map_err(csv_at)?;
        }
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Wire form of a stored tolerance region.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistributionFile {
    version: u32,
    flower_count: usize,
    /// Descriptor-space mean, ordered (inertia, avg_distance).
    mean: [f64; 2],
    /// Row-major 2x2 covariance.
    cov: [[f64; 2]; 2],
}

/// Writes a tolerance region as a small JSON document.
pub fn save_distribution(
    dist: &DescriptorDistribution,
    path: impl AsRef<Path>,
) -> Result<(), DatasetError> {
    dist.validate()?;
    let path = path.as_ref();
    let file = DistributionFile {
        version: SCHEMA_VERSION,
        flower_count: dist.flower_count,
        mean: [dist.mean.x, dist.mean.y],
        cov: [
            [dist.cov[(0, 0)], dist.cov[(0, 1)]],
            [dist.cov[(1, 0)], dist.cov[(1, 1)]],
        ],
    };
    let mut text = serde_json::to_string_pretty(&file).expect("serialization is infallible");
    text.push('\n');
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a tolerance region back, symmetrizing covariance asymmetry up to
/// `1e-9` (relative to the largest entry) and rejecting anything worse.
pub fn load_distribution(path: impl AsRef<Path>) -> Result<DescriptorDistribution, DatasetError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let file: DistributionFile =
        serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
            path: path.display().to_string(),
            line: source.line(),
            source,
        })?;
    if file.version != SCHEMA_VERSION {
        return Err(DatasetError::DistributionVersion {
            found: file.version,
        });
    }
    let delta = (file.cov[0][1] - file.cov[1][0]).abs();
    let scale = file
        .cov
        .iter()
        .flatten()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    if delta > 1e-9 * scale {
        return Err(DatasetError::AsymmetricCovariance { delta });
    }
    let off = 0.5 * (file.cov[0][1] + file.cov[1][0]);
    let dist = DescriptorDistribution {
        mean: Vector2::new(file.mean[0], file.mean[1]),
        cov: Matrix2::new(file.cov[0][0], off, off, file.cov[1][1]),
        flower_count: file.flower_count,
    };
    dist.validate()?;
    Ok(dist)
}
