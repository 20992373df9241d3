//! On-disk dataset formats shared by the simulator, the pipeline and the
//! CLI: a frame stream and odometry stream (one JSON record per line), a
//! panorama store directory and the ground-truth sidecar. All writes are
//! atomic (temp file + rename) so failed runs never leave partial output.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::geometry::{Intrinsics, Pose, Raster};
use crate::tracks::Feature;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub u: f64,
    pub v: f64,
    pub desc: Vec<f64>,
}

impl From<&FeatureRecord> for Feature {
    fn from(r: &FeatureRecord) -> Self {
        Feature {
            keypoint: [r.u, r.v],
            descriptor: r.desc.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub features: Vec<FeatureRecord>,
}

impl FrameRecord {
    pub fn features(&self) -> Vec<Feature> {
        self.features.iter().map(Feature::from).collect()
    }
}

/// Quaternion (w, x, y, z) plus translation, the wire form of a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub q: [f64; 4],
    pub t: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRecord {
            q: [q.w, q.i, q.j, q.k],
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl PoseRecord {
    pub fn pose(&self) -> Pose {
        Pose::from_parts(self.q, self.t)
    }
}

/// Relative pose from the previous frame to this one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometryRecord {
    pub frame_id: u64,
    pub rel_pose: PoseRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub view_index: usize,
    pub yaw_deg: f64,
    pub fov_deg: f64,
    pub size_px: usize,
    pub features: Vec<FeatureRecord>,
}

/// Panorama store entry: geotag, heading (yaw of the panorama frame
/// relative to true north) and the per-view feature lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoRecord {
    pub id: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub heading_deg: f64,
    #[serde(default)]
    pub views: Vec<ViewRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOriginRecord {
    pub landmark: usize,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub geo_ref: crate::geo::GeoPoint,
    pub poses: Vec<PoseRecord>,
    pub landmarks: Vec<[f64; 3]>,
    pub pano_poses: Vec<PoseRecord>,
    pub pano_ids: Vec<String>,
    /// Per frame, per feature index: which landmark produced it and whether
    /// the observation was substituted by an outlier.
    pub frame_features: Vec<Vec<FeatureOriginRecord>>,
}

/// A dataset loaded from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub camera: Intrinsics,
    pub frames: Vec<FrameRecord>,
    pub odometry: Vec<OdometryRecord>,
    pub panos: Vec<PanoRecord>,
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| DatasetError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item).expect("serializable");
        bytes.push(b'\n');
    }
    atomic_write(path, &bytes)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
                path: path.to_path_buf(),
                message: format!("line {}: {}", n + 1, e),
            })?,
        );
    }
    Ok(out)
}

pub fn write_dataset(
    dir: &Path,
    camera: &Intrinsics,
    frames: &[FrameRecord],
    odometry: &[OdometryRecord],
    panos: &[PanoRecord],
    rasters: &[(String, Raster)],
    ground_truth: Option<&GroundTruthFile>,
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_json(&dir.join("camera.json"), camera)?;
    write_jsonl(&dir.join("frames.jsonl"), frames)?;
    write_jsonl(&dir.join("odometry.jsonl"), odometry)?;
    let pano_dir = dir.join("panos");
    fs::create_dir_all(&pano_dir).map_err(|e| io_err(&pano_dir, e))?;
    for pano in panos {
        write_json(&pano_dir.join(format!("pano_{}.json", pano.id)), pano)?;
    }
    for (id, raster) in rasters {
        let mut bytes = Vec::new();
        raster
            .write_pnm(&mut bytes)
            .map_err(|e| io_err(&pano_dir, e))?;
        let ext = if raster.channels == 1 { "pgm" } else { "ppm" };
        atomic_write(&pano_dir.join(format!("pano_{id}.{ext}")), &bytes)?;
    }
    if let Some(gt) = ground_truth {
        write_json(&dir.join("ground_truth.json"), gt)?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let camera: Intrinsics = read_json(&dir.join("camera.json"))?;
    let frames: Vec<FrameRecord> = read_jsonl(&dir.join("frames.jsonl"))?;
    let odometry: Vec<OdometryRecord> = read_jsonl(&dir.join("odometry.jsonl"))?;
    let mut panos = Vec::new();
    let pano_dir = dir.join("panos");
    if pano_dir.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&pano_dir)
            .map_err(|e| io_err(&pano_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().map_or(false, |x| x == "json")
                    && p.file_name()
                        .map_or(false, |n| n.to_string_lossy().starts_with("pano_"))
            })
            .collect();
        entries.sort();
        for p in entries {
            panos.push(read_json::<PanoRecord>(&p)?);
        }
    }
    Ok(Dataset {
        camera,
        frames,
        odometry,
        panos,
    })
}

pub fn load_ground_truth(dir: &Path) -> Result<GroundTruthFile, DatasetError> {
    read_json(&dir.join("ground_truth.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn jsonl_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("frames.jsonl");
        let frames = vec![
            FrameRecord {
                frame_id: 0,
                timestamp_s: 0.0,
                features: vec![FeatureRecord {
                    u: 1.5,
                    v: 2.5,
                    desc: vec![0.1, 0.2],
                }],
            },
            FrameRecord {
                frame_id: 1,
                timestamp_s: 0.1,
                features: vec![],
            },
        ];
        write_jsonl(&path, &frames).unwrap();
        let back: Vec<FrameRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("out.json");
        atomic_write(&path, b"{}").unwrap();
        atomic_write(&path, b"{\"a\":1}").unwrap();
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["out.json"]);
        assert_eq!(fs::read(&path).unwrap(), b"{\"a\":1}");
    }

    #[test]
    fn pose_record_round_trip() {
        let p = Pose::from_parts([0.9, 0.1, -0.2, 0.3], [1.0, 2.0, 3.0]);
        let rec = PoseRecord::from(&p);
        let back = rec.pose();
        let (da, dt) = p.separation(&back);
        assert!(da < 1e-12 && dt < 1e-12);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            b"{\"frame_id\":0,\"timestamp_s\":0,\"features\":[]}\nnot json\n",
        )
        .unwrap();
        let err = read_jsonl::<FrameRecord>(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
