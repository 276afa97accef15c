//! On-disk file formats: scene files, detections files (JSON and
//! YOLO-style `.txt`), match reports, evaluation metrics, radargrams
//! (raw `f32` + JSON sidecar) and footprint reports. Every file the CLI
//! writes it can parse back to an equal in-memory value.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pipefuse_core::geometry::{Box3D, Rect2};
use pipefuse_core::scene_synth::{GroundTruth, SceneSpec, ViewFrames};
use pipefuse_core::signal_prep::Radargram;
use pipefuse_core::view_fusion::{
    ApexObservation, ClassLabel, Orientation, PairwiseMode, PipelineDetection, ViewBox2D,
    ViewDetections, ViewKind,
};

use crate::error::{CliError, CliResult};

pub const SCENE_FORMAT: &str = "pipefuse.scene.v1";
pub const DETECTIONS_FORMAT: &str = "pipefuse.detections.v1";
pub const REPORT_FORMAT: &str = "pipefuse.report.v1";
pub const METRICS_FORMAT: &str = "pipefuse.metrics.v1";
pub const RADARGRAM_FORMAT: &str = "pipefuse.radargram.v1";
pub const FOOTPRINT_FORMAT: &str = "pipefuse.footprint.v1";

/// A synthetic scene on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub format: String,
    pub scene_id: String,
    pub scene: SceneSpec,
}

/// One detection box of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxEntry {
    pub id: String,
    pub view: ViewKind,
    pub variant: u8,
    pub rect_px: Rect2,
    pub confidence: f64,
}

impl BoxEntry {
    pub fn from_view_box(b: &ViewBox2D) -> Self {
        Self {
            id: b.id.clone(),
            view: b.label.view,
            variant: b.label.variant,
            rect_px: b.rect_px,
            confidence: b.confidence,
        }
    }

    pub fn to_view_box(&self) -> CliResult<ViewBox2D> {
        let label = ClassLabel::new(self.view, self.variant)
            .map_err(|e| CliError::data(format!("box {}: {e}", self.id)))?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(CliError::data(format!(
                "box {}: confidence {} outside [0, 1]",
                self.id, self.confidence
            )));
        }
        if self.rect_px.min_x > self.rect_px.max_x || self.rect_px.min_y > self.rect_px.max_y {
            return Err(CliError::data(format!("box {}: inverted rect", self.id)));
        }
        Ok(ViewBox2D {
            id: self.id.clone(),
            label,
            rect_px: self.rect_px,
            confidence: self.confidence,
        })
    }
}

/// Ground-truth annex of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub pipeline_id: String,
    pub family: Orientation,
    pub member_b: String,
    pub member_c: String,
    pub member_d: String,
    pub box3: Box3D,
    pub depth_m: f64,
    pub apex: ApexObservation,
}

/// Per-scene detections, the unit of matcher input. `truth` is present
/// in files emitted by `synth` and consumed by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsFile {
    pub format: String,
    pub scene_id: String,
    pub frames: ViewFrames,
    pub boxes: Vec<BoxEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<TruthEntry>>,
}

impl DetectionsFile {
    pub fn from_ground_truth(scene_id: &str, gt: &GroundTruth) -> Self {
        let boxes = gt
            .pipelines
            .iter()
            .flat_map(|p| p.boxes().map(BoxEntry::from_view_box))
            .collect();
        Self {
            format: DETECTIONS_FORMAT.to_string(),
            scene_id: scene_id.to_string(),
            frames: gt.frames,
            boxes,
            truth: Some(truth_entries(gt)),
        }
    }

    /// Split into per-view detection lists for the matcher.
    pub fn view_detections(
        &self,
    ) -> CliResult<(ViewDetections, ViewDetections, ViewDetections)> {
        let mut b = Vec::new();
        let mut c = Vec::new();
        let mut d = Vec::new();
        for entry in &self.boxes {
            let vb = entry.to_view_box()?;
            match entry.view {
                ViewKind::BScan => b.push(vb),
                ViewKind::CScan => c.push(vb),
                ViewKind::DScan => d.push(vb),
            }
        }
        Ok((
            ViewDetections {
                frame: self.frames.b,
                boxes: b,
            },
            ViewDetections {
                frame: self.frames.c,
                boxes: c,
            },
            ViewDetections {
                frame: self.frames.d,
                boxes: d,
            },
        ))
    }
}

pub fn truth_entries(gt: &GroundTruth) -> Vec<TruthEntry> {
    gt.pipelines
        .iter()
        .map(|p| TruthEntry {
            pipeline_id: p.id.clone(),
            family: p.spec.family,
            member_b: p.box_b.id.clone(),
            member_c: p.box_c.id.clone(),
            member_d: p.box_d.id.clone(),
            box3: p.box3,
            depth_m: 0.5 * (p.box3.min[2] + p.box3.max[2]),
            apex: p.apex,
        })
        .collect()
}

/// Histogram with explicit bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Fixed DIoU histogram over [-1, 1] with 40 bins.
    pub fn diou() -> Self {
        let edges: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect();
        Self {
            counts: vec![0; 40],
            edges,
        }
    }

    pub fn add(&mut self, value: f64) {
        let lo = self.edges[0];
        let hi = *self.edges.last().unwrap();
        let nbins = self.counts.len();
        let idx = (((value - lo) / (hi - lo)) * nbins as f64).floor() as i64;
        let idx = idx.clamp(0, nbins as i64 - 1) as usize;
        self.counts[idx] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per pair type statistics against a fixed threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub n: u64,
    pub above_frac: f64,
    pub below_frac: f64,
}

impl PairStat {
    pub fn from_scores(scores: &[f64], threshold: f64) -> Self {
        let n = scores.len() as u64;
        if n == 0 {
            return Self {
                n: 0,
                above_frac: 0.0,
                below_frac: 0.0,
            };
        }
        let above = scores.iter().filter(|&&s| s > threshold).count() as f64;
        Self {
            n,
            above_frac: above / n as f64,
            below_frac: (n as f64 - above) / n as f64,
        }
    }
}

/// Echo of the thresholds a report was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub confidence_threshold: f64,
    pub prediction_iou_threshold: f64,
    pub matching_diou_threshold: f64,
    pub pairwise_mode: PairwiseMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene_id: String,
    pub boxes: Vec<BoxEntry>,
    pub detections: Vec<PipelineDetection>,
    pub unmatched_ids: Vec<String>,
    pub discarded_low_confidence: Vec<String>,
    pub suppressed_duplicates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTotals {
    pub n_scenes: usize,
    pub n_boxes: usize,
    pub n_detections: usize,
    pub n_unmatched: usize,
    pub per_orientation: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHistograms {
    pub bc: Histogram,
    pub bd: Histogram,
    pub cd: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExceedance {
    pub threshold: f64,
    pub bc: PairStat,
    pub bd: PairStat,
    pub cd: PairStat,
}

/// Output of `match`: per-scene outcomes plus aggregate score
/// distributions over accepted detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub config: ConfigEcho,
    pub totals: ReportTotals,
    pub histograms: PairHistograms,
    pub exceedance: PairExceedance,
    pub scenes: Vec<SceneReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub truth: usize,
    pub detected: usize,
    pub correct: usize,
}

/// Output of `eval`: detection quality against ground truth plus
/// true-pair DIoU statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub format: String,
    pub n_scenes: usize,
    pub n_truth: usize,
    pub n_detections: usize,
    pub n_correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub per_class: BTreeMap<String, ClassCounts>,
    pub pair_stats: PairExceedance,
}

/// One side of the footprint comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintSide {
    pub total_bytes: f64,
    pub total_mb_decimal: f64,
    pub total_mib: f64,
}

/// Output of `footprint`: image-pipeline versus volume-pipeline data
/// volume, under both a bytes-per-point and a bits-per-point reading of
/// the volume storage, with decimal and binary units side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub format: String,
    pub n_images: u64,
    pub kb_per_image: f64,
    pub image_px: [u64; 2],
    pub image_pipeline: FootprintSide,
    pub samples_per_km: u64,
    pub channels: u64,
    pub depth_points: u64,
    pub bytes_per_point: f64,
    pub volume_pipeline_bytes_reading: FootprintSide,
    pub volume_pipeline_bits_reading: FootprintSide,
    pub ratio_bytes_reading: f64,
    pub ratio_bits_reading: f64,
    /// Nominal figures this comparison is measured against.
    pub reference_ratio: f64,
    pub reference_volume_mb: f64,
}

/// JSON sidecar of a raw radargram file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadargramHeader {
    pub format: String,
    pub n_traces: usize,
    pub n_samples: usize,
    pub trace_spacing_m: f64,
    pub sample_interval_ns: f64,
    /// Path of the raw little-endian f32 data, relative to the header.
    pub data_file: String,
}

/// Output of `preprocess` alongside the processed radargram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub format: String,
    pub steps_applied: Vec<String>,
    pub gain_per_ns: f64,
    pub lowpass_pass_hz: f64,
    pub lowpass_stop_hz: f64,
    pub gray_levels: u32,
    pub entropy_bits: f64,
    pub n_traces: usize,
    pub n_samples: usize,
}

// ---------------------------------------------------------------------------
// JSON + raw I/O helpers
// ---------------------------------------------------------------------------

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn expect_format(path: &Path, got: &str, want: &str) -> CliResult<()> {
    if got != want {
        return Err(CliError::data(format!(
            "{}: format is {got:?}, expected {want:?}",
            path.display()
        )));
    }
    Ok(())
}

pub fn read_scene(path: &Path) -> CliResult<SceneFile> {
    let f: SceneFile = read_json(path)?;
    expect_format(path, &f.format, SCENE_FORMAT)?;
    Ok(f)
}

pub fn read_detections(path: &Path) -> CliResult<DetectionsFile> {
    let f: DetectionsFile = read_json(path)?;
    expect_format(path, &f.format, DETECTIONS_FORMAT)?;
    Ok(f)
}

pub fn read_report(path: &Path) -> CliResult<ReportFile> {
    let f: ReportFile = read_json(path)?;
    expect_format(path, &f.format, REPORT_FORMAT)?;
    Ok(f)
}

/// Write a radargram as raw little-endian f32 (trace-major) plus a JSON
/// sidecar. `base` is the header path; the data file sits next to it
/// with the `.f32` extension.
pub fn write_radargram(base: &Path, r: &Radargram) -> CliResult<()> {
    let data_path = base.with_extension("f32");
    let header = RadargramHeader {
        format: RADARGRAM_FORMAT.to_string(),
        n_traces: r.n_traces(),
        n_samples: r.n_samples(),
        trace_spacing_m: r.trace_spacing_m,
        sample_interval_ns: r.sample_interval_ns,
        data_file: data_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut bytes = Vec::with_capacity(4 * r.data.len());
    for &v in r.data.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&data_path, bytes).map_err(|e| CliError::io(&data_path, e))?;
    write_json(base, &header)
}

pub fn read_radargram(header_path: &Path) -> CliResult<Radargram> {
    let header: RadargramHeader = read_json(header_path)?;
    expect_format(header_path, &header.format, RADARGRAM_FORMAT)?;
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data_file);
    let bytes = fs::read(&data_path).map_err(|e| CliError::io(&data_path, e))?;
    let expected = header.n_traces * header.n_samples * 4;
    if bytes.len() != expected {
        return Err(CliError::data(format!(
            "{}: expected {expected} bytes for {} x {} samples, found {}",
            data_path.display(),
            header.n_traces,
            header.n_samples,
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(header.n_traces * header.n_samples);
    for chunk in bytes.chunks_exact(4) {
        values.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    let data = ndarray::Array2::from_shape_vec((header.n_traces, header.n_samples), values)
        .map_err(|e| CliError::data(e.to_string()))?;
    Ok(Radargram::new(
        data,
        header.trace_spacing_m,
        header.sample_interval_ns,
    ))
}

// ---------------------------------------------------------------------------
// YOLO-style annotation ingestion
// ---------------------------------------------------------------------------

/// Class-map sidecar translating YOLO class indices to view labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMapEntry {
    pub view: ViewKind,
    pub variant: u8,
}

pub type ClassMap = BTreeMap<String, ClassMapEntry>;

/// Parse one YOLO annotation file: lines of
/// `class cx cy w h [confidence]` with coordinates normalized to [0, 1].
/// Boxes are scaled onto the given frame; ids are `<prefix><line-index>`.
pub fn parse_yolo_txt(
    path: &Path,
    class_map: &ClassMap,
    frame: &pipefuse_core::view_fusion::ViewFrame,
    id_prefix: &str,
) -> CliResult<Vec<ViewBox2D>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut boxes = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(CliError::data(format!(
                "{}:{}: expected `class cx cy w h [conf]`, got {} fields",
                path.display(),
                line_no + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            CliError::data(format!(
                "{}:{}: invalid {what}",
                path.display(),
                line_no + 1
            ))
        };
        let class = fields[0];
        let entry = class_map.get(class).ok_or_else(|| {
            CliError::data(format!(
                "{}:{}: class {class} missing from class map",
                path.display(),
                line_no + 1
            ))
        })?;
        let mut nums = [0.0f64; 5];
        for (i, f) in fields[1..].iter().enumerate() {
            nums[i] = f.parse().map_err(|_| bad("number"))?;
        }
        let (cx, cy, w, h) = (nums[0], nums[1], nums[2], nums[3]);
        let confidence = if fields.len() == 6 { nums[4] } else { 1.0 };
        for v in [cx, cy, w, h] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad("normalized coordinate (outside [0, 1])"));
            }
        }
        let label = ClassLabel::new(entry.view, entry.variant)
            .map_err(|e| bad(&format!("label ({e})")))?;
        let rect_px = Rect2::from_corners(
            (
                frame.origin_x_px + (cx - 0.5 * w).max(0.0) * frame.width_px,
                frame.origin_y_px + (cy - 0.5 * h).max(0.0) * frame.height_px,
            ),
            (
                frame.origin_x_px + (cx + 0.5 * w).min(1.0) * frame.width_px,
                frame.origin_y_px + (cy + 0.5 * h).min(1.0) * frame.height_px,
            ),
        );
        boxes.push(ViewBox2D {
            id: format!("{id_prefix}{}", boxes.len()),
            label,
            rect_px,
            confidence,
        });
    }
    Ok(boxes)
}

/// Locate the three per-view annotation files of a scene inside a
/// directory: `<scene>_B.txt`, `<scene>_C.txt`, `<scene>_D.txt`.
pub fn yolo_scene_paths(dir: &Path, scene: &str) -> CliResult<[PathBuf; 3]> {
    let mut out = Vec::with_capacity(3);
    for letter in ["B", "C", "D"] {
        let p = dir.join(format!("{scene}_{letter}.txt"));
        if !p.exists() {
            return Err(CliError::data(format!(
                "scene {scene}: missing {letter}-view file {}",
                p.display()
            )));
        }
        out.push(p);
    }
    Ok([out[0].clone(), out[1].clone(), out[2].clone()])
}

/// Scene stems present in a YOLO annotation directory (files named
/// `<scene>_<view>.txt`), sorted.
pub fn yolo_scene_stems(dir: &Path) -> CliResult<Vec<String>> {
    let mut stems = std::collections::BTreeSet::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".txt") {
            if let Some(idx) = stem.rfind('_') {
                let (scene, view) = stem.split_at(idx);
                if matches!(&view[1..], "B" | "C" | "D") {
                    stems.insert(scene.to_string());
                }
            }
        }
    }
    Ok(stems.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pipefuse_core::scene_synth::{generate_scene, DEFAULT_EXTENTS};
    use pipefuse_core::view_fusion::ViewFrame;

    #[test]
    fn detections_round_trip() {
        let (_, gt) = generate_scene(5, 3, DEFAULT_EXTENTS).unwrap();
        let file = DetectionsFile::from_ground_truth("scene_05", &gt);
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: DetectionsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file, back);
        let (b, c, d) = back.view_detections().unwrap();
        assert_eq!(b.boxes.len(), 3);
        assert_eq!(c.boxes.len(), 3);
        assert_eq!(d.boxes.len(), 3);
    }

    #[test]
    fn box_entry_validation() {
        let entry = BoxEntry {
            id: "x".into(),
            view: ViewKind::BScan,
            variant: 2,
            rect_px: Rect2::new(0.0, 0.0, 1.0, 1.0),
            confidence: 0.5,
        };
        assert!(entry.to_view_box().is_err());
        let entry = BoxEntry {
            variant: 1,
            confidence: 1.5,
            ..entry
        };
        assert!(entry.to_view_box().is_err());
    }

    #[test]
    fn histogram_binning() {
        let mut h = Histogram::diou();
        h.add(-1.0);
        h.add(0.0);
        h.add(0.999);
        h.add(1.0); // clamps into the last bin
        assert_eq!(h.total(), 4);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[20], 1);
        assert_eq!(h.counts[39], 2);
        assert_eq!(h.edges.len(), 41);
    }

    #[test]
    fn radargram_round_trip(){
        let dir = std::env::temp_dir().join(format!("pf-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let data = ndarray::Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 * 0.25);
        let r = Radargram::new(data, 0.05, 0.2);
        let base = dir.join("gram.json");
        write_radargram(&base, &r).unwrap();
        let back = read_radargram(&base).unwrap();
        assert_eq!(back.n_traces(), 3);
        assert_eq!(back.n_samples(), 5);
        // f32 precision is exact for these values
        assert_eq!(back.data, r.data);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn yolo_parse_and_errors() {
        let dir = std::env::temp_dir().join(format!("pf-yolo-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s1_B.txt");
        fs::write(&path, "0 0.5 0.5 0.2 0.1\n1 0.25 0.25 0.1 0.1 0.8\n").unwrap();
        let mut map = ClassMap::new();
        map.insert(
            "0".into(),
            ClassMapEntry {
                view: ViewKind::BScan,
                variant: 1,
            },
        );
        map.insert(
            "1".into(),
            ClassMapEntry {
                view: ViewKind::CScan,
                variant: 2,
            },
        );
        let frame = ViewFrame::default();
        let boxes = parse_yolo_txt(&path, &map, &frame, "s1-B-").unwrap();
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0].confidence, 1.0);
        assert!((boxes[0].rect_px.min_x - 0.4 * 1620.0).abs() < 1e-9);
        assert!((boxes[1].confidence - 0.8).abs() < 1e-12);

        fs::write(&path, "7 0.5 0.5 0.2 0.1\n").unwrap();
        let err = parse_yolo_txt(&path, &map, &frame, "x").unwrap_err();
        assert!(err.to_string().contains("class 7"));

        fs::write(&path, "0 0.5 0.5\n").unwrap();
        assert!(parse_yolo_txt(&path, &map, &frame, "x").is_err());

        // missing view file is named in the error
        let err = yolo_scene_paths(&dir, "s1").unwrap_err();
        assert!(err.to_string().contains("missing C-view"), "{err}");
        fs::remove_dir_all(&dir).ok();
    }
}
