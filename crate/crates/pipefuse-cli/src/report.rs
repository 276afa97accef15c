//! Report aggregation and evaluation against ground truth.

use std::collections::BTreeMap;

use pipefuse_core::geometry::diou_3d;
use pipefuse_core::scene_synth::ViewFrames;
use pipefuse_core::view_fusion::{
    lift_to_3d, scene_intervals, MatchOutcome, Orientation, ViewBox2D,
};

use crate::error::{CliError, CliResult};
use crate::formats::{
    BoxEntry, ClassCounts, ConfigEcho, DetectionsFile, Histogram, MetricsFile, PairExceedance,
    PairHistograms, PairStat, ReportFile, ReportTotals, SceneReport, TruthEntry, METRICS_FORMAT,
    REPORT_FORMAT,
};

/// Threshold the exceedance statistics are reported against.
pub const EXCEEDANCE_THRESHOLD: f64 = 0.4;

pub fn orientation_name(o: Orientation) -> &'static str {
    match o {
        Orientation::Vertical => "vertical",
        Orientation::HorizontalInclined => "horizontal_inclined",
        Orientation::DeeplyInclined => "deeply_inclined",
    }
}

/// Build one scene's report section from its match outcome.
pub fn scene_report(scene_id: &str, boxes: &[BoxEntry], outcome: &MatchOutcome) -> SceneReport {
    SceneReport {
        scene_id: scene_id.to_string(),
        boxes: boxes.to_vec(),
        detections: outcome.detections.clone(),
        unmatched_ids: outcome.unmatched.iter().map(|b| b.id.clone()).collect(),
        discarded_low_confidence: outcome.discarded_low_confidence.clone(),
        suppressed_duplicates: outcome.suppressed_duplicates.clone(),
    }
}

/// Aggregate per-scene reports (sorted by scene id) into the report
/// file. Histograms and exceedance fractions cover the pairwise scores
/// of accepted detections.
pub fn aggregate(config: ConfigEcho, mut scenes: Vec<SceneReport>) -> ReportFile {
    scenes.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    let mut histograms = PairHistograms {
        bc: Histogram::diou(),
        bd: Histogram::diou(),
        cd: Histogram::diou(),
    };
    let mut scores = (Vec::new(), Vec::new(), Vec::new());
    let mut per_orientation: BTreeMap<String, usize> = BTreeMap::new();
    let mut totals = ReportTotals {
        n_scenes: scenes.len(),
        n_boxes: 0,
        n_detections: 0,
        n_unmatched: 0,
        per_orientation: BTreeMap::new(),
    };
    for s in &scenes {
        totals.n_boxes += s.boxes.len();
        totals.n_detections += s.detections.len();
        totals.n_unmatched += s.unmatched_ids.len();
        for d in &s.detections {
            histograms.bc.add(d.diou_bc);
            histograms.bd.add(d.diou_bd);
            histograms.cd.add(d.diou_cd);
            scores.0.push(d.diou_bc);
            scores.1.push(d.diou_bd);
            scores.2.push(d.diou_cd);
            *per_orientation
                .entry(orientation_name(d.orientation).to_string())
                .or_insert(0) += 1;
        }
    }
    totals.per_orientation = per_orientation;
    let exceedance = PairExceedance {
        threshold: EXCEEDANCE_THRESHOLD,
        bc: PairStat::from_scores(&scores.0, EXCEEDANCE_THRESHOLD),
        bd: PairStat::from_scores(&scores.1, EXCEEDANCE_THRESHOLD),
        cd: PairStat::from_scores(&scores.2, EXCEEDANCE_THRESHOLD),
    };
    ReportFile {
        format: REPORT_FORMAT.to_string(),
        config,
        totals,
        histograms,
        exceedance,
        scenes,
    }
}

/// Pairwise DIoU of one truth pipeline's member boxes, looked up by id
/// among the scene's (possibly perturbed) boxes.
pub fn truth_pair_scores(
    truth: &TruthEntry,
    boxes: &[ViewBox2D],
    frames: &ViewFrames,
) -> Option<(f64, f64, f64)> {
    let find = |id: &str| boxes.iter().find(|b| b.id == id);
    let b = find(&truth.member_b)?;
    let c = find(&truth.member_c)?;
    let d = find(&truth.member_d)?;
    let bp = scene_intervals(b, &frames.b).ok()?;
    let cp = scene_intervals(c, &frames.c).ok()?;
    let dp = scene_intervals(d, &frames.d).ok()?;
    let (lb, lc, ld) = lift_to_3d((&bp, &b.id), (&cp, &c.id), (&dp, &d.id));
    Some((
        diou_3d(&lb.box3, &lc.box3),
        diou_3d(&lb.box3, &ld.box3),
        diou_3d(&lc.box3, &ld.box3),
    ))
}

/// Score a report against ground-truth files. A detection is correct
/// iff its member ids match a truth pipeline's members and its
/// orientation matches the truth family. True-pair DIoU statistics are
/// computed over the report's (possibly perturbed) boxes.
pub fn evaluate(report: &ReportFile, truth_files: &[DetectionsFile]) -> CliResult<MetricsFile> {
    let mut n_truth = 0usize;
    let mut n_detections = 0usize;
    let mut n_correct = 0usize;
    let mut per_class: BTreeMap<String, ClassCounts> = BTreeMap::new();
    for name in ["vertical", "horizontal_inclined", "deeply_inclined"] {
        per_class.insert(
            name.to_string(),
            ClassCounts {
                truth: 0,
                detected: 0,
                correct: 0,
            },
        );
    }
    let mut scores = (Vec::new(), Vec::new(), Vec::new());

    for truth_file in truth_files {
        let scene = report
            .scenes
            .iter()
            .find(|s| s.scene_id == truth_file.scene_id)
            .ok_or_else(|| {
                CliError::data(format!(
                    "scene id {} not present in the report",
                    truth_file.scene_id
                ))
            })?;
        let truths = truth_file.truth.as_deref().ok_or_else(|| {
            CliError::data(format!(
                "scene {}: truth annex missing from detections file",
                truth_file.scene_id
            ))
        })?;
        let boxes: Vec<ViewBox2D> = scene
            .boxes
            .iter()
            .map(|b| b.to_view_box())
            .collect::<CliResult<_>>()?;

        n_truth += truths.len();
        n_detections += scene.detections.len();
        for d in &scene.detections {
            per_class
                .get_mut(orientation_name(d.orientation))
                .expect("all classes present")
                .detected += 1;
        }
        for t in truths {
            let class = per_class
                .get_mut(orientation_name(t.family))
                .expect("all classes present");
            class.truth += 1;
            let matched = scene.detections.iter().find(|d| {
                d.member_b == t.member_b && d.member_c == t.member_c && d.member_d == t.member_d
            });
            if let Some(d) = matched {
                if d.orientation == t.family {
                    n_correct += 1;
                    class.correct += 1;
                }
            }
            if let Some((bc, bd, cd)) = truth_pair_scores(t, &boxes, &truth_file.frames) {
                scores.0.push(bc);
                scores.1.push(bd);
                scores.2.push(cd);
            }
        }
    }

    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(MetricsFile {
        format: METRICS_FORMAT.to_string(),
        n_scenes: truth_files.len(),
        n_truth,
        n_detections,
        n_correct,
        precision: ratio(n_correct, n_detections),
        recall: ratio(n_correct, n_truth),
        per_class,
        pair_stats: PairExceedance {
            threshold: EXCEEDANCE_THRESHOLD,
            bc: PairStat::from_scores(&scores.0, EXCEEDANCE_THRESHOLD),
            bd: PairStat::from_scores(&scores.1, EXCEEDANCE_THRESHOLD),
            cd: PairStat::from_scores(&scores.2, EXCEEDANCE_THRESHOLD),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pipefuse_core::scene_synth::{generate_scene, truth_detections, DEFAULT_EXTENTS};
    use pipefuse_core::view_fusion::{match_triples, MatchConfig, PairwiseMode};

    fn echo() -> ConfigEcho {
        ConfigEcho {
            confidence_threshold: 0.5,
            prediction_iou_threshold: 0.7,
            matching_diou_threshold: 0.4,
            pairwise_mode: PairwiseMode::AllThree,
            seed: 0,
        }
    }

    fn report_for(seeds: &[u64]) -> (ReportFile, Vec<DetectionsFile>) {
        let mut scenes = Vec::new();
        let mut truth_files = Vec::new();
        for &seed in seeds {
            let (_, gt) = generate_scene(seed, 3, DEFAULT_EXTENTS).unwrap();
            let file = DetectionsFile::from_ground_truth(&format!("s{seed:03}"), &gt);
            let (b, c, d) = truth_detections(&gt);
            let outcome = match_triples(&b, &c, &d, &MatchConfig::default()).unwrap();
            scenes.push(scene_report(&file.scene_id, &file.boxes, &outcome));
            truth_files.push(file);
        }
        (aggregate(echo(), scenes), truth_files)
    }

    #[test]
    fn perfect_detections_score_perfectly() {
        let (report, truth) = report_for(&[1, 2, 3]);
        assert_eq!(report.totals.n_detections, 9);
        let metrics = evaluate(&report, &truth).unwrap();
        assert_eq!(metrics.precision, 1.0);
        assert_eq!(metrics.recall, 1.0);
        assert_eq!(metrics.n_truth, 9);
        // all true pairs score 1.0, above any threshold below 1
        assert_eq!(metrics.pair_stats.bc.above_frac, 1.0);
        assert_eq!(metrics.pair_stats.bd.above_frac, 1.0);
        // partition sums to 1
        let p = &metrics.pair_stats.bc;
        assert!((p.above_frac + p.below_frac - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_flip_reduces_recall_by_one_over_n() {
        let (mut report, truth) = report_for(&[4]);
        let n = report.scenes[0].detections.len() as f64;
        let d = &mut report.scenes[0].detections[0];
        d.orientation = match d.orientation {
            Orientation::Vertical => Orientation::HorizontalInclined,
            _ => Orientation::Vertical,
        };
        let metrics = evaluate(&report, &truth).unwrap();
        assert!((metrics.recall - (n - 1.0) / n).abs() < 1e-12);
    }

    #[test]
    fn missing_scene_id_is_a_data_error() {
        let (report, _) = report_for(&[5]);
        let (_, gt) = generate_scene(6, 2, DEFAULT_EXTENTS).unwrap();
        let other = DetectionsFile::from_ground_truth("unknown", &gt);
        let err = evaluate(&report, &[other]).unwrap_err();
        assert!(err.to_string().contains("unknown"));
    }
}
