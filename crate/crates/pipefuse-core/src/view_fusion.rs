//! Fuses per-view 2D detections into 3D pipeline detections.
//!
//! The three orthogonal radar views each span two scene axes: B-scan
//! covers (x, z), C-scan covers (x, y) and D-scan covers (y, z). A
//! detection box in one view is normalized against its image frame,
//! scaled to scene meters, and lifted to a full 3D box by borrowing its
//! missing axis from another view. Candidate (B, C, D) triples are then
//! scored by pairwise 3D-DIoU and accepted greedily.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Box3D, Rect2};

/// How far (in pixels) a detection box may poke outside its frame before
/// normalization rejects it instead of clamping.
pub const CLAMP_TOLERANCE_PX: f64 = 2.0;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("box {id} lies outside its view frame by more than {CLAMP_TOLERANCE_PX} px")]
    OutOfFrame { id: String },
    #[error("B-scan boxes admit only variant 1, got variant {0}")]
    InvalidBVariant(u8),
    #[error("variant must be 1..=3, got {0}")]
    InvalidVariant(u8),
    #[error("conflicting variants in triple: {c} vs {d}")]
    VariantConflict { c: String, d: String },
    #[error("depth radicand negative: (t0/2)^2 < (x0/v)^2 for t0={t0_ns} ns, x0={x0_m} m")]
    DepthDomain { t0_ns: f64, x0_m: f64 },
    #[error("invalid view frame: {0}")]
    InvalidFrame(String),
}

/// The three orthogonal slicing directions of a 3D GPR volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViewKind {
    /// Vertical slice along the survey direction; spans (x, z).
    #[serde(rename = "B")]
    BScan,
    /// Horizontal (plan-view) slice; spans (x, y).
    #[serde(rename = "C")]
    CScan,
    /// Vertical slice transverse to the survey direction; spans (y, z).
    #[serde(rename = "D")]
    DScan,
}

/// Scene axes. `X` is the survey direction, `Y` the cross-track
/// direction, `Z` depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl ViewKind {
    /// Scene axes spanned by this view as (horizontal, vertical) image axes.
    pub fn axes(self) -> (Axis, Axis) {
        match self {
            ViewKind::BScan => (Axis::X, Axis::Z),
            ViewKind::CScan => (Axis::X, Axis::Y),
            ViewKind::DScan => (Axis::Y, Axis::Z),
        }
    }

    /// The scene axis this view does not observe.
    pub fn missing_axis(self) -> Axis {
        match self {
            ViewKind::BScan => Axis::Y,
            ViewKind::CScan => Axis::Z,
            ViewKind::DScan => Axis::X,
        }
    }

    pub fn letter(self) -> char {
        match self {
            ViewKind::BScan => 'B',
            ViewKind::CScan => 'C',
            ViewKind::DScan => 'D',
        }
    }
}

/// Per-view class label `n-B` / `n-C` / `n-D`. The variant encodes the
/// orientation family (1 vertical, 2 horizontally inclined, 3 deeply
/// inclined); B-scan is always variant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    pub view: ViewKind,
    pub variant: u8,
}

impl ClassLabel {
    pub fn new(view: ViewKind, variant: u8) -> Result<Self, FusionError> {
        if !(1..=3).contains(&variant) {
            return Err(FusionError::InvalidVariant(variant));
        }
        if view == ViewKind::BScan && variant != 1 {
            return Err(FusionError::InvalidBVariant(variant));
        }
        Ok(Self { view, variant })
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.variant, self.view.letter())
    }
}

/// Physical extents of the scene frame in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneExtents {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

impl SceneExtents {
    pub fn axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x_m,
            Axis::Y => self.y_m,
            Axis::Z => self.z_m,
        }
    }
}

/// Survey-image defaults: 30 m span, 1.32 m cross-track, 3 m depth.
impl Default for SceneExtents {
    fn default() -> Self {
        Self {
            x_m: 30.0,
            y_m: 1.32,
            z_m: 3.0,
        }
    }
}

/// Pixel geometry of one view image plus the physical extents it maps to.
///
/// `origin_px` is the upper-left vertex of the view in the source image;
/// detections are normalized against it before scaling to scene meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewFrame {
    pub origin_x_px: f64,
    pub origin_y_px: f64,
    pub width_px: f64,
    pub height_px: f64,
    pub extents: SceneExtents,
}

impl ViewFrame {
    pub fn new(
        origin_x_px: f64,
        origin_y_px: f64,
        width_px: f64,
        height_px: f64,
        extents: SceneExtents,
    ) -> Result<Self, FusionError> {
        if !(width_px > 0.0 && height_px > 0.0) {
            return Err(FusionError::InvalidFrame(format!(
                "pixel dimensions must be positive, got {width_px} x {height_px}"
            )));
        }
        if !(extents.x_m > 0.0 && extents.y_m > 0.0 && extents.z_m > 0.0) {
            return Err(FusionError::InvalidFrame(
                "physical extents must be positive".into(),
            ));
        }
        Ok(Self {
            origin_x_px,
            origin_y_px,
            width_px,
            height_px,
            extents,
        })
    }

    /// Frame at pixel origin (0, 0) with the given image size and extents.
    pub fn with_extents(width_px: f64, height_px: f64, extents: SceneExtents) -> Self {
        Self::new(0.0, 0.0, width_px, height_px, extents).expect("positive dims")
    }
}

impl Default for ViewFrame {
    fn default() -> Self {
        Self::with_extents(1620.0, 760.0, SceneExtents::default())
    }
}

/// A labeled, confidence-scored detection box in one view's source image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewBox2D {
    pub id: String,
    pub label: ClassLabel,
    pub rect_px: Rect2,
    pub confidence: f64,
}

/// A view box scaled to scene meters: the two intervals this view spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarBox {
    pub view: ViewKind,
    /// Interval along the view's horizontal image axis, meters.
    pub h_m: (f64, f64),
    /// Interval along the view's vertical image axis, meters.
    pub v_m: (f64, f64),
}

impl PlanarBox {
    /// Interval along a scene axis, if the view observes it.
    pub fn interval(&self, axis: Axis) -> Option<(f64, f64)> {
        let (h, v) = self.view.axes();
        if axis == h {
            Some(self.h_m)
        } else if axis == v {
            Some(self.v_m)
        } else {
            None
        }
    }
}

/// Map one edge coordinate into [0, 1] against an origin and size,
/// clamping within tolerance.
fn normalize_edge(value_px: f64, origin_px: f64, size_px: f64, id: &str) -> Result<f64, FusionError> {
    if value_px < origin_px - CLAMP_TOLERANCE_PX
        || value_px > origin_px + size_px + CLAMP_TOLERANCE_PX
    {
        return Err(FusionError::OutOfFrame { id: id.to_string() });
    }
    Ok(((value_px - origin_px) / size_px).clamp(0.0, 1.0))
}

/// Normalize a detection box against its view frame: each edge maps to
/// `(edge - origin) / size` on its image axis. Edges within
/// [`CLAMP_TOLERANCE_PX`] of the frame are clamped; beyond that the box
/// is rejected.
pub fn normalize_box(b: &ViewBox2D, frame: &ViewFrame) -> Result<Rect2, FusionError> {
    let r = &b.rect_px;
    Ok(Rect2::new(
        normalize_edge(r.min_x, frame.origin_x_px, frame.width_px, &b.id)?,
        normalize_edge(r.min_y, frame.origin_y_px, frame.height_px, &b.id)?,
        normalize_edge(r.max_x, frame.origin_x_px, frame.width_px, &b.id)?,
        normalize_edge(r.max_y, frame.origin_y_px, frame.height_px, &b.id)?,
    ))
}

/// Scale a normalized rect to scene meters along the two axes the view
/// spans.
pub fn to_scene_meters(rect: &Rect2, view: ViewKind, frame: &ViewFrame) -> PlanarBox {
    let (h_axis, v_axis) = view.axes();
    let h_extent = frame.extents.axis(h_axis);
    let v_extent = frame.extents.axis(v_axis);
    PlanarBox {
        view,
        h_m: (rect.min_x * h_extent, rect.max_x * h_extent),
        v_m: (rect.min_y * v_extent, rect.max_y * v_extent),
    }
}

/// Convenience: normalize then scale to scene meters.
pub fn scene_intervals(
    b: &ViewBox2D,
    frame: &ViewFrame,
) -> Result<PlanarBox, FusionError> {
    Ok(to_scene_meters(&normalize_box(b, frame)?, b.label.view, frame))
}

/// Which completion produced a lifted box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftProvenance {
    /// B-scan box completed with the C box's y interval.
    FromB,
    /// C-scan box completed with the D box's z interval.
    FromC,
    /// D-scan box completed with the B box's x interval.
    FromD,
}

/// A view box lifted to 3D by borrowing its missing axis from a donor
/// view. The borrowed interval equals the donor's exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedBox {
    pub box3: Box3D,
    pub provenance: LiftProvenance,
    pub source_id: String,
    pub donor_id: String,
}

/// Lift a consistent (B, C, D) triple of scene-meter boxes to three 3D
/// boxes: B borrows y from C, C borrows z from D, D borrows x from B.
pub fn lift_to_3d(
    b: (&PlanarBox, &str),
    c: (&PlanarBox, &str),
    d: (&PlanarBox, &str),
) -> (LiftedBox, LiftedBox, LiftedBox) {
    debug_assert_eq!(b.0.view, ViewKind::BScan);
    debug_assert_eq!(c.0.view, ViewKind::CScan);
    debug_assert_eq!(d.0.view, ViewKind::DScan);
    let (bx, bz) = (b.0.h_m, b.0.v_m);
    let (cx, cy) = (c.0.h_m, c.0.v_m);
    let (dy, dz) = (d.0.h_m, d.0.v_m);

    let lifted_b = LiftedBox {
        box3: Box3D::from_intervals(bx, cy, bz),
        provenance: LiftProvenance::FromB,
        source_id: b.1.to_string(),
        donor_id: c.1.to_string(),
    };
    let lifted_c = LiftedBox {
        box3: Box3D::from_intervals(cx, cy, dz),
        provenance: LiftProvenance::FromC,
        source_id: c.1.to_string(),
        donor_id: d.1.to_string(),
    };
    let lifted_d = LiftedBox {
        box3: Box3D::from_intervals(bx, dy, dz),
        provenance: LiftProvenance::FromD,
        source_id: d.1.to_string(),
        donor_id: b.1.to_string(),
    };
    (lifted_b, lifted_c, lifted_d)
}

/// Pipeline orientation family, decided purely by the matched labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Vertical,
    HorizontalInclined,
    DeeplyInclined,
}

/// Map a matched (1-B, n-C, n-D) label triple to its orientation:
/// n = 1 vertical, n = 2 horizontally inclined, n = 3 deeply inclined.
/// A variant mismatch between the C and D labels is a conflict.
pub fn classify(
    b: ClassLabel,
    c: ClassLabel,
    d: ClassLabel,
) -> Result<Orientation, FusionError> {
    debug_assert_eq!(b.view, ViewKind::BScan);
    debug_assert_eq!(c.view, ViewKind::CScan);
    debug_assert_eq!(d.view, ViewKind::DScan);
    if c.variant != d.variant {
        return Err(FusionError::VariantConflict {
            c: c.to_string(),
            d: d.to_string(),
        });
    }
    Ok(match c.variant {
        1 => Orientation::Vertical,
        2 => Orientation::HorizontalInclined,
        _ => Orientation::DeeplyInclined,
    })
}

/// A hyperbola apex read from a B-scan: horizontal position, two-way
/// travel time and wave velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApexObservation {
    pub x0_m: f64,
    pub t0_ns: f64,
    pub v_m_per_ns: f64,
}

/// Burial depth from the apex two-way travel time: `d = v * t0 / 2`.
/// This inverts the point-target forward model `t = 2 d / v` and is the
/// default estimator.
pub fn depth_from_apex(obs: &ApexObservation) -> f64 {
    0.5 * obs.v_m_per_ns * obs.t0_ns
}

/// Alternative depth estimator retaining a lateral-offset term:
/// `d = (v/2) * sqrt((t0/2)^2 - (x0/v)^2)`.
///
/// At zero offset this evaluates to `v * t0 / 4`, half of
/// [`depth_from_apex`]; both estimators are exposed and the factor-two
/// gap is asserted in tests rather than silently reconciled.
pub fn depth_offset_corrected(obs: &ApexObservation) -> Result<f64, FusionError> {
    let half_t = 0.5 * obs.t0_ns;
    let offset = obs.x0_m / obs.v_m_per_ns;
    let radicand = half_t * half_t - offset * offset;
    if radicand < 0.0 {
        return Err(FusionError::DepthDomain {
            t0_ns: obs.t0_ns,
            x0_m: obs.x0_m,
        });
    }
    Ok(0.5 * obs.v_m_per_ns * radicand.sqrt())
}

/// Which pairwise scores gate a candidate triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseMode {
    /// Gate on min(B-C, B-D, C-D).
    AllThree,
    /// Gate on min(B-C, B-D) only.
    BcBdOnly,
}

/// Thresholds for the matching pipeline. Defaults: confidence 0.5,
/// prediction IoU 0.7, matching 3D-DIoU 0.4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub confidence_threshold: f64,
    pub prediction_iou_threshold: f64,
    pub matching_diou_threshold: f64,
    pub pairwise_mode: PairwiseMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.5,
            prediction_iou_threshold: 0.7,
            matching_diou_threshold: 0.4,
            pairwise_mode: PairwiseMode::AllThree,
        }
    }
}

/// One view's detections together with its frame.
#[derive(Debug, Clone)]
pub struct ViewDetections {
    pub frame: ViewFrame,
    pub boxes: Vec<ViewBox2D>,
}

/// A matched (B, C, D) triple with its orientation, pairwise scores,
/// fused 3D box and depth estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDetection {
    pub orientation: Orientation,
    pub member_b: String,
    pub member_c: String,
    pub member_d: String,
    pub diou_bc: f64,
    pub diou_bd: f64,
    pub diou_cd: f64,
    pub fused: Box3D,
    pub depth_m: f64,
}

impl PipelineDetection {
    /// The score the triple was gated on.
    pub fn min_pairwise(&self, mode: PairwiseMode) -> f64 {
        match mode {
            PairwiseMode::AllThree => self.diou_bc.min(self.diou_bd).min(self.diou_cd),
            PairwiseMode::BcBdOnly => self.diou_bc.min(self.diou_bd),
        }
    }
}

/// Result of matching one scene.
#[derive(Debug, Clone, Default)]
pub struct MatchOutcome {
    pub detections: Vec<PipelineDetection>,
    /// Boxes that passed ingestion but joined no accepted triple.
    pub unmatched: Vec<ViewBox2D>,
    /// Ids dropped by the confidence threshold.
    pub discarded_low_confidence: Vec<String>,
    /// Ids suppressed as within-view duplicates.
    pub suppressed_duplicates: Vec<String>,
}

/// Greedy within-view duplicate suppression: boxes whose mutual 2D IoU
/// exceeds the prediction-IoU threshold are duplicates; the higher
/// confidence one wins (ties to the lexicographically smaller id).
fn suppress_duplicates(boxes: &[ViewBox2D], iou_threshold: f64) -> (Vec<usize>, Vec<String>) {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .confidence
            .total_cmp(&boxes[a].confidence)
            .then_with(|| boxes[a].id.cmp(&boxes[b].id))
    });
    let mut kept: Vec<usize> = Vec::new();
    let mut suppressed = Vec::new();
    for &i in &order {
        let duplicate = kept
            .iter()
            .any(|&k| geometry::iou_2d(&boxes[i].rect_px, &boxes[k].rect_px) > iou_threshold);
        if duplicate {
            suppressed.push(boxes[i].id.clone());
        } else {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    suppressed.sort_unstable();
    (kept, suppressed)
}

/// Per-axis mean of the two views that observe each axis: x from B and
/// C, y from C and D, z from B and D.
fn fuse_triple(b: &Box3D, c: &Box3D, d: &Box3D) -> Box3D {
    let mean = |p: (f64, f64), q: (f64, f64)| (0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1));
    Box3D::from_intervals(
        mean(b.interval(0), c.interval(0)),
        mean(c.interval(1), d.interval(1)),
        mean(b.interval(2), d.interval(2)),
    )
}

struct Candidate {
    b: usize,
    c: usize,
    d: usize,
    detection: PipelineDetection,
    score_sum: f64,
}

/// Match per-view detections into 3D pipeline detections.
///
/// Stages: confidence filter, within-view duplicate suppression,
/// enumeration of (1-B, n-C, n-D) candidates with matching variant,
/// lifting, pairwise 3D-DIoU gating against the matching threshold, and
/// greedy conflict resolution by descending score sum (ties broken by
/// lexicographic member ids). Deterministic and permutation-stable.
pub fn match_triples(
    b_view: &ViewDetections,
    c_view: &ViewDetections,
    d_view: &ViewDetections,
    cfg: &MatchConfig,
) -> Result<MatchOutcome, FusionError> {
    let mut outcome = MatchOutcome::default();

    // Stage 1: confidence filter.
    let mut survivors: [Vec<ViewBox2D>; 3] = Default::default();
    for (slot, view) in [(0, b_view), (1, c_view), (2, d_view)] {
        for b in &view.boxes {
            if b.confidence >= cfg.confidence_threshold {
                survivors[slot].push(b.clone());
            } else {
                outcome.discarded_low_confidence.push(b.id.clone());
            }
        }
    }
    outcome.discarded_low_confidence.sort_unstable();

    // Stage 2: within-view duplicate suppression.
    let mut kept: Vec<Vec<ViewBox2D>> = Vec::with_capacity(3);
    for boxes in &survivors {
        let (keep_idx, suppressed) = suppress_duplicates(boxes, cfg.prediction_iou_threshold);
        outcome.suppressed_duplicates.extend(suppressed);
        kept.push(keep_idx.into_iter().map(|i| boxes[i].clone()).collect());
    }
    outcome.suppressed_duplicates.sort_unstable();
    let (b_boxes, c_boxes, d_boxes) = (&kept[0], &kept[1], &kept[2]);

    // Stage 3-6: enumerate, lift, score, gate.
    let mut candidates: Vec<Candidate> = Vec::new();
    for (bi, b) in b_boxes.iter().enumerate() {
        let b_planar = scene_intervals(b, &b_view.frame)?;
        for (ci, c) in c_boxes.iter().enumerate() {
            let c_planar = scene_intervals(c, &c_view.frame)?;
            for (di, d) in d_boxes.iter().enumerate() {
                if c.label.variant != d.label.variant {
                    continue;
                }
                let d_planar = scene_intervals(d, &d_view.frame)?;
                let (lb, lc, ld) = lift_to_3d(
                    (&b_planar, &b.id),
                    (&c_planar, &c.id),
                    (&d_planar, &d.id),
                );
                let diou_bc = geometry::diou_3d(&lb.box3, &lc.box3);
                let diou_bd = geometry::diou_3d(&lb.box3, &ld.box3);
                let diou_cd = geometry::diou_3d(&lc.box3, &ld.box3);
                let (gate, score_sum) = match cfg.pairwise_mode {
                    PairwiseMode::AllThree => (
                        diou_bc.min(diou_bd).min(diou_cd),
                        diou_bc + diou_bd + diou_cd,
                    ),
                    PairwiseMode::BcBdOnly => (diou_bc.min(diou_bd), diou_bc + diou_bd),
                };
                if gate < cfg.matching_diou_threshold {
                    continue;
                }
                let orientation = classify(b.label, c.label, d.label)?;
                let fused = fuse_triple(&lb.box3, &lc.box3, &ld.box3);
                let depth_m = 0.5 * (fused.min[2] + fused.max[2]);
                candidates.push(Candidate {
                    b: bi,
                    c: ci,
                    d: di,
                    detection: PipelineDetection {
                        orientation,
                        member_b: b.id.clone(),
                        member_c: c.id.clone(),
                        member_d: d.id.clone(),
                        diou_bc,
                        diou_bd,
                        diou_cd,
                        fused,
                        depth_m,
                    },
                    score_sum,
                });
            }
        }
    }

    // Stage 7: greedy acceptance by descending score sum.
    candidates.sort_by(|p, q| {
        q.score_sum
            .total_cmp(&p.score_sum)
            .then_with(|| p.detection.member_b.cmp(&q.detection.member_b))
            .then_with(|| p.detection.member_c.cmp(&q.detection.member_c))
            .then_with(|| p.detection.member_d.cmp(&q.detection.member_d))
    });
    let mut used_b = vec![false; b_boxes.len()];
    let mut used_c = vec![false; c_boxes.len()];
    let mut used_d = vec![false; d_boxes.len()];
    for cand in candidates {
        if used_b[cand.b] || used_c[cand.c] || used_d[cand.d] {
            continue;
        }
        used_b[cand.b] = true;
        used_c[cand.c] = true;
        used_d[cand.d] = true;
        outcome.detections.push(cand.detection);
    }

    let leftover = |boxes: &[ViewBox2D], used: &[bool]| {
        boxes
            .iter()
            .zip(used)
            .filter(|(_, &u)| !u)
            .map(|(b, _)| b.clone())
            .collect::<Vec<_>>()
    };
    outcome.unmatched.extend(leftover(b_boxes, &used_b));
    outcome.unmatched.extend(leftover(c_boxes, &used_c));
    outcome.unmatched.extend(leftover(d_boxes, &used_d));
    outcome.unmatched.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(outcome)
}
