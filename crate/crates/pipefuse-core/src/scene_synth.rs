//! Deterministic synthetic 3D pipeline scenes with ground truth: the
//! desk-scale oracle for the matching pipeline. Generates pipeline
//! geometries by orientation family, projects them to per-view ground
//! truth boxes, renders point-target hyperbola radargrams, and perturbs
//! boxes to emulate detector noise.
//!
//! Scene frame: x is the survey direction, y the cross-track direction
//! (pipes run roughly along y), z depth. All functions are pure in
//! (inputs, seed).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou_2d, Box3D, Rect2};
use crate::signal_prep::Radargram;
use crate::view_fusion::{
    ApexObservation, ClassLabel, Orientation, SceneExtents, ViewBox2D, ViewDetections, ViewFrame,
    ViewKind,
};

/// Default synthetic scene extents in meters (x, y, z).
pub const DEFAULT_EXTENTS: SceneExtents = SceneExtents {
    x_m: 6.0,
    y_m: 2.0,
    z_m: 3.0,
};

/// Default electromagnetic wave velocity in m/ns.
pub const DEFAULT_VELOCITY_M_PER_NS: f64 = 0.1;

/// Default pipe diameter in meters.
pub const DEFAULT_DIAMETER_M: f64 = 0.5;

/// Angular tolerance for orientation classification, degrees.
pub const ANGLE_TOLERANCE_DEG: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("pipeline endpoints coincide")]
    DegenerateEndpoints,
    #[error("unsupported compound inclination: axis deviates in both x ({x_deg:.2} deg) and z ({z_deg:.2} deg)")]
    CompoundInclination { x_deg: f64, z_deg: f64 },
    #[error("could not place pipe {pipe_index} of {requested} without overlap after {attempts} attempts")]
    Placement {
        pipe_index: usize,
        requested: usize,
        attempts: usize,
    },
}

/// One straight pipe: endpoints in scene meters, diameter, and the
/// orientation family its geometry realizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub p0: [f64; 3],
    pub p1: [f64; 3],
    pub diameter_m: f64,
    pub family: Orientation,
}

impl PipelineSpec {
    pub fn radius(&self) -> f64 {
        0.5 * self.diameter_m
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.p0[0] + self.p1[0]),
            0.5 * (self.p0[1] + self.p1[1]),
            0.5 * (self.p0[2] + self.p1[2]),
        ]
    }

    /// Tight axis-aligned bounding box of the flat-capped cylinder: per
    /// axis, the endpoint range extended by `r * sqrt(1 - u_i^2)` where
    /// `u` is the unit axis direction.
    pub fn bounding_box(&self) -> Box3D {
        let d = [
            self.p1[0] - self.p0[0],
            self.p1[1] - self.p0[1],
            self.p1[2] - self.p0[2],
        ];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let r = self.radius();
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for i in 0..3 {
            let u = if len > 0.0 { d[i] / len } else { 0.0 };
            let half = r * (1.0 - u * u).max(0.0).sqrt();
            min[i] = self.p0[i].min(self.p1[i]) - half;
            max[i] = self.p0[i].max(self.p1[i]) + half;
        }
        Box3D::new(min, max)
    }
}

/// A full synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub extents: SceneExtents,
    pub velocity_m_per_ns: f64,
    pub pipelines: Vec<PipelineSpec>,
    pub seed: u64,
}

/// The three view frames of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewFrames {
    pub b: ViewFrame,
    pub c: ViewFrame,
    pub d: ViewFrame,
}

impl ViewFrames {
    /// Frames at the default image size for the given extents.
    pub fn for_extents(extents: SceneExtents) -> Self {
        let frame = ViewFrame::with_extents(1620.0, 760.0, extents);
        Self {
            b: frame,
            c: frame,
            d: frame,
        }
    }

    pub fn get(&self, view: ViewKind) -> &ViewFrame {
        match view {
            ViewKind::BScan => &self.b,
            ViewKind::CScan => &self.c,
            ViewKind::DScan => &self.d,
        }
    }
}

/// Ground truth for one pipeline: the three view boxes, the 3D box, and
/// the hyperbola apex at the pipe's mid-station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePipeline {
    pub id: String,
    pub spec: PipelineSpec,
    pub box3: Box3D,
    pub apex: ApexObservation,
    pub box_b: ViewBox2D,
    pub box_c: ViewBox2D,
    pub box_d: ViewBox2D,
}

impl TruePipeline {
    pub fn boxes(&self) -> [&ViewBox2D; 3] {
        [&self.box_b, &self.box_c, &self.box_d]
    }
}

/// Per-scene ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: ViewFrames,
    pub pipelines: Vec<TruePipeline>,
}

fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

/// Classify a pipe axis into its orientation family. The pipe run is
/// the cross-track (y) direction; deviation of the axis toward x marks
/// a horizontally inclined pipe, deviation toward z (depth varying
/// along the run) a deeply inclined one. Deviations below
/// [`ANGLE_TOLERANCE_DEG`] count as none; deviation in both x and z is
/// unsupported.
pub fn classify_geometry(p0: [f64; 3], p1: [f64; 3]) -> Result<Orientation, SynthError> {
    let d = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
    if d.iter().all(|&v| v == 0.0) {
        return Err(SynthError::DegenerateEndpoints);
    }
    let run = d[1].abs();
    let x_deg = deg(d[0].abs().atan2(run));
    let z_deg = deg(d[2].abs().atan2(run));
    match (x_deg >= ANGLE_TOLERANCE_DEG, z_deg >= ANGLE_TOLERANCE_DEG) {
        (false, false) => Ok(Orientation::Vertical),
        (true, false) => Ok(Orientation::HorizontalInclined),
        (false, true) => Ok(Orientation::DeeplyInclined),
        (true, true) => Err(SynthError::CompoundInclination { x_deg, z_deg }),
    }
}

fn family_variant(family: Orientation) -> u8 {
    match family {
        Orientation::Vertical => 1,
        Orientation::HorizontalInclined => 2,
        Orientation::DeeplyInclined => 3,
    }
}

/// Meters-to-pixels conversion of a per-view face of the 3D box.
fn face_to_px(box3: &Box3D, view: ViewKind, frame: &ViewFrame) -> Rect2 {
    let (h_axis, v_axis) = view.axes();
    let (h0, h1) = box3.interval(h_axis.index());
    let (v0, v1) = box3.interval(v_axis.index());
    let hx = frame.extents.axis(h_axis);
    let vx = frame.extents.axis(v_axis);
    Rect2::new(
        frame.origin_x_px + h0 / hx * frame.width_px,
        frame.origin_y_px + v0 / vx * frame.height_px,
        frame.origin_x_px + h1 / hx * frame.width_px,
        frame.origin_y_px + v1 / vx * frame.height_px,
    )
}

/// Project every pipeline to its three ground-truth view boxes: the
/// faces of the cylinder's tight 3D bounding box, converted to pixel
/// coordinates of the scene's view frames and labeled by family. The
/// three boxes of one pipeline lift back to the same 3D box exactly.
pub fn project_views(scene: &SceneSpec) -> GroundTruth {
    let frames = ViewFrames::for_extents(scene.extents);
    let pipelines = scene
        .pipelines
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let id = format!("p{i:03}");
            let box3 = p.bounding_box();
            let variant = family_variant(p.family);
            let center = p.center();
            let apex = ApexObservation {
                x0_m: center[0],
                t0_ns: 2.0 * center[2] / scene.velocity_m_per_ns,
                v_m_per_ns: scene.velocity_m_per_ns,
            };
            let mk = |view: ViewKind, variant: u8| ViewBox2D {
                id: format!("{id}-{}", view.letter()),
                label: ClassLabel::new(view, variant).expect("valid variant"),
                rect_px: face_to_px(&box3, view, frames.get(view)),
                confidence: 1.0,
            };
            TruePipeline {
                id: id.clone(),
                spec: p.clone(),
                box3,
                apex,
                box_b: mk(ViewKind::BScan, 1),
                box_c: mk(ViewKind::CScan, variant),
                box_d: mk(ViewKind::DScan, variant),
            }
        })
        .collect();
    GroundTruth { frames, pipelines }
}

/// Ground-truth boxes bundled as per-view detection lists (confidence 1).
pub fn truth_detections(gt: &GroundTruth) -> (ViewDetections, ViewDetections, ViewDetections) {
    let collect = |view: ViewKind| ViewDetections {
        frame: *gt.frames.get(view),
        boxes: gt
            .pipelines
            .iter()
            .map(|p| match view {
                ViewKind::BScan => p.box_b.clone(),
                ViewKind::CScan => p.box_c.clone(),
                ViewKind::DScan => p.box_d.clone(),
            })
            .collect(),
    };
    (
        collect(ViewKind::BScan),
        collect(ViewKind::CScan),
        collect(ViewKind::DScan),
    )
}

/// Shortest distance between two 3D segments.
fn segment_distance(p0: [f64; 3], p1: [f64; 3], q0: [f64; 3], q1: [f64; 3]) -> f64 {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let d1 = sub(p1, p0);
    let d2 = sub(q1, q0);
    let r = sub(p0, q0);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        (s, t) = (0.0, 0.0);
    } else if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let s_raw = if denom != 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t_raw = (b * s_raw + f) / e;
            if t_raw < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t_raw > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t_raw;
                s = s_raw;
            }
        }
    }
    let cp = [p0[0] + s * d1[0], p0[1] + s * d1[1], p0[2] + s * d1[2]];
    let cq = [q0[0] + t * d2[0], q0[1] + t * d2[1], q0[2] + t * d2[2]];
    let diff = sub(cp, cq);
    dot(diff, diff).sqrt()
}

/// Same-view ground-truth boxes of distinct pipes may overlap at most
/// this much (2D IoU in meters), keeping matching unambiguous and
/// duplicate suppression inert on truth.
const VIEW_SEPARATION_IOU: f64 = 0.3;

/// Clearance added to the sum of radii for the center-line distance check.
const CENTERLINE_CLEARANCE_M: f64 = 0.05;

const PLACEMENT_ATTEMPTS: usize = 1500;

fn meter_faces(p: &PipelineSpec) -> [Rect2; 3] {
    let b3 = p.bounding_box();
    let face = |ha: usize, va: usize| {
        let (h0, h1) = b3.interval(ha);
        let (v0, v1) = b3.interval(va);
        Rect2::new(h0, v0, h1, v1)
    };
    [face(0, 2), face(0, 1), face(1, 2)]
}

fn compatible(p: &PipelineSpec, placed: &[PipelineSpec]) -> bool {
    let faces = meter_faces(p);
    for q in placed {
        let min_dist = p.radius() + q.radius() + CENTERLINE_CLEARANCE_M;
        if segment_distance(p.p0, p.p1, q.p0, q.p1) <= min_dist {
            return false;
        }
        let other = meter_faces(q);
        for (a, b) in faces.iter().zip(other.iter()) {
            if iou_2d(a, b) > VIEW_SEPARATION_IOU {
                return false;
            }
        }
    }
    true
}

/// Generate a random scene of `n_pipes` pipelines with families drawn
/// uniformly, endpoints respecting family constraints, and pairwise
/// separation both in 3D and in every view projection. Deterministic
/// per seed; fails if a pipe cannot be placed within a bounded number
/// of attempts.
pub fn generate_scene(
    seed: u64,
    n_pipes: usize,
    extents: SceneExtents,
) -> Result<(SceneSpec, GroundTruth), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 0.5 * DEFAULT_DIAMETER_M;
    let mut pipelines: Vec<PipelineSpec> = Vec::with_capacity(n_pipes);

    for pipe_index in 0..n_pipes {
        let mut placed = false;
        for _attempt in 0..PLACEMENT_ATTEMPTS {
            let family = match rng.gen_range(0..3u8) {
                0 => Orientation::Vertical,
                1 => Orientation::HorizontalInclined,
                _ => Orientation::DeeplyInclined,
            };
            let y0 = extents.y_m * rng.gen_range(0.02..0.08);
            let y1 = extents.y_m * rng.gen_range(0.92..0.98);
            let run = y1 - y0;
            let margin = r + 0.1;
            let z_lo = margin + 0.2;
            let z_hi = extents.z_m - margin;
            let x_lo = margin;
            let x_hi = extents.x_m - margin;
            let candidate = match family {
                Orientation::Vertical => {
                    let x = rng.gen_range(x_lo..x_hi);
                    let z = rng.gen_range(z_lo..z_hi);
                    PipelineSpec {
                        p0: [x, y0, z],
                        p1: [x, y1, z],
                        diameter_m: DEFAULT_DIAMETER_M,
                        family,
                    }
                }
                Orientation::HorizontalInclined => {
                    let angle = rng.gen_range(8.0_f64..25.0).to_radians();
                    let dx = angle.tan() * run * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let (lo, hi) = (x_lo - dx.min(0.0), x_hi - dx.max(0.0));
                    if lo >= hi {
                        continue;
                    }
                    let x0 = rng.gen_range(lo..hi);
                    let z = rng.gen_range(z_lo..z_hi);
                    PipelineSpec {
                        p0: [x0, y0, z],
                        p1: [x0 + dx, y1, z],
                        diameter_m: DEFAULT_DIAMETER_M,
                        family,
                    }
                }
                Orientation::DeeplyInclined => {
                    let angle = rng.gen_range(6.0_f64..15.0).to_radians();
                    let dz = angle.tan() * run;
                    let x = rng.gen_range(x_lo..x_hi);
                    if z_hi - dz <= z_lo {
                        continue;
                    }
                    let z0 = rng.gen_range(z_lo..(z_hi - dz));
                    PipelineSpec {
                        p0: [x, y0, z0],
                        p1: [x, y1, z0 + dz],
                        diameter_m: DEFAULT_DIAMETER_M,
                        family,
                    }
                }
            };
            debug_assert_eq!(
                classify_geometry(candidate.p0, candidate.p1).ok(),
                Some(family)
            );
            // the radius extension of inclined pipes must stay inside the
            // scene so that ground-truth boxes never leave their frames
            let bb = candidate.bounding_box();
            let inside = (0..3).all(|i| {
                let ext = [extents.x_m, extents.y_m, extents.z_m][i];
                bb.min[i] >= 0.01 && bb.max[i] <= ext - 0.01
            });
            if !inside {
                continue;
            }
            if compatible(&candidate, &pipelines) {
                pipelines.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SynthError::Placement {
                pipe_index,
                requested: n_pipes,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }

    let scene = SceneSpec {
        extents,
        velocity_m_per_ns: DEFAULT_VELOCITY_M_PER_NS,
        pipelines,
        seed,
    };
    let gt = project_views(&scene);
    Ok((scene, gt))
}

/// Rasterization grid for B-scan rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderGrid {
    pub trace_spacing_m: f64,
    pub sample_interval_ns: f64,
    pub time_window_ns: f64,
    /// Center frequency of the stamped wavelet, GHz.
    pub wavelet_ghz: f64,
}

impl Default for RenderGrid {
    fn default() -> Self {
        Self {
            trace_spacing_m: 0.05,
            sample_interval_ns: 0.2,
            time_window_ns: 60.0,
            wavelet_ghz: 0.6,
        }
    }
}

/// Two-way travel time (ns) from a point target at depth `depth_m` to a
/// surface position offset `offset_m` from its apex.
pub fn travel_time_ns(depth_m: f64, offset_m: f64, v_m_per_ns: f64) -> f64 {
    2.0 * depth_m.hypot(offset_m) / v_m_per_ns
}

/// Half-width in x of the hyperbolic signature down to the given apex
/// amplitude ratio, under 1/t amplitude decay.
pub fn hyperbola_halfwidth_m(depth_m: f64, amplitude_floor_ratio: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&amplitude_floor_ratio) && amplitude_floor_ratio > 0.0);
    depth_m * (1.0 / (amplitude_floor_ratio * amplitude_floor_ratio) - 1.0).sqrt()
}

fn ricker(tau_ns: f64, f_ghz: f64) -> f64 {
    let arg = (std::f64::consts::PI * f_ghz * tau_ns).powi(2);
    (1.0 - 2.0 * arg) * (-arg).exp()
}

/// Render the B-scan at a cross-track station: every pipe whose run
/// covers the station contributes a point-target hyperbola
/// `t(x) = (2/v) sqrt(d^2 + (x - x_c)^2)` with 1/t amplitude decay,
/// stamped with a Ricker wavelet. Contributions are additive.
pub fn render_bscan(scene: &SceneSpec, y_station_m: f64, grid: &RenderGrid) -> Radargram {
    let n_traces = (scene.extents.x_m / grid.trace_spacing_m).floor() as usize + 1;
    let n_samples = (grid.time_window_ns / grid.sample_interval_ns).floor() as usize + 1;
    let mut data = Array2::zeros((n_traces, n_samples));
    let half_support_ns = 2.5 / grid.wavelet_ghz;

    for pipe in &scene.pipelines {
        let (y_lo, y_hi) = (pipe.p0[1].min(pipe.p1[1]), pipe.p0[1].max(pipe.p1[1]));
        if y_station_m < y_lo || y_station_m > y_hi {
            continue;
        }
        let dy = pipe.p1[1] - pipe.p0[1];
        let s = if dy.abs() > 0.0 {
            (y_station_m - pipe.p0[1]) / dy
        } else {
            0.5
        };
        let x_c = pipe.p0[0] + s * (pipe.p1[0] - pipe.p0[0]);
        let depth = pipe.p0[2] + s * (pipe.p1[2] - pipe.p0[2]);
        if depth <= 0.0 {
            continue;
        }
        for i in 0..n_traces {
            let x = i as f64 * grid.trace_spacing_m;
            let t_arr = travel_time_ns(depth, x - x_c, scene.velocity_m_per_ns);
            let amp = 1.0 / t_arr;
            let j_lo = ((t_arr - half_support_ns) / grid.sample_interval_ns).floor().max(0.0)
                as usize;
            let j_hi = (((t_arr + half_support_ns) / grid.sample_interval_ns).ceil() as usize)
                .min(n_samples.saturating_sub(1));
            for j in j_lo..=j_hi.min(n_samples - 1) {
                let t = j as f64 * grid.sample_interval_ns;
                data[(i, j)] += amp * ricker(t - t_arr, grid.wavelet_ghz);
            }
        }
    }
    Radargram::new(data, grid.trace_spacing_m, grid.sample_interval_ns)
}

/// Read the apex of a (single-target) radargram: the globally maximal
/// sample gives the apex trace position and two-way time.
pub fn read_apex(r: &Radargram, v_m_per_ns: f64) -> ApexObservation {
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for ((i, j), &v) in r.data.indexed_iter() {
        if v > best.2 {
            best = (i, j, v);
        }
    }
    ApexObservation {
        x0_m: best.0 as f64 * r.trace_spacing_m,
        t0_ns: best.1 as f64 * r.sample_interval_ns,
        v_m_per_ns,
    }
}

/// Uniform per-edge pixel jitter emulating detector noise: every box
/// edge moves by i.i.d. `N(0, sigma_px^2)`, clamped to the frame, with
/// confidence redrawn uniformly in [0.6, 1.0). Box ids and labels are
/// preserved. Deterministic per seed.
pub fn perturb_boxes(
    gt: &GroundTruth,
    sigma_px: f64,
    seed: u64,
) -> (ViewDetections, ViewDetections, ViewDetections) {
    perturb_boxes_detector(
        gt,
        &DetectorNoise {
            floor_px: sigma_px,
            cross_track_sigma_m: 0.0,
            scale: 1.0,
        },
        seed,
    )
}

/// Detector-noise emulation for the threshold robustness protocol.
///
/// All edges receive a pixel-level floor jitter. The D view's
/// horizontal (cross-track) edges additionally receive meter-level
/// jitter reflecting the coarse cross-track sampling of the transverse
/// view; this is the calibrated source of the B-D versus B-C score
/// asymmetry. `scale` multiplies both terms to form noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorNoise {
    pub floor_px: f64,
    pub cross_track_sigma_m: f64,
    pub scale: f64,
}

impl DetectorNoise {
    /// Baseline detector noise (calibrated).
    pub fn baseline() -> Self {
        Self {
            floor_px: 2.0,
            cross_track_sigma_m: 0.48,
            scale: 1.0,
        }
    }

    /// Medium added image noise.
    pub fn medium() -> Self {
        Self {
            scale: 1.25,
            ..Self::baseline()
        }
    }

    /// High added image noise.
    pub fn high() -> Self {
        Self {
            scale: 1.5,
            ..Self::baseline()
        }
    }
}

/// Apply [`DetectorNoise`] to every ground-truth box.
pub fn perturb_boxes_detector(
    gt: &GroundTruth,
    noise: &DetectorNoise,
    seed: u64,
) -> (ViewDetections, ViewDetections, ViewDetections) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = noise.floor_px * noise.scale;
    let floor = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");

    let mut jitter_box = |bx: &ViewBox2D, frame: &ViewFrame, extra_h_px: f64| {
        let rect = bx.rect_px;
        let extra = Normal::new(0.0, extra_h_px.max(0.0)).expect("finite sigma");
        let mut edge = |v: f64, horizontal: bool| {
            let mut out = v;
            if sigma > 0.0 {
                out += floor.sample(&mut rng);
            }
            if horizontal && extra_h_px > 0.0 {
                out += extra.sample(&mut rng);
            }
            if horizontal {
                out.clamp(frame.origin_x_px, frame.origin_x_px + frame.width_px)
            } else {
                out.clamp(frame.origin_y_px, frame.origin_y_px + frame.height_px)
            }
        };
        let rect = Rect2::from_corners(
            (edge(rect.min_x, true), edge(rect.min_y, false)),
            (edge(rect.max_x, true), edge(rect.max_y, false)),
        );
        let confidence = rng.gen_range(0.6..1.0);
        ViewBox2D {
            rect_px: rect,
            confidence,
            ..bx.clone()
        }
    };

    let mut b = Vec::new();
    let mut c = Vec::new();
    let mut d = Vec::new();
    // px per meter along the D view's horizontal (y) axis
    let d_frame = gt.frames.d;
    let d_px_per_m = d_frame.width_px / d_frame.extents.y_m;
    let cross_track_px = noise.cross_track_sigma_m * noise.scale * d_px_per_m;
    for p in &gt.pipelines {
        b.push(jitter_box(&p.box_b, &gt.frames.b, 0.0));
        c.push(jitter_box(&p.box_c, &gt.frames.c, 0.0));
        d.push(jitter_box(&p.box_d, &gt.frames.d, cross_track_px));
    }
    (
        ViewDetections {
            frame: gt.frames.b,
            boxes: b,
        },
        ViewDetections {
            frame: gt.frames.c,
            boxes: c,
        },
        ViewDetections {
            frame: gt.frames.d,
            boxes: d,
        },
    )
}

/// Pairwise DIoU scores (B-C, B-D, C-D) of each true pipeline's lifted
/// boxes, with the member boxes looked up by id in the given detection
/// sets. Pipelines with a missing member are skipped.
pub fn true_pair_scores(
    gt: &GroundTruth,
    b_view: &ViewDetections,
    c_view: &ViewDetections,
    d_view: &ViewDetections,
) -> Vec<(f64, f64, f64)> {
    use crate::geometry::diou_3d;
    use crate::view_fusion::{lift_to_3d, scene_intervals};

    fn find<'a>(view: &'a ViewDetections, id: &str) -> Option<&'a ViewBox2D> {
        view.boxes.iter().find(|b| b.id == id)
    }
    gt.pipelines
        .iter()
        .filter_map(|p| {
            let b = find(b_view, &p.box_b.id)?;
            let c = find(c_view, &p.box_c.id)?;
            let d = find(d_view, &p.box_d.id)?;
            let bp = scene_intervals(b, &b_view.frame).ok()?;
            let cp = scene_intervals(c, &c_view.frame).ok()?;
            let dp = scene_intervals(d, &d_view.frame).ok()?;
            let (lb, lc, ld) = lift_to_3d((&bp, &b.id), (&cp, &c.id), (&dp, &d.id));
            Some((
                diou_3d(&lb.box3, &lc.box3),
                diou_3d(&lb.box3, &ld.box3),
                diou_3d(&lc.box3, &ld.box3),
            ))
        })
        .collect()
}

/// Parameters of the synthetic preprocessing corpus: rendered
/// hyperbolas embedded in a trace-invariant background, exponentially
/// attenuated and overlaid with white Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub extents: SceneExtents,
    pub grid: RenderGrid,
    pub n_pipes: usize,
    /// Signal decay constant, 1/ns; the gain step cancels it.
    pub attenuation_per_ns: f64,
    /// Amplitude of the trace-invariant background profile.
    pub background_amplitude: f64,
    /// Standard deviation of the additive white noise.
    pub noise_sigma: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            extents: DEFAULT_EXTENTS,
            grid: RenderGrid {
                sample_interval_ns: 0.1,
                ..RenderGrid::default()
            },
            n_pipes: 3,
            attenuation_per_ns: 0.08,
            background_amplitude: 1.0,
            noise_sigma: 5e-4,
        }
    }
}

/// Build one corpus radargram: rendered scene at the mid cross-track
/// station, multiplied by `exp(-attenuation * t)`, plus a trace-invariant
/// direct-coupling background pulse, plus seeded white Gaussian noise.
pub fn synthetic_radargram(seed: u64, params: &CorpusParams) -> Result<Radargram, SynthError> {
    let (scene, _) = generate_scene(seed, params.n_pipes, params.extents)?;
    let station = 0.5 * params.extents.y_m;
    let mut gram = render_bscan(&scene, station, &params.grid);

    let dt = params.grid.sample_interval_ns;
    let n_samples = gram.n_samples();
    let attenuation: Vec<f64> = (0..n_samples)
        .map(|j| (-params.attenuation_per_ns * j as f64 * dt).exp())
        .collect();
    // direct-coupling pulse near t = 0, identical on every trace
    let background: Vec<f64> = (0..n_samples)
        .map(|j| {
            let t = j as f64 * dt;
            params.background_amplitude * ricker(t - 2.0, params.grid.wavelet_ghz)
        })
        .collect();
    for mut trace in gram.data.rows_mut() {
        for (j, v) in trace.iter_mut().enumerate() {
            *v = *v * attenuation[j] + background[j];
        }
    }
    Ok(crate::signal_prep::add_gaussian_noise(
        &gram,
        params.noise_sigma,
        seed ^ 0x9e37_79b9_7f4a_7c15,
    ))
}
