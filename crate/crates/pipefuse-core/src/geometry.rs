//! Axis-aligned 2D/3D box arithmetic: intersection, union, IoU, enclosing
//! box, center distance and DIoU.
//!
//! Boxes are closed intervals, so touching faces contribute zero overlap
//! volume. All arithmetic is in `f64`; degenerate (zero-extent) boxes are
//! permitted everywhere.

use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle, either in normalized view coordinates or in
/// scene meters depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2 {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect2 {
    /// Build a rect from its edges. Debug-asserts `min <= max` per axis;
    /// zero-area rects are valid.
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        debug_assert!(min_x <= max_x && min_y <= max_y, "inverted rect");
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// Build from two opposite corners in any order.
    pub fn from_corners(a: (f64, f64), b: (f64, f64)) -> Self {
        Self {
            min_x: a.0.min(b.0),
            min_y: a.1.min(b.1),
            max_x: a.0.max(b.0),
            max_y: a.1.max(b.1),
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    /// Overlap area with another rect (0 for disjoint or touching edges).
    pub fn intersection_area(&self, other: &Rect2) -> f64 {
        let ix = (self.max_x.min(other.max_x) - self.min_x.max(other.min_x)).max(0.0);
        let iy = (self.max_y.min(other.max_y) - self.min_y.max(other.min_y)).max(0.0);
        ix * iy
    }
}

/// Intersection-over-union of two rects. Zero union area maps to 0.0.
pub fn iou_2d(a: &Rect2, b: &Rect2) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Axis-aligned cuboid in scene meters, stored as min/max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Box3D {
    /// Debug-asserts `min <= max` per axis; zero-volume boxes are valid.
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        debug_assert!(
            (0..3).all(|i| min[i] <= max[i]),
            "inverted box: {min:?} {max:?}"
        );
        Self { min, max }
    }

    /// Build from per-axis intervals `(lo, hi)`.
    pub fn from_intervals(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Self {
        Self::new([x.0, y.0, z.0], [x.1, y.1, z.1])
    }

    pub fn interval(&self, axis: usize) -> (f64, f64) {
        (self.min[axis], self.max[axis])
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.extent(i)).product()
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn contains_box(&self, other: &Box3D) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && self.max[i] >= other.max[i])
    }

    /// Squared length of the main diagonal.
    pub fn diagonal_sq(&self) -> f64 {
        (0..3).map(|i| self.extent(i).powi(2)).sum()
    }
}

/// Overlap volume of two boxes (0 for disjoint or touching faces).
pub fn intersection_volume(a: &Box3D, b: &Box3D) -> f64 {
    (0..3)
        .map(|i| (a.max[i].min(b.max[i]) - a.min[i].max(b.min[i])).max(0.0))
        .product()
}

/// 3D intersection-over-union: overlap volume over union volume.
/// Returns 0.0 when both boxes have zero volume.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Smallest cuboid covering both boxes.
pub fn enclosing_box(a: &Box3D, b: &Box3D) -> Box3D {
    Box3D {
        min: [
            a.min[0].min(b.min[0]),
            a.min[1].min(b.min[1]),
            a.min[2].min(b.min[2]),
        ],
        max: [
            a.max[0].max(b.max[0]),
            a.max[1].max(b.max[1]),
            a.max[2].max(b.max[2]),
        ],
    }
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &Box3D, b: &Box3D) -> f64 {
    let ca = a.center();
    let cb = b.center();
    (0..3)
        .map(|i| (ca[i] - cb[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// 3D distance-IoU: `iou_3d(a, b) - d^2 / c^2`, where `d` is the center
/// distance and `c` the diagonal of the smallest cuboid covering both
/// boxes. Discriminates disjoint boxes by proximity; range `(-1, 1]`.
///
/// When the enclosing diagonal is zero both boxes are the same point and
/// the score is 1.0, continuing the identity case.
pub fn diou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let c_sq = enclosing_box(a, b).diagonal_sq();
    if c_sq == 0.0 {
        return 1.0;
    }
    let ca = a.center();
    let cb = b.center();
    let d_sq: f64 = (0..3).map(|i| (ca[i] - cb[i]).powi(2)).sum();
    iou_3d(a, b) - d_sq / c_sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn unit_cube() -> Box3D {
        Box3D::new([0.0; 3], [1.0; 3])
    }

    fn shifted_cube(dx: f64, dy: f64, dz: f64) -> Box3D {
        Box3D::new([dx, dy, dz], [1.0 + dx, 1.0 + dy, 1.0 + dz])
    }

    #[test]
    fn iou_2d_identity_disjoint_overlap() {
        let a = Rect2::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(iou_2d(&a, &a), 1.0);
        let far = Rect2::new(2.0, 2.0, 3.0, 3.0);
        assert_eq!(iou_2d(&a, &far), 0.0);
        // intersection 0.5, union 1.5
        let half = Rect2::new(0.5, 0.0, 1.5, 1.0);
        assert!((iou_2d(&a, &half) - 1.0 / 3.0).abs() < TOL);
    }

    #[test]
    fn iou_2d_degenerate_union_is_zero() {
        let p = Rect2::new(0.3, 0.3, 0.3, 0.3);
        assert_eq!(iou_2d(&p, &p), 0.0);
    }

    #[test]
    fn iou_3d_identity_disjoint_overlap() {
        let a = unit_cube();
        assert_eq!(iou_3d(&a, &a), 1.0);
        let far = shifted_cube(2.0, 2.0, 2.0);
        assert_eq!(iou_3d(&a, &far), 0.0);
        let half = Box3D::new([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        assert!((iou_3d(&a, &half) - 1.0 / 3.0).abs() < TOL);
    }

    #[test]
    fn touching_faces_have_zero_overlap() {
        let a = unit_cube();
        let touching = shifted_cube(1.0, 0.0, 0.0);
        assert_eq!(intersection_volume(&a, &touching), 0.0);
        assert_eq!(iou_3d(&a, &touching), 0.0);
    }

    #[test]
    fn diou_hand_derived_cases() {
        let a = unit_cube();
        assert!((diou_3d(&a, &a) - 1.0).abs() < TOL);

        // disjoint cubes: d^2 = 12, enclosing [0,3]^3 so c^2 = 27
        let far = shifted_cube(2.0, 2.0, 2.0);
        assert!((diou_3d(&a, &far) - (-12.0 / 27.0)).abs() < TOL);

        // half overlap: IoU 1/3, d^2 = 0.25, c^2 = 2.25 + 1 + 1
        let half = Box3D::new([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        assert!((diou_3d(&a, &half) - (1.0 / 3.0 - 0.25 / 4.25)).abs() < TOL);
    }

    #[test]
    fn diou_coincident_points_convention() {
        let p = Box3D::new([0.7, 0.2, 1.1], [0.7, 0.2, 1.1]);
        assert_eq!(diou_3d(&p, &p), 1.0);
    }

    #[test]
    fn enclosing_box_cases() {
        let a = unit_cube();
        assert_eq!(enclosing_box(&a, &a), a);
        let far = shifted_cube(2.0, 2.0, 2.0);
        assert_eq!(enclosing_box(&a, &far), Box3D::new([0.0; 3], [3.0; 3]));
        let half = Box3D::new([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        assert_eq!(
            enclosing_box(&a, &half),
            Box3D::new([0.0; 3], [1.5, 1.0, 1.0])
        );
    }

    #[test]
    fn center_distance_cases() {
        let a = unit_cube();
        assert_eq!(center_distance(&a, &a), 0.0);
        let far = shifted_cube(2.0, 2.0, 2.0);
        assert!((center_distance(&a, &far) - 12.0_f64.sqrt()).abs() < TOL);
        let shifted = shifted_cube(0.5, 0.0, 0.0);
        assert!((center_distance(&a, &shifted) - 0.5).abs() < TOL);
    }

    #[test]
    fn diou_decreases_along_translation_ray() {
        // For fixed shapes, moving b away from a strictly decreases DIoU
        // even in the zero-IoU regime.
        let a = unit_cube();
        let mut prev = f64::INFINITY;
        for step in 1..30 {
            let t = 1.0 + 0.5 * step as f64;
            let b = shifted_cube(t, 0.5 * t, 0.25 * t);
            let score = diou_3d(&a, &b);
            assert_eq!(iou_3d(&a, &b), 0.0);
            assert!(score < prev, "DIoU not strictly decreasing at t = {t}");
            prev = score;
        }
    }

    /// Voxel-counting IoU for integer-cornered boxes: exact reference.
    fn voxel_iou(a: &Box3D, b: &Box3D, n: usize) -> f64 {
        let inside = |bx: &Box3D, x: usize, y: usize, z: usize| {
            let (cx, cy, cz) = (x as f64, y as f64, z as f64);
            cx >= bx.min[0]
                && cx + 1.0 <= bx.max[0]
                && cy >= bx.min[1]
                && cy + 1.0 <= bx.max[1]
                && cz >= bx.min[2]
                && cz + 1.0 <= bx.max[2]
        };
        let mut inter = 0u64;
        let mut union = 0u64;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let ia = inside(a, x, y, z);
                    let ib = inside(b, x, y, z);
                    if ia && ib {
                        inter += 1;
                    }
                    if ia || ib {
                        union += 1;
                    }
                }
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    fn int_box(grid: usize) -> impl Strategy<Value = Box3D> {
        let corner = 0..=(grid as i32);
        let triple = move || (corner.clone(), corner.clone(), corner.clone());
        (triple(), triple()).prop_map(|((x0, y0, z0), (x1, y1, z1))| {
            Box3D::new(
                [x0.min(x1) as f64, y0.min(y1) as f64, z0.min(z1) as f64],
                [x0.max(x1) as f64, y0.max(y1) as f64, z0.max(z1) as f64],
            )
        })
    }

    proptest! {
        #[test]
        fn voxel_oracle_equivalence(a in int_box(10), b in int_box(10)) {
            // Integer-cornered boxes: analytic IoU equals voxel counting
            // exactly (both are ratios of integers representable in f64).
            let analytic = iou_3d(&a, &b);
            let counted = voxel_iou(&a, &b, 10);
            prop_assert_eq!(analytic, counted);
        }
    }

    fn finite_box() -> impl Strategy<Value = Box3D> {
        let corner = -10.0..10.0f64;
        let ext = 0.01..5.0f64;
        (
            [corner.clone(), corner.clone(), corner],
            [ext.clone(), ext.clone(), ext],
        )
            .prop_map(|(lo, e)| Box3D::new(lo, [lo[0] + e[0], lo[1] + e[1], lo[2] + e[2]]))
    }

    proptest! {
        #[test]
        fn symmetry_and_bounds(a in finite_box(), b in finite_box()) {
            prop_assert_eq!(iou_3d(&a, &b), iou_3d(&b, &a));
            prop_assert_eq!(diou_3d(&a, &b), diou_3d(&b, &a));

            let iou = iou_3d(&a, &b);
            prop_assert!((0.0..=1.0).contains(&iou));
            // penalty term is nonnegative, so DIoU never exceeds IoU
            prop_assert!(diou_3d(&a, &b) <= iou);
            prop_assert!(diou_3d(&a, &b) > -1.0);
            prop_assert!((diou_3d(&a, &a) - 1.0).abs() < TOL);
        }

        #[test]
        fn enclosing_contains_and_dominates_union(a in finite_box(), b in finite_box()) {
            let enc = enclosing_box(&a, &b);
            prop_assert!(enc.contains_box(&a));
            prop_assert!(enc.contains_box(&b));
            let union = a.volume() + b.volume() - intersection_volume(&a, &b);
            prop_assert!(enc.volume() >= union - 1e-12);
        }
    }
}
