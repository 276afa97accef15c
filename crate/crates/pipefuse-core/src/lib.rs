//! Multi-view GPR pipeline detection support library.
//!
//! Fuses 2D detections from the three orthogonal views of 3D
//! ground-penetrating-radar data into 3D pipeline detections via 3D-DIoU
//! spatial matching, with the supporting radargram preprocessing chain,
//! deterministic neural forward kernels and a synthetic-scene oracle.

pub mod geometry;
pub mod neural_kernels;
pub mod scene_synth;
pub mod signal_prep;
pub mod view_fusion;

pub use geometry::{diou_3d, iou_2d, iou_3d, Box3D, Rect2};
pub use view_fusion::{
    match_triples, ClassLabel, MatchConfig, Orientation, PipelineDetection, ViewBox2D, ViewFrame,
    ViewKind,
};
