//! Run configuration: a JSON file mirroring the matching thresholds,
//! view frame parameters and seed, with command-line flags taking
//! precedence over file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pipefuse_core::scene_synth::ViewFrames;
use pipefuse_core::view_fusion::{MatchConfig, PairwiseMode};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub confidence_threshold: f64,
    pub prediction_iou_threshold: f64,
    pub matching_diou_threshold: f64,
    pub pairwise_mode: PairwiseMode,
    /// View frames for ingestion paths that do not carry their own
    /// (YOLO-style annotation files).
    pub frames: Option<ViewFrames>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MatchConfig::default();
        Self {
            confidence_threshold: m.confidence_threshold,
            prediction_iou_threshold: m.prediction_iou_threshold,
            matching_diou_threshold: m.matching_diou_threshold,
            pairwise_mode: m.pairwise_mode,
            frames: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(CliError::usage(format!(
                "confidence threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.prediction_iou_threshold) {
            return Err(CliError::usage(format!(
                "prediction IoU threshold {} outside [0, 1]",
                self.prediction_iou_threshold
            )));
        }
        if !(-1.0..=1.01).contains(&self.matching_diou_threshold) {
            return Err(CliError::usage(format!(
                "matching DIoU threshold {} outside [-1, 1.01]",
                self.matching_diou_threshold
            )));
        }
        Ok(())
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            confidence_threshold: self.confidence_threshold,
            prediction_iou_threshold: self.prediction_iou_threshold,
            matching_diou_threshold: self.matching_diou_threshold,
            pairwise_mode: self.pairwise_mode,
        }
    }
}
