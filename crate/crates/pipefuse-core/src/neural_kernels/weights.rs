//! Loader for kernel weights supplied as a JSON document of named
//! arrays: `{"name": {"shape": [..], "data": [..]}}` with row-major
//! element order and 64-bit decimal literals. Shapes are validated
//! before any evaluation.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3};
use serde::Deserialize;
use thiserror::Error;

use super::{DepthwiseKernel, LinearWeights};

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("weights document is not valid JSON: {0}")]
    Json(String),
    #[error("array {name}: declared shape {shape:?} holds {expected} elements but data has {actual}")]
    LengthMismatch {
        name: String,
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("array {name}: contains a non-finite value")]
    NonFinite { name: String },
    #[error("missing array {0}")]
    Missing(String),
    #[error("array {name}: expected rank {expected}, got shape {shape:?}")]
    WrongRank {
        name: String,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("array {name}: expected shape {expected:?}, got {shape:?}")]
    WrongShape {
        name: String,
        expected: Vec<usize>,
        shape: Vec<usize>,
    },
}

#[derive(Debug, Deserialize)]
struct RawArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// A validated set of named weight arrays.
#[derive(Debug, Clone, Default)]
pub struct WeightStore {
    arrays: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl WeightStore {
    /// Parse and validate a weights document.
    pub fn from_json_str(text: &str) -> Result<Self, WeightsError> {
        let raw: BTreeMap<String, RawArray> =
            serde_json::from_str(text).map_err(|e| WeightsError::Json(e.to_string()))?;
        let mut arrays = BTreeMap::new();
        for (name, arr) in raw {
            let expected: usize = arr.shape.iter().product();
            if expected != arr.data.len() {
                return Err(WeightsError::LengthMismatch {
                    name,
                    shape: arr.shape,
                    expected,
                    actual: arr.data.len(),
                });
            }
            if arr.data.iter().any(|v| !v.is_finite()) {
                return Err(WeightsError::NonFinite { name });
            }
            arrays.insert(name, (arr.shape, arr.data));
        }
        Ok(Self { arrays })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    fn get(&self, name: &str) -> Result<&(Vec<usize>, Vec<f64>), WeightsError> {
        self.arrays
            .get(name)
            .ok_or_else(|| WeightsError::Missing(name.to_string()))
    }

    pub fn array1(&self, name: &str) -> Result<Array1<f64>, WeightsError> {
        let (shape, data) = self.get(name)?;
        if shape.len() != 1 {
            return Err(WeightsError::WrongRank {
                name: name.to_string(),
                expected: 1,
                shape: shape.clone(),
            });
        }
        Ok(Array1::from_vec(data.clone()))
    }

    pub fn array2(&self, name: &str) -> Result<Array2<f64>, WeightsError> {
        let (shape, data) = self.get(name)?;
        if shape.len() != 2 {
            return Err(WeightsError::WrongRank {
                name: name.to_string(),
                expected: 2,
                shape: shape.clone(),
            });
        }
        Ok(Array2::from_shape_vec((shape[0], shape[1]), data.clone()).expect("validated length"))
    }

    pub fn array3(&self, name: &str) -> Result<Array3<f64>, WeightsError> {
        let (shape, data) = self.get(name)?;
        if shape.len() != 3 {
            return Err(WeightsError::WrongRank {
                name: name.to_string(),
                expected: 3,
                shape: shape.clone(),
            });
        }
        Ok(
            Array3::from_shape_vec((shape[0], shape[1], shape[2]), data.clone())
                .expect("validated length"),
        )
    }

    /// Load `<base>.weight` (in x out) and `<base>.bias` (out) as a
    /// linear layer.
    pub fn linear(&self, base: &str) -> Result<LinearWeights, WeightsError> {
        let weight = self.array2(&format!("{base}.weight"))?;
        let bias = self.array1(&format!("{base}.bias"))?;
        if bias.len() != weight.ncols() {
            return Err(WeightsError::WrongShape {
                name: format!("{base}.bias"),
                expected: vec![weight.ncols()],
                shape: vec![bias.len()],
            });
        }
        Ok(LinearWeights { weight, bias })
    }

    /// Load `<name>` as a per-channel 3x3 depthwise kernel stack.
    pub fn depthwise(&self, name: &str) -> Result<DepthwiseKernel, WeightsError> {
        let kernels = self.array3(name)?;
        let (_, kh, kw) = kernels.dim();
        if (kh, kw) != (3, 3) {
            return Err(WeightsError::WrongShape {
                name: name.to_string(),
                expected: vec![kernels.dim().0, 3, 3],
                shape: vec![kernels.dim().0, kh, kw],
            });
        }
        Ok(DepthwiseKernel { kernels })
    }
}
