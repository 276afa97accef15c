//! Deterministic forward-pass kernels for the three architectural
//! operators used by the detection network: DySample dynamic upsampling,
//! the convolutional gated linear unit (CGLU), and outlook attention.
//!
//! Weights are supplied externally (see [`weights`]); there is no
//! training or initialization here. Tensors are dense `H x W x C` grids
//! of `f64` values.

use ndarray::{Array1, Array2, Array3, ArrayView3};
use thiserror::Error;

pub mod weights;

/// Dense `H x W x C` tensor.
pub type TensorHwc = Array3<f64>;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("window size must be odd, got {0}")]
    EvenWindow(usize),
    #[error("channel count {channels} not divisible by s^2 = {s_sq}")]
    NotShuffleable { channels: usize, s_sq: usize },
}

/// Per-pixel fully connected layer: a `(in_features x out_features)`
/// matrix plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearWeights {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self, KernelError> {
        if weight.ncols() != bias.len() {
            return Err(KernelError::Shape(format!(
                "bias length {} does not match weight columns {}",
                bias.len(),
                weight.ncols()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.ncols()
    }

    /// Apply at every pixel: `out[h,w,o] = sum_c x[h,w,c] W[c,o] + b[o]`.
    pub fn apply(&self, x: &TensorHwc) -> Result<TensorHwc, KernelError> {
        let (h, w, c) = x.dim();
        if c != self.in_features() {
            return Err(KernelError::Shape(format!(
                "input has {c} channels, linear expects {}",
                self.in_features()
            )));
        }
        let o = self.out_features();
        let mut out = Array3::zeros((h, w, o));
        for i in 0..h {
            for j in 0..w {
                for k in 0..o {
                    let mut acc = self.bias[k];
                    for cc in 0..c {
                        acc += x[(i, j, cc)] * self.weight[(cc, k)];
                    }
                    out[(i, j, k)] = acc;
                }
            }
        }
        Ok(out)
    }
}

/// Per-channel 3x3 kernel stack for depthwise convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseKernel {
    /// `C x 3 x 3`.
    pub kernels: Array3<f64>,
}

impl DepthwiseKernel {
    pub fn new(kernels: Array3<f64>) -> Result<Self, KernelError> {
        let (_, kh, kw) = kernels.dim();
        if (kh, kw) != (3, 3) {
            return Err(KernelError::Shape(format!(
                "depthwise kernels must be 3x3, got {kh}x{kw}"
            )));
        }
        Ok(Self { kernels })
    }

    /// Identity stack: center tap 1, zeros elsewhere.
    pub fn identity(channels: usize) -> Self {
        let mut kernels = Array3::zeros((channels, 3, 3));
        for c in 0..channels {
            kernels[(c, 1, 1)] = 1.0;
        }
        Self { kernels }
    }

    pub fn channels(&self) -> usize {
        self.kernels.dim().0
    }
}

/// Zero-padded 3x3 depthwise convolution.
pub fn depthwise_conv3x3(x: &TensorHwc, dk: &DepthwiseKernel) -> Result<TensorHwc, KernelError> {
    let (h, w, c) = x.dim();
    if c != dk.channels() {
        return Err(KernelError::Shape(format!(
            "input has {c} channels, kernel stack has {}",
            dk.channels()
        )));
    }
    let mut out = Array3::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (si, sj) = (i as i64 + di, j as i64 + dj);
                        if si < 0 || sj < 0 || si >= h as i64 || sj >= w as i64 {
                            continue;
                        }
                        acc += x[(si as usize, sj as usize, ch)]
                            * dk.kernels[(ch, (di + 1) as usize, (dj + 1) as usize)];
                    }
                }
                out[(i, j, ch)] = acc;
            }
        }
    }
    Ok(out)
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-output-pixel sample coordinates in input pixel space.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    /// Horizontal (width-axis) coordinates, `H_out x W_out`.
    pub x: Array2<f64>,
    /// Vertical (height-axis) coordinates, `H_out x W_out`.
    pub y: Array2<f64>,
}

impl SamplingGrid {
    pub fn dim(&self) -> (usize, usize) {
        self.x.dim()
    }
}

/// The static grid of an `s`-fold bilinear upsampler: output pixel
/// `(u, v)` samples input coordinate `((v + 0.5)/s - 0.5, (u + 0.5)/s - 0.5)`.
pub fn bilinear_grid(h: usize, w: usize, s: usize) -> SamplingGrid {
    let (oh, ow) = (h * s, w * s);
    let x = Array2::from_shape_fn((oh, ow), |(_, v)| (v as f64 + 0.5) / s as f64 - 0.5);
    let y = Array2::from_shape_fn((oh, ow), |(u, _)| (u as f64 + 0.5) / s as f64 - 0.5);
    SamplingGrid { x, y }
}

/// Bilinear interpolation of `x` at each grid point. Out-of-bounds
/// coordinates clamp to the border; integer grid points reproduce input
/// values exactly.
pub fn grid_sample_bilinear(x: &TensorHwc, grid: &SamplingGrid) -> TensorHwc {
    let (h, w, c) = x.dim();
    let (oh, ow) = grid.dim();
    let clamp_h = |i: i64| i.clamp(0, h as i64 - 1) as usize;
    let clamp_w = |j: i64| j.clamp(0, w as i64 - 1) as usize;
    let mut out = Array3::zeros((oh, ow, c));
    for u in 0..oh {
        for v in 0..ow {
            let gx = grid.x[(u, v)];
            let gy = grid.y[(u, v)];
            let x0 = gx.floor();
            let y0 = gy.floor();
            let fx = gx - x0;
            let fy = gy - y0;
            let (j0, j1) = (clamp_w(x0 as i64), clamp_w(x0 as i64 + 1));
            let (i0, i1) = (clamp_h(y0 as i64), clamp_h(y0 as i64 + 1));
            for ch in 0..c {
                let top = x[(i0, j0, ch)] * (1.0 - fx) + x[(i0, j1, ch)] * fx;
                let bottom = x[(i1, j0, ch)] * (1.0 - fx) + x[(i1, j1, ch)] * fx;
                out[(u, v, ch)] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

/// Depth-to-space rearrangement: `H x W x (s^2 C')` becomes
/// `sH x sW x C'`, with channel `c' s^2 + dy s + dx` landing at output
/// pixel `(h s + dy, w s + dx)`. Bijective on elements.
pub fn pixel_shuffle(x: &TensorHwc, s: usize) -> Result<TensorHwc, KernelError> {
    let (h, w, c) = x.dim();
    let s_sq = s * s;
    if c % s_sq != 0 {
        return Err(KernelError::NotShuffleable { channels: c, s_sq });
    }
    let c_out = c / s_sq;
    let mut out = Array3::zeros((h * s, w * s, c_out));
    for i in 0..h {
        for j in 0..w {
            for co in 0..c_out {
                for dy in 0..s {
                    for dx in 0..s {
                        out[(i * s + dy, j * s + dx, co)] =
                            x[(i, j, co * s_sq + dy * s + dx)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`] (space-to-depth).
pub fn pixel_unshuffle(x: &TensorHwc, s: usize) -> Result<TensorHwc, KernelError> {
    let (h, w, c) = x.dim();
    if h % s != 0 || w % s != 0 {
        return Err(KernelError::Shape(format!(
            "spatial dims {h}x{w} not divisible by {s}"
        )));
    }
    let s_sq = s * s;
    let mut out = Array3::zeros((h / s, w / s, c * s_sq));
    for i in 0..h / s {
        for j in 0..w / s {
            for co in 0..c {
                for dy in 0..s {
                    for dx in 0..s {
                        out[(i, j, co * s_sq + dy * s + dx)] =
                            x[(i * s + dy, j * s + dx, co)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Content-dependent sub-pixel offsets for DySample:
/// `O = 0.5 * sigmoid(linear1(X)) * linear2(X)` per pixel, with `2 s^2`
/// components (x offsets for the `s^2` sub-positions, then y offsets).
pub fn dysample_offsets(
    x: &TensorHwc,
    w1: &LinearWeights,
    w2: &LinearWeights,
    s: usize,
) -> Result<TensorHwc, KernelError> {
    let expected = 2 * s * s;
    if w1.out_features() != expected || w2.out_features() != expected {
        return Err(KernelError::Shape(format!(
            "offset projections must map to {expected} features for s = {s}, got {} and {}",
            w1.out_features(),
            w2.out_features()
        )));
    }
    let range = w1.apply(x)?;
    let value = w2.apply(x)?;
    let mut out = value;
    for (o, r) in out.iter_mut().zip(range.iter()) {
        *o *= 0.5 * sigmoid(*r);
    }
    Ok(out)
}

/// DySample dynamic upsampling: the offset field is pixel-shuffled onto
/// the `s`-fold grid, added to the static bilinear grid, and the input
/// is resampled there. Maps `H x W x C` to `sH x sW x C`; with zero
/// offsets this is plain bilinear upsampling.
pub fn dysample_upsample(
    x: &TensorHwc,
    w1: &LinearWeights,
    w2: &LinearWeights,
    s: usize,
) -> Result<TensorHwc, KernelError> {
    let (h, w, _) = x.dim();
    let offsets = dysample_offsets(x, w1, w2, s)?;
    // channels [0, s^2) are x offsets, [s^2, 2 s^2) are y offsets
    let shuffled = pixel_shuffle(&offsets, s)?;
    let mut grid = bilinear_grid(h, w, s);
    for u in 0..h * s {
        for v in 0..w * s {
            grid.x[(u, v)] += shuffled[(u, v, 0)];
            grid.y[(u, v)] += shuffled[(u, v, 1)];
        }
    }
    Ok(grid_sample_bilinear(x, &grid))
}

/// Convolutional gated linear unit:
/// `Linear1(X) * GELU(DWConv3x3(Linear2(X)))` elementwise. The gate
/// branch sees zero-padded depthwise context, so the channel weighting
/// varies by position.
pub fn cglu(
    x: &TensorHwc,
    w1: &LinearWeights,
    w2: &LinearWeights,
    dk: &DepthwiseKernel,
) -> Result<TensorHwc, KernelError> {
    if w1.out_features() != w2.out_features() {
        return Err(KernelError::Shape(format!(
            "value and gate projections disagree: {} vs {}",
            w1.out_features(),
            w2.out_features()
        )));
    }
    let value = w1.apply(x)?;
    let gate = depthwise_conv3x3(&w2.apply(x)?, dk)?;
    let mut out = value;
    for (v, g) in out.iter_mut().zip(gate.iter()) {
        *v *= gelu(*g);
    }
    Ok(out)
}

/// Extract zero-padded `K x K` windows around every position:
/// output element `(c, n, m)` is `V` at the `m`-th offset (row-major
/// over the window) around position `n = h W + w`.
pub fn unfold(v: &TensorHwc, k: usize) -> Result<Array3<f64>, KernelError> {
    if k % 2 == 0 {
        return Err(KernelError::EvenWindow(k));
    }
    let (h, w, c) = v.dim();
    let half = (k / 2) as i64;
    let n = h * w;
    let mut out = Array3::zeros((c, n, k * k));
    for i in 0..h {
        for j in 0..w {
            let pos = i * w + j;
            let mut m = 0;
            for di in -half..=half {
                for dj in -half..=half {
                    let (si, sj) = (i as i64 + di, j as i64 + dj);
                    if si >= 0 && sj >= 0 && si < h as i64 && sj < w as i64 {
                        for ch in 0..c {
                            out[(ch, pos, m)] = v[(si as usize, sj as usize, ch)];
                        }
                    }
                    m += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Scatter-add windows back onto the `H x W x C` plane: element
/// `(c, n, m)` accumulates into the cell at offset `m` around position
/// `n`. `fold(unfold(V))` multiplies each cell by its window coverage
/// count.
pub fn fold(windows: &ArrayView3<f64>, h: usize, w: usize) -> Result<TensorHwc, KernelError> {
    let (c, n, k_sq) = windows.dim();
    if n != h * w {
        return Err(KernelError::Shape(format!(
            "window tensor has {n} positions, expected {h}*{w}"
        )));
    }
    let k = (k_sq as f64).sqrt().round() as usize;
    if k * k != k_sq || k % 2 == 0 {
        return Err(KernelError::Shape(format!(
            "window length {k_sq} is not an odd square"
        )));
    }
    let half = (k / 2) as i64;
    let mut out = Array3::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            let pos = i * w + j;
            let mut m = 0;
            for di in -half..=half {
                for dj in -half..=half {
                    let (ti, tj) = (i as i64 + di, j as i64 + dj);
                    if ti >= 0 && tj >= 0 && ti < h as i64 && tj < w as i64 {
                        for ch in 0..c {
                            out[(ti as usize, tj as usize, ch)] += windows[(ch, pos, m)];
                        }
                    }
                    m += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Number of `K x K` windows covering each cell of an `H x W` plane.
pub fn coverage_count(h: usize, w: usize, k: usize) -> Array2<f64> {
    let half = (k / 2) as i64;
    let count_axis = |idx: usize, len: usize| {
        let lo = (idx as i64 - half).max(0);
        let hi = (idx as i64 + half).min(len as i64 - 1);
        (hi - lo + 1) as f64
    };
    Array2::from_shape_fn((h, w), |(i, j)| count_axis(i, h) * count_axis(j, w))
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Outlook attention: each position's center token produces `K^2`
/// softmax weights (shared across channels) that aggregate its unfolded
/// window of values; the per-position aggregates are then folded back
/// with overlap accumulation.
///
/// `value_proj` maps `C -> C` and `attn_proj` maps `C -> K^2`. Spatial
/// dimensions are preserved.
pub fn outlook_attention(
    x: &TensorHwc,
    value_proj: &LinearWeights,
    attn_proj: &LinearWeights,
    k: usize,
) -> Result<TensorHwc, KernelError> {
    if k % 2 == 0 {
        return Err(KernelError::EvenWindow(k));
    }
    let (h, w, c) = x.dim();
    if value_proj.out_features() != c {
        return Err(KernelError::Shape(format!(
            "value projection must preserve {c} channels, got {}",
            value_proj.out_features()
        )));
    }
    if attn_proj.out_features() != k * k {
        return Err(KernelError::Shape(format!(
            "attention projection must emit {} logits, got {}",
            k * k,
            attn_proj.out_features()
        )));
    }
    let aggregated = outlook_aggregate(x, value_proj, attn_proj, k)?;
    // Broadcast each position's aggregate across its window and fold:
    // output(i,j) collects the aggregates of every window covering (i,j).
    let n = h * w;
    let k_sq = k * k;
    let mut windows = Array3::zeros((c, n, k_sq));
    for ch in 0..c {
        for pos in 0..n {
            let v = aggregated[(ch, pos)];
            for m in 0..k_sq {
                windows[(ch, pos, m)] = v;
            }
        }
    }
    fold(&windows.view(), h, w)
}

/// The pre-fold stage of outlook attention: softmax-weighted sums over
/// each position's `K x K` window, returned as `C x N`.
pub fn outlook_aggregate(
    x: &TensorHwc,
    value_proj: &LinearWeights,
    attn_proj: &LinearWeights,
    k: usize,
) -> Result<Array2<f64>, KernelError> {
    let (h, w, c) = x.dim();
    let values = value_proj.apply(x)?;
    let logits = attn_proj.apply(x)?;
    let windows = unfold(&values, k)?;
    let n = h * w;
    let k_sq = k * k;
    let mut out = Array2::zeros((c, n));
    let mut weights = vec![0.0; k_sq];
    for i in 0..h {
        for j in 0..w {
            let pos = i * w + j;
            for (m, wv) in weights.iter_mut().enumerate() {
                *wv = logits[(i, j, m)];
            }
            softmax_in_place(&mut weights);
            for ch in 0..c {
                let mut acc = 0.0;
                for m in 0..k_sq {
                    acc += weights[m] * windows[(ch, pos, m)];
                }
                out[(ch, pos)] = acc;
            }
        }
    }
    Ok(out)
}

/// Softmax weights of every position's window, `N x K^2`. Each row is a
/// probability distribution.
pub fn outlook_softmax_rows(
    x: &TensorHwc,
    attn_proj: &LinearWeights,
    k: usize,
) -> Result<Array2<f64>, KernelError> {
    if k % 2 == 0 {
        return Err(KernelError::EvenWindow(k));
    }
    let (h, w, _) = x.dim();
    let logits = attn_proj.apply(x)?;
    let k_sq = k * k;
    let mut rows = Array2::zeros((h * w, k_sq));
    let mut buf = vec![0.0; k_sq];
    for i in 0..h {
        for j in 0..w {
            for (m, v) in buf.iter_mut().enumerate() {
                *v = logits[(i, j, m)];
            }
            softmax_in_place(&mut buf);
            for m in 0..k_sq {
                rows[(i * w + j, m)] = buf[m];
            }
        }
    }
    Ok(rows)
}
