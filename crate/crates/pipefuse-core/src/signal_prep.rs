//! Radargram preprocessing: selective inverse DFT reconstruction,
//! background removal, gradual low-pass filtering, exponential gain,
//! plus the information-entropy metric and seeded Gaussian noise
//! injection used in robustness studies.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use thiserror::Error;

/// Default gain constant of the preprocessing chain, 1/ns. Matches the
/// decay of the default synthetic corpus so the gain step cancels it.
pub const DEFAULT_GAIN_PER_NS: f64 = 0.08;

/// Default low-pass band of the preprocessing chain, Hz.
pub const DEFAULT_LOWPASS_PASS_HZ: f64 = 0.8e9;
pub const DEFAULT_LOWPASS_STOP_HZ: f64 = 1.2e9;

/// Default gray-level count for entropy reporting.
pub const DEFAULT_GRAY_LEVELS: u32 = 256;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("spectral trace frequencies must be strictly increasing")]
    FrequenciesNotIncreasing,
    #[error("spectral trace must hold at least one component")]
    EmptySpectrum,
    #[error("background removal needs at least 2 traces, got {0}")]
    TooFewTraces(usize),
    #[error("low-pass band invalid: need 0 <= pass < stop <= Nyquist ({nyquist_hz} Hz), got pass={pass_hz}, stop={stop_hz}")]
    InvalidBand {
        pass_hz: f64,
        stop_hz: f64,
        nyquist_hz: f64,
    },
    #[error("gain constant must be nonnegative, got {0}")]
    NegativeGain(f64),
    #[error("gray-level count must be at least 2, got {0}")]
    TooFewLevels(u32),
    #[error("radargram contains non-finite values")]
    NonFinite,
}

/// Frequency-domain trace: strictly increasing frequencies with complex
/// amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTrace {
    components: Vec<(f64, Complex64)>,
}

impl SpectralTrace {
    pub fn new(components: Vec<(f64, Complex64)>) -> Result<Self, SignalError> {
        if components.is_empty() {
            return Err(SignalError::EmptySpectrum);
        }
        if components.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(SignalError::FrequenciesNotIncreasing);
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, Complex64)] {
        &self.components
    }
}

/// Selective inverse DFT by direct summation:
/// `s(t) = sum_k S(f_k) * exp(j 2 pi f_k t)` at each requested time.
///
/// Frequencies may form any subset; no FFT-length constraint applies.
pub fn isdft(spec: &SpectralTrace, times_s: &[f64]) -> Vec<Complex64> {
    times_s
        .iter()
        .map(|&t| {
            spec.components
                .iter()
                .map(|&(f, s)| s * Complex64::from_polar(1.0, std::f64::consts::TAU * f * t))
                .sum()
        })
        .collect()
}

/// 2D real-valued radargram: axis 0 is scan position (trace index),
/// axis 1 is time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Radargram {
    pub data: Array2<f64>,
    pub trace_spacing_m: f64,
    pub sample_interval_ns: f64,
}

impl Radargram {
    pub fn new(data: Array2<f64>, trace_spacing_m: f64, sample_interval_ns: f64) -> Self {
        debug_assert!(trace_spacing_m > 0.0 && sample_interval_ns > 0.0);
        Self {
            data,
            trace_spacing_m,
            sample_interval_ns,
        }
    }

    pub fn n_traces(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    /// Nyquist frequency of the time axis in Hz.
    pub fn nyquist_hz(&self) -> f64 {
        0.5 / (self.sample_interval_ns * 1e-9)
    }
}

/// Subtract the mean trace (average over scan positions at each time
/// sample) from every trace. Suppresses direct coupling and horizontal
/// layer reflections; the output's per-sample mean over positions is 0.
pub fn background_removal(r: &Radargram) -> Result<Radargram, SignalError> {
    if r.n_traces() < 2 {
        return Err(SignalError::TooFewTraces(r.n_traces()));
    }
    let mean_trace = r.data.mean_axis(Axis(0)).expect("nonempty");
    let mut data = r.data.clone();
    for mut trace in data.rows_mut() {
        trace -= &mean_trace;
    }
    Ok(Radargram { data, ..*r })
}

/// Raised-cosine gain for the gradual low-pass: 1 below `pass`, smooth
/// roll-off to 0 at `stop`, 0 above.
fn rolloff_gain(f_abs: f64, pass_hz: f64, stop_hz: f64) -> f64 {
    if f_abs <= pass_hz {
        1.0
    } else if f_abs >= stop_hz {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (f_abs - pass_hz) / (stop_hz - pass_hz)).cos())
    }
}

/// Per-trace frequency-domain taper: unity gain below `pass_hz`,
/// raised-cosine roll-off to zero at `stop_hz`. Real output for real
/// input.
pub fn lowpass_gradual(
    r: &Radargram,
    pass_hz: f64,
    stop_hz: f64,
) -> Result<Radargram, SignalError> {
    let nyquist = r.nyquist_hz();
    if !(0.0..nyquist + 1e-9).contains(&pass_hz) || pass_hz >= stop_hz || stop_hz > nyquist + 1e-9
    {
        return Err(SignalError::InvalidBand {
            pass_hz,
            stop_hz,
            nyquist_hz: nyquist,
        });
    }
    let n = r.n_samples();
    let dt_s = r.sample_interval_ns * 1e-9;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    // two-sided gains over FFT bin frequencies
    let gains: Vec<f64> = (0..n)
        .map(|j| {
            let f = if j <= n / 2 {
                j as f64 / (n as f64 * dt_s)
            } else {
                (j as f64 - n as f64) / (n as f64 * dt_s)
            };
            rolloff_gain(f.abs(), pass_hz, stop_hz)
        })
        .collect();

    let mut data = r.data.clone();
    let mut buf: Vec<Complex64> = Vec::with_capacity(n);
    for mut trace in data.rows_mut() {
        buf.clear();
        buf.extend(trace.iter().map(|&v| Complex64::new(v, 0.0)));
        fft.process(&mut buf);
        for (c, &g) in buf.iter_mut().zip(&gains) {
            *c *= g;
        }
        ifft.process(&mut buf);
        let scale = 1.0 / n as f64;
        for (dst, c) in trace.iter_mut().zip(&buf) {
            *dst = c.re * scale;
        }
    }
    Ok(Radargram { data, ..*r })
}

/// Multiply the sample at time `t` (ns) by `exp(alpha * t)` to
/// compensate attenuation of deep returns. `alpha = 0` is the identity;
/// negative values are rejected.
pub fn exp_gain(r: &Radargram, alpha_per_ns: f64) -> Result<Radargram, SignalError> {
    if alpha_per_ns < 0.0 {
        return Err(SignalError::NegativeGain(alpha_per_ns));
    }
    if alpha_per_ns == 0.0 {
        return Ok(r.clone());
    }
    let mut data = r.data.clone();
    let factors: Vec<f64> = (0..r.n_samples())
        .map(|j| (alpha_per_ns * j as f64 * r.sample_interval_ns).exp())
        .collect();
    for mut trace in data.rows_mut() {
        for (v, &g) in trace.iter_mut().zip(&factors) {
            *v *= g;
        }
    }
    Ok(Radargram { data, ..*r })
}

/// Quantized gray image with `levels` gray levels in `[0, levels - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub pixels: Array2<u32>,
    pub levels: u32,
}

/// Linear min-max quantization of a radargram onto `levels` gray
/// levels. Constant input maps to level 0.
pub fn quantize(r: &Radargram, levels: u32) -> Result<GrayImage, SignalError> {
    if levels < 2 {
        return Err(SignalError::TooFewLevels(levels));
    }
    if r.data.iter().any(|v| !v.is_finite()) {
        return Err(SignalError::NonFinite);
    }
    let lo = r.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = r.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let pixels = if range == 0.0 {
        Array2::zeros(r.data.raw_dim())
    } else {
        r.data.mapv(|v| {
            let level = ((v - lo) / range * levels as f64).floor() as u32;
            level.min(levels - 1)
        })
    };
    Ok(GrayImage { pixels, levels })
}

/// Shannon entropy of the gray-level histogram in bits:
/// `-sum_i p(i) log2 p(i)`, skipping empty levels.
pub fn information_entropy(img: &GrayImage) -> f64 {
    let total = img.pixels.len() as f64;
    if total == 0.0 {
        return 0.0;
    }
    let mut counts = vec![0u64; img.levels as usize];
    for &p in img.pixels.iter() {
        counts[p as usize] += 1;
    }
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Add i.i.d. `N(0, sigma^2)` noise from a seeded generator. `sigma = 0`
/// returns a bit-identical copy; identical seeds give identical output.
pub fn add_gaussian_noise(r: &Radargram, sigma: f64, seed: u64) -> Radargram {
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return r.clone();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut data = r.data.clone();
    for v in data.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Radargram { data, ..*r }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn gram(data: Array2<f64>) -> Radargram {
        Radargram::new(data, 0.1, 0.5)
    }

    #[test]
    fn isdft_dc_and_unit_exponential() {
        let dc = SpectralTrace::new(vec![(0.0, Complex64::new(1.0, 0.0))]).unwrap();
        for s in isdft(&dc, &[0.0, 0.3, 1.7]) {
            assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        let unit = SpectralTrace::new(vec![(1.0, Complex64::new(1.0, 0.0))]).unwrap();
        for &t in &[0.0, 0.125, 0.4] {
            let expect = Complex64::from_polar(1.0, std::f64::consts::TAU * t);
            let got = isdft(&unit, &[t])[0];
            assert!((got - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn isdft_round_trips_forward_transform() {
        // Forward oracle: selective DFT by direct conjugate summation
        // with 1/M normalization over one fundamental period.
        let m = 64usize;
        let period = 1.0;
        let times: Vec<f64> = (0..m).map(|i| i as f64 * period / m as f64).collect();
        let freqs = [1.0, 3.0, 7.0, 11.0];
        let amps = [
            Complex64::new(0.8, 0.1),
            Complex64::new(-0.5, 0.4),
            Complex64::new(0.2, -0.9),
            Complex64::new(0.05, 0.3),
        ];
        let signal: Vec<Complex64> = times
            .iter()
            .map(|&t| {
                freqs
                    .iter()
                    .zip(&amps)
                    .map(|(&f, &a)| a * Complex64::from_polar(1.0, std::f64::consts::TAU * f * t))
                    .sum()
            })
            .collect();
        let forward: Vec<(f64, Complex64)> = freqs
            .iter()
            .map(|&f| {
                let s: Complex64 = times
                    .iter()
                    .zip(&signal)
                    .map(|(&t, &x)| {
                        x * Complex64::from_polar(1.0, -std::f64::consts::TAU * f * t)
                    })
                    .sum();
                (f, s / m as f64)
            })
            .collect();
        let spec = SpectralTrace::new(forward).unwrap();
        let recon = isdft(&spec, &times);
        let max_err = recon
            .iter()
            .zip(&signal)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-9, "round-trip error {max_err}");
    }

    #[test]
    fn isdft_is_linear() {
        let f = [0.5, 2.0, 5.0];
        let s1: Vec<_> = f
            .iter()
            .map(|&fk| (fk, Complex64::new(0.3, -0.2)))
            .collect();
        let s2: Vec<_> = f.iter().map(|&fk| (fk, Complex64::new(-1.1, 0.7))).collect();
        let (a, b) = (2.5, -0.75);
        let combo: Vec<_> = s1
            .iter()
            .zip(&s2)
            .map(|(&(fk, x), &(_, y))| (fk, a * x + b * y))
            .collect();
        let times = [0.0, 0.01, 0.2, 0.33];
        let lhs = isdft(&SpectralTrace::new(combo).unwrap(), &times);
        let r1 = isdft(&SpectralTrace::new(s1).unwrap(), &times);
        let r2 = isdft(&SpectralTrace::new(s2).unwrap(), &times);
        for ((l, x), y) in lhs.iter().zip(&r1).zip(&r2) {
            assert!((l - (a * x + b * y)).norm() < 1e-9);
        }
    }

    #[test]
    fn spectral_trace_validation() {
        assert!(matches!(
            SpectralTrace::new(vec![]),
            Err(SignalError::EmptySpectrum)
        ));
        assert!(matches!(
            SpectralTrace::new(vec![
                (1.0, Complex64::new(1.0, 0.0)),
                (1.0, Complex64::new(1.0, 0.0))
            ]),
            Err(SignalError::FrequenciesNotIncreasing)
        ));
    }

    #[test]
    fn background_removal_kills_identical_traces() {
        let r = gram(array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        let out = background_removal(&r).unwrap();
        assert!(out.data.iter().all(|&v| v.abs() < 1e-12));

        let zero = gram(Array2::zeros((4, 5)));
        let out = background_removal(&zero).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn background_removal_preserves_localized_target() {
        // background + impulse on one trace: mean subtraction keeps
        // (1 - 1/n) of the impulse
        let n = 8;
        let mut data = Array2::from_elem((n, 6), 5.0);
        data[[3, 2]] += 1.0;
        let out = background_removal(&gram(data)).unwrap();
        let kept = out.data[[3, 2]];
        assert!((kept - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
        // per-sample mean over traces is zero
        let mean = out.data.mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn background_removal_rejects_single_trace() {
        let r = gram(Array2::zeros((1, 4)));
        assert!(matches!(
            background_removal(&r),
            Err(SignalError::TooFewTraces(1))
        ));
    }

    #[test]
    fn background_removal_is_idempotent() {
        let mut data = Array2::zeros((6, 32));
        for (i, mut row) in data.rows_mut().into_iter().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (i as f64 * 0.7 + j as f64 * 0.3).sin() + j as f64 * 0.01;
            }
        }
        let once = background_removal(&gram(data)).unwrap();
        let twice = background_removal(&once).unwrap();
        let max_diff = once
            .data
            .iter()
            .zip(twice.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-12);
    }

    /// One trace holding a pure cosine at `f_hz` given the sample count
    /// and interval.
    fn tone(n: usize, dt_ns: f64, f_hz: f64) -> Radargram {
        let dt_s = dt_ns * 1e-9;
        let data = Array2::from_shape_fn((1, n), |(_, j)| {
            (std::f64::consts::TAU * f_hz * j as f64 * dt_s).cos()
        });
        Radargram::new(data, 0.1, dt_ns)
    }

    fn amplitude(r: &Radargram) -> f64 {
        r.data.iter().cloned().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn lowpass_dc_unchanged_stopband_killed_midband_halved() {
        let n = 256;
        let dt_ns = 0.5; // Nyquist 1 GHz
        let df = 1.0 / (n as f64 * dt_ns * 1e-9); // bin width 7.8125 MHz

        let dc = gram(Array2::from_elem((1, n), 1.0));
        let out = lowpass_gradual(&dc, 100e6, 200e6).unwrap();
        assert!((amplitude(&out) - 1.0).abs() < 1e-9);

        // bin-aligned tone above stop
        let hi = tone(n, dt_ns, 64.0 * df); // 500 MHz
        let out = lowpass_gradual(&hi, 100e6, 200e6).unwrap();
        assert!(amplitude(&out) <= 1e-6 * amplitude(&hi));

        // tone exactly at the transition-band midpoint: gain 0.5
        let pass = 16.0 * df;
        let stop = 48.0 * df;
        let mid = tone(n, dt_ns, 32.0 * df);
        let out = lowpass_gradual(&mid, pass, stop).unwrap();
        assert!((amplitude(&out) - 0.5).abs() < 0.01);
    }

    #[test]
    fn lowpass_never_increases_energy() {
        let mut data = Array2::zeros((4, 128));
        for (i, v) in data.iter_mut().enumerate() {
            *v = ((i * 31 % 17) as f64 - 8.0) * 0.1 + ((i as f64) * 0.73).sin();
        }
        let r = gram(data);
        let out = lowpass_gradual(&r, 200e6, 600e6).unwrap();
        for (orig, filt) in r.data.rows().into_iter().zip(out.data.rows()) {
            let e_in: f64 = orig.iter().map(|v| v * v).sum();
            let e_out: f64 = filt.iter().map(|v| v * v).sum();
            assert!(e_out <= e_in * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn lowpass_rejects_bad_bands() {
        let r = gram(Array2::zeros((1, 64)));
        let nyq = r.nyquist_hz();
        assert!(lowpass_gradual(&r, 300e6, 200e6).is_err());
        assert!(lowpass_gradual(&r, 100e6, nyq * 2.0).is_err());
        assert!(lowpass_gradual(&r, -1.0, 200e6).is_err());
    }

    #[test]
    fn exp_gain_identity_doubling_and_cancellation() {
        let r = gram(Array2::from_elem((2, 4), 3.0));
        let same = exp_gain(&r, 0.0).unwrap();
        assert_eq!(same.data, r.data);

        // ln 2 per ns doubles the sample at t = 1 ns (second sample at
        // dt = 0.5 ns is sample index 2)
        let out = exp_gain(&r, std::f64::consts::LN_2).unwrap();
        assert!((out.data[[0, 2]] - 6.0).abs() < 1e-12);

        // gain alpha = beta flattens an exp(-beta t) envelope
        let beta = 0.3;
        let decayed = Radargram::new(
            Array2::from_shape_fn((1, 100), |(_, j)| (-beta * j as f64 * 0.5).exp()),
            0.1,
            0.5,
        );
        let flat = exp_gain(&decayed, beta).unwrap();
        let max_dev = flat
            .data
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 0.01);

        assert!(exp_gain(&r, -0.1).is_err());
    }

    #[test]
    fn quantize_and_entropy_cases() {
        let constant = gram(Array2::from_elem((3, 3), 7.5));
        let img = quantize(&constant, 256).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0));
        assert_eq!(information_entropy(&img), 0.0);

        let two = gram(array![[0.0, 1.0], [1.0, 0.0]]);
        let img = quantize(&two, 256).unwrap();
        let mut seen: Vec<u32> = img.pixels.iter().cloned().collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 0, 255, 255]);
        assert!((information_entropy(&img) - 1.0).abs() < 1e-12);

        // uniform over all 256 levels
        let ramp = gram(Array2::from_shape_fn((16, 16), |(i, j)| (i * 16 + j) as f64));
        let img = quantize(&ramp, 256).unwrap();
        assert!((information_entropy(&img) - 8.0).abs() < 1e-12);

        // ramp over L distinct values: one pixel per level
        let l = 16u32;
        let small = gram(Array2::from_shape_fn((1, 16), |(_, j)| j as f64));
        let img = quantize(&small, l).unwrap();
        let mut lv: Vec<u32> = img.pixels.iter().cloned().collect();
        lv.sort_unstable();
        assert_eq!(lv, (0..l).collect::<Vec<_>>());
        assert!((information_entropy(&img) - (l as f64).log2()).abs() < 1e-12);

        assert!(quantize(&constant, 1).is_err());
    }

    #[test]
    fn entropy_bounded_by_log2_levels() {
        let mut data = Array2::zeros((8, 8));
        for (i, v) in data.iter_mut().enumerate() {
            *v = ((i * 2654435761) % 97) as f64;
        }
        let img = quantize(&gram(data), 32).unwrap();
        let ie = information_entropy(&img);
        assert!(ie >= 0.0);
        assert!(ie <= 5.0 + 1e-12);
    }

    #[test]
    fn noise_determinism_and_statistics() {
        let zero = gram(Array2::zeros((1000, 1000)));
        let a = add_gaussian_noise(&zero, 0.1, 42);
        let b = add_gaussian_noise(&zero, 0.1, 42);
        assert_eq!(a.data, b.data);
        let c = add_gaussian_noise(&zero, 0.1, 43);
        assert_ne!(a.data, c.data);

        let same = add_gaussian_noise(&zero, 0.0, 1);
        assert_eq!(same.data, zero.data);

        // sample std on 1e6 draws within 5% of sigma
        let n = a.data.len() as f64;
        let mean: f64 = a.data.iter().sum::<f64>() / n;
        let var: f64 = a.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((std - 0.1).abs() < 0.005, "sample std {std}");
    }
}
