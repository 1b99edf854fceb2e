//! Ground-truth signal model, sampling, folding, quantization and noise.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Sum of complex exponentials `g(t) = sum_k c_k exp(j w_k t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SinusoidalModel {
    amplitudes: Vec<Complex64>,
    frequencies: Vec<f64>,
    real_valued: bool,
}

impl SinusoidalModel {
    /// Complex model from amplitudes (volts) and angular frequencies (rad/s).
    pub fn new(amplitudes: Vec<Complex64>, frequencies: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() || amplitudes.len() != frequencies.len() {
            return Err(Error::InvalidModel(format!(
                "need K >= 1 matching amplitudes and frequencies, got {} and {}",
                amplitudes.len(),
                frequencies.len()
            )));
        }
        for (i, a) in frequencies.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::InvalidModel(format!("frequency {i} is not finite")));
            }
            if frequencies[..i].iter().any(|b| b == a) {
                return Err(Error::InvalidModel(format!("frequency {a} repeated")));
            }
        }
        Ok(Self { amplitudes, frequencies, real_valued: false })
    }

    /// Real sinusoids `sum a_k cos(2 pi f_k t + phi_k)` as conjugate pairs.
    ///
    /// Component order is `(+f_0, -f_0, +f_1, -f_1, ...)`.
    pub fn real_sinusoids(freqs_hz: &[f64], amps: &[f64], phases: &[f64]) -> Result<Self> {
        if freqs_hz.len() != amps.len() || freqs_hz.len() != phases.len() {
            return Err(Error::InvalidModel("real_sinusoids: length mismatch".into()));
        }
        if freqs_hz.iter().any(|&f| f <= 0.0) {
            return Err(Error::InvalidModel("real sinusoid frequencies must be > 0".into()));
        }
        let mut c = Vec::with_capacity(2 * freqs_hz.len());
        let mut w = Vec::with_capacity(2 * freqs_hz.len());
        for ((&f, &a), &p) in freqs_hz.iter().zip(amps).zip(phases) {
            let half = Complex64::from_polar(0.5 * a, p);
            c.push(half);
            c.push(half.conj());
            w.push(2.0 * std::f64::consts::PI * f);
            w.push(-2.0 * std::f64::consts::PI * f);
        }
        let mut m = Self::new(c, w)?;
        m.real_valued = true;
        Ok(m)
    }

    /// Real model from explicit conjugate pairs in `(+w, -w)` order, as
    /// produced by [`Self::real_sinusoids`].
    pub fn from_conjugate_pairs(amplitudes: Vec<Complex64>, frequencies: Vec<f64>) -> Result<Self> {
        let paired = amplitudes.len().is_multiple_of(2)
            && amplitudes.chunks(2).zip(frequencies.chunks(2)).all(|(c, w)| {
                w.len() == 2 && w[0] > 0.0 && w[1] == -w[0] && c[1] == c[0].conj()
            });
        if !paired {
            return Err(Error::InvalidModel("expected (+w, -w) conjugate pairs".into()));
        }
        let mut m = Self::new(amplitudes, frequencies)?;
        m.real_valued = true;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn is_real_valued(&self) -> bool {
        self.real_valued
    }

    pub fn max_abs_frequency(&self) -> f64 {
        self.frequencies.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    /// Same model with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|c| c * factor).collect(),
            frequencies: self.frequencies.clone(),
            real_valued: self.real_valued,
        }
    }

    /// Peak `|g(t)|` over `points` uniform times in `[0, duration)`.
    pub fn peak(&self, duration: f64, points: usize) -> f64 {
        let dt = duration / points as f64;
        (0..points)
            .map(|i| evaluate_signal(self, i as f64 * dt).norm())
            .fold(0.0, f64::max)
    }

    /// Rescale so that `peak(duration, points)` equals `target`.
    pub fn with_peak(&self, target: f64, duration: f64, points: usize) -> Self {
        let p = self.peak(duration, points);
        if p == 0.0 {
            return self.clone();
        }
        self.scaled(target / p)
    }
}

const TAU_LO: f64 = 2.4492935982947064e-16;

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

// (hi + lo) mod 2 pi, with 2 pi carried to ~106 bits
fn reduce(hi: f64, lo: f64) -> f64 {
    let k = (hi / TAU).round();
    let r = (-k).mul_add(TAU, hi);
    (-k).mul_add(TAU_LO, r) + lo
}

/// `w t` reduced modulo `2 pi` without the rounding of the raw product,
/// which at `|w t| ~ 1e4` would already cost ~1e-12 rad.
pub fn phase(w: f64, t: f64) -> f64 {
    let (p, e) = two_prod(w, t);
    reduce(p, e)
}

/// `w (n T + offset)` modulo `2 pi`, without forming `n T + offset`.
pub fn grid_phase(w: f64, n: usize, period: f64, offset: f64) -> f64 {
    let nf = n as f64;
    let (a, ae) = two_prod(w, period);
    let (b, be) = two_prod(nf, a);
    reduce(b, nf.mul_add(ae, be)) + phase(w, offset)
}

fn combine(model: &SinusoidalModel, phase_of: impl Fn(f64) -> f64) -> Complex64 {
    let g: Complex64 = model
        .amplitudes
        .iter()
        .zip(&model.frequencies)
        .map(|(c, &w)| c * Complex64::from_polar(1.0, phase_of(w)))
        .sum();
    if model.real_valued {
        Complex64::new(g.re, 0.0)
    } else {
        g
    }
}

/// `g(t)`; imaginary part dropped for real-valued models.
pub fn evaluate_signal(model: &SinusoidalModel, t: f64) -> Complex64 {
    combine(model, |w| phase(w, t))
}

/// Uniform sampling grid `t_n = n T + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingGrid {
    period: f64,
    len: usize,
    offset: f64,
}

impl SamplingGrid {
    pub fn new(period: f64, len: usize, offset: f64) -> Result<Self> {
        if !(period > 0.0) || len == 0 || !offset.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sampling grid needs T > 0 and N >= 1 (T={period}, N={len})"
            )));
        }
        Ok(Self { period, len, offset })
    }

    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }
    pub fn f_s(&self) -> f64 {
        1.0 / self.period
    }
    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.period + self.offset
    }
}

pub fn sample(model: &SinusoidalModel, grid: &SamplingGrid) -> Vec<Complex64> {
    (0..grid.len).map(|n| combine(model, |w| grid_phase(w, n, grid.period, grid.offset))).collect()
}

/// Folding threshold of a modulo ADC.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FoldThreshold(f64);

impl FoldThreshold {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self(lambda))
        } else {
            Err(Error::InvalidConfig(format!("fold threshold must be > 0, got {lambda}")))
        }
    }
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Integer fold count `k` with `x - 2 lambda k` in `[-lambda, lambda)`.
pub fn fold_count(x: f64, lambda: f64) -> i64 {
    (x / (2.0 * lambda) + 0.5).floor() as i64
}

/// Centered modulo into `[-lambda, lambda)`.
pub fn centered_modulo(x: f64, lambda: f64) -> f64 {
    let two = 2.0 * lambda;
    let k = (x / two + 0.5).floor();
    let mut r = x - two * k;
    // x/two rounding can leave r one period off at the edges
    if r >= lambda {
        r -= two;
    } else if r < -lambda {
        r += two;
    }
    r
}

/// Grid operator `2 lambda floor((x + lambda) / (2 lambda))`.
pub fn quantize_grid(x: f64, lambda: f64) -> f64 {
    2.0 * lambda * ((x + lambda) / (2.0 * lambda)).floor()
}

/// B-bit mid-rise ADC over `[-lambda, lambda)`, clamped to the end levels.
pub fn quantize_bits(x: f64, lambda: f64, bits: u32) -> f64 {
    let levels = (1u64 << bits) as f64;
    let step = 2.0 * lambda / levels;
    let i = ((x + lambda) / step).floor().clamp(0.0, levels - 1.0);
    -lambda + (i + 0.5) * step
}

/// Mid-tread variant: levels `-lambda + i step`, `i = 0..2^B`.
pub fn quantize_bits_mid_tread(x: f64, lambda: f64, bits: u32) -> f64 {
    let levels = (1u64 << bits) as f64;
    let step = 2.0 * lambda / levels;
    let i = ((x + lambda) / step).round().clamp(0.0, levels - 1.0);
    -lambda + i * step
}

/// `bits = None` selects the grid operator, `Some(B)` the B-bit ADC.
pub fn quantize(x: f64, lambda: f64, bits: Option<u32>) -> f64 {
    match bits {
        None => quantize_grid(x, lambda),
        Some(b) => quantize_bits(x, lambda, b),
    }
}

/// Adds i.i.d. `N(0, sd^2)` noise from a ChaCha8 stream seeded by `seed`.
pub fn add_noise(samples: &[f64], sd: f64, seed: u64) -> Vec<f64> {
    if sd == 0.0 {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("noise sd must be finite and >= 0");
    samples.iter().map(|x| x + normal.sample(&mut rng)).collect()
}

pub fn mse<T: Copy + Into<Complex64>>(x: &[T], y: &[T]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a.into() - b.into()).norm_sqr())
        .sum();
    Ok(s / x.len() as f64)
}

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
