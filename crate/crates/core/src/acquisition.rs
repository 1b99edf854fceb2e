//! Four-channel modulo acquisition: two thresholds, each on a base grid and
//! on a grid delayed by `T_d`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::{
    add_noise, centered_modulo, derive_seed, fold_count, quantize_bits, sample, SamplingGrid,
    SinusoidalModel,
};
use crate::{Error, Result};

/// Where additive noise enters the chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoisePlacement {
    /// On the folded output (modulo ADC output noise).
    #[default]
    PostFold,
    /// On the analog input, ahead of the folder. Ablation only.
    PreFold,
}

/// Jitter bound on each fold jump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FoldJitter {
    Volts(f64),
    /// Fraction of the channel's own threshold.
    Relative(f64),
}

impl Default for FoldJitter {
    fn default() -> Self {
        FoldJitter::Volts(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureConfig {
    pub lambda0: f64,
    pub lambda1: f64,
    /// Delay of channels 2 and 3 (s).
    pub t_d: f64,
    pub f_s: f64,
    pub n: [usize; 4],
    /// `None` leaves samples unquantized.
    pub bit_depth: Option<u32>,
    pub noise_sd: f64,
    pub fold_jitter: FoldJitter,
    pub noise_placement: NoisePlacement,
    pub seed: u64,
}

impl CaptureConfig {
    /// Noiseless, unquantized config with equal channel lengths.
    pub fn ideal(lambda0: f64, lambda1: f64, t_d: f64, f_s: f64, n: usize) -> Self {
        Self {
            lambda0,
            lambda1,
            t_d,
            f_s,
            n: [n; 4],
            bit_depth: None,
            noise_sd: 0.0,
            fold_jitter: FoldJitter::Volts(0.0),
            noise_placement: NoisePlacement::PostFold,
            seed: 0,
        }
    }

    pub fn lambda(&self, channel: usize) -> f64 {
        if channel.is_multiple_of(2) {
            self.lambda0
        } else {
            self.lambda1
        }
    }

    pub fn jitter(&self, channel: usize) -> f64 {
        match self.fold_jitter {
            FoldJitter::Volts(v) => v,
            FoldJitter::Relative(r) => r * self.lambda(channel),
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_s
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_s
    }

    /// Zero noise and jitter, quantization off.
    pub fn noiseless(&self) -> Self {
        Self {
            bit_depth: None,
            noise_sd: 0.0,
            fold_jitter: FoldJitter::Volts(0.0),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lambda0 > 0.0 && self.lambda1 > 0.0) {
            return bad(format!("thresholds must be > 0 ({}, {})", self.lambda0, self.lambda1));
        }
        if self.lambda0 == self.lambda1 {
            return bad("thresholds must differ".into());
        }
        if !(self.f_s > 0.0 && self.f_s.is_finite()) {
            return bad(format!("f_s must be > 0, got {}", self.f_s));
        }
        if !(self.t_d > 0.0 && self.t_d.is_finite()) {
            return bad(format!("T_d must be > 0, got {}", self.t_d));
        }
        if self.n.iter().any(|&n| n < 2) {
            return bad(format!("every channel needs >= 2 samples, got {:?}", self.n));
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise sd must be >= 0".into());
        }
        if matches!(self.bit_depth, Some(b) if b == 0 || b > 30) {
            return bad("bit depth must be in 1..=30".into());
        }
        if !((0..2).all(|c| self.jitter(c) >= 0.0)) {
            return bad("fold jitter must be >= 0".into());
        }
        Ok(())
    }

    /// Delay bound `T_d <= pi / max|w_k|`.
    pub fn validate_for_model(&self, model: &SinusoidalModel) -> Result<()> {
        self.validate()?;
        let wmax = model.max_abs_frequency();
        if wmax > 0.0 && self.t_d * wmax > std::f64::consts::PI * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "T_d = {} exceeds pi/max|w| = {}",
                self.t_d,
                std::f64::consts::PI / wmax
            )));
        }
        Ok(())
    }

    /// Sample-count bound of the exact method: `N_0, N_1 >= 2K+1`, `N_2, N_3 >= K+1`.
    pub fn validate_exact(&self, k: usize) -> Result<()> {
        for (i, &n) in self.n.iter().enumerate() {
            let need = if i < 2 { 2 * k + 1 } else { k + 1 };
            if n < need {
                return Err(Error::TooFewSamples { needed: need, got: n });
            }
        }
        Ok(())
    }
}

/// Folded samples plus the config that produced them. All that recovery sees.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    pub y: [Vec<Complex64>; 4],
    pub config: CaptureConfig,
    /// Imaginary parts carry data (complex model).
    pub complex: bool,
}

/// Unfolded samples, kept for evaluation only.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub g: Vec<Complex64>,
    pub g_delayed: Vec<Complex64>,
}

impl GroundTruth {
    pub fn channel(&self, i: usize, len: usize) -> &[Complex64] {
        if i < 2 {
            &self.g[..len]
        } else {
            &self.g_delayed[..len]
        }
    }

    /// First differences of the unfolded samples, per channel length.
    pub fn differences(&self, n: [usize; 4]) -> [Vec<Complex64>; 4] {
        std::array::from_fn(|i| diff(self.channel(i, n[i])))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelCapture {
    pub measurements: Measurements,
    pub truth: Option<GroundTruth>,
}

/// First differences `v_i[n] = y_i[n+1] - y_i[n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceStreams {
    pub v: [Vec<Complex64>; 4],
}

pub(crate) fn diff(x: &[Complex64]) -> Vec<Complex64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn level_jitter(seed: u64, level: i64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, level as u64));
    rng.random_range(-eps..=eps)
}

/// Modulo fold whose jumps are `2 lambda + eps_l`, with a fixed
/// `eps_l ~ U[-eps_f, eps_f]` per fold level `l` of the folder `seed`.
pub fn simulate_nonideal_fold(x: f64, lambda: f64, eps_f: f64, seed: u64) -> f64 {
    if eps_f == 0.0 {
        return centered_modulo(x, lambda);
    }
    let k = fold_count(x, lambda);
    let mut residue = 2.0 * lambda * k as f64;
    if k > 0 {
        for l in 1..=k {
            residue += level_jitter(seed, l, eps_f);
        }
    } else {
        for l in k..0 {
            residue -= level_jitter(seed, l, eps_f);
        }
    }
    x - residue
}

/// Simulate the four folded streams for `model` under `cfg`.
pub fn capture(model: &SinusoidalModel, cfg: &CaptureConfig) -> Result<MultiChannelCapture> {
    cfg.validate_for_model(model)?;
    let t = cfg.period();
    let base = SamplingGrid::new(t, cfg.n[0].max(cfg.n[1]), 0.0)?;
    let delayed = SamplingGrid::new(t, cfg.n[2].max(cfg.n[3]), cfg.t_d)?;
    let truth = GroundTruth { g: sample(model, &base), g_delayed: sample(model, &delayed) };
    let complex = !model.is_real_valued();

    let y = std::array::from_fn(|i| {
        let src = truth.channel(i, cfg.n[i]);
        let re: Vec<f64> = src.iter().map(|z| z.re).collect();
        let re = digitize(&re, cfg, i, 0);
        if complex {
            let im: Vec<f64> = src.iter().map(|z| z.im).collect();
            let im = digitize(&im, cfg, i, 1);
            re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
        } else {
            re.into_iter().map(|a| Complex64::new(a, 0.0)).collect()
        }
    });
    Ok(MultiChannelCapture {
        measurements: Measurements { y, config: cfg.clone(), complex },
        truth: Some(truth),
    })
}

// fold -> jitter -> noise -> quantize, one real part of one channel
fn digitize(x: &[f64], cfg: &CaptureConfig, channel: usize, part: u64) -> Vec<f64> {
    let lambda = cfg.lambda(channel);
    let eps = cfg.jitter(channel);
    let seed = derive_seed(cfg.seed, 16 * channel as u64 + part);
    let fold_seed = derive_seed(seed, 1);
    let noise_seed = derive_seed(seed, 2);
    let mut y = match cfg.noise_placement {
        NoisePlacement::PostFold => {
            let folded: Vec<f64> =
                x.iter().map(|&v| simulate_nonideal_fold(v, lambda, eps, fold_seed)).collect();
            add_noise(&folded, cfg.noise_sd, noise_seed)
        }
        NoisePlacement::PreFold => add_noise(x, cfg.noise_sd, noise_seed)
            .into_iter()
            .map(|v| simulate_nonideal_fold(v, lambda, eps, fold_seed))
            .collect(),
    };
    if let Some(b) = cfg.bit_depth {
        for v in &mut y {
            *v = quantize_bits(*v, lambda, b);
        }
    }
    y
}

pub fn finite_difference(m: &Measurements) -> Result<DifferenceStreams> {
    for y in &m.y {
        if y.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: y.len() });
        }
    }
    Ok(DifferenceStreams { v: std::array::from_fn(|i| diff(&m.y[i])) })
}

/// CSV with header `channel,n,t_seconds,y_volts` (plus `y_imag_volts` for
/// complex captures), values in 17-significant-digit scientific notation.
pub fn to_csv(m: &Measurements) -> String {
    let mut s = String::from("channel,n,t_seconds,y_volts");
    if m.complex {
        s.push_str(",y_imag_volts");
    }
    s.push('\n');
    let t = m.config.period();
    for (i, y) in m.y.iter().enumerate() {
        let off = if i >= 2 { m.config.t_d } else { 0.0 };
        for (n, v) in y.iter().enumerate() {
            let _ = write!(s, "{i},{n},{:.16e},{:.16e}", n as f64 * t + off, v.re);
            if m.complex {
                let _ = write!(s, ",{:.16e}", v.im);
            }
            s.push('\n');
        }
    }
    s
}

/// Parse the CSV written by [`to_csv`]; returns the four streams and
/// whether an imaginary column was present.
pub fn from_csv(text: &str) -> Result<([Vec<Complex64>; 4], bool)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty capture file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let complex = match cols.as_slice() {
        ["channel", "n", "t_seconds", "y_volts"] => false,
        ["channel", "n", "t_seconds", "y_volts", "y_imag_volts"] => true,
        _ => return Err(Error::Parse(format!("unexpected header: {header}"))),
    };
    let mut y: [Vec<Complex64>; 4] = Default::default();
    for (row, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(Error::Parse(format!("row {row}: expected {} fields", cols.len())));
        }
        let perr = |e: &dyn std::fmt::Display| Error::Parse(format!("row {row}: {e}"));
        let ch: usize = f[0].parse().map_err(|e| perr(&e))?;
        let n: usize = f[1].parse().map_err(|e| perr(&e))?;
        if ch > 3 || n != y[ch].len() {
            return Err(Error::Parse(format!("row {row}: channel {ch} sample {n} out of order")));
        }
        let re: f64 = f[3].parse().map_err(|e| perr(&e))?;
        let im: f64 = if complex { f[4].parse().map_err(|e| perr(&e))? } else { 0.0 };
        y[ch].push(Complex64::new(re, im));
    }
    Ok((y, complex))
}
