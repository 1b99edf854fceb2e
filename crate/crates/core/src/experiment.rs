//! Simulated experiments: build a capture from a spec, recover, score
//! against ground truth.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{capture, CaptureConfig, FoldJitter, MultiChannelCapture, NoisePlacement};
use crate::exact::{recover_exact, SpectralEstimate};
use crate::robust::{default_alpha, estimate_sigma, recover_robust, RobustConfig};
use crate::signal::{derive_seed, mse, phase, sample, SamplingGrid, SinusoidalModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    Robust,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub freqs_hz: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// `None` draws phases uniformly from the run seed.
    pub phases: Option<Vec<f64>>,
    /// Real sinusoids (conjugate pairs) or complex exponentials.
    pub real: bool,
    /// Rescale to this `||g||_inf` (volts).
    pub peak_v: Option<f64>,
}

impl ModelSpec {
    pub fn build(&self, seed: u64) -> Result<SinusoidalModel> {
        let k = self.freqs_hz.len();
        if self.amplitudes.len() != k {
            return Err(Error::InvalidModel("amplitude count differs from frequency count".into()));
        }
        let phases = match &self.phases {
            Some(p) if p.len() == k => p.clone(),
            Some(_) => return Err(Error::InvalidModel("phase count differs from frequency count".into())),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x9e));
                (0..k).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
            }
        };
        let m = if self.real {
            SinusoidalModel::real_sinusoids(&self.freqs_hz, &self.amplitudes, &phases)?
        } else {
            SinusoidalModel::new(
                self.amplitudes.iter().zip(&phases).map(|(&a, &p)| Complex64::from_polar(a, p)).collect(),
                self.freqs_hz.iter().map(|f| 2.0 * PI * f).collect(),
            )?
        };
        Ok(match self.peak_v {
            Some(p) => {
                let (dur, pts) = peak_window(&self.freqs_hz);
                m.with_peak(p, dur, pts)
            }
            None => m,
        })
    }
}

// 20 periods of the slowest component, 64 points per period of the fastest.
fn peak_window(freqs_hz: &[f64]) -> (f64, usize) {
    let lo = freqs_hz.iter().fold(f64::INFINITY, |m, f| m.min(f.abs()));
    let hi = freqs_hz.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    if !(lo > 0.0) {
        return (1.0, 1);
    }
    let dur = 20.0 / lo;
    (dur, ((dur * hi * 64.0).ceil() as usize).clamp(64, 2_000_000))
}

/// Largest fold-count step a first difference of a signal bounded by
/// `peak` can carry: `|gbar| <= 2 peak`, so `|e| <= (2 peak + lambda) / (2 lambda)`.
pub fn residue_bound(peak: f64, lambda0: f64, lambda1: f64) -> i64 {
    let lam = lambda0.min(lambda1);
    ((2.0 * peak + lam) / (2.0 * lam)).ceil() as i64
}

/// Optional replacements for the robust defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RobustOverrides {
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub j_max: Option<usize>,
    pub restarts: Option<usize>,
    pub outer_max: Option<usize>,
    /// Residue-count bound of the separation table. Defaults to the bound
    /// implied by the declared peak, else the library default.
    pub e_max: Option<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub model: ModelSpec,
    /// Its `seed` is replaced by the run seed.
    pub capture: CaptureConfig,
    pub method: Method,
    pub robust: RobustOverrides,
    pub seed: u64,
    pub repetitions: usize,
}

impl ExperimentSpec {
    pub fn robust_config(&self, seed: u64) -> RobustConfig {
        let c = &self.capture;
        let fmax = self.model.freqs_hz.iter().fold(0.0f64, |m, f| m.max(f.abs()));
        let alpha = self.robust.alpha.unwrap_or_else(|| default_alpha(fmax));
        let bits = c.bit_depth.unwrap_or(6);
        let mut r = RobustConfig::new(c.lambda0, c.lambda1, bits, alpha);
        r.sigma = self.robust.sigma.unwrap_or_else(|| estimate_sigma(c.lambda0, c.lambda1, bits, alpha));
        if let Some(v) = self.robust.j_max {
            r.j_max = v;
        }
        if let Some(v) = self.robust.restarts {
            r.restarts = v;
        }
        if let Some(v) = self.robust.outer_max {
            r.outer_max = v;
        }
        if let Some(v) = self.robust.e_max.or_else(|| self.model.peak_v.map(|p| residue_bound(p, c.lambda0, c.lambda1))) {
            r.e_max = v;
        }
        r.seed = seed;
        r
    }

    /// Zero noise and jitter, quantization off.
    pub fn noiseless(&self) -> Self {
        Self { capture: self.capture.noiseless(), ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub spec_id: String,
    pub n: usize,
    pub f_s: f64,
    pub t_d: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    /// Peak of the ground-truth model (volts).
    pub g_inf: f64,
    /// Positive frequencies for real models, ascending (Hz).
    pub f_true_hz: Vec<f64>,
    /// Matched estimates, same order as `f_true_hz`.
    pub f_est_hz: Vec<f64>,
    /// `sum_k |f_k - f~_k|^2` in kHz^2.
    pub e2_khz2: f64,
    /// `max_k |f_k - f~_k| / f_s`.
    pub einf_over_fs: f64,
    /// Signal MSE on the channel-0 grid.
    pub mse_signal: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub error: Option<String>,
    pub estimate: Option<SpectralEstimate>,
}

pub const REPORT_HEADER: &str = "spec_id,N,f_s_hz,T_d_us,lambda0_v,lambda1_v,g_inf_v,f_true_khz,f_est_khz,e2_khz2,einf_over_fs,mse_signal,converged,iterations,seed";

fn khz_list(v: &[f64]) -> String {
    v.iter().map(|f| format!("{:.9}", f / 1e3)).collect::<Vec<_>>().join(";")
}

impl RunReport {
    /// One row matching [`REPORT_HEADER`]. Wall time is left out so that
    /// reruns are byte-identical.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{},{},{:.6e},{:.6e},{:.6e},{},{},{}",
            self.spec_id,
            self.n,
            self.f_s,
            self.t_d * 1e6,
            self.lambda0,
            self.lambda1,
            self.g_inf,
            khz_list(&self.f_true_hz),
            khz_list(&self.f_est_hz),
            self.e2_khz2,
            self.einf_over_fs,
            self.mse_signal,
            self.converged,
            self.iterations,
            self.seed
        )
    }
}

pub fn report_csv(reports: &[RunReport]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Frequencies in Hz that the report compares. Real models keep the
/// positive half; estimated `+-f` pairs are averaged in `|f|`.
pub fn reported_frequencies(freqs_rad: &[f64], real: bool) -> Vec<f64> {
    let mut hz: Vec<f64> = freqs_rad.iter().map(|w| w / (2.0 * PI)).collect();
    if real {
        let mut a: Vec<f64> = hz.iter().map(|f| f.abs()).collect();
        a.sort_by(f64::total_cmp);
        hz = a.chunks(2).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    }
    hz.sort_by(f64::total_cmp);
    hz
}

/// Pair sorted lists index by index; returns `(E2 in kHz^2, E_inf in Hz)`.
/// Unequal lengths score as infinite.
pub fn match_frequencies(true_hz: &[f64], est_hz: &[f64]) -> (f64, f64) {
    if true_hz.len() != est_hz.len() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let mut a = true_hz.to_vec();
    let mut b = est_hz.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut e2 = 0.0;
    let mut einf: f64 = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let d = (x - y).abs();
        e2 += (d / 1e3).powi(2);
        einf = einf.max(d);
    }
    if e2.is_nan() {
        return (f64::INFINITY, f64::INFINITY);
    }
    (e2, einf)
}

/// `sum_k c_k exp(j w_k t)` at each time; real part only when `real`.
pub fn recovered_waveform(est: &SpectralEstimate, times: &[f64], real: bool) -> Vec<Complex64> {
    times
        .iter()
        .map(|&t| {
            let z: Complex64 = est
                .amplitudes
                .iter()
                .zip(&est.frequencies)
                .map(|(c, &w)| c * Complex64::from_polar(1.0, phase(w, t)))
                .sum();
            if real {
                Complex64::new(z.re, 0.0)
            } else {
                z
            }
        })
        .collect()
}

fn grid_times(cfg: &CaptureConfig, channel: usize) -> Vec<f64> {
    let t = cfg.period();
    let off = if channel >= 2 { cfg.t_d } else { 0.0 };
    (0..cfg.n[channel]).map(|n| n as f64 * t + off).collect()
}

/// Capture for one seed of `spec`.
pub fn simulate(spec: &ExperimentSpec, seed: u64) -> Result<(SinusoidalModel, MultiChannelCapture)> {
    let model = spec.model.build(seed)?;
    let mut cfg = spec.capture.clone();
    cfg.seed = seed;
    let cap = capture(&model, &cfg)?;
    Ok((model, cap))
}

/// One run of `spec` at `spec.seed`.
pub fn run_experiment(spec: &ExperimentSpec) -> RunReport {
    run_with_seed(spec, spec.seed)
}

/// `spec.repetitions` runs at seeds `spec.seed, spec.seed + 1, ...`.
pub fn run_repetitions(spec: &ExperimentSpec) -> Vec<RunReport> {
    (0..spec.repetitions.max(1) as u64).map(|r| run_with_seed(spec, spec.seed.wrapping_add(r))).collect()
}

pub fn run_with_seed(spec: &ExperimentSpec, seed: u64) -> RunReport {
    let started = Instant::now();
    let mut report = match simulate(spec, seed) {
        Ok((model, cap)) => {
            let k = model.k();
            let outcome = match spec.method {
                Method::Exact => recover_exact(&cap.measurements, k).map(|e| (e, true, 1)),
                Method::Robust => recover_robust(&cap.measurements, k, &spec.robust_config(seed))
                    .map(|o| (o.estimate, o.converged, o.iterations)),
            };
            score_run(&spec.id, &cap.measurements.config, &model, outcome)
        }
        Err(e) => {
            let mut r = empty_report(&spec.id, &spec.capture);
            r.error = Some(e.to_string());
            r
        }
    };
    report.seed = seed;
    report.wall_time_s = started.elapsed().as_secs_f64();
    report
}

fn empty_report(spec_id: &str, c: &CaptureConfig) -> RunReport {
    RunReport {
        spec_id: spec_id.to_string(),
        n: c.n[0],
        f_s: c.f_s,
        t_d: c.t_d,
        lambda0: c.lambda0,
        lambda1: c.lambda1,
        g_inf: f64::NAN,
        f_true_hz: Vec::new(),
        f_est_hz: Vec::new(),
        e2_khz2: f64::INFINITY,
        einf_over_fs: f64::INFINITY,
        mse_signal: f64::INFINITY,
        converged: false,
        iterations: 0,
        seed: c.seed,
        wall_time_s: 0.0,
        error: None,
        estimate: None,
    }
}

/// Score a recovery outcome `(estimate, converged, iterations)` against the
/// model that produced the capture. The signal MSE is taken on the
/// channel-0 grid of `cfg`.
pub fn score_run(
    spec_id: &str,
    cfg: &CaptureConfig,
    model: &SinusoidalModel,
    outcome: Result<(SpectralEstimate, bool, usize)>,
) -> RunReport {
    let mut report = empty_report(spec_id, cfg);
    let real = model.is_real_valued();
    let hz: Vec<f64> = model.frequencies().iter().map(|w| w / (2.0 * PI)).collect();
    let (dur, pts) = peak_window(&hz);
    report.g_inf = model.peak(dur, pts);
    report.f_true_hz = reported_frequencies(model.frequencies(), real);
    match outcome {
        Ok((est, converged, iterations)) => {
            report.converged = converged;
            report.iterations = iterations;
            report.f_est_hz = reported_frequencies(&est.frequencies, real);
            let (e2, einf) = match_frequencies(&report.f_true_hz, &report.f_est_hz);
            report.e2_khz2 = e2;
            report.einf_over_fs = einf / cfg.f_s;
            let grid = SamplingGrid::new(cfg.period(), cfg.n[0], 0.0);
            if let Ok(grid) = grid {
                let g = sample(model, &grid);
                let rec = recovered_waveform(&est, &grid_times(cfg, 0), real);
                report.mse_signal = mse(&g, &rec).unwrap_or(f64::INFINITY);
            }
            report.estimate = Some(est);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Rows `channel,n,t_seconds,g_true,y_folded,g_recovered` (real parts),
/// followed by the imaginary columns for complex captures.
pub fn waveform_csv(cap: &MultiChannelCapture, est: Option<&SpectralEstimate>) -> String {
    let m = &cap.measurements;
    let complex = m.complex;
    let mut s = String::from("channel,n,t_seconds,g_true,y_folded,g_recovered");
    if complex {
        s.push_str(",g_true_imag,y_folded_imag,g_recovered_imag");
    }
    s.push('\n');
    let nan = Complex64::new(f64::NAN, f64::NAN);
    for i in 0..4 {
        let times = grid_times(&m.config, i);
        let rec = est.map(|e| recovered_waveform(e, &times, !complex));
        for (n, &t) in times.iter().enumerate() {
            let g = cap.truth.as_ref().map_or(nan, |tr| tr.channel(i, m.config.n[i])[n]);
            let y = m.y[i][n];
            let r = rec.as_ref().map_or(nan, |r| r[n]);
            let _ = write!(s, "{i},{n},{t:.16e},{:.16e},{:.16e},{:.16e}", g.re, y.re, r.re);
            if complex {
                let _ = write!(s, ",{:.16e},{:.16e},{:.16e}", g.im, y.im, r.im);
            }
            s.push('\n');
        }
    }
    s
}

/// Rows `k,re_c,im_c,omega_rad_s` of the time-domain estimate.
pub fn phasor_csv(est: &SpectralEstimate) -> String {
    let mut s = String::from("k,re_c,im_c,omega_rad_s\n");
    for (k, (c, w)) in est.amplitudes.iter().zip(&est.frequencies).enumerate() {
        let _ = writeln!(s, "{k},{:.16e},{:.16e},{:.16e}", c.re, c.im, w);
    }
    s
}

fn table_spec(id: &str, freqs_khz: &[f64], n: usize, f_s: f64, t_d_us: f64, l0: f64, l1: f64, g_inf: f64) -> ExperimentSpec {
    let mut cap = CaptureConfig::ideal(l0, l1, t_d_us * 1e-6, f_s, n);
    cap.bit_depth = Some(6);
    ExperimentSpec {
        id: id.to_string(),
        model: ModelSpec {
            freqs_hz: freqs_khz.iter().map(|f| f * 1e3).collect(),
            amplitudes: vec![1.0; freqs_khz.len()],
            phases: None,
            real: true,
            peak_v: Some(g_inf),
        },
        capture: cap,
        method: Method::Robust,
        robust: RobustOverrides::default(),
        seed: 0,
        repetitions: 20,
    }
}

/// Low-frequency hardware rows: 6-bit, post-fold noise sd 0.11 V.
pub fn table_one() -> Vec<ExperimentSpec> {
    let rows = [
        (200, 877.0, 8.88),
        (200, 461.0, 8.92),
        (200, 211.0, 8.88),
        (100, 89.0, 8.90),
        (100, 79.0, 8.99),
        (100, 59.0, 8.97),
        (100, 41.0, 9.01),
        (100, 29.0, 8.82),
    ];
    rows.iter()
        .map(|&(n, fs, g)| {
            let mut s = table_spec(&format!("t1_fs{fs}"), &[0.4, 0.7, 1.0], n, fs, 200.0, 0.98, 1.88, g);
            s.capture.noise_sd = 0.11;
            s.capture.noise_placement = NoisePlacement::PostFold;
            s
        })
        .collect()
}

/// High-frequency hardware rows: 6-bit, fold jitter `0.05 lambda_i`.
pub fn table_two() -> Vec<ExperimentSpec> {
    let rows: [(&[f64], usize, f64, f64, f64, f64); 6] = [
        (&[4.0, 5.0, 6.0], 200, 877.0, 0.98, 1.88, 8.73),
        (&[5.0, 6.0, 7.0], 100, 179.0, 1.30, 1.46, 4.76),
        (&[5.0, 6.0, 7.0], 100, 79.0, 1.30, 1.46, 4.68),
        (&[5.0, 6.0, 7.0], 100, 29.0, 1.30, 1.46, 3.97),
        (&[5.0, 6.0, 7.0], 100, 17.0, 1.20, 1.45, 4.05),
        (&[5.0, 6.0, 7.0], 100, 11.0, 1.30, 1.46, 3.93),
    ];
    rows.iter()
        .map(|&(f, n, fs, l0, l1, g)| {
            let mut s = table_spec(&format!("t2_fs{fs}"), f, n, fs, 50.0, l0, l1, g);
            s.capture.fold_jitter = FoldJitter::Relative(0.05);
            s
        })
        .collect()
}

/// Random complex-exponential instance at the exact-recovery sample bound.
///
/// Drawn in units of `w_s`, so the same `seed` gives the same normalized
/// instance at every `f_s`.
pub fn random_exact_instance(seed: u64, f_s: f64) -> (SinusoidalModel, CaptureConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xe1));
    let ws = 2.0 * PI * f_s;
    let k = rng.random_range(1..=5usize);
    let (lo, hi) = ((0.1f64).ln(), (1e3f64).ln());
    let gap = 1e-3;
    let mut w: Vec<f64> = Vec::with_capacity(k);
    while w.len() < k {
        let mag = rng.random_range(lo..hi).exp();
        let x = if rng.random_bool(0.5) { mag } else { -mag };
        let nu = x - x.round();
        // keep aliases off the band edge, off zero and apart
        let edge = 0.5 - nu.abs();
        if nu.abs() < gap || edge < gap {
            continue;
        }
        if w.iter().any(|&y| {
            let d = (y - x) - (y - x).round();
            d.abs() < gap
        }) {
            continue;
        }
        w.push(x);
    }
    let wmax = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let t_d_norm = 0.9 * PI / (wmax * 2.0 * PI);
    let c: Vec<Complex64> = (0..k)
        .map(|_| {
            let a = rng.random_range((0.2f64).ln()..(1.5f64).ln()).exp();
            Complex64::from_polar(a, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let model = SinusoidalModel::new(c, w.iter().map(|x| x * ws).collect()).expect("distinct frequencies");
    let mut cfg = CaptureConfig::ideal(0.98, 1.88, t_d_norm / f_s, f_s, 2 * k + 1);
    cfg.n = [2 * k + 1, 2 * k + 1, k + 1, k + 1];
    (model, cfg)
}
