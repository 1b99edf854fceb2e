//! Robust recovery: alternate a joint rational fit of the four channel
//! spectra (shared denominator) with closed-form residue refinement.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::acquisition::{finite_difference, CaptureConfig, Measurements};
use crate::exact::{
    aliased_frequency, estimate_amplitudes, min_root_gap, mode_matrix, prony_multi,
    SeparationTable, SpectralEstimate, DEFAULT_E_MAX,
};
use crate::numerics::{
    constrained_minimizer_gram, dft, expand, lstsq, roots, vandermonde, CMatrix, CVector,
};
use crate::signal::{derive_seed, quantize_grid};
use crate::{Error, Result};

/// `sigma = 2 alpha max(lambda0, lambda1) / (2^B - 1)`.
pub fn estimate_sigma(lambda0: f64, lambda1: f64, bits: u32, alpha: f64) -> f64 {
    2.0 * alpha * lambda0.max(lambda1) / ((1u64 << bits) as f64 - 1.0)
}

/// `alpha = 4` above 1 kHz (fold non-idealities dominate), else 2.
pub fn default_alpha(max_freq_hz: f64) -> f64 {
    if max_freq_hz > 1000.0 {
        4.0
    } else {
        2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustConfig {
    /// Distortion tolerance (volts).
    pub sigma: f64,
    pub alpha: f64,
    pub bits: u32,
    /// Inner iterations per initialization.
    pub j_max: usize,
    /// Initializations per fit.
    pub restarts: usize,
    pub outer_max: usize,
    /// Relative objective change that ends an inner run.
    pub tol_obj: f64,
    /// Roots closer than this are treated as clustered.
    pub tol_root: f64,
    pub e_max: i64,
    pub seed: u64,
}

impl RobustConfig {
    pub fn new(lambda0: f64, lambda1: f64, bits: u32, alpha: f64) -> Self {
        Self {
            sigma: estimate_sigma(lambda0, lambda1, bits, alpha),
            alpha,
            bits,
            j_max: 30,
            restarts: 15,
            outer_max: 20,
            tol_obj: 1e-10,
            tol_root: 1e-6,
            e_max: DEFAULT_E_MAX,
            seed: 0,
        }
    }

    /// Defaults for a capture: bit depth from the config (6 if unquantized)
    /// and `alpha` from the highest expected frequency.
    pub fn for_capture(cfg: &CaptureConfig, max_freq_hz: f64) -> Self {
        let mut c = Self::new(cfg.lambda0, cfg.lambda1, cfg.bit_depth.unwrap_or(6), default_alpha(max_freq_hz));
        c.seed = cfg.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || self.j_max == 0 || self.restarts == 0 || self.outer_max == 0 {
            return Err(Error::InvalidConfig("robust config needs sigma > 0 and nonzero iteration caps".into()));
        }
        Ok(())
    }
}

/// Denominator `h` (ascending powers of `z = exp(-j 2 pi m / M)`) and the
/// four numerators `q_i` of the joint rational fit.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalFitState {
    pub h: Vec<Complex64>,
    pub q: [Vec<Complex64>; 4],
    /// Initialization the normalization `h0^H h = 1` refers to.
    pub h0: Vec<Complex64>,
    pub iteration: usize,
    /// Frequency-domain objective `sum_i ||ghat_i - P_i / H||^2`.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidueVectors {
    pub u: [Vec<Complex64>; 4],
}

/// Result of one joint fit.
#[derive(Clone, Debug)]
pub struct JointFit {
    pub state: RationalFitState,
    pub roots: Vec<Complex64>,
    pub aliased: Vec<f64>,
    pub amplitudes: [Vec<Complex64>; 4],
    /// Re-synthesized `gbar_i[n] = sum_k c_{k,i} u_k^n`.
    pub model: [Vec<Complex64>; 4],
    /// `max(||m_0 - m_1||_inf, ||m_2 - m_3||_inf)` over real and imaginary parts.
    pub criterion: f64,
    /// Index of the winning initialization.
    pub restart: usize,
}

/// Soft clamp `T_sigma(x, y) = (x + sgn(y) min(|y|, sigma)) / 2`.
pub fn t_sigma(x: f64, y: f64, sigma: f64) -> f64 {
    let s = if y > 0.0 {
        1.0
    } else if y < 0.0 {
        -1.0
    } else {
        0.0
    };
    0.5 * (x + s * y.abs().min(sigma))
}

/// Relaxed residue for one sample of one pair, before quantization.
///
/// `g_a, g_b` are the fitted pair values, `v` the channel's difference and
/// `sign` is `+1` for the first channel of the pair, `-1` for the second.
pub fn relaxed_residue(g_a: f64, g_b: f64, v: f64, sign: f64, sigma: f64) -> f64 {
    t_sigma(g_a + g_b - 2.0 * v, sign * (g_a - g_b), sigma)
}

/// Closed-form residue update followed by projection onto `2 lambda_i Z`.
pub fn refine_residues(
    model: &[Vec<Complex64>; 4],
    v: &[Vec<Complex64>; 4],
    lambda0: f64,
    lambda1: f64,
    sigma: f64,
) -> Result<ResidueVectors> {
    for i in 0..4 {
        if model[i].len() != v[i].len() {
            return Err(Error::LengthMismatch { left: model[i].len(), right: v[i].len() });
        }
    }
    if model[0].len() != model[1].len() || model[2].len() != model[3].len() {
        return Err(Error::LengthMismatch { left: model[0].len(), right: model[1].len() });
    }
    let lam = [lambda0, lambda1, lambda0, lambda1];
    let mut u: [Vec<Complex64>; 4] = Default::default();
    for (a, b) in [(0usize, 1usize), (2, 3)] {
        for (i, sign) in [(a, 1.0), (b, -1.0)] {
            u[i] = (0..v[i].len())
                .map(|n| {
                    let (ga, gb, vi) = (model[a][n], model[b][n], v[i][n]);
                    let re = relaxed_residue(ga.re, gb.re, vi.re, sign, sigma);
                    let im = relaxed_residue(ga.im, gb.im, vi.im, sign, sigma);
                    Complex64::new(quantize_grid(re, lam[i]), quantize_grid(im, lam[i]))
                })
                .collect();
        }
    }
    Ok(ResidueVectors { u })
}

fn eval_asc(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &x| acc * z + x)
}

fn deriv_asc(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, (n, &x)| acc * z + x * n as f64)
}

/// Closed-form amplitudes of `P_i / H` for sequences of length `len`:
/// `c_k = -u_k P(1/u_k) / ((1 - u_k^len) H'(1/u_k))`.
///
/// Falls back to direct least squares against `gbar` when a root sits on the
/// DFT grid (`|1 - u_k^len| < 1e-10`).
pub fn amplitude_from_residue(
    h: &[Complex64],
    q: &[Complex64],
    u: &[Complex64],
    len: usize,
    gbar: &[Complex64],
) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(u.len());
    for &uk in u {
        let den = 1.0 - uk.powu(len as u32);
        let z = 1.0 / uk;
        let hp = deriv_asc(h, z);
        if den.norm() < 1e-10 || hp.norm() == 0.0 || !hp.is_finite() {
            return estimate_amplitudes(gbar, u);
        }
        out.push(-uk * eval_asc(q, z) / (den * hp));
    }
    Ok(out)
}

fn synthesize(u: &[Complex64], c: &[Complex64], len: usize) -> Vec<Complex64> {
    let theta = mode_matrix(u, len);
    (theta * CVector::from_column_slice(c)).iter().copied().collect()
}

fn pair_criterion(m: &[Vec<Complex64>; 4]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in [(0usize, 1usize), (2, 3)] {
        for (x, y) in m[a].iter().zip(&m[b]) {
            let d = x - y;
            worst = worst.max(d.re.abs()).max(d.im.abs());
        }
    }
    worst
}

/// Greedy joint periodogram pursuit: pick the peak of the summed
/// zero-padded periodograms of the four residuals, refit all picked modes by
/// least squares, repeat `k` times.
pub fn pursuit_roots(gbar: &[Vec<Complex64>; 4], k: usize) -> Vec<Complex64> {
    let m = gbar[0].len();
    let l = 16 * m;
    let fft = FftPlanner::new().plan_fft_forward(l);
    let mut sel: Vec<Complex64> = Vec::with_capacity(k);
    let mut resid = gbar.clone();
    for _ in 0..k {
        let mut power = vec![0.0; l];
        for r in &resid {
            let mut buf = vec![Complex64::new(0.0, 0.0); l];
            buf[..m].copy_from_slice(r);
            fft.process(&mut buf);
            for (p, x) in power.iter_mut().zip(&buf) {
                *p += x.norm_sqr();
            }
        }
        let idx = power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        // exp(-j 2 pi idx n / L) matches mode exp(j theta n) at theta = -2 pi idx / L
        sel.push(Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * idx as f64 / l as f64));
        let theta = mode_matrix(&sel, m);
        for (r, g) in resid.iter_mut().zip(gbar) {
            let gv = CVector::from_column_slice(g);
            if let Ok(c) = lstsq(&theta, &gv) {
                let fit = &theta * c;
                *r = (gv - fit).iter().copied().collect();
            }
        }
    }
    sel
}

/// Precomputed data of the frequency-domain problem.
struct FitProblem {
    k: usize,
    len: usize,
    spectra: [Vec<Complex64>; 4],
    /// `z_m^d` for `d = 0..=k`, row-major by `m`.
    powers: Vec<Complex64>,
    energy: f64,
}

struct Evaluation {
    objective: f64,
    q: [Vec<Complex64>; 4],
    /// Normal matrix of the projected system `(I - P_B) A`.
    gram: CMatrix,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// Classical Gram-Schmidt with one re-orthogonalization pass. Columns become
// orthonormal; returns the triangular factor or `None` when rank-deficient.
fn gram_schmidt(cols: &mut [Vec<Complex64>]) -> Option<CMatrix> {
    let k = cols.len();
    let mut r = CMatrix::zeros(k, k);
    let norm0 = cols.iter().map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>()).fold(0.0, f64::max).sqrt();
    for j in 0..k {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for _ in 0..2 {
            for (i, qi) in done.iter().enumerate() {
                let dot = qi.iter().zip(col.iter()).fold(ZERO, |acc, (a, b)| acc + a.conj() * b);
                for (x, y) in col.iter_mut().zip(qi) {
                    *x -= dot * y;
                }
                r[(i, j)] += dot;
            }
        }
        let n = col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 1e-13 * norm0) {
            return None;
        }
        for x in col.iter_mut() {
            *x /= n;
        }
        r[(j, j)] = Complex64::new(n, 0.0);
    }
    Some(r)
}

impl FitProblem {
    fn new(gbar: &[Vec<Complex64>; 4], k: usize) -> Self {
        let len = gbar[0].len();
        let spectra: [Vec<Complex64>; 4] = std::array::from_fn(|i| dft(&gbar[i]));
        let energy = spectra.iter().flatten().map(|x| x.norm_sqr()).sum();
        let v = vandermonde(len, k + 1);
        let powers = (0..len).flat_map(|m| (0..=k).map(move |d| (m, d))).map(|(m, d)| v[(m, d)]).collect();
        Self { k, len, spectra, powers, energy }
    }

    /// Objective at `h`, numerators, and the reduced system of the update.
    fn evaluate(&self, h: &CVector, with_system: bool) -> Result<Evaluation> {
        let (m, k) = (self.len, self.k);
        let p = k + 1;
        let l1: f64 = h.iter().map(|x| x.norm()).sum();
        let floor = 1e-12 * l1;
        let rinv: Vec<Complex64> = (0..m)
            .map(|n| {
                let zp = &self.powers[n * p..(n + 1) * p];
                let mut x = zp.iter().zip(h.iter()).fold(ZERO, |acc, (z, c)| acc + z * c);
                let r = x.norm();
                if r < floor {
                    x = if r > 0.0 { x * (floor / r) } else { Complex64::new(floor, 0.0) };
                }
                1.0 / x
            })
            .collect();
        let mut qcols: Vec<Vec<Complex64>> =
            (0..k).map(|c| (0..m).map(|n| rinv[n] * self.powers[n * p + c]).collect()).collect();
        let rb = gram_schmidt(&mut qcols).ok_or(Error::RestartNeeded)?;

        let mut objective = 0.0;
        let mut q: [Vec<Complex64>; 4] = Default::default();
        let mut w = vec![0.0; if with_system { m } else { 0 }];
        let mut gram = CMatrix::zeros(p, p);
        for i in 0..4 {
            let g = &self.spectra[i];
            let coef: Vec<Complex64> =
                qcols.iter().map(|qc| qc.iter().zip(g).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)).collect();
            q[i] = rb
                .solve_upper_triangular(&CVector::from_vec(coef))
                .map(|x| x.iter().copied().collect())
                .unwrap_or_else(|| vec![ZERO; k]);
            // scored on (h, q) itself; the back-solve can lose accuracy
            // that the projection would hide
            for n in 0..m {
                let zp = &self.powers[n * p..n * p + k];
                let pz = zp.iter().zip(&q[i]).fold(ZERO, |acc, (z, c)| acc + z * c);
                objective += (g[n] - rinv[n] * pz).norm_sqr();
            }
            if with_system {
                // A_i = diag(g R) V; gram of (I - QQ^H) A_i is A_i^H A_i - C_i^H C_i, C_i = Q^H A_i
                let mut c = vec![ZERO; k * p];
                for n in 0..m {
                    let y = g[n] * rinv[n];
                    w[n] += y.norm_sqr();
                    let zp = &self.powers[n * p..(n + 1) * p];
                    for (r, qc) in qcols.iter().enumerate() {
                        let t = qc[n].conj() * y;
                        for d in 0..p {
                            c[r * p + d] += t * zp[d];
                        }
                    }
                }
                for a in 0..p {
                    for b in a..p {
                        let s: Complex64 = (0..k).map(|r| c[r * p + a].conj() * c[r * p + b]).sum();
                        gram[(a, b)] -= s;
                    }
                }
            }
        }
        if with_system {
            // A^H diag(w) A over the unit-circle grid is Toeplitz in z^(b-a)
            let mut t = vec![ZERO; p];
            for n in 0..m {
                let zp = &self.powers[n * p..(n + 1) * p];
                for d in 0..p {
                    t[d] += zp[d] * w[n];
                }
            }
            for a in 0..p {
                for b in a..p {
                    gram[(a, b)] += t[b - a];
                    gram[(b, a)] = gram[(a, b)].conj();
                }
                gram[(a, a)].im = 0.0;
            }
        }
        Ok(Evaluation { objective, q, gram })
    }
}

fn normalized(h: Vec<Complex64>) -> Option<CVector> {
    let v = CVector::from_vec(h);
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        Some(v / Complex64::new(n, 0.0))
    } else {
        None
    }
}

fn components(
    gbar: &[Vec<Complex64>; 4],
    h: &[Complex64],
    q: &[Vec<Complex64>; 4],
    period: f64,
) -> Result<(Vec<Complex64>, [Vec<Complex64>; 4], [Vec<Complex64>; 4])> {
    let u = roots(h)?;
    if u.len() != h.len() - 1 {
        return Err(Error::RankDeficient);
    }
    let _ = period;
    let len = gbar[0].len();
    let mut amps: [Vec<Complex64>; 4] = Default::default();
    let mut model: [Vec<Complex64>; 4] = Default::default();
    for i in 0..4 {
        amps[i] = amplitude_from_residue(h, &q[i], &u, len, &gbar[i])?;
        model[i] = synthesize(&u, &amps[i], len);
    }
    Ok((u, amps, model))
}

/// Joint rational fit of four equal-length difference sequences sharing `k`
/// poles. `warm` adds the given denominator as an extra initialization.
pub fn joint_spectral_fit(
    gbar: &[Vec<Complex64>; 4],
    k: usize,
    period: f64,
    cfg: &RobustConfig,
    warm: Option<&[Complex64]>,
    salt: u64,
) -> Result<JointFit> {
    let len = gbar[0].len();
    if gbar.iter().any(|g| g.len() != len) {
        return Err(Error::InvalidConfig("joint fit needs four equal-length sequences".into()));
    }
    if k == 0 || len < 2 * k + 1 {
        return Err(Error::TooFewSamples { needed: 2 * k + 1, got: len });
    }
    cfg.validate()?;
    let problem = FitProblem::new(gbar, k);

    let mut inits: Vec<Vec<Complex64>> = Vec::with_capacity(cfg.restarts + 2);
    if let Ok(f) = prony_multi(&[&gbar[0], &gbar[1]], k) {
        inits.push(f.h);
    }
    inits.push(expand(&pursuit_roots(gbar, k)));
    if let Some(h) = warm {
        inits.push(h.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, salt));
    while inits.len() < cfg.restarts.max(1) + usize::from(warm.is_some()) + 1 {
        let u: Vec<Complex64> = (0..k)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
            .collect();
        inits.push(expand(&u));
    }

    let mut best: Option<(RationalFitState, usize)> = None;
    for (r, h_init) in inits.into_iter().enumerate() {
        let Some(h0) = normalized(h_init) else { continue };
        let Ok(state) = run_initialization(&problem, &h0, cfg, gbar, period) else { continue };
        let met = state.1;
        let state = state.0;
        let better = best.as_ref().is_none_or(|(b, _)| state.objective < b.objective);
        if better {
            best = Some((state, r));
        }
        if met {
            break;
        }
    }
    let (state, restart) = best.ok_or(Error::RestartNeeded)?;
    let (u, amplitudes, model) = components(gbar, &state.h, &state.q, period)?;
    let aliased = u.iter().map(|&z| aliased_frequency(z, period)).collect();
    let criterion = pair_criterion(&model);
    Ok(JointFit { state, roots: u, aliased, amplitudes, model, criterion, restart })
}

// One initialization: iterate the constrained update, keep the best
// objective; the flag reports that the pair criterion was met.
fn run_initialization(
    problem: &FitProblem,
    h0: &CVector,
    cfg: &RobustConfig,
    gbar: &[Vec<Complex64>; 4],
    period: f64,
) -> Result<(RationalFitState, bool)> {
    let mut h = h0.clone();
    let mut best: Option<RationalFitState> = None;
    let mut prev = f64::INFINITY;
    let mut met = false;
    for j in 0..cfg.j_max {
        let ev = problem.evaluate(&h, true)?;
        if !ev.objective.is_finite() {
            break;
        }
        let state = RationalFitState {
            h: h.iter().copied().collect(),
            q: ev.q.clone(),
            h0: h0.iter().copied().collect(),
            iteration: j,
            objective: ev.objective,
        };
        if best.as_ref().is_none_or(|b| state.objective < b.objective) {
            best = Some(state);
        }
        let small = ev.objective <= 1e-26 * problem.energy;
        let settled = (prev - ev.objective).abs() <= cfg.tol_obj * ev.objective;
        if small || settled {
            let b = best.as_ref().unwrap();
            if let Ok((u, _, model)) = components(gbar, &b.h, &b.q, period) {
                met = pair_criterion(&model) <= cfg.sigma && min_root_gap(&u) >= cfg.tol_root;
            }
            break;
        }
        if j + 1 == cfg.j_max {
            break;
        }
        prev = ev.objective;
        match constrained_minimizer_gram(&ev.gram, h0) {
            Ok((next, _)) => h = next,
            Err(_) => break,
        }
    }
    let best = best.ok_or(Error::RestartNeeded)?;
    if !met {
        if let Ok((u, _, model)) = components(gbar, &best.h, &best.q, period) {
            met = pair_criterion(&model) <= cfg.sigma && min_root_gap(&u) >= cfg.tol_root;
        }
    }
    Ok((best, met))
}

// Grid points differ by at least 2 lambda, so compare at lambda.
fn same_grid_points(a: &[Vec<Complex64>; 4], b: &[Vec<Complex64>; 4], lam: [f64; 2]) -> bool {
    (0..4).all(|i| {
        a[i].len() == b[i].len() && a[i].iter().zip(&b[i]).all(|(x, y)| (x - y).norm() < lam[i % 2])
    })
}

/// Outcome of the alternating scheme.
#[derive(Clone, Debug)]
pub struct RobustOutcome {
    pub estimate: SpectralEstimate,
    /// Pair criterion reached `sigma`.
    pub converged: bool,
    /// Outer iterations used.
    pub iterations: usize,
    pub criterion_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub residues: ResidueVectors,
    pub fit: RationalFitState,
}

/// Alternating recovery from a distorted capture.
pub fn recover_robust(m: &Measurements, k: usize, cfg: &RobustConfig) -> Result<RobustOutcome> {
    let c = &m.config;
    c.validate()?;
    cfg.validate()?;
    if c.n.iter().any(|&n| n != c.n[0]) {
        return Err(Error::InvalidConfig("robust recovery needs equal channel lengths".into()));
    }
    let d = finite_difference(m)?;
    let v = d.v;
    let table = SeparationTable::new(c.lambda0, c.lambda1, cfg.e_max)?;
    let gbar0 = crate::exact::unfold_all(&v, &table, m.complex, 0.0)?;
    let mut u: [Vec<Complex64>; 4] = std::array::from_fn(|i| {
        gbar0[i].iter().zip(&v[i]).map(|(g, x)| g - x).collect()
    });
    let period = c.period();
    let mut criterion_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut warm: Option<Vec<Complex64>> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut fit: Option<JointFit> = None;
    let mut fitted_current = false;

    for it in 0..cfg.outer_max {
        iterations = it + 1;
        let gbar: [Vec<Complex64>; 4] = std::array::from_fn(|i| {
            v[i].iter().zip(&u[i]).map(|(a, b)| a + b).collect()
        });
        let f = joint_spectral_fit(&gbar, k, period, cfg, warm.as_deref(), it as u64)?;
        criterion_trace.push(f.criterion);
        objective_trace.push(f.state.objective);
        warm = Some(f.state.h.clone());
        let crit = f.criterion;
        let model = f.model.clone();
        fit = Some(f);
        fitted_current = true;
        let next = refine_residues(&model, &v, c.lambda0, c.lambda1, cfg.sigma)?;
        if same_grid_points(&next.u, &u, [c.lambda0, c.lambda1]) {
            converged = crit <= cfg.sigma;
            break;
        }
        u = next.u;
        fitted_current = false;
    }

    if !fitted_current {
        let gbar: [Vec<Complex64>; 4] = std::array::from_fn(|i| {
            v[i].iter().zip(&u[i]).map(|(a, b)| a + b).collect()
        });
        let f = joint_spectral_fit(&gbar, k, period, cfg, warm.as_deref(), cfg.outer_max as u64)?;
        criterion_trace.push(f.criterion);
        objective_trace.push(f.state.objective);
        converged = f.criterion <= cfg.sigma;
        fit = Some(f);
    }
    let f = fit.ok_or(Error::RestartNeeded)?;
    let estimate = SpectralEstimate::from_parts(f.aliased.clone(), f.amplitudes.clone(), c.t_d, period)?;
    Ok(RobustOutcome {
        estimate,
        converged,
        iterations,
        criterion_trace,
        objective_trace,
        residues: ResidueVectors { u },
        fit: f.state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::capture;
    use crate::exact::recover_exact;
    use crate::signal::SinusoidalModel;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(estimate_sigma(1.0, 1.0, 1, 0.5), 1.0);
        assert!((estimate_sigma(0.98, 1.88, 6, 2.0) - 0.119365).abs() < 1e-6);
        assert!((estimate_sigma(1.30, 1.46, 6, 4.0) - 0.185397).abs() < 1e-6);
        assert_eq!(default_alpha(1000.0), 2.0);
        assert_eq!(default_alpha(7000.0), 4.0);
    }

    #[test]
    fn refine_with_equal_fits() {
        let g = vec![c(0.7, 0.0)];
        let v = vec![c(0.1, 0.0)];
        let model = [g.clone(), g.clone(), g.clone(), g.clone()];
        let vv = [v.clone(), v.clone(), v.clone(), v.clone()];
        let r = refine_residues(&model, &vv, 1.0, 1.5, 0.2).unwrap();
        assert_eq!(r.u[0][0].re, quantize_grid(0.5 * (1.4 - 0.2), 1.0));
        assert_eq!(r.u[1][0].re, quantize_grid(0.5 * (1.4 - 0.2), 1.5));
    }

    #[test]
    fn refine_clamps_large_gap() {
        let sigma = 0.2;
        let (ga, gb, v) = (5.0, 5.0 - 2.0 * sigma, 0.3);
        let eta = ga + gb - 2.0 * v;
        assert_eq!(relaxed_residue(ga, gb, v, 1.0, sigma), 0.5 * (eta + sigma));
        assert_eq!(relaxed_residue(ga, gb, v, -1.0, sigma), 0.5 * (eta - sigma));
    }

    #[test]
    fn amplitude_closed_form_single_mode() {
        // gbar[n] = u^n: DFT is (1 - u^M) / (1 - u z), so P = 1 - u^M, H = 1 - u z
        let u = Complex64::from_polar(1.0, 0.9);
        let m = 12;
        let g: Vec<Complex64> = (0..m).map(|n| u.powu(n)).collect();
        let h = [c(1.0, 0.0), -u];
        let q = [1.0 - u.powu(m)];
        let a = amplitude_from_residue(&h, &q, &[u], m as usize, &g).unwrap();
        assert!((a[0] - 1.0).norm() < 1e-10);
    }

    #[test]
    fn noiseless_joint_fit_two_modes() {
        let us = [Complex64::from_polar(1.0, 0.7), Complex64::from_polar(1.0, -1.9)];
        let amps = [[c(1.0, 0.5), c(-0.3, 2.0)], [c(1.0, 0.5), c(-0.3, 2.0)], [c(0.2, 1.0), c(2.0, 0.1)], [c(0.2, 1.0), c(2.0, 0.1)]];
        let gbar: [Vec<Complex64>; 4] = std::array::from_fn(|i| synthesize(&us, &amps[i], 15));
        let cfg = RobustConfig::new(0.98, 1.88, 6, 2.0);
        let f = joint_spectral_fit(&gbar, 2, 1.0, &cfg, None, 0).unwrap();
        for want in us {
            assert!(f.roots.iter().any(|r| (r - want).norm() < 1e-8));
        }
        assert!(f.state.iteration <= 5);
        for i in 0..4 {
            for (k, want) in us.iter().enumerate() {
                let j = f.roots.iter().position(|r| (r - want).norm() < 1e-8).unwrap();
                assert!((f.amplitudes[i][j] - amps[i][k]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn noiseless_robust_equals_exact() {
        let m = SinusoidalModel::real_sinusoids(&[400.0, 700.0, 1000.0], &[1.0; 3], &[0.2, 1.9, 4.4])
            .unwrap()
            .with_peak(8.82, 0.01, 20_000);
        let cap = capture(&m, &CaptureConfig::ideal(0.98, 1.88, 200e-6, 29.0, 100)).unwrap();
        let ex = recover_exact(&cap.measurements, 6).unwrap().sorted();
        let cfg = RobustConfig::new(0.98, 1.88, 6, 2.0);
        let rb = recover_robust(&cap.measurements, 6, &cfg).unwrap();
        assert!(rb.converged);
        assert_eq!(rb.iterations, 1, "{:?} {:?}", rb.criterion_trace, rb.objective_trace);
        assert!(rb.criterion_trace[0] < 1e-10);
        let est = rb.estimate.sorted();
        for k in 0..6 {
            assert!((est.frequencies[k] - ex.frequencies[k]).abs() < 1e-8 * ex.frequencies[k].abs().max(1.0));
            assert!((est.amplitudes[k] - ex.amplitudes[k]).norm() < 1e-8 * ex.amplitudes[k].norm().max(1.0));
        }
        assert!((est.frequencies[5] - 2.0 * PI * 1000.0).abs() / (2.0 * PI) < 1e-6);
    }
}
