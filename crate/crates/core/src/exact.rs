//! Exact recovery: residue separation across the two thresholds, then
//! Prony on the unfolded differences and delay-based de-aliasing.

use num_complex::Complex64;

use crate::acquisition::{finite_difference, Measurements};
use crate::numerics::{lstsq, roots, CMatrix, CVector};
use crate::signal::{phase, SinusoidalModel};
use crate::{Error, Result};

/// Fold-count bound per sample difference; covers `||g||_inf` up to about
/// `9 max(lambda)`.
pub const DEFAULT_E_MAX: i64 = 10;

/// Sparse residue of one channel part: spikes `2 lambda e` at positions `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueSpikes {
    pub channel: usize,
    pub lambda: f64,
    /// `(n, e)` with strictly increasing `n` and `e != 0`.
    pub spikes: Vec<(usize, i64)>,
}

impl ResidueSpikes {
    pub fn from_counts(channel: usize, lambda: f64, counts: &[i64]) -> Self {
        let spikes = counts
            .iter()
            .enumerate()
            .filter(|(_, &e)| e != 0)
            .map(|(n, &e)| (n, e))
            .collect();
        Self { channel, lambda, spikes }
    }

    pub fn to_sequence(&self, len: usize) -> Vec<f64> {
        let mut u = vec![0.0; len];
        for &(n, e) in &self.spikes {
            if n < len {
                u[n] = 2.0 * self.lambda * e as f64;
            }
        }
        u
    }
}

/// Sorted dictionary of `2 lambda_b e_b - 2 lambda_a e_a`, `|e| <= e_max`.
#[derive(Clone, Debug)]
pub struct SeparationTable {
    lambda_a: f64,
    lambda_b: f64,
    e_max: i64,
    entries: Vec<(f64, i64, i64)>,
    min_gap: f64,
}

impl SeparationTable {
    pub fn new(lambda_a: f64, lambda_b: f64, e_max: i64) -> Result<Self> {
        if !(lambda_a > 0.0 && lambda_b > 0.0) || e_max < 1 {
            return Err(Error::InvalidConfig("separation needs lambda > 0 and e_max >= 1".into()));
        }
        let mut entries = Vec::with_capacity(((2 * e_max + 1) * (2 * e_max + 1)) as usize);
        for ea in -e_max..=e_max {
            for eb in -e_max..=e_max {
                let d = 2.0 * lambda_b * eb as f64 - 2.0 * lambda_a * ea as f64;
                entries.push((d, ea, eb));
            }
        }
        entries.sort_by(|x, y| x.0.total_cmp(&y.0));
        let min_gap = entries.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);
        let scale = lambda_a.max(lambda_b);
        if min_gap <= 1e-12 * scale {
            return Err(Error::IllConditioned(format!(
                "lambda ratio {} repeats a value within |e| <= {e_max}",
                lambda_a / lambda_b
            )));
        }
        Ok(Self { lambda_a, lambda_b, e_max, entries, min_gap })
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn e_max(&self) -> i64 {
        self.e_max
    }

    pub fn lambdas(&self) -> (f64, f64) {
        (self.lambda_a, self.lambda_b)
    }

    /// Nearest entry to `d` and its index.
    fn nearest_index(&self, d: f64) -> usize {
        let i = self.entries.partition_point(|e| e.0 < d);
        if i == 0 {
            0
        } else if i == self.entries.len() || (d - self.entries[i - 1].0) <= (self.entries[i].0 - d) {
            i - 1
        } else {
            i
        }
    }

    /// `(e_a, e_b)` minimizing `|d - (2 lambda_b e_b - 2 lambda_a e_a)|`.
    pub fn nearest(&self, d: f64) -> (i64, i64) {
        let e = self.entries[self.nearest_index(d)];
        (e.1, e.2)
    }

    /// Per-sample fold counts for `d = v_a - v_b`.
    ///
    /// `distortion` bounds the perturbation of `d`; the table gap must exceed
    /// four times it, and a second entry within `distortion` of `d` is an
    /// ambiguity error.
    pub fn separate(&self, v_a: &[f64], v_b: &[f64], distortion: f64) -> Result<(Vec<i64>, Vec<i64>)> {
        if v_a.len() != v_b.len() {
            return Err(Error::LengthMismatch { left: v_a.len(), right: v_b.len() });
        }
        if self.min_gap <= 4.0 * distortion {
            return Err(Error::IllConditioned(format!(
                "table gap {:.3e} <= 4 x distortion {:.3e}",
                self.min_gap, distortion
            )));
        }
        let mut ea = Vec::with_capacity(v_a.len());
        let mut eb = Vec::with_capacity(v_a.len());
        for (n, (a, b)) in v_a.iter().zip(v_b).enumerate() {
            let d = a - b;
            let i = self.nearest_index(d);
            if distortion > 0.0 {
                let near = |j: usize| (self.entries[j].0 - d).abs() <= distortion;
                if (i > 0 && near(i - 1)) || (i + 1 < self.entries.len() && near(i + 1)) {
                    return Err(Error::Ambiguous(n));
                }
            }
            ea.push(self.entries[i].1);
            eb.push(self.entries[i].2);
        }
        Ok((ea, eb))
    }
}

/// Split the residues of channels 0 and 1 from their first differences.
pub fn separate_residues(
    v_a: &[f64],
    v_b: &[f64],
    lambda_a: f64,
    lambda_b: f64,
    e_max: i64,
) -> Result<(ResidueSpikes, ResidueSpikes)> {
    let table = SeparationTable::new(lambda_a, lambda_b, e_max)?;
    let (ea, eb) = table.separate(v_a, v_b, 0.0)?;
    Ok((ResidueSpikes::from_counts(0, lambda_a, &ea), ResidueSpikes::from_counts(1, lambda_b, &eb)))
}

/// `v + sum_l 2 lambda e_l delta[n - n_l]`.
pub fn unfold_channel(v: &[f64], spikes: &ResidueSpikes) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    for &(n, e) in &spikes.spikes {
        if n >= out.len() {
            return Err(Error::LengthMismatch { left: n, right: out.len() });
        }
        out[n] += 2.0 * spikes.lambda * e as f64;
    }
    Ok(out)
}

/// Annihilating filter `h` (with `h[0] = 1`) and its roots.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnihilatingFilter {
    pub h: Vec<Complex64>,
    pub roots: Vec<Complex64>,
}

/// Prony on a single sequence.
pub fn prony(gbar: &[Complex64], k: usize) -> Result<AnnihilatingFilter> {
    prony_multi(&[gbar], k)
}

/// Prony with the Toeplitz rows of several sequences stacked; all share the
/// same modes.
pub fn prony_multi(seqs: &[&[Complex64]], k: usize) -> Result<AnnihilatingFilter> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be >= 1".into()));
    }
    let rows: usize = seqs.iter().map(|s| s.len().saturating_sub(k)).sum();
    if rows < k {
        let have = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        return Err(Error::TooFewSamples { needed: 2 * k, got: have });
    }
    let mut a = CMatrix::zeros(rows, k);
    let mut b = CVector::zeros(rows);
    let mut r = 0;
    for s in seqs {
        for n in k..s.len() {
            for m in 1..=k {
                a[(r, m - 1)] = s[n - m];
            }
            b[r] = -s[n];
            r += 1;
        }
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 || sv.min() <= 1e-11 * smax {
        return Err(Error::RankDeficient);
    }
    let x = lstsq(&a, &b)?;
    let mut h = Vec::with_capacity(k + 1);
    h.push(Complex64::new(1.0, 0.0));
    h.extend(x.iter().copied());
    let roots = roots(&h)?;
    Ok(AnnihilatingFilter { h, roots })
}

/// `theta[n, k] = u_k^n`.
pub(crate) fn mode_matrix(u: &[Complex64], len: usize) -> CMatrix {
    let mut m = CMatrix::zeros(len, u.len());
    for (k, &uk) in u.iter().enumerate() {
        let mut p = Complex64::new(1.0, 0.0);
        for n in 0..len {
            m[(n, k)] = p;
            p *= uk;
        }
    }
    m
}

pub(crate) fn min_root_gap(u: &[Complex64]) -> f64 {
    let mut g = f64::INFINITY;
    for i in 0..u.len() {
        for j in 0..i {
            g = g.min((u[i] - u[j]).norm());
        }
    }
    g
}

/// Least-squares fit of `gbar[n] = sum_k c_k u_k^n`.
pub fn estimate_amplitudes(gbar: &[Complex64], u: &[Complex64]) -> Result<Vec<Complex64>> {
    let gap = min_root_gap(u);
    if gap < 1e-6 {
        return Err(Error::ClusteredFrequencies(gap));
    }
    if gbar.len() < u.len() {
        return Err(Error::TooFewSamples { needed: u.len(), got: gbar.len() });
    }
    let theta = mode_matrix(u, gbar.len());
    let c = lstsq(&theta, &CVector::from_column_slice(gbar))?;
    Ok(c.iter().copied().collect())
}

/// Wrap an angular frequency into `(-w_s/2, w_s/2]`.
pub fn canonical_band(w: f64, omega_s: f64) -> f64 {
    let mut v = w - omega_s * (w / omega_s).round();
    if v <= -omega_s / 2.0 {
        v += omega_s;
    } else if v > omega_s / 2.0 {
        v -= omega_s;
    }
    v
}

/// Aliased angular frequency of a root, `arg(u) / T`.
pub fn aliased_frequency(u: Complex64, period: f64) -> f64 {
    u.arg() / period
}

/// `w_k = nu_k + m w_s` with `m = round((arg(c2/c0)/T_d - nu_k) / w_s)`.
pub fn dealias(nu: &[f64], c0: &[Complex64], c2: &[Complex64], t_d: f64, omega_s: f64) -> Result<Vec<f64>> {
    if nu.len() != c0.len() || nu.len() != c2.len() {
        return Err(Error::LengthMismatch { left: nu.len(), right: c0.len().min(c2.len()) });
    }
    let scale = c0.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    nu.iter()
        .zip(c0.iter().zip(c2))
        .enumerate()
        .map(|(k, (&v, (&a, &b)))| {
            if a.norm() < 1e-12 * scale || a.norm() == 0.0 {
                return Err(Error::UndefinedPhase(k));
            }
            let phi = (b / a).arg();
            let m = ((phi / t_d - v) / omega_s).round();
            Ok(v + m * omega_s)
        })
        .collect()
}

/// Time-domain amplitudes `c_k = c_{k,0} / (exp(j w_k T) - 1)`.
pub fn time_amplitudes(freqs: &[f64], c0: &[Complex64], period: f64) -> Vec<Complex64> {
    freqs
        .iter()
        .zip(c0)
        .map(|(&w, &c)| c / (Complex64::from_polar(1.0, phase(w, period)) - 1.0))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEstimate {
    /// `nu_k` in `(-w_s/2, w_s/2]` (rad/s).
    pub aliased: Vec<f64>,
    /// `c_{k,i}` of the first-difference sequences.
    pub channel_amplitudes: [Vec<Complex64>; 4],
    /// De-aliased `w_k` (rad/s).
    pub frequencies: Vec<f64>,
    /// Time-domain `c_k`.
    pub amplitudes: Vec<Complex64>,
}

impl SpectralEstimate {
    pub fn from_parts(
        aliased: Vec<f64>,
        channel_amplitudes: [Vec<Complex64>; 4],
        t_d: f64,
        period: f64,
    ) -> Result<Self> {
        let omega_s = 2.0 * std::f64::consts::PI / period;
        let frequencies = dealias(&aliased, &channel_amplitudes[0], &channel_amplitudes[2], t_d, omega_s)?;
        let amplitudes = time_amplitudes(&frequencies, &channel_amplitudes[0], period);
        Ok(Self { aliased, channel_amplitudes, frequencies, amplitudes })
    }

    /// Components reordered by ascending frequency.
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.frequencies.len()).collect();
        idx.sort_by(|&a, &b| self.frequencies[a].total_cmp(&self.frequencies[b]));
        let pick_f = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_c = |v: &[Complex64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            aliased: pick_f(&self.aliased),
            channel_amplitudes: std::array::from_fn(|i| pick_c(&self.channel_amplitudes[i])),
            frequencies: pick_f(&self.frequencies),
            amplitudes: pick_c(&self.amplitudes),
        }
    }

    pub fn model(&self) -> Result<SinusoidalModel> {
        SinusoidalModel::new(self.amplitudes.clone(), self.frequencies.clone())
    }
}

fn parts(x: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().map(|z| z.re).collect(), x.iter().map(|z| z.im).collect())
}

/// Range unfolding of both channel pairs; returns `gbar_i = v_i + u_i`.
pub(crate) fn unfold_all(
    v: &[Vec<Complex64>; 4],
    table: &SeparationTable,
    complex: bool,
    distortion: f64,
) -> Result<[Vec<Complex64>; 4]> {
    let (la, lb) = table.lambdas();
    let mut out: [Vec<Complex64>; 4] = Default::default();
    for (a, b) in [(0usize, 1usize), (2, 3)] {
        let len = v[a].len().min(v[b].len());
        let (ar, ai) = parts(&v[a][..len]);
        let (br, bi) = parts(&v[b][..len]);
        let (ea, eb) = table.separate(&ar, &br, distortion)?;
        let ua = ResidueSpikes::from_counts(a, la, &ea).to_sequence(v[a].len());
        let ub = ResidueSpikes::from_counts(b, lb, &eb).to_sequence(v[b].len());
        let (ua_i, ub_i) = if complex {
            let (ea, eb) = table.separate(&ai, &bi, distortion)?;
            (
                ResidueSpikes::from_counts(a, la, &ea).to_sequence(v[a].len()),
                ResidueSpikes::from_counts(b, lb, &eb).to_sequence(v[b].len()),
            )
        } else {
            (vec![0.0; v[a].len()], vec![0.0; v[b].len()])
        };
        out[a] = v[a].iter().enumerate().map(|(n, z)| z + Complex64::new(ua[n], ua_i[n])).collect();
        out[b] = v[b].iter().enumerate().map(|(n, z)| z + Complex64::new(ub[n], ub_i[n])).collect();
    }
    Ok(out)
}

/// Noiseless recovery of `K` components from a four-channel capture.
pub fn recover_exact(m: &Measurements, k: usize) -> Result<SpectralEstimate> {
    recover_exact_with(m, k, DEFAULT_E_MAX)
}

pub fn recover_exact_with(m: &Measurements, k: usize, e_max: i64) -> Result<SpectralEstimate> {
    let cfg = &m.config;
    cfg.validate()?;
    cfg.validate_exact(k)?;
    let d = finite_difference(m)?;
    let table = SeparationTable::new(cfg.lambda0, cfg.lambda1, e_max)?;
    let scale = cfg.lambda0.max(cfg.lambda1);
    let gbar = unfold_all(&d.v, &table, m.complex, 1e-9 * scale)?;
    let filter = prony_multi(&[&gbar[0], &gbar[1]], k)?;
    let u = filter.roots;
    let t = cfg.period();
    let aliased: Vec<f64> = u.iter().map(|&u| aliased_frequency(u, t)).collect();
    let mut amps: [Vec<Complex64>; 4] = Default::default();
    for i in 0..4 {
        amps[i] = estimate_amplitudes(&gbar[i], &u)?;
    }
    SpectralEstimate::from_parts(aliased, amps, cfg.t_d, t)
}
