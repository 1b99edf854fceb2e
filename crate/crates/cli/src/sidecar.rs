//! Metadata written next to a capture CSV: acquisition settings and the
//! resolved recovery settings, plus the generating model for scoring.
//! Recovery reads only `capture` and `recovery`.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use usfmc_core::{
    CaptureConfig, Complex64, FoldJitter, NoisePlacement, RobustConfig, SinusoidalModel,
};

use crate::config::Placement;

#[derive(Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub spec_id: String,
    pub seed: u64,
    pub capture: CaptureMeta,
    pub recovery: RecoveryMeta,
    pub truth: TruthMeta,
}

#[derive(Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CaptureMeta {
    pub f_s_hz: f64,
    #[serde(rename = "T_d_s")]
    pub t_d_s: f64,
    pub lambda0_v: f64,
    pub lambda1_v: f64,
    pub n_per_channel: [usize; 4],
    pub bits: Option<u32>,
    pub noise_sd_v: f64,
    pub noise_placement: Placement,
    pub fold_jitter_v: Option<f64>,
    pub fold_jitter_rel: Option<f64>,
    pub complex: bool,
}

#[derive(Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RecoveryMeta {
    /// Complex exponentials to recover.
    pub k: usize,
    pub sigma_v: f64,
    pub alpha: f64,
    pub bits: u32,
    pub j_max: usize,
    pub restarts: usize,
    pub outer_max: usize,
    pub e_max: i64,
}

/// Generating model; evaluation only.
#[derive(Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruthMeta {
    pub real: bool,
    pub omega_rad_s: Vec<f64>,
    pub c_re_v: Vec<f64>,
    pub c_im_v: Vec<f64>,
}

impl CaptureMeta {
    pub fn from_config(c: &CaptureConfig, complex: bool) -> Self {
        let (fold_jitter_v, fold_jitter_rel) = match c.fold_jitter {
            FoldJitter::Volts(v) => (Some(v), None),
            FoldJitter::Relative(r) => (None, Some(r)),
        };
        Self {
            f_s_hz: c.f_s,
            t_d_s: c.t_d,
            lambda0_v: c.lambda0,
            lambda1_v: c.lambda1,
            n_per_channel: c.n,
            bits: c.bit_depth,
            noise_sd_v: c.noise_sd,
            noise_placement: match c.noise_placement {
                NoisePlacement::PostFold => Placement::PostFold,
                NoisePlacement::PreFold => Placement::PreFold,
            },
            fold_jitter_v,
            fold_jitter_rel,
            complex,
        }
    }

    pub fn to_config(&self, seed: u64) -> Result<CaptureConfig> {
        let mut c = CaptureConfig::ideal(self.lambda0_v, self.lambda1_v, self.t_d_s, self.f_s_hz, self.n_per_channel[0]);
        c.n = self.n_per_channel;
        c.bit_depth = self.bits;
        c.noise_sd = self.noise_sd_v;
        c.noise_placement = match self.noise_placement {
            Placement::PostFold => NoisePlacement::PostFold,
            Placement::PreFold => NoisePlacement::PreFold,
        };
        c.fold_jitter = match (self.fold_jitter_v, self.fold_jitter_rel) {
            (Some(_), Some(_)) => bail!("sidecar gives both fold_jitter_v and fold_jitter_rel"),
            (Some(v), None) => FoldJitter::Volts(v),
            (None, Some(r)) => FoldJitter::Relative(r),
            (None, None) => FoldJitter::default(),
        };
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

impl RecoveryMeta {
    pub fn from_config(k: usize, r: &RobustConfig) -> Self {
        Self {
            k,
            sigma_v: r.sigma,
            alpha: r.alpha,
            bits: r.bits,
            j_max: r.j_max,
            restarts: r.restarts,
            outer_max: r.outer_max,
            e_max: r.e_max,
        }
    }

    pub fn to_config(&self, c: &CaptureConfig, seed: u64) -> RobustConfig {
        let mut r = RobustConfig::new(c.lambda0, c.lambda1, self.bits, self.alpha);
        r.sigma = self.sigma_v;
        r.j_max = self.j_max;
        r.restarts = self.restarts;
        r.outer_max = self.outer_max;
        r.e_max = self.e_max;
        r.seed = seed;
        r
    }
}

impl TruthMeta {
    pub fn from_model(m: &SinusoidalModel) -> Self {
        Self {
            real: m.is_real_valued(),
            omega_rad_s: m.frequencies().to_vec(),
            c_re_v: m.amplitudes().iter().map(|c| c.re).collect(),
            c_im_v: m.amplitudes().iter().map(|c| c.im).collect(),
        }
    }

    pub fn to_model(&self) -> Result<SinusoidalModel> {
        if self.c_re_v.len() != self.omega_rad_s.len() || self.c_im_v.len() != self.omega_rad_s.len() {
            bail!("truth amplitude and frequency counts differ");
        }
        let c: Vec<Complex64> = self.c_re_v.iter().zip(&self.c_im_v).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let w = self.omega_rad_s.clone();
        Ok(if self.real { SinusoidalModel::from_conjugate_pairs(c, w)? } else { SinusoidalModel::new(c, w)? })
    }
}
