//! Experiment files: a TOML document with one `[[experiment]]` table per spec.
//! Every physical quantity carries its unit in the key name.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use usfmc_core::experiment::{table_one, table_two};
use usfmc_core::{
    CaptureConfig, ExperimentSpec, FoldJitter, Method, ModelSpec, NoisePlacement, RobustOverrides,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: Vec<ExperimentEntry>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    PostFold,
    PreFold,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Exact,
    Robust,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Exact => Method::Exact,
            MethodName::Robust => Method::Robust,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustEntry {
    pub alpha: Option<f64>,
    pub sigma_v: Option<f64>,
    pub j_max: Option<usize>,
    pub restarts: Option<usize>,
    pub outer_max: Option<usize>,
    pub e_max: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEntry {
    pub id: String,
    pub f_hz: Vec<f64>,
    /// Defaults to 1 V per component.
    pub amplitudes_v: Option<Vec<f64>>,
    /// Drawn from the run seed when absent.
    pub phases_rad: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub real: bool,
    pub peak_v: Option<f64>,
    /// Samples per channel; `n_per_channel` sets them individually.
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub n_per_channel: Option<[usize; 4]>,
    pub f_s_hz: f64,
    #[serde(rename = "T_d_us")]
    pub t_d_us: f64,
    pub lambda0_v: f64,
    pub lambda1_v: f64,
    pub bits: Option<u32>,
    #[serde(default)]
    pub noise_sd_v: f64,
    #[serde(default)]
    pub noise_placement: Placement,
    pub fold_jitter_v: Option<f64>,
    pub fold_jitter_rel: Option<f64>,
    pub method: Option<MethodName>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub repetitions: usize,
    #[serde(default)]
    pub robust: RobustEntry,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

impl ExperimentEntry {
    pub fn to_spec(&self) -> Result<ExperimentSpec> {
        let k = self.f_hz.len();
        if k == 0 {
            bail!("{}: f_hz is empty", self.id);
        }
        let n = match (self.n, self.n_per_channel) {
            (Some(n), None) => [n; 4],
            (None, Some(n)) => n,
            _ => bail!("{}: give exactly one of N and n_per_channel", self.id),
        };
        let fold_jitter = match (self.fold_jitter_v, self.fold_jitter_rel) {
            (None, None) => FoldJitter::default(),
            (Some(v), None) => FoldJitter::Volts(v),
            (None, Some(r)) => FoldJitter::Relative(r),
            _ => bail!("{}: give at most one of fold_jitter_v and fold_jitter_rel", self.id),
        };
        let mut capture = CaptureConfig::ideal(self.lambda0_v, self.lambda1_v, self.t_d_us * 1e-6, self.f_s_hz, n[0]);
        capture.n = n;
        capture.bit_depth = self.bits;
        capture.noise_sd = self.noise_sd_v;
        capture.noise_placement = match self.noise_placement {
            Placement::PostFold => NoisePlacement::PostFold,
            Placement::PreFold => NoisePlacement::PreFold,
        };
        capture.fold_jitter = fold_jitter;
        capture.validate().with_context(|| format!("experiment {}", self.id))?;
        let r = &self.robust;
        Ok(ExperimentSpec {
            id: self.id.clone(),
            model: ModelSpec {
                freqs_hz: self.f_hz.clone(),
                amplitudes: self.amplitudes_v.clone().unwrap_or_else(|| vec![1.0; k]),
                phases: self.phases_rad.clone(),
                real: self.real,
                peak_v: self.peak_v,
            },
            capture,
            method: self.method.map_or(Method::Robust, Method::from),
            robust: RobustOverrides {
                alpha: r.alpha,
                sigma: r.sigma_v,
                j_max: r.j_max,
                restarts: r.restarts,
                outer_max: r.outer_max,
                e_max: r.e_max,
            },
            seed: self.seed,
            repetitions: self.repetitions,
        })
    }
}

pub fn parse_specs(text: &str) -> Result<Vec<ExperimentSpec>> {
    let file: ConfigFile = toml::from_str(text).context("parsing experiment file")?;
    if file.experiment.is_empty() {
        bail!("no [[experiment]] tables");
    }
    let specs = file.experiment.iter().map(ExperimentEntry::to_spec).collect::<Result<Vec<_>>>()?;
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|t| t.id == s.id) {
            bail!("duplicate experiment id {}", s.id);
        }
    }
    Ok(specs)
}

/// `table1` and `table2` name the built-in hardware tables; anything else
/// is a path.
pub fn load_specs(spec: &str) -> Result<Vec<ExperimentSpec>> {
    match spec {
        "table1" => Ok(table_one()),
        "table2" => Ok(table_two()),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            parse_specs(&text)
        }
    }
}
