//! Multi-channel modulo sampling and sub-Nyquist spectral estimation.
//!
//! A signal made of `K` complex exponentials is folded by two modulo ADCs
//! with thresholds `lambda0`, `lambda1`, each sampled on a base grid and on a
//! grid delayed by `T_d`. [`exact::recover_exact`] inverts noiseless
//! captures from `6K + 4` samples; [`robust::recover_robust`] alternates a
//! joint rational spectral fit with closed-form residue refinement for
//! quantized, noisy or jittered captures.

pub mod acquisition;
pub mod exact;
pub mod experiment;
pub mod numerics;
pub mod robust;
pub mod signal;

pub use num_complex::Complex64;

pub use acquisition::{
    capture, finite_difference, simulate_nonideal_fold, CaptureConfig, DifferenceStreams,
    FoldJitter, GroundTruth, Measurements, MultiChannelCapture, NoisePlacement,
};

pub use exact::{
    dealias, estimate_amplitudes, prony, recover_exact, separate_residues, unfold_channel,
    ResidueSpikes, SeparationTable, SpectralEstimate,
};
pub use experiment::{
    report_csv, run_experiment, run_repetitions, ExperimentSpec, Method, ModelSpec, RobustOverrides,
    RunReport, REPORT_HEADER,
};
pub use robust::{
    estimate_sigma, joint_spectral_fit, recover_robust, refine_residues, RationalFitState,
    ResidueVectors, RobustConfig, RobustOutcome,
};
pub use signal::{
    add_noise, centered_modulo, evaluate_signal, mse, quantize, sample, FoldThreshold,
    SamplingGrid, SinusoidalModel,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero polynomial")]
    ZeroPolynomial,
    #[error("rank deficient system (model order mismatch?)")]
    RankDeficient,
    #[error("singular normal matrix, restart needed")]
    RestartNeeded,
    #[error("thresholds ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("ambiguous residue pair at sample {0}")]
    Ambiguous(usize),
    #[error("clustered frequencies: root gap {0:e}")]
    ClusteredFrequencies(f64),
    #[error("phase undefined for component {0}")]
    UndefinedPhase(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
