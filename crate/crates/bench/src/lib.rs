//! Fixtures shared by the benchmarks.

use usfmc_core::experiment::{simulate, table_one};
use usfmc_core::{Complex64, ExperimentSpec, Measurements, RobustConfig};

/// `table_one` row at `f_s` (Hz).
pub fn table_one_row(f_s: f64) -> ExperimentSpec {
    table_one().into_iter().find(|s| s.capture.f_s == f_s).expect("table-one rate")
}

/// Noiseless capture of a table-one row and its component count.
pub fn noiseless_capture(f_s: f64, seed: u64) -> (Measurements, usize) {
    let (model, cap) = simulate(&table_one_row(f_s).noiseless(), seed).expect("capture");
    (cap.measurements, model.k())
}

/// Quantized, noisy capture of a table-one row with its robust settings.
pub fn noisy_capture(f_s: f64, seed: u64) -> (Measurements, usize, RobustConfig) {
    let spec = table_one_row(f_s);
    let (model, cap) = simulate(&spec, seed).expect("capture");
    (cap.measurements, model.k(), spec.robust_config(seed))
}

/// True first differences of the four channels of a noisy capture, as the
/// joint fit sees them once every residue is known.
pub fn true_differences(f_s: f64, seed: u64) -> ([Vec<Complex64>; 4], usize, f64, RobustConfig) {
    let spec = table_one_row(f_s);
    let (model, cap) = simulate(&spec, seed).expect("capture");
    let cfg = &cap.measurements.config;
    let g = cap.truth.as_ref().expect("simulated truth").differences(cfg.n);
    (g, model.k(), cfg.period(), spec.robust_config(seed))
}
