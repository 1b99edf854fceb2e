use usfmc_core::acquisition::{from_csv, to_csv};
use usfmc_core::experiment::{phasor_csv, run_with_seed, simulate, table_one, table_two, waveform_csv};
use usfmc_core::{recover_exact, Measurements, Method};

#[test]
fn quantized_table_one_row_recovers() {
    let mut spec = table_one().into_iter().find(|s| s.capture.f_s == 29.0).unwrap();
    spec.capture.noise_sd = 0.0;
    for seed in 0..3 {
        let r = run_with_seed(&spec, seed);
        assert!(r.e2_khz2 <= 1e-4, "seed {seed}: E2 {}", r.e2_khz2);
        assert!(r.converged);
        assert_eq!(r.f_est_hz.len(), 3);
    }
}

#[test]
fn jittered_table_two_row_within_sensitivity_bound() {
    let spec = table_two().into_iter().find(|s| s.capture.f_s == 179.0).unwrap();
    for seed in 0..3 {
        let r = run_with_seed(&spec, seed);
        assert!(r.einf_over_fs < 0.0588, "seed {seed}: {}", r.einf_over_fs);
    }
}

#[test]
fn noiseless_runs_are_exact_with_either_method() {
    let base = table_one().into_iter().find(|s| s.capture.f_s == 59.0).unwrap().noiseless();
    for method in [Method::Exact, Method::Robust] {
        let spec = usfmc_core::ExperimentSpec { method, ..base.clone() };
        let r = run_with_seed(&spec, 5);
        assert!(r.e2_khz2 < 1e-16, "{method:?}: {}", r.e2_khz2);
        assert!(r.mse_signal < 1e-16, "{method:?}: {}", r.mse_signal);
        assert_eq!(r.iterations, 1);
    }
}

#[test]
fn csv_capture_recovers_like_memory_capture() {
    let spec = table_one().into_iter().find(|s| s.capture.f_s == 877.0).unwrap().noiseless();
    let (_, cap) = simulate(&spec, 2).unwrap();
    let (y, complex) = from_csv(&to_csv(&cap.measurements)).unwrap();
    let loaded = Measurements { y, config: cap.measurements.config.clone(), complex };
    assert_eq!(loaded, cap.measurements);
    let a = recover_exact(&cap.measurements, 6).unwrap();
    let b = recover_exact(&loaded, 6).unwrap();
    assert_eq!(a, b);
}

#[test]
fn waveform_file_mse_matches_report() {
    let spec = table_one().into_iter().find(|s| s.capture.f_s == 29.0).unwrap();
    let r = run_with_seed(&spec, 1);
    let (_, cap) = simulate(&spec, 1).unwrap();
    let est = r.estimate.as_ref().unwrap();
    let text = waveform_csv(&cap, Some(est));
    let mut acc = 0.0;
    let mut count = 0usize;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] != "0" {
            continue;
        }
        let g: f64 = f[3].parse().unwrap();
        let rec: f64 = f[5].parse().unwrap();
        acc += (g - rec).powi(2);
        count += 1;
    }
    assert_eq!(count, spec.capture.n[0]);
    let file_mse = acc / count as f64;
    assert!((file_mse - r.mse_signal).abs() <= 1e-12 * r.mse_signal.max(1.0));
    assert_eq!(phasor_csv(est).lines().count(), 1 + 6);
}
