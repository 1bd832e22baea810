use earlystop::data_model::*;
use earlystop::gd::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn random_data(n: usize, d: usize, signal: f64, seed: u64) -> (CovarianceModel, TrueParameter, Dataset) {
    let cov = build_spectrum(&SpectrumSpec::PowerLaw { exponent: 1.0 }, d).unwrap();
    let k = d.min(3);
    let p = TrueParameter::from_spec(&cov, &ParameterSpec::Sparse { k, sigma_norm: signal }).unwrap();
    let data = sample_dataset(&cov, &p, n, seed).unwrap();
    (cov, p, data)
}

/// Neumaier-compensated mean of `max(-t, 0) + ln(1 + e^{-|t|})`.
fn compensated_risk(w: &DVector<f64>, data: &Dataset) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..data.n() {
        let t: f64 = data.labels()[i] * data.features().row(i).iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>();
        let v = (-t).max(0.0) + (-t.abs()).exp().ln_1p();
        let s = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
        sum = s;
    }
    (sum + comp) / data.n() as f64
}

#[test]
fn risk_matches_compensated_oracle() {
    for seed in 0..5 {
        let (_, _, data) = random_data(150, 30, 2.0, seed);
        let w = DVector::from_fn(30, |i, _| ((i * 7 + seed as usize) % 5) as f64 - 2.0);
        let r = empirical_risk(&w, &data).unwrap();
        let oracle = compensated_risk(&w, &data);
        assert!((r - oracle).abs() <= 1e-13 * oracle.max(1.0), "{r} vs {oracle}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let (_, _, data) = random_data(60, 12, 1.5, 9);
    let w = DVector::from_fn(12, |i, _| 0.3 * (i as f64).sin());
    let g = empirical_gradient(&w, &data).unwrap();
    let h = 1e-5;
    for j in 0..12 {
        let mut plus = w.clone();
        let mut minus = w.clone();
        plus[j] += h;
        minus[j] -= h;
        let fd = (empirical_risk(&plus, &data).unwrap() - empirical_risk(&minus, &data).unwrap()) / (2.0 * h);
        assert!((fd - g[j]).abs() <= 1e-6 * g.norm().max(1e-3), "coord {j}: {fd} vs {}", g[j]);
    }
}

#[test]
fn one_point_path_follows_scalar_recurrence() {
    let data = Dataset::from_rows(&[vec![1.0, 0.0]], &[1.0]).unwrap();
    let (eta, _) = default_stepsize(&data).unwrap();
    let horizon = 100_000;
    let trace = run_gd(&data, &GdConfig::new(eta, horizon), &[], None, &[]).unwrap();
    // scalar oracle: v_{t+1} = v_t + eta * e^{-v_t} / (1 + e^{-v_t})
    let mut v = 0.0f64;
    let mut recs = trace.records.iter().peekable();
    for t in 0..=horizon {
        if let Some(r) = recs.peek() {
            if r.t == t {
                assert_eq!(r.w[1], 0.0);
                assert!((r.w[0] - v).abs() <= 1e-12 * v.max(1.0));
                recs.next();
            }
        }
        v += eta / (1.0 + v.exp());
    }
    assert!(trace.risk_history.windows(2).all(|p| p[1] < p[0]));
    // logarithmic growth: e^{w} ~ eta t, so w_t - ln(eta t) stays bounded
    for r in trace.records.iter().filter(|r| r.t >= 100) {
        let gap = r.w[0] - (eta * r.t as f64).ln();
        assert!(gap.abs() < 1.0, "t = {}: gap {gap}", r.t);
    }
}

#[test]
fn stepsize_concentrates_near_trace_on_figure_one_design() {
    let cov = build_spectrum(&SpectrumSpec::PowerLaw { exponent: 2.0 }, 2000).unwrap();
    let p = TrueParameter::from_spec(&cov, &ParameterSpec::HeadConstant { k: 100, value: 1.0 }).unwrap();
    let data = sample_dataset(&cov, &p, 1000, 1).unwrap();
    let (eta, beta) = default_stepsize(&data).unwrap();
    assert_eq!(eta, 1.0 / beta);
    // Var ||x||^2 = 2 sum lambda_i^2 ~ 2.16, so the mean over 1000 rows has sd ~ 0.05
    assert!((beta - cov.trace()).abs() < 0.25, "beta {beta} vs trace {}", cov.trace());
}

#[test]
fn separable_data_drives_risk_and_gradient_to_zero() {
    let (_, _, data) = random_data(20, 80, 1.0, 4);
    let (eta, _) = default_stepsize(&data).unwrap();
    let trace = run_gd(&data, &GdConfig::new(eta, 20_000), &[], None, &[]).unwrap();
    let tail: Vec<&Record> = trace.records.iter().filter(|r| r.t >= 64).collect();
    assert!(tail.windows(2).all(|p| p[1].w_norm > p[0].w_norm));
    assert!(tail.windows(2).all(|p| p[1].grad_norm < p[0].grad_norm));
    assert!(trace.last().emp_risk < 1e-2 * trace.records[1].emp_risk);
    assert_eq!(data.training_error(&trace.last().w).unwrap(), 0.0);
}

#[test]
fn trace_exports_round_trip() {
    let (_, _, data) = random_data(10, 5, 1.0, 2);
    let (eta, _) = default_stepsize(&data).unwrap();
    let trace = run_gd(&data, &GdConfig::new(eta, 100), &[StoppingRule::CrossThreshold { threshold: 0.5 }], None, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("trace.csv");
    trace.write_csv(&csv_path).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with("t,eta_t,emp_risk,grad_norm,w_norm\n"));
    assert_eq!(text.lines().count(), trace.records.len() + 1);
    let bin = dir.path().join("iterates.bin");
    trace.write_iterates(&bin).unwrap();
    let back = read_iterates(&bin).unwrap();
    assert_eq!(back.len(), trace.records.len());
    for ((t, w), r) in back.iter().zip(&trace.records) {
        assert_eq!(*t, r.t);
        assert_eq!(w, &r.w);
    }
    let json = trace.summary_json();
    assert_eq!(json["stop_events"][0]["rule"], "cross_threshold_5e-1");
}

fn instance() -> impl Strategy<Value = (usize, usize, f64, u64)> {
    (2usize..40, 2usize..60, 0.0f64..4.0, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_norm_is_bounded_by_mean_row_norm((n, d, s, seed) in instance(), scale in 0.0f64..5.0) {
        let (_, _, data) = random_data(n, d, s, seed);
        let w = DVector::from_fn(d, |i, _| scale * ((i as f64) * 1.3).cos());
        let g = empirical_gradient(&w, &data).unwrap();
        let bound: f64 = data.features().row_iter().map(|r| r.norm()).sum::<f64>() / n as f64;
        prop_assert!(g.norm() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn descent_and_implicit_bias_hold((n, d, s, seed) in instance()) {
        let (_, p, data) = random_data(n, d, s, seed);
        let (eta, _) = default_stepsize(&data).unwrap();
        let comparators: Vec<Comparator> = (0..5u64)
            .map(|j| {
                let u = DVector::from_fn(d, |i, _| ((i as u64 * 31 + j * 17 + seed % 97) % 13) as f64 / 4.0 - 1.5);
                Comparator::new(format!("u{j}"), u * (j as f64 + 0.5))
            })
            .chain([Comparator::new("truth", p.coeffs().clone())])
            .collect();
        let trace = run_gd(&data, &GdConfig::new(eta, 2000), &[StoppingRule::CrossHead { k: 1 }], Some(&p), &comparators).unwrap();
        prop_assert!(trace.descent_violations.is_empty());
        for c in &trace.comparator_checks {
            prop_assert!(c.residual >= -1e-9, "{} at t = {}: {}", c.label, c.t, c.residual);
        }
        // norm control just before the head-crossing time
        if let Some(t) = trace.stop_events[0].t.filter(|t| *t > 0) {
            let head = p.head(1).unwrap();
            let w_prev = &trace.record_at(t - 1).unwrap().w;
            prop_assert!((w_prev - &head).norm() <= head.norm() + 1e-9);
        }
    }
}

#[test]
fn all_zero_features_use_unit_stepsize() {
    let data = Dataset::new(DMatrix::zeros(3, 4), DVector::from_vec(vec![1.0, -1.0, 1.0])).unwrap();
    assert_eq!(default_stepsize(&data).unwrap(), (1.0, 1.0));
}

#[test]
fn wide_data_matches_primal_recursion() {
    // d > n takes the row-space route internally; compare with w <- w - eta grad
    for (n, d) in [(15, 40), (40, 15)] {
        let (_, _, data) = random_data(n, d, 2.0, 11);
        let (eta, _) = default_stepsize(&data).unwrap();
        let steps = 3000;
        let trace = run_gd(&data, &GdConfig::new(eta, steps).with_record(RecordSchedule::Every { step: 500 }), &[], None, &[]).unwrap();
        let mut w = DVector::zeros(d);
        for t in 0..=steps {
            if t % 500 == 0 {
                let r = trace.record_at(t).unwrap();
                assert!((&r.w - &w).norm() <= 1e-11 * w.norm().max(1.0), "t = {t}");
                assert!((r.emp_risk - empirical_risk(&w, &data).unwrap()).abs() <= 1e-13);
                let g = empirical_gradient(&w, &data).unwrap();
                assert!((r.grad_norm - g.norm()).abs() <= 1e-9 * g.norm().max(1e-6));
            }
            w -= eta * empirical_gradient(&w, &data).unwrap();
        }
    }
}
