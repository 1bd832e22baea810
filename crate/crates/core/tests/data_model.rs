use earlystop::data_model::*;
use earlystop::loss::sigmoid;
use nalgebra::DVector;
use proptest::prelude::*;

fn spectrum_and_coeffs(max_d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_d).prop_flat_map(|d| {
        (
            prop::collection::vec(0.0f64..4.0, d),
            prop::collection::vec(-3.0f64..3.0, d),
        )
            .prop_map(|(mut l, c)| {
                l.sort_by(|a, b| b.total_cmp(a));
                (l, c)
            })
    })
}

/// Selection sort by energy, comparing every pair explicitly.
fn oracle_permutation(energy: &[f64]) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..energy.len()).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            if energy[remaining[k]] > energy[remaining[best]] {
                best = k;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

proptest! {
    #[test]
    fn resort_matches_selection_sort_oracle((l, c) in spectrum_and_coeffs(6)) {
        let cov = CovarianceModel::new(l.clone()).unwrap();
        let coeffs = DVector::from_vec(c.clone());
        let pi = resort_indices(&cov, &coeffs).unwrap();
        let energy: Vec<f64> = l.iter().zip(&c).map(|(a, b)| a * b * b).collect();
        prop_assert_eq!(pi, oracle_permutation(&energy));
    }

    #[test]
    fn split_is_sigma_orthogonal_and_exact((l, c) in spectrum_and_coeffs(12), frac in 0.0f64..=1.0) {
        let cov = CovarianceModel::new(l).unwrap();
        let p = TrueParameter::new(&cov, DVector::from_vec(c)).unwrap();
        let k = (frac * p.dim() as f64).round() as usize;
        let (head, tail) = split_parameter(&p, k).unwrap();
        prop_assert_eq!(&(&head + &tail), p.coeffs());
        prop_assert_eq!(cov.inner(&head, &tail).unwrap(), 0.0);
        let support: Vec<usize> = p.pi()[..k].to_vec();
        for i in 0..p.dim() {
            if !support.contains(&i) {
                prop_assert_eq!(head[i], 0.0);
            }
        }
    }

    #[test]
    fn tail_norm_is_nonincreasing((l, c) in spectrum_and_coeffs(12)) {
        let cov = CovarianceModel::new(l).unwrap();
        let p = TrueParameter::new(&cov, DVector::from_vec(c)).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=p.dim() {
            let (_, tail) = split_parameter(&p, k).unwrap();
            let t = sigma_norm(&tail, &cov).unwrap();
            prop_assert!(t <= prev * (1.0 + 1e-12));
            prev = t;
        }
        prop_assert_eq!(prev, 0.0);
    }

    #[test]
    fn sigma_norm_of_identity_is_euclidean(c in prop::collection::vec(-5.0f64..5.0, 1..10)) {
        let cov = build_spectrum(&SpectrumSpec::Identity { scale: 1.0 }, c.len()).unwrap();
        let w = DVector::from_vec(c);
        let s = sigma_norm(&w, &cov).unwrap();
        prop_assert!((s - w.norm()).abs() <= 1e-12 * (1.0 + s));
    }
}

#[test]
fn labels_follow_the_logistic_link_per_decile() {
    let cov = CovarianceModel::new(vec![1.0, 0.5, 0.25]).unwrap();
    let p = TrueParameter::new(&cov, DVector::from_vec(vec![1.5, -1.0, 2.0])).unwrap();
    let n = 100_000;
    let data = sample_dataset(&cov, &p, n, 2024).unwrap();
    let scores = data.scores(p.coeffs()).unwrap();
    let mut pairs: Vec<(f64, f64)> = scores.iter().copied().zip(data.labels().iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for bin in pairs.chunks(n / 10) {
        let m = bin.len() as f64;
        let rate = bin.iter().filter(|(_, y)| *y > 0.0).count() as f64 / m;
        // expected head rate: average link over the bin, which matches the midpoint
        // rule up to the bin's curvature; standard error from the binomial variance
        let expected = bin.iter().map(|(s, _)| sigmoid(*s)).sum::<f64>() / m;
        let se = (expected * (1.0 - expected) / m).sqrt();
        assert!((rate - expected).abs() <= 5.0 * se, "rate {rate} vs {expected} (se {se})");
    }
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let cov = build_spectrum(&SpectrumSpec::PowerLaw { exponent: 1.5 }, 40).unwrap();
    let p = TrueParameter::from_spec(&cov, &ParameterSpec::HeadConstant { k: 5, value: 1.0 }).unwrap();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| sample_dataset(&cov, &p, 300, 11).unwrap());
    let b = wide.install(|| sample_dataset(&cov, &p, 300, 11).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.seed(), Some(11));
}

#[test]
fn source_capacity_configuration_round_trips_through_json() {
    let spec: SpectrumSpec = serde_json::from_str(r#"{"kind":"source_capacity","a":2.0,"b":1.5}"#).unwrap();
    let cov = build_spectrum(&spec, 50).unwrap();
    assert!(cov.tail_trace(10) < cov.trace());
    let err = build_spectrum(&SpectrumSpec::SourceCapacity { a: 1.0, b: 2.0 }, 5).unwrap_err();
    assert!(err.to_string().contains("diverges"));
}
