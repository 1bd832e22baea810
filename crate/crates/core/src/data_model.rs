//! Gaussian-design data model: covariance spectra, true parameters and
//! well-specified logistic samples.
//!
//! The covariance is diagonal in the canonical basis, so a parameter's
//! coordinates are its coordinates in the eigenbasis.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::loss::sigmoid;

/// How the covariance eigenvalues are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumSpec {
    /// `lambda_i = i^{-exponent}`.
    PowerLaw { exponent: f64 },
    /// Source/capacity pair: `lambda_i = i^{-a}` and `lambda_i w_i^2 = i^{-b}`.
    SourceCapacity { a: f64, b: f64 },
    /// Every eigenvalue equal to `scale` (1 when omitted).
    Identity {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `k` unit eigenvalues followed by a flat tail of total trace `tail_trace`.
    Spiked { k: usize, tail_trace: f64 },
    Explicit { eigenvalues: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

/// Diagonal covariance `Sigma = diag(lambda_1, ..., lambda_d)` with nonincreasing entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    eigenvalues: Vec<f64>,
}

impl CovarianceModel {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("covariance dimension must be positive".into()));
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidArgument(
                "eigenvalues must be finite and nonnegative".into(),
            ));
        }
        if eigenvalues.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::InvalidArgument("eigenvalues must be nonincreasing".into()));
        }
        Ok(Self { eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Mass `sum_{i > k} lambda_i` beyond the first `k` eigenvalues.
    pub fn tail_trace(&self, k: usize) -> f64 {
        self.eigenvalues.iter().skip(k).sum()
    }

    pub fn top_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Number of strictly positive eigenvalues.
    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|l| **l > 0.0).count()
    }

    /// `<u, Sigma v>`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_len(self.dim(), u.len())?;
        check_len(self.dim(), v.len())?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(l, (a, b))| l * a * b)
            .sum())
    }
}

pub fn build_spectrum(spec: &SpectrumSpec, d: usize) -> Result<CovarianceModel> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension d must be positive".into()));
    }
    let eigenvalues = match spec {
        SpectrumSpec::PowerLaw { exponent } => {
            if !exponent.is_finite() || *exponent < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "power-law exponent must be nonnegative, got {exponent}"
                )));
            }
            (1..=d).map(|i| (i as f64).powf(-exponent)).collect()
        }
        SpectrumSpec::SourceCapacity { a, b } => {
            if !(*a > 1.0 && *b > 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "source/capacity exponents need a > 1 and b > 1 (got a = {a}, b = {b}); \
                     otherwise the trace or the Sigma-norm of w* diverges as d grows"
                )));
            }
            (1..=d).map(|i| (i as f64).powf(-a)).collect()
        }
        SpectrumSpec::Identity { scale } => {
            if !(*scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidArgument("identity scale must be positive".into()));
            }
            vec![*scale; d]
        }
        SpectrumSpec::Spiked { k, tail_trace } => {
            if *k > d || (*k < d && !(*tail_trace > 0.0 && tail_trace.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "spiked spectrum needs k <= d and a positive tail trace (k = {k}, d = {d}, tail = {tail_trace})"
                )));
            }
            let tail = tail_trace / (d - k).max(1) as f64;
            (0..d).map(|i| if i < *k { 1.0 } else { tail }).collect()
        }
        SpectrumSpec::Explicit { eigenvalues } => {
            check_len(d, eigenvalues.len())?;
            eigenvalues.clone()
        }
    };
    CovarianceModel::new(eigenvalues)
}

/// How the true parameter `w*` is constructed (coordinates in the eigenbasis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterSpec {
    Zero,
    /// `w*_i = value` on the first `k` coordinates, zero afterwards.
    HeadConstant { k: usize, value: f64 },
    /// `Sigma^{1/2} w*` supported on the first `k` coordinates with equal
    /// entries and Sigma-norm `sigma_norm`.
    Sparse { k: usize, sigma_norm: f64 },
    /// `lambda_i w_i^2 = i^{-b}`.
    SourceCapacity { b: f64 },
    Explicit { coeffs: Vec<f64> },
}

/// The true parameter together with its resorted index and Sigma-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameter {
    coeffs: DVector<f64>,
    pi: Vec<usize>,
    sigma_norm: f64,
}

impl TrueParameter {
    pub fn new(cov: &CovarianceModel, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("w* must be finite".into()));
        }
        let pi = resort_indices(cov, &coeffs)?;
        let sigma_norm = sigma_norm(&coeffs, cov)?;
        Ok(Self {
            coeffs,
            pi,
            sigma_norm,
        })
    }

    pub fn from_spec(cov: &CovarianceModel, spec: &ParameterSpec) -> Result<Self> {
        let d = cov.dim();
        let lambdas = cov.eigenvalues();
        let coeffs = match spec {
            ParameterSpec::Zero => DVector::zeros(d),
            ParameterSpec::HeadConstant { k, value } => {
                check_range(*k, d)?;
                DVector::from_fn(d, |i, _| if i < *k { *value } else { 0.0 })
            }
            ParameterSpec::Sparse { k, sigma_norm } => {
                check_range(*k, d)?;
                if *k == 0 || lambdas[*k - 1] <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "sparse w* needs k >= 1 and positive eigenvalues on its support".into(),
                    ));
                }
                let per = sigma_norm / (*k as f64).sqrt();
                DVector::from_fn(d, |i, _| if i < *k { per / lambdas[i].sqrt() } else { 0.0 })
            }
            ParameterSpec::SourceCapacity { b } => {
                if *b <= 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "source exponent must satisfy b > 1, got {b}"
                    )));
                }
                DVector::from_fn(d, |i, _| {
                    let l = lambdas[i];
                    if l > 0.0 {
                        ((i as f64 + 1.0).powf(-b) / l).sqrt()
                    } else {
                        0.0
                    }
                })
            }
            ParameterSpec::Explicit { coeffs } => {
                check_len(d, coeffs.len())?;
                DVector::from_vec(coeffs.clone())
            }
        };
        Self::new(cov, coeffs)
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// Zero-based resorted index: `lambda_{pi[i]} w_{pi[i]}^2` is nonincreasing in `i`.
    pub fn pi(&self) -> &[usize] {
        &self.pi
    }

    pub fn sigma_norm(&self) -> f64 {
        self.sigma_norm
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn head(&self, k: usize) -> Result<DVector<f64>> {
        Ok(split_parameter(self, k)?.0)
    }
}

fn check_range(k: usize, d: usize) -> Result<()> {
    if k > d {
        Err(Error::InvalidArgument(format!("index k = {k} exceeds dimension {d}")))
    } else {
        Ok(())
    }
}

/// Orders coordinates by `lambda_i w_i^2`, largest first; ties keep the lower index first.
pub fn resort_indices(cov: &CovarianceModel, coeffs: &DVector<f64>) -> Result<Vec<usize>> {
    check_len(cov.dim(), coeffs.len())?;
    let energy: Vec<f64> = cov
        .eigenvalues()
        .iter()
        .zip(coeffs.iter())
        .map(|(l, c)| l * c * c)
        .collect();
    let mut pi: Vec<usize> = (0..energy.len()).collect();
    // slice::sort_by is stable, which gives the lowest-index tie-break
    pi.sort_by(|&i, &j| energy[j].total_cmp(&energy[i]));
    Ok(pi)
}

/// Splits `w*` into the part on its top-`k` resorted coordinates and the remainder.
pub fn split_parameter(
    param: &TrueParameter,
    k: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = param.dim();
    check_range(k, d)?;
    let mut head = DVector::zeros(d);
    let mut tail = param.coeffs.clone();
    for &i in &param.pi[..k] {
        head[i] = param.coeffs[i];
        tail[i] = 0.0;
    }
    Ok((head, tail))
}

/// `||w||_Sigma`.
pub fn sigma_norm(w: &DVector<f64>, cov: &CovarianceModel) -> Result<f64> {
    Ok(cov.inner(w, w)?.sqrt())
}

/// Features and +-1 labels. Rows of `features` are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        check_len(features.nrows(), labels.len())?;
        if labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
            return Err(Error::InvalidArgument("labels must be exactly +1 or -1".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        Ok(Self {
            features,
            labels,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(features, DVector::from_column_slice(labels))
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n() == 0
    }

    /// Scores `x_i^T w` for every sample.
    pub fn scores(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.d(), w.len())?;
        Ok(&self.features * w)
    }

    /// `y_i x_i^T w` for every sample.
    pub fn margins(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.d(), w.len())?;
        Ok((&self.features * w).component_mul(&self.labels))
    }

    /// `(1/n) sum_i ||x_i||^2`.
    pub fn mean_squared_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.features.norm_squared() / self.n() as f64
    }

    pub fn max_row_norm(&self) -> f64 {
        self.features
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max)
    }

    /// Gram matrix `X X^T`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.features * self.features.transpose()
    }

    /// Fraction of samples with `y_i x_i^T w <= 0`.
    pub fn training_error(&self, w: &DVector<f64>) -> Result<f64> {
        let m = self.margins(w)?;
        Ok(m.iter().filter(|v| **v <= 0.0).count() as f64 / self.n().max(1) as f64)
    }

    /// Writes `y, x_1, ..., x_d` rows with a header line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.d()).map(|j| format!("x_{j}")));
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![format!("{}", self.labels[i])];
            rec.extend(self.features.row(i).iter().map(|v| format!("{v:e}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut vals = rec.iter().map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number {s:?}: {e}")))
            });
            let y = vals
                .next()
                .ok_or_else(|| Error::InvalidArgument("empty csv row".into()))??;
            labels.push(y);
            rows.push(vals.collect::<Result<Vec<f64>>>()?);
        }
        Self::from_rows(&rows, &labels)
    }
}

/// Deterministic per-row random stream derived from `(seed, stream)`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` samples with `x ~ N(0, Sigma)` and `P(y = 1 | x) = sigmoid(x^T w*)`.
///
/// Row `i` uses its own ChaCha stream, so the output does not depend on the
/// number of worker threads.
pub fn sample_dataset(
    cov: &CovarianceModel,
    param: &TrueParameter,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be positive".into()));
    }
    check_len(cov.dim(), param.dim())?;
    let d = cov.dim();
    let scales: Vec<f64> = cov.eigenvalues().iter().map(|l| l.sqrt()).collect();
    let w_star = param.coeffs();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let x: Vec<f64> = scales
                .iter()
                .map(|s| s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let score: f64 = x.iter().zip(w_star.iter()).map(|(a, b)| a * b).sum();
            let u: f64 = rng.random();
            let y = if u < sigmoid(score) { 1.0 } else { -1.0 };
            (x, y)
        })
        .collect();
    let features = DMatrix::from_fn(n, d, |i, j| rows[i].0[j]);
    let labels = DVector::from_iterator(n, rows.iter().map(|r| r.1));
    Ok(Dataset::new(features, labels)?.with_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cov(l: &[f64]) -> CovarianceModel {
        CovarianceModel::new(l.to_vec()).unwrap()
    }

    #[test]
    fn power_law_spectrum() {
        let c = build_spectrum(&SpectrumSpec::PowerLaw { exponent: 2.0 }, 3).unwrap();
        assert_eq!(c.eigenvalues()[0], 1.0);
        assert_eq!(c.eigenvalues()[1], 0.25);
        assert_relative_eq!(c.eigenvalues()[2], 1.0 / 9.0, epsilon = 1e-16);
    }

    #[test]
    fn identity_and_explicit_spectra() {
        let c = build_spectrum(&SpectrumSpec::Identity { scale: 1.0 }, 3).unwrap();
        assert_eq!(c.eigenvalues(), &[1.0, 1.0, 1.0]);
        let e = build_spectrum(
            &SpectrumSpec::Explicit {
                eigenvalues: vec![0.5, 0.5, 0.1],
            },
            3,
        )
        .unwrap();
        assert_eq!(e.eigenvalues(), &[0.5, 0.5, 0.1]);
        let bad = build_spectrum(
            &SpectrumSpec::Explicit {
                eigenvalues: vec![0.1, 0.5],
            },
            2,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn spectrum_rejects_bad_inputs() {
        assert!(build_spectrum(&SpectrumSpec::PowerLaw { exponent: 2.0 }, 0).is_err());
        let err = build_spectrum(&SpectrumSpec::SourceCapacity { a: 1.0, b: 2.0 }, 10)
            .unwrap_err()
            .to_string();
        assert!(err.contains("diverges"), "{err}");
        assert!(build_spectrum(&SpectrumSpec::SourceCapacity { a: 2.0, b: 0.5 }, 10).is_err());
        assert!(build_spectrum(&SpectrumSpec::SourceCapacity { a: 2.0, b: 3.0 }, 10).is_ok());
        assert!(build_spectrum(&SpectrumSpec::Spiked { k: 11, tail_trace: 1.0 }, 10).is_err());
        assert!(build_spectrum(&SpectrumSpec::Spiked { k: 2, tail_trace: 0.0 }, 10).is_err());
    }

    #[test]
    fn spiked_spectrum_splits_trace() {
        let c = build_spectrum(&SpectrumSpec::Spiked { k: 2, tail_trace: 4.0 }, 10).unwrap();
        assert_eq!(&c.eigenvalues()[..3], &[1.0, 1.0, 0.5]);
        assert!((c.tail_trace(2) - 4.0).abs() < 1e-15);
        let full = build_spectrum(&SpectrumSpec::Spiked { k: 3, tail_trace: 0.0 }, 3).unwrap();
        assert_eq!(full.trace(), 3.0);
    }

    #[test]
    fn resort_examples() {
        let c = cov(&[1.0, 0.25]);
        let pi = resort_indices(&c, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(pi, vec![1, 0]);
        let pi = resort_indices(&c, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(pi, vec![0, 1]);
        assert!(resort_indices(&c, &DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn split_edges() {
        let c = cov(&[1.0, 0.5, 0.25, 0.1]);
        let p = TrueParameter::new(&c, DVector::from_vec(vec![0.3, -2.0, 0.0, 1.0])).unwrap();
        let (h, t) = split_parameter(&p, 0).unwrap();
        assert_eq!(h, DVector::zeros(4));
        assert_eq!(&t, p.coeffs());
        let (h, t) = split_parameter(&p, 4).unwrap();
        assert_eq!(&h, p.coeffs());
        assert_eq!(t, DVector::zeros(4));
        assert!(split_parameter(&p, 5).is_err());
        // energies 0.09, 2, 0, 0.1 -> pi = (1, 3, 0, 2)
        assert_eq!(p.pi(), &[1, 3, 0, 2]);
        let (h, _) = split_parameter(&p, 2).unwrap();
        assert_eq!(h.as_slice(), &[0.0, -2.0, 0.0, 1.0]);
    }

    #[test]
    fn figure_one_parameter_head() {
        let c = build_spectrum(&SpectrumSpec::PowerLaw { exponent: 2.0 }, 2000).unwrap();
        let p = TrueParameter::from_spec(&c, &ParameterSpec::HeadConstant { k: 100, value: 1.0 })
            .unwrap();
        let (h, t) = split_parameter(&p, 100).unwrap();
        assert_eq!(h.iter().filter(|v| **v == 1.0).count(), 100);
        assert_eq!(h.iter().filter(|v| **v != 0.0).count(), 100);
        assert_eq!(t, DVector::zeros(2000));
    }

    #[test]
    fn sigma_norm_examples() {
        let c = cov(&[1.0, 0.25]);
        assert_eq!(sigma_norm(&DVector::zeros(2), &c).unwrap(), 0.0);
        assert_relative_eq!(
            sigma_norm(&DVector::from_vec(vec![1.0, 2.0]), &c).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        let id = cov(&[1.0; 3]);
        let w = DVector::from_vec(vec![3.0, -4.0, 12.0]);
        assert_relative_eq!(sigma_norm(&w, &id).unwrap(), w.norm(), epsilon = 1e-15);
        assert!(sigma_norm(&DVector::zeros(3), &c).is_err());
    }

    #[test]
    fn sparse_parameter_has_requested_sigma_norm() {
        let c = build_spectrum(&SpectrumSpec::PowerLaw { exponent: 1.5 }, 50).unwrap();
        let p = TrueParameter::from_spec(&c, &ParameterSpec::Sparse { k: 4, sigma_norm: 1.3 })
            .unwrap();
        assert_relative_eq!(p.sigma_norm(), 1.3, epsilon = 1e-14);
        assert_eq!(p.coeffs().iter().filter(|v| **v != 0.0).count(), 4);
    }

    #[test]
    fn source_capacity_parameter_energy() {
        let c = build_spectrum(&SpectrumSpec::SourceCapacity { a: 2.0, b: 3.0 }, 20).unwrap();
        let p = TrueParameter::from_spec(&c, &ParameterSpec::SourceCapacity { b: 3.0 }).unwrap();
        for i in 0..20 {
            let e = c.eigenvalues()[i] * p.coeffs()[i].powi(2);
            assert_relative_eq!(e, (i as f64 + 1.0).powf(-3.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = cov(&[1.0, 0.5, 0.2]);
        let p = TrueParameter::new(&c, DVector::from_vec(vec![1.0, -1.0, 0.5])).unwrap();
        let a = sample_dataset(&c, &p, 50, 17).unwrap();
        let b = sample_dataset(&c, &p, 50, 17).unwrap();
        assert_eq!(a, b);
        let other = sample_dataset(&c, &p, 50, 18).unwrap();
        assert_ne!(a.features(), other.features());
        assert_eq!(a.seed(), Some(17));
    }

    #[test]
    fn zero_parameter_gives_fair_labels() {
        let c = cov(&[1.0, 1.0]);
        let p = TrueParameter::new(&c, DVector::zeros(2)).unwrap();
        let n = 10_000;
        let data = sample_dataset(&c, &p, n, 3).unwrap();
        let mean = data.labels().sum() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "mean label {mean}");
    }

    #[test]
    fn strong_signal_labels_follow_sign() {
        // single spike with ||w*||_Sigma = 100; E sigmoid(100 |g|) is about 0.992
        let c = cov(&[1.0, 0.5]);
        let p = TrueParameter::new(&c, DVector::from_vec(vec![100.0, 0.0])).unwrap();
        let data = sample_dataset(&c, &p, 10_000, 5).unwrap();
        let agree = data
            .margins(p.coeffs())
            .unwrap()
            .iter()
            .filter(|m| **m > 0.0)
            .count() as f64
            / 10_000.0;
        assert!(agree >= 0.98, "agreement {agree}");
    }

    #[test]
    fn rejects_malformed_datasets() {
        assert!(Dataset::from_rows(&[vec![1.0, 2.0]], &[0.5]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0]], &[1.0, 1.0]).is_err());
        assert!(Dataset::from_rows(&[vec![f64::NAN]], &[1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = cov(&[1.0, 0.5, 0.2]);
        let p = TrueParameter::new(&c, DVector::from_vec(vec![1.0, -1.0, 0.5])).unwrap();
        let data = sample_dataset(&c, &p, 20, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        data.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back.features(), data.features());
        assert_eq!(back.labels(), data.labels());
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("y,x_1,x_2,x_3\n"));
    }
}
