//! Monte Carlo estimates of the population functionals, used as an
//! independent check on the quadrature.

use nalgebra::DVector;
use rand::RngExt;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RiskTriple;
use crate::data_model::{stream_rng, CovarianceModel};
use crate::error::{check_len, Error, Result};
use crate::loss::{logistic_loss, sigmoid};

pub const MIN_MC_SAMPLES: usize = 1000;
const CHUNK: usize = 8192;

/// Estimates with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRisks {
    pub estimate: RiskTriple,
    pub std_error: RiskTriple,
    pub samples: usize,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: [f64; 3],
    m2: [f64; 3],
}

impl Moments {
    fn push(&mut self, v: [f64; 3]) {
        self.n += 1.0;
        for k in 0..3 {
            let delta = v[k] - self.mean[k];
            self.mean[k] += delta / self.n;
            self.m2[k] += delta * (v[k] - self.mean[k]);
        }
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        let mut out = Moments {
            n,
            ..Default::default()
        };
        for k in 0..3 {
            let delta = other.mean[k] - self.mean[k];
            out.mean[k] = self.mean[k] + delta * other.n / n;
            out.m2[k] = self.m2[k] + other.m2[k] + delta * delta * self.n * other.n / n;
        }
        out
    }
}

/// Draws `n_samples` fresh `x ~ N(0, Sigma)` and averages the label-conditional
/// expectations of the loss, the mistake indicator and the squared
/// probability gap (labels are integrated out exactly).
///
/// Coordinates where both `w` and `w*` vanish do not affect the scores and are
/// not drawn. Chunk `k` of 8192 draws uses RNG stream `k` of `seed`, so results
/// do not depend on the thread count.
pub fn monte_carlo_risks(
    w: &DVector<f64>,
    w_star: &DVector<f64>,
    cov: &CovarianceModel,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloRisks> {
    check_len(cov.dim(), w.len())?;
    check_len(cov.dim(), w_star.len())?;
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {n_samples}"
        )));
    }
    let active: Vec<(f64, f64, f64)> = cov
        .eigenvalues()
        .iter()
        .enumerate()
        .filter(|(i, l)| **l > 0.0 && (w[*i] != 0.0 || w_star[*i] != 0.0))
        .map(|(i, l)| (l.sqrt(), w[i], w_star[i]))
        .collect();
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let count = CHUNK.min(n_samples - k * CHUNK);
            let mut m = Moments::default();
            for _ in 0..count {
                let (mut a, mut b) = (0.0, 0.0);
                for &(sd, wi, si) in &active {
                    let x = sd * rng.sample::<f64, _>(StandardNormal);
                    a += x * wi;
                    b += x * si;
                }
                let (pb, qb) = (sigmoid(b), sigmoid(-b));
                let loss = pb * logistic_loss(a) + qb * logistic_loss(-a);
                let mistake = if a > 0.0 {
                    qb
                } else if a < 0.0 {
                    pb
                } else {
                    1.0
                };
                let gap = sigmoid(a) - pb;
                m.push([loss, mistake, gap * gap]);
            }
            m
        })
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    let se = |k: usize| (total.m2[k] / (total.n - 1.0) / total.n).sqrt();
    Ok(MonteCarloRisks {
        estimate: RiskTriple {
            logistic: total.mean[0],
            zero_one: total.mean[1],
            calibration: total.mean[2],
        },
        std_error: RiskTriple {
            logistic: se(0),
            zero_one: se(1),
            calibration: se(2),
        },
        samples: n_samples,
    })
}
