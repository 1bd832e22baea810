//! Population risk functionals under the Gaussian design.
//!
//! For `x ~ N(0, Sigma)` the scores `a = x'w` and `b = x'w*` are jointly
//! Gaussian, so every functional reduces to a one- or two-dimensional
//! Gaussian integral determined by a [`JointSummary`].

mod monte_carlo;
mod quadrature;

use std::f64::consts::{LN_2, PI};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data_model::{CovarianceModel, TrueParameter};
use crate::error::{check_len, Error, Result};
use crate::loss::{logistic_loss, sigmoid};

pub use monte_carlo::{monte_carlo_risks, MonteCarloRisks, MIN_MC_SAMPLES};
pub use quadrature::{QuadratureGrid, DEFAULT_ORDER, MIN_ORDER};

use quadrature::{half_line_expectation, normal_cdf, normal_rule, SMOOTH_WIDTH};

/// Second-order description of the score pair `(x'w, x'w*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSummary {
    pub s_w: f64,
    pub s_star: f64,
    pub c: f64,
    /// Angle between `Sigma^{1/2} w` and `Sigma^{1/2} w*`; `None` if either norm is zero.
    pub theta: Option<f64>,
}

impl JointSummary {
    /// Builds the summary from moments, validating Cauchy-Schwarz up to rounding.
    pub fn from_moments(s_w: f64, s_star: f64, c: f64) -> Result<Self> {
        if !(s_w >= 0.0 && s_star >= 0.0 && s_w.is_finite() && s_star.is_finite() && c.is_finite())
        {
            return Err(Error::InvalidArgument(
                "sigma norms must be finite and nonnegative".into(),
            ));
        }
        let bound = s_w * s_star;
        if c.abs() > bound * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidArgument(format!(
                "covariance {c} violates |c| <= s_w * s_star = {bound}"
            )));
        }
        let theta = (bound > 0.0).then(|| (c / bound).clamp(-1.0, 1.0).acos());
        Ok(Self {
            s_w,
            s_star,
            c,
            theta,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.theta.is_none()
    }
}

/// Summary of `(x'w, x'w*)` for the given vectors.
///
/// The angle is computed as `atan2` of the orthogonal and parallel components,
/// which stays accurate near 0 and pi where `acos` loses half the digits.
pub fn joint_summary(
    w: &DVector<f64>,
    w_star: &DVector<f64>,
    cov: &CovarianceModel,
) -> Result<JointSummary> {
    let d = cov.dim();
    check_len(d, w.len())?;
    check_len(d, w_star.len())?;
    let lam = cov.eigenvalues();
    let mut ww = 0.0;
    let mut ss = 0.0;
    let mut c = 0.0;
    for i in 0..d {
        ww += lam[i] * w[i] * w[i];
        ss += lam[i] * w_star[i] * w_star[i];
        c += lam[i] * w[i] * w_star[i];
    }
    let s_w = ww.sqrt();
    let s_star = ss.sqrt();
    let theta = if s_w > 0.0 && s_star > 0.0 {
        let k = c / ss;
        let perp: f64 = (0..d)
            .map(|i| {
                let v = w[i] - k * w_star[i];
                lam[i] * v * v
            })
            .sum();
        Some(f64::atan2(perp.sqrt() * s_star, c))
    } else {
        None
    };
    Ok(JointSummary {
        s_w,
        s_star,
        c,
        theta,
    })
}

/// Logistic risk, zero-one error and calibration error of one predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTriple {
    pub logistic: f64,
    pub zero_one: f64,
    pub calibration: f64,
}

/// `E f(a, b)` for centred Gaussian `(a, b)` with standard deviations `s_a`,
/// `s_b` and correlation `cos(theta)`.
///
/// The wider score is integrated on the outside. When a score has standard
/// deviation above 2, the loss kinks at zero score become sharper than
/// Gauss-Hermite can resolve, so those axes switch to refined panels.
fn bivariate_expectation(
    s_a: f64,
    s_b: f64,
    theta: f64,
    grid: &QuadratureGrid,
    f: impl Fn(f64, f64) -> f64,
) -> f64 {
    let (cos, sin) = (theta.cos(), theta.sin());
    let swap = s_b > s_a;
    let (s_p, s_q) = if swap { (s_b, s_a) } else { (s_a, s_b) };
    let eval = |p: f64, q: f64| if swap { f(q, p) } else { f(p, q) };
    let outer_width = if s_p > 0.0 { 1.0 / s_p } else { f64::INFINITY };
    let inner_scale = s_q * sin;
    let mut total = 0.0;
    for (g1, w1) in normal_rule(grid, 0.0, outer_width) {
        let p = s_p * g1;
        let q_mean = s_q * cos * g1;
        let inner = if inner_scale <= 0.0 {
            eval(p, q_mean)
        } else {
            let width = 1.0 / inner_scale;
            let center = if width < SMOOTH_WIDTH { -q_mean / inner_scale } else { 0.0 };
            normal_rule(grid, center, width)
                .into_iter()
                .map(|(g2, w2)| w2 * eval(p, q_mean + inner_scale * g2))
                .sum()
        };
        total += w1 * inner;
    }
    total
}

fn summary_angle(summary: &JointSummary) -> f64 {
    summary.theta.unwrap_or(PI / 2.0)
}

/// Population logistic risk `E[sigma(b) l(a) + sigma(-b) l(-a)]`.
pub fn population_logistic_risk(summary: &JointSummary, grid: &QuadratureGrid) -> f64 {
    if summary.s_w == 0.0 {
        return LN_2;
    }
    bivariate_expectation(
        summary.s_w,
        summary.s_star,
        summary_angle(summary),
        grid,
        |a, b| sigmoid(b) * logistic_loss(a) + sigmoid(-b) * logistic_loss(-a),
    )
}

/// Calibration error `E (sigma(a) - sigma(b))^2`.
pub fn calibration_error(summary: &JointSummary, grid: &QuadratureGrid) -> f64 {
    if summary.s_w == 0.0 && summary.s_star == 0.0 {
        return 0.0;
    }
    bivariate_expectation(
        summary.s_w,
        summary.s_star,
        summary_angle(summary),
        grid,
        |a, b| {
            let e = sigmoid(a) - sigmoid(b);
            e * e
        },
    )
}

/// Bayes zero-one error `E min(p*, 1 - p*) = 2 E[sigma(-s g) 1{g >= 0}]`.
fn bayes_zero_one(s_star: f64) -> f64 {
    if s_star == 0.0 {
        return 0.5;
    }
    2.0 * half_line_expectation(1.0 / s_star, |g| sigmoid(-s_star * g))
}

/// Excess zero-one error `E |2 sigma(b) - 1| 1{ab <= 0}` of any predictor whose
/// whitened direction makes angle `theta` with that of `w*`; `s_star` is `||w*||_Sigma`.
pub fn excess_zero_one_from_angle(theta: f64, s_star: f64, _grid: &QuadratureGrid) -> Result<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::InvalidArgument(format!("angle {theta} outside [0, pi]")));
    }
    if !(s_star > 0.0 && s_star.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "||w*||_Sigma must be positive, got {s_star}"
        )));
    }
    Ok(excess_zero_one(theta, s_star))
}

fn excess_zero_one(theta: f64, s_star: f64) -> f64 {
    let (sin, cos) = theta.sin_cos();
    if sin <= 0.0 && cos > 0.0 {
        return 0.0;
    }
    // With b = s g and a = cos g + sin h: 2 int_0^inf tanh(s g / 2) Pr(h < -g cot) phi(g) dg.
    let width = (1.0 / s_star).min((sin / cos).abs());
    let cot = cos / sin;
    2.0 * half_line_expectation(width, |g| (0.5 * s_star * g).tanh() * normal_cdf(-g * cot))
}

/// Population zero-one error `Pr(y x'w <= 0)`.
///
/// Uses the counting convention `<=`, so `w = 0` has error 1. When `w* = 0`
/// every nonzero predictor has error 1/2.
pub fn population_zero_one_error(summary: &JointSummary, _grid: &QuadratureGrid) -> f64 {
    if summary.s_w == 0.0 {
        return 1.0;
    }
    match summary.theta {
        None => 0.5,
        Some(theta) => bayes_zero_one(summary.s_star) + excess_zero_one(theta, summary.s_star),
    }
}

pub fn population_risks(summary: &JointSummary, grid: &QuadratureGrid) -> RiskTriple {
    RiskTriple {
        logistic: population_logistic_risk(summary, grid),
        zero_one: population_zero_one_error(summary, grid),
        calibration: calibration_error(summary, grid),
    }
}

/// Convenience wrapper computing the summary and all three functionals.
pub fn risks_of(
    w: &DVector<f64>,
    w_star: &TrueParameter,
    cov: &CovarianceModel,
    grid: &QuadratureGrid,
) -> Result<RiskTriple> {
    let summary = joint_summary(w, w_star.coeffs(), cov)?;
    Ok(population_risks(&summary, grid))
}

/// `(R(w*), error(w*))`. For `w* = 0` this is `(ln 2, 1)`: the zero predictor
/// is charged a mistake on every tie.
pub fn bayes_risks(
    w_star: &DVector<f64>,
    cov: &CovarianceModel,
    grid: &QuadratureGrid,
) -> Result<(f64, f64)> {
    let s = crate::data_model::sigma_norm(w_star, cov)?;
    if s == 0.0 {
        return Ok((LN_2, 1.0));
    }
    let summary = JointSummary {
        s_w: s,
        s_star: s,
        c: s * s,
        theta: Some(0.0),
    };
    Ok((population_logistic_risk(&summary, grid), bayes_zero_one(s)))
}
