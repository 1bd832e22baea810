//! Linear separability, the hard-margin dual and the support-vector rank condition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_model::Dataset;
use crate::error::{check_len, Error, Result};
use crate::gd::GdTrace;

/// Default KKT tolerance of the dual solver.
pub const DUAL_TOL: f64 = 1e-8;
/// Relative threshold on `y_i beta_i` defining the support set.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;
/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

const GRAM_CONDITION_FLOOR: f64 = 1e-10;
const MAX_SWEEPS: usize = 2_000_000;

/// Evidence for or against linear separability through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Unit vector with `min_i y_i x_i^T direction = margin > 0`.
    Separator { direction: DVector<f64>, margin: f64 },
    /// Convex weights with `||sum_i weights_i y_i x_i|| = residual ~ 0`, so
    /// every direction misclassifies or ties some point.
    Witness { weights: DVector<f64>, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub separable: bool,
    pub certificate: Certificate,
    /// `"ols"` or `"min_norm_point"`.
    pub method: String,
    pub diagnostic: Option<String>,
}

/// Label-weighted Gram matrix `Q_ij = y_i y_j x_i^T x_j`.
fn signed_gram(data: &Dataset) -> DMatrix<f64> {
    let k = data.gram();
    let y = data.labels();
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| y[i] * y[j] * k[(i, j)])
}

/// Separability check: the least-squares interpolator `X^T (X X^T)^{-1} y`
/// separates whenever the Gram matrix is well conditioned; otherwise the
/// minimum-norm point of the convex hull of `{y_i x_i}` decides.
pub fn check_separability(data: &Dataset) -> Result<SeparabilityReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = data.gram();
    let eig = k.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    let mut diagnostic = None;
    if max > 0.0 && min > GRAM_CONDITION_FLOOR * max {
        if let Some(chol) = k.cholesky() {
            let a = chol.solve(data.labels());
            let w = data.features().tr_mul(&a);
            let norm = w.norm();
            let margins = data.margins(&w)?;
            let m = margins.min();
            if norm > 0.0 && m > 0.0 {
                return Ok(SeparabilityReport {
                    separable: true,
                    certificate: Certificate::Separator {
                        direction: w / norm,
                        margin: m / norm,
                    },
                    method: "ols".into(),
                    diagnostic: None,
                });
            }
            diagnostic = Some(format!("least-squares interpolator has min margin {m:e}"));
        }
    } else {
        diagnostic = Some(format!(
            "Gram matrix eigenvalue ratio {:e} below {GRAM_CONDITION_FLOOR:e}; using min-norm point",
            if max > 0.0 { min / max } else { 0.0 }
        ));
    }
    let q = signed_gram(data);
    let (weights, point_sq) = min_norm_point(&q);
    let scale = (0..q.nrows()).map(|i| q[(i, i)]).fold(0.0, f64::max);
    let residual = point_sq.max(0.0).sqrt();
    if residual <= 1e-9 * scale.sqrt() {
        return Ok(SeparabilityReport {
            separable: false,
            certificate: Certificate::Witness { weights, residual },
            method: "min_norm_point".into(),
            diagnostic,
        });
    }
    let y = data.labels();
    let beta = DVector::from_fn(weights.len(), |i, _| weights[i] * y[i]);
    let p = data.features().tr_mul(&beta);
    let norm = p.norm();
    let direction = p / norm;
    let margin = data.margins(&direction)?.min();
    Ok(SeparabilityReport {
        separable: margin > 0.0,
        certificate: Certificate::Separator { direction, margin },
        method: "min_norm_point".into(),
        diagnostic,
    })
}

/// Wolfe's minimum-norm-point algorithm over the convex hull of points given
/// only through their Gram matrix `q`. Returns the convex weights and the
/// squared norm of the minimizer.
fn min_norm_point(q: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = q.nrows();
    let scale = (0..n).map(|i| q[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let eps = 1e-13 * scale;
    let start = (0..n)
        .min_by(|&a, &b| q[(a, a)].total_cmp(&q[(b, b)]))
        .expect("nonempty");
    let mut corral = vec![start];
    let mut lam = vec![1.0];
    let weights = |corral: &[usize], lam: &[f64]| {
        let mut w = DVector::zeros(n);
        for (i, l) in corral.iter().zip(lam) {
            w[*i] = *l;
        }
        w
    };
    for _ in 0..50 * n + 100 {
        let w = weights(&corral, &lam);
        let qx = q * &w;
        let xx = w.dot(&qx);
        let (j, best) = qx
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, v)| (j, *v))
            .expect("nonempty");
        if xx - best <= eps || xx <= eps * 1e-3 || corral.contains(&j) {
            return (w, xx);
        }
        corral.push(j);
        lam.push(0.0);
        // minor cycles: move towards the affine minimizer of the corral
        loop {
            let Some(mu) = affine_minimizer(q, &corral) else {
                return (weights(&corral, &lam), xx);
            };
            if mu.iter().all(|m| *m > 1e-15) {
                lam = mu;
                break;
            }
            let mut theta = 1.0f64;
            for (l, m) in lam.iter().zip(&mu) {
                if *m <= 1e-15 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, m) in lam.iter_mut().zip(&mu) {
                *l += theta * (m - *l);
            }
            let keep: Vec<bool> = lam.iter().map(|l| *l > 1e-15).collect();
            let mut c2 = Vec::new();
            let mut l2 = Vec::new();
            for ((c, l), k) in corral.iter().zip(&lam).zip(keep) {
                if k {
                    c2.push(*c);
                    l2.push(*l);
                }
            }
            let total: f64 = l2.iter().sum();
            corral = c2;
            lam = l2.into_iter().map(|l| l / total).collect();
            if corral.len() <= 1 {
                break;
            }
        }
    }
    let w = weights(&corral, &lam);
    let xx = w.dot(&(q * &w));
    (w, xx)
}

/// Weights (summing to one) of the point of minimum norm in the affine hull of `corral`.
fn affine_minimizer(q: &DMatrix<f64>, corral: &[usize]) -> Option<Vec<f64>> {
    let m = corral.len();
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut b = DVector::zeros(m + 1);
    for (r, &i) in corral.iter().enumerate() {
        for (c, &j) in corral.iter().enumerate() {
            a[(r, c)] = q[(i, j)];
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
    }
    b[m] = 1.0;
    let sol = a.lu().solve(&b)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol.iter().take(m).copied().collect())
}

/// Solution of `max -1/2 beta^T X X^T beta + beta^T y` s.t. `y_i beta_i >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub beta: DVector<f64>,
    pub w_primal: DVector<f64>,
    pub gamma: f64,
    pub w_tilde: DVector<f64>,
    pub support: Vec<usize>,
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub objective: f64,
}

impl DualSolution {
    /// Dual solution, support indices and rank diagnostics as JSON.
    pub fn to_json(&self, rank: Option<&RankReport>) -> serde_json::Value {
        serde_json::json!({
            "beta": self.beta.as_slice(),
            "gamma": self.gamma,
            "support": self.support,
            "support_threshold": SUPPORT_THRESHOLD,
            "kkt_residual": self.kkt_residual,
            "sweeps": self.sweeps,
            "objective": self.objective,
            "w_norm": self.w_primal.norm(),
            "rank": rank,
        })
    }
}

/// KKT violation of `alpha >= 0` given `g = Q alpha`: complementary slackness
/// on the support and primal feasibility `g_i >= 1` elsewhere.
fn kkt_violation(alpha: &DVector<f64>, g: &DVector<f64>) -> f64 {
    alpha
        .iter()
        .zip(g.iter())
        .map(|(a, gi)| if *a > 0.0 { (1.0 - gi).abs() } else { (1.0 - gi).max(0.0) })
        .fold(0.0, f64::max)
}

pub fn solve_max_margin_dual(data: &Dataset, tol: f64) -> Result<DualSolution> {
    solve_max_margin_dual_from(data, tol, None)
}

/// Cyclic coordinate ascent on `alpha_i = y_i beta_i >= 0`, each step an exact
/// clipped 1-D maximization. Every 64 sweeps the equality system on the
/// current support is solved directly, which finishes the job once the
/// support has been identified.
pub fn solve_max_margin_dual_from(
    data: &Dataset,
    tol: f64,
    init: Option<&DVector<f64>>,
) -> Result<DualSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let report = check_separability(data)?;
    if let Certificate::Witness { residual, .. } = report.certificate {
        return Err(Error::Inseparable { witness_residual: residual });
    }
    if !report.separable {
        return Err(Error::Inseparable { witness_residual: 0.0 });
    }
    let n = data.n();
    let q = signed_gram(data);
    let mut alpha = match init {
        Some(a) => {
            check_len(n, a.len())?;
            a.map(|v| v.max(0.0))
        }
        None => DVector::zeros(n),
    };
    let mut g = &q * &alpha;
    let mut sweeps = 0;
    let mut residual = kkt_violation(&alpha, &g);
    while residual > tol && sweeps < MAX_SWEEPS {
        for i in 0..n {
            let new = (alpha[i] + (1.0 - g[i]) / q[(i, i)]).max(0.0);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                g.axpy(delta, &q.column(i), 1.0);
            }
        }
        sweeps += 1;
        if sweeps % 64 == 0 {
            g = &q * &alpha;
            if let Some((a2, g2)) = polish(&q, &alpha) {
                let r2 = kkt_violation(&a2, &g2);
                if r2 < kkt_violation(&alpha, &g) {
                    alpha = a2;
                    g = g2;
                }
            }
        }
        residual = kkt_violation(&alpha, &g);
    }
    g = &q * &alpha;
    residual = kkt_violation(&alpha, &g);
    if let Some((a2, g2)) = polish(&q, &alpha) {
        let r2 = kkt_violation(&a2, &g2);
        if r2 < residual {
            (alpha, g, residual) = (a2, g2, r2);
        }
    }
    if residual > tol {
        return Err(Error::DualNotConverged { sweeps, residual });
    }
    let y = data.labels();
    let beta = alpha.component_mul(y);
    let w_primal = data.features().tr_mul(&beta);
    let norm = w_primal.norm();
    let w_tilde = &w_primal / norm;
    let gamma = data.margins(&w_tilde)?.min();
    let amax = alpha.max();
    let support = (0..n).filter(|&i| alpha[i] > SUPPORT_THRESHOLD * amax).collect();
    let objective = alpha.sum() - 0.5 * alpha.dot(&g);
    Ok(DualSolution {
        beta,
        w_primal,
        gamma,
        w_tilde,
        support,
        kkt_residual: residual,
        sweeps,
        objective,
    })
}

/// Solves `Q_SS alpha_S = 1` on the current support `S`.
fn polish(q: &DMatrix<f64>, alpha: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let support: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let qs = DMatrix::from_fn(support.len(), support.len(), |a, b| q[(support[a], support[b])]);
    let sol = qs.cholesky()?.solve(&DVector::from_element(support.len(), 1.0));
    if sol.iter().any(|v| !(*v >= 0.0)) {
        return None;
    }
    let mut a2 = DVector::zeros(alpha.len());
    for (k, &i) in support.iter().enumerate() {
        a2[i] = sol[k];
    }
    let g2 = q * &a2;
    Some((a2, g2))
}

/// Numerical ranks of the support rows and of all rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub holds: bool,
    pub rank_support: usize,
    pub rank_all: usize,
    pub rank_tol: f64,
}

fn numerical_rank(rows: DMatrix<f64>, rank_tol: f64) -> usize {
    let sv = rows.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rank_tol * max).count()
}

/// Whether the support vectors span the same space as all samples.
pub fn support_rank_condition(
    data: &Dataset,
    dual: &DualSolution,
    rank_tol: f64,
) -> Result<RankReport> {
    assert!(!dual.support.is_empty(), "a dual optimum has a nonempty support");
    let x = data.features();
    let rows = DMatrix::from_fn(dual.support.len(), x.ncols(), |r, c| x[(dual.support[r], c)]);
    let rank_support = numerical_rank(rows, rank_tol);
    let rank_all = numerical_rank(x.clone(), rank_tol);
    Ok(RankReport {
        holds: rank_support == rank_all,
        rank_support,
        rank_all,
        rank_tol,
    })
}

/// `(t, ||w_t/||w_t|| - w_tilde||)` for every recorded `t` with `w_t != 0`.
pub fn directional_gap(trace: &GdTrace, w_tilde: &DVector<f64>) -> Result<Vec<(u64, f64)>> {
    let mut out = Vec::new();
    for r in &trace.records {
        check_len(w_tilde.len(), r.w.len())?;
        if r.w_norm > 0.0 {
            out.push((r.t, (&r.w / r.w_norm - w_tilde).norm()));
        }
    }
    Ok(out)
}

/// `(min_i y_i x_i^T w > 0, min_i y_i x_i^T w)`.
pub fn interpolation_check(w: &DVector<f64>, data: &Dataset) -> Result<(bool, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = data.margins(w)?.min();
    Ok((m > 0.0, m))
}
