//! The l2-regularization path `u_lambda = argmin L(u) + (lambda/2)||u||^2`
//! and its comparison with the gradient-descent path.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_model::Dataset;
use crate::error::{check_len, Error, Result};
use crate::gd::{empirical_risk, GdTrace};
use crate::loss::{logistic_loss, logistic_loss_curvature, logistic_loss_derivative};

const MAX_NEWTON_ITERS: usize = 200;
const ARMIJO: f64 = 1e-4;

/// One point of the regularization path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPoint {
    pub lambda: f64,
    pub u: DVector<f64>,
    /// `||grad L(u) + lambda u||`.
    pub kkt_residual: f64,
    pub newton_iters: usize,
    pub emp_risk: f64,
}

/// Newton solver state shared across the path: the kernel matrix is
/// precomputed when `d > n`, where Hessian solves go through the
/// `n x n` Woodbury system instead of the `d x d` Hessian.
pub struct RegSolver<'a> {
    data: &'a Dataset,
    gram: Option<DMatrix<f64>>,
}

impl<'a> RegSolver<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let gram = (data.d() > data.n()).then(|| data.gram());
        Ok(Self { data, gram })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    fn objective(&self, u: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>) {
        let m = self.data.margins(u).expect("dimension checked by caller");
        let risk = m.iter().map(|t| logistic_loss(*t)).sum::<f64>() / self.data.n() as f64;
        (risk + 0.5 * lambda * u.norm_squared(), m)
    }

    fn gradient(&self, u: &DVector<f64>, m: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let n = self.data.n() as f64;
        let coef = DVector::from_iterator(
            m.len(),
            m.iter()
                .zip(self.data.labels().iter())
                .map(|(t, y)| logistic_loss_derivative(*t) * y / n),
        );
        let mut g = self.data.features().tr_mul(&coef);
        g.axpy(lambda, u, 1.0);
        g
    }

    /// Solves `(X^T S X + lambda I) p = g` with `S = diag(l''(m_i) / n)`.
    fn newton_direction(&self, m: &DVector<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
        let x = self.data.features();
        let n = self.data.n();
        let root_s: Vec<f64> = m
            .iter()
            .map(|t| (logistic_loss_curvature(*t) / n as f64).sqrt())
            .collect();
        match &self.gram {
            None => {
                let mut xs = x.clone();
                for (i, s) in root_s.iter().enumerate() {
                    xs.row_mut(i).scale_mut(*s);
                }
                let mut h = xs.tr_mul(&xs);
                for i in 0..h.nrows() {
                    h[(i, i)] += lambda;
                }
                h.cholesky().map(|c| c.solve(g))
            }
            Some(k) => {
                // H^{-1} g = (g - X^T S^{1/2} (lambda I + S^{1/2} K S^{1/2})^{-1} S^{1/2} X g) / lambda
                let mut mat = DMatrix::from_fn(n, n, |i, j| root_s[i] * k[(i, j)] * root_s[j]);
                for i in 0..n {
                    mat[(i, i)] += lambda;
                }
                let xg = x * g;
                let v = DVector::from_fn(n, |i, _| root_s[i] * xg[i]);
                let z = mat.cholesky()?.solve(&v);
                let sz = DVector::from_fn(n, |i, _| root_s[i] * z[i]);
                let mut p = g.clone();
                p.gemv_tr(-1.0, x, &sz, 1.0);
                Some(p / lambda)
            }
        }
    }

    /// Damped Newton with Armijo backtracking until `||grad|| <= tol`.
    ///
    /// Near the solution the objective decrease drops below rounding error
    /// while the gradient can still shrink, so when backtracking stalls a full
    /// step is accepted if it reduces the gradient norm.
    pub fn solve(&self, lambda: f64, tol: f64, init: Option<&DVector<f64>>) -> Result<RegPoint> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        let d = self.data.d();
        let mut u = match init {
            Some(u0) => {
                check_len(d, u0.len())?;
                u0.clone()
            }
            None => DVector::zeros(d),
        };
        let (mut f, mut m) = self.objective(&u, lambda);
        let mut g = self.gradient(&u, &m, lambda);
        let mut gnorm = g.norm();
        let mut iters = 0;
        for iter in 0..MAX_NEWTON_ITERS {
            iters = iter;
            if gnorm <= tol {
                return Ok(self.point(lambda, u, gnorm, iter));
            }
            let Some(step) = self.newton_direction(&m, &g, lambda) else {
                break;
            };
            let slope = -g.dot(&step);
            // -slope is the squared Newton decrement; once half of it drops below
            // the rounding noise of the objective, Armijo tests are meaningless
            let pure_newton = -slope <= 1e-13 * (1.0 + f.abs());
            let mut accepted = None;
            if !pure_newton {
                let mut alpha = 1.0;
                while alpha >= 1e-10 {
                    let cand = &u - &step * alpha;
                    let (fc, mc) = self.objective(&cand, lambda);
                    if fc <= f + ARMIJO * alpha * slope {
                        accepted = Some((cand, fc, mc));
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            let (cand, fc, mc) = match accepted {
                Some(a) => a,
                None => {
                    let cand = &u - &step;
                    let (fc, mc) = self.objective(&cand, lambda);
                    let gc = self.gradient(&cand, &mc, lambda);
                    if gc.norm() >= gnorm {
                        break;
                    }
                    (cand, fc, mc)
                }
            };
            u = cand;
            f = fc;
            m = mc;
            g = self.gradient(&u, &m, lambda);
            gnorm = g.norm();
        }
        if gnorm <= tol {
            return Ok(self.point(lambda, u, gnorm, MAX_NEWTON_ITERS));
        }
        Err(Error::NewtonNotConverged {
            lambda,
            residual: gnorm,
            iterations: iters,
        })
    }

    fn point(&self, lambda: f64, u: DVector<f64>, residual: f64, iters: usize) -> RegPoint {
        let emp_risk = empirical_risk(&u, self.data).expect("dimension checked");
        RegPoint {
            lambda,
            u,
            kkt_residual: residual,
            newton_iters: iters,
            emp_risk,
        }
    }
}

/// Solves the regularized problem at one `lambda` from `u = 0`.
pub fn solve_l2_erm(data: &Dataset, lambda: f64, tol: f64) -> Result<RegPoint> {
    RegSolver::new(data)?.solve(lambda, tol, None)
}

/// Geometric grid from `max` down to `min` (inclusive when hit) with the given ratio.
pub fn lambda_grid(max: f64, min: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(max > 0.0 && min > 0.0 && min <= max && ratio > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda grid needs 0 < min <= max and ratio > 1 (got {min}, {max}, {ratio})"
        )));
    }
    let steps = ((max / min).ln() / ratio.ln() + 1e-9).floor() as i32;
    Ok((0..=steps).map(|k| max / ratio.powi(k)).collect())
}

/// A solved regularization path on a decreasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPath {
    pub points: Vec<RegPoint>,
    pub tol: f64,
}

/// Solves along a decreasing grid, warm-starting each point from the previous one.
pub fn build_reg_path(data: &Dataset, grid: &[f64], tol: f64) -> Result<RegPath> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if grid.windows(2).any(|p| p[1] >= p[0]) || grid[grid.len() - 1] <= 0.0 {
        return Err(Error::InvalidArgument(
            "lambda grid must be positive and strictly decreasing".into(),
        ));
    }
    let solver = RegSolver::new(data)?;
    let mut points: Vec<RegPoint> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let p = solver.solve(lambda, tol, points.last().map(|p| &p.u))?;
        points.push(p);
    }
    Ok(RegPath { points, tol })
}

/// Result of minimizing `||w - u_lambda||` over lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinDistance {
    pub lambda_star: f64,
    pub distance: f64,
    /// The grid minimum sat at an end of the grid, so the true minimizer may lie outside it.
    pub at_boundary: bool,
}

impl RegPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    /// Decades covered by the grid.
    pub fn decades(&self) -> f64 {
        (self.points[0].lambda / self.points[self.points.len() - 1].lambda).log10()
    }

    /// Grid argmin of `||w - u_lambda||`, refined by golden-section search in
    /// `ln lambda` between the neighbouring grid points.
    pub fn min_distance(&self, w: &DVector<f64>, data: &Dataset) -> Result<MinDistance> {
        if self.decades() < 6.0 - 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "lambda grid spans {:.2} decades; at least 6 are required",
                self.decades()
            )));
        }
        check_len(data.d(), w.len())?;
        let dist: Vec<f64> = self.points.iter().map(|p| (w - &p.u).norm()).collect();
        let best = dist
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("path is nonempty");
        let last = self.points.len() - 1;
        if best == 0 || best == last {
            return Ok(MinDistance {
                lambda_star: self.points[best].lambda,
                distance: dist[best],
                at_boundary: true,
            });
        }
        let solver = RegSolver::new(data)?;
        let eval = |log_lambda: f64| -> Result<f64> {
            let lambda = log_lambda.exp();
            let near = if lambda >= self.points[best].lambda { best - 1 } else { best };
            let p = solver.solve(lambda, self.tol, Some(&self.points[near].u))?;
            Ok((w - &p.u).norm())
        };
        let (mut a, mut b) = (self.points[best + 1].lambda.ln(), self.points[best - 1].lambda.ln());
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut e = a + inv_phi * (b - a);
        let mut fc = eval(c)?;
        let mut fe = eval(e)?;
        for _ in 0..60 {
            if (b - a).abs() < 1e-10 {
                break;
            }
            if fc < fe {
                b = e;
                e = c;
                fe = fc;
                c = b - inv_phi * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + inv_phi * (b - a);
                fe = eval(e)?;
            }
        }
        let (log_l, d_ref) = if fc < fe { (c, fc) } else { (e, fe) };
        let (lambda_star, distance) = if d_ref < dist[best] {
            (log_l.exp(), d_ref)
        } else {
            (self.points[best].lambda, dist[best])
        };
        Ok(MinDistance {
            lambda_star,
            distance,
            at_boundary: false,
        })
    }

    /// Writes `lambda, u_norm, emp_risk, kkt_residual`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["lambda", "u_norm", "emp_risk", "kkt_residual"])?;
        for p in &self.points {
            w.write_record([
                format!("{:e}", p.lambda),
                format!("{:e}", p.u.norm()),
                format!("{:e}", p.emp_risk),
                format!("{:e}", p.kkt_residual),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the path on `grid` and minimizes the distance from `w` to it.
pub fn min_distance_to_regpath(
    w: &DVector<f64>,
    data: &Dataset,
    grid: &[f64],
    tol: f64,
) -> Result<MinDistance> {
    build_reg_path(data, grid, tol)?.min_distance(w, data)
}

/// How GD times are paired with regularization strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// `lambda = 1 / (eta t)`.
    LambdaOfT,
    /// `lambda` solving `<u_lambda, w_tilde> = <w_t, w_tilde>`.
    MatchedNorm,
}

impl PairingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PairingMode::LambdaOfT => "lambda_of_t",
            PairingMode::MatchedNorm => "matched_norm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub t: u64,
    pub eta_t: f64,
    pub lambda: f64,
    pub distance: f64,
    pub cosine: f64,
    pub norm_ratio: f64,
    pub w_norm: f64,
    pub u_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathComparison {
    pub mode: PairingMode,
    pub rows: Vec<PairRow>,
    /// Times that could not be paired, with the reason.
    pub skipped: Vec<(u64, String)>,
}

impl PathComparison {
    /// Writes `t, eta_t, lambda, distance, cosine, norm_ratio, pairing_mode`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "eta_t", "lambda", "distance", "cosine", "norm_ratio", "pairing_mode"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                format!("{:e}", r.eta_t),
                format!("{:e}", r.lambda),
                format!("{:e}", r.distance),
                format!("{:e}", r.cosine),
                format!("{:e}", r.norm_ratio),
                self.mode.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn pair_row(t: u64, eta_t: f64, lambda: f64, w: &DVector<f64>, u: &DVector<f64>) -> PairRow {
    let (wn, un) = (w.norm(), u.norm());
    let cosine = if wn > 0.0 && un > 0.0 {
        (w.dot(u) / (wn * un)).clamp(-1.0, 1.0)
    } else {
        f64::NAN
    };
    PairRow {
        t,
        eta_t,
        lambda,
        distance: (w - u).norm(),
        cosine,
        norm_ratio: if un > 0.0 { wn / un } else { f64::NAN },
        w_norm: wn,
        u_norm: un,
    }
}

/// Pairs every recorded `t > 0` of a GD trace with a point of the path.
///
/// `tol` is the KKT tolerance relative to `lambda`: each solve stops once
/// `||grad|| <= tol * lambda`, which bounds `||u - u_lambda||` by `tol`.
/// `MatchedNorm` requires the max-margin direction `w_tilde`.
pub fn compare_paths(
    trace: &GdTrace,
    data: &Dataset,
    mode: PairingMode,
    tol: f64,
    w_tilde: Option<&DVector<f64>>,
) -> Result<PathComparison> {
    let solver = RegSolver::new(data)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut warm: Option<(f64, DVector<f64>)> = None;
    for rec in trace.records.iter().filter(|r| r.t > 0) {
        let eta_t = trace.eta * rec.t as f64;
        match mode {
            PairingMode::LambdaOfT => {
                let lambda = 1.0 / eta_t;
                let p = solver.solve(lambda, tol * lambda, warm.as_ref().map(|w| &w.1))?;
                rows.push(pair_row(rec.t, eta_t, lambda, &rec.w, &p.u));
                warm = Some((lambda, p.u));
            }
            PairingMode::MatchedNorm => {
                let dir = w_tilde.ok_or_else(|| {
                    Error::InvalidArgument("matched-norm pairing needs the max-margin direction".into())
                })?;
                check_len(data.d(), dir.len())?;
                let target = rec.w.dot(dir);
                match match_lambda(&solver, dir, target, tol, warm.as_ref()) {
                    Ok((lambda, u)) => {
                        rows.push(pair_row(rec.t, eta_t, lambda, &rec.w, &u));
                        warm = Some((lambda, u));
                    }
                    Err(reason) => skipped.push((rec.t, reason)),
                }
            }
        }
    }
    Ok(PathComparison {
        mode,
        rows,
        skipped,
    })
}

const LAMBDA_CEIL: f64 = 1e8;
const LAMBDA_FLOOR: f64 = 1e-300;

/// Finds `lambda` with `<u_lambda, dir> = target` by bracketing then bisecting in `ln lambda`.
fn match_lambda(
    solver: &RegSolver<'_>,
    dir: &DVector<f64>,
    target: f64,
    tol: f64,
    warm: Option<&(f64, DVector<f64>)>,
) -> std::result::Result<(f64, DVector<f64>), String> {
    if !(target > 0.0) {
        return Err(format!("iterate has nonpositive margin coordinate {target:e}"));
    }
    let solve = |lambda: f64, init: Option<&DVector<f64>>| {
        solver
            .solve(lambda, tol * lambda, init)
            .map(|p| p.u)
            .map_err(|e| e.to_string())
    };
    // <u_lambda, dir> decreases in lambda: find hi with value <= target and lo with value >= target
    let (mut lam, mut u) = match warm {
        Some((l, u)) => (*l, u.clone()),
        None => (1.0, solve(1.0, None)?),
    };
    let mut value = u.dot(dir);
    let (mut lo, mut u_lo, mut hi, mut u_hi);
    if value >= target {
        lo = lam;
        u_lo = u.clone();
        loop {
            lam *= 4.0;
            if lam > LAMBDA_CEIL {
                return Err("could not bracket from above".into());
            }
            u = solve(lam, Some(&u))?;
            value = u.dot(dir);
            if value <= target {
                hi = lam;
                u_hi = u;
                break;
            }
            lo = lam;
            u_lo = u.clone();
        }
    } else {
        hi = lam;
        u_hi = u.clone();
        loop {
            lam /= 4.0;
            if lam < LAMBDA_FLOOR {
                return Err("could not bracket from below".into());
            }
            u = solve(lam, Some(&u))?;
            value = u.dot(dir);
            if value >= target {
                lo = lam;
                u_lo = u;
                break;
            }
            hi = lam;
            u_hi = u.clone();
        }
    }
    for _ in 0..200 {
        let mid = (lo.ln() + hi.ln()) / 2.0;
        let lam_mid = mid.exp();
        let u_mid = solve(lam_mid, Some(&u_lo))?;
        let v = u_mid.dot(dir);
        if (v - target).abs() <= 1e-12 * target.max(1.0) || (hi / lo).ln() < 1e-13 {
            return Ok((lam_mid, u_mid));
        }
        if v > target {
            lo = lam_mid;
            u_lo = u_mid;
        } else {
            hi = lam_mid;
            u_hi = u_mid;
        }
    }
    let _ = u_hi;
    Ok((lo, u_lo))
}
