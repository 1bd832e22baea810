use serde::{Deserialize, Serialize};

use super::{in_window, linear_fit, Check, ExperimentConfig, ExperimentResult, Plot, ResultTable};
use crate::data_model::Dataset;
use crate::error::{Error, Result};
use crate::gd::{run_gd, GdConfig, RecordSchedule};
use crate::loss::{sigmoid, Loss};
use crate::margin::{solve_max_margin_dual, support_rank_condition, DUAL_TOL, RANK_TOL};
use crate::regpath::{build_reg_path, lambda_grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterexampleParams {
    pub gamma: f64,
    pub gamma2: f64,
    pub eta: f64,
    pub horizon: u64,
    pub record_ratio: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub lambda_ratio: f64,
    pub path_tol: f64,
    /// Decades of `t` over which the distance lower bound is checked.
    pub window_decades: f64,
    /// Floor asserted for `distance / ln ln ||w_t||` over the window.
    pub ratio_floor: f64,
    /// Exponential-loss surrogate run on `ln L`: time range and tolerance.
    pub tau_min: f64,
    pub tau_max: f64,
    pub surrogate_eta: f64,
    pub surrogate_tol: f64,
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            gamma2: 0.25,
            eta: 1.0,
            horizon: 10_000_000,
            record_ratio: 10f64.powf(0.25),
            lambda_max: 1.0,
            lambda_min: 1e-12,
            lambda_ratio: 1.2,
            path_tol: 1e-12,
            window_decades: 2.0,
            ratio_floor: 0.1,
            tau_min: 10.0,
            tau_max: 1e6,
            surrogate_eta: 1.0,
            surrogate_tol: 2.0,
        }
    }
}

/// `x_1 = (gamma, 0)`, `x_2 = (gamma, gamma2)`, both labelled `+1`.
pub fn counterexample_data(gamma: f64, gamma2: f64) -> Result<Dataset> {
    if !(0.0 < gamma2 && gamma2 < gamma && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < gamma2 < gamma < 1, got gamma = {gamma}, gamma2 = {gamma2}"
        )));
    }
    Dataset::from_rows(&[vec![gamma, 0.0], vec![gamma, gamma2]], &[1.0, 1.0])
}

/// Second coordinate of the surrogate path: the root of `lambda u = gamma2 sigma(-gamma2 u)`.
fn surrogate_u2(lambda: f64, gamma2: f64) -> f64 {
    let f = |u: f64| lambda * u - gamma2 * sigmoid(-gamma2 * u);
    let (mut lo, mut hi) = (0.0, gamma2 / lambda);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn exp_counterexample(config: &ExperimentConfig, params: &CounterexampleParams) -> Result<ExperimentResult> {
    let mut out = ExperimentResult::new(config);
    let (gamma, gamma2) = (params.gamma, params.gamma2);
    let data = counterexample_data(gamma, gamma2)?;

    let dual = solve_max_margin_dual(&data, DUAL_TOL)?;
    let rank = support_rank_condition(&data, &dual, RANK_TOL)?;
    out.checks.push(Check::assert(
        "support_condition_violated",
        !rank.holds && dual.support == [0],
        format!("support {:?}, ranks {} vs {}", dual.support, rank.rank_support, rank.rank_all),
    ));

    // logistic GD against the regularization path
    let gd = GdConfig {
        keep_risk_history: false,
        ..GdConfig::new(params.eta, params.horizon).with_record(RecordSchedule::Geometric { ratio: params.record_ratio })
    };
    let trace = run_gd(&data, &gd, &[], None, &[])?;
    let grid = lambda_grid(params.lambda_max, params.lambda_min, params.lambda_ratio)?;
    let path = build_reg_path(&data, &grid, params.path_tol)?;
    let mut table = ResultTable::new(
        "distance",
        &["t", "w_norm", "w1", "w2", "lambda_star", "distance", "lnln_norm", "ratio", "at_boundary"],
    );
    let mut window = Vec::new();
    for r in trace.records.iter().filter(|r| r.t > 0) {
        let m = path.min_distance(&r.w, &data)?;
        let lnln = if r.w_norm > std::f64::consts::E { r.w_norm.ln().ln() } else { f64::NAN };
        let ratio = m.distance / lnln;
        table.push(vec![
            r.t.into(),
            r.w_norm.into(),
            r.w[0].into(),
            r.w[1].into(),
            m.lambda_star.into(),
            m.distance.into(),
            lnln.into(),
            ratio.into(),
            m.at_boundary.into(),
        ]);
        if in_window(r.t, trace.final_t, params.window_decades) {
            window.push((r.t, ratio, m.at_boundary));
        }
    }
    let floor = window.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let boundary: Vec<u64> = window.iter().filter(|w| w.2).map(|w| w.0).collect();
    out.checks.push(Check::assert(
        "distance_grows_like_lnln",
        window.len() >= 3 && floor.is_finite() && floor >= params.ratio_floor && boundary.is_empty(),
        format!(
            "min distance / ln ln ||w|| over the last {} decades = {floor:.4} (floor {}); {} records; grid-boundary minima at {boundary:?}",
            params.window_decades,
            params.ratio_floor,
            window.len()
        ),
    ));
    out.set("ratio_constant", floor);

    // exponential-loss gradient descent on ln L, where w1 = gamma tau exactly
    let steps = (params.tau_max / params.surrogate_eta).ceil() as u64;
    let sgd = GdConfig {
        loss: Loss::Exponential,
        log_risk: true,
        keep_risk_history: false,
        ..GdConfig::new(params.surrogate_eta, steps).with_record(RecordSchedule::Geometric { ratio: params.record_ratio })
    };
    let strace = run_gd(&data, &sgd, &[], None, &[])?;
    let mut surrogate = ResultTable::new("surrogate_gd", &["tau", "w1", "w1_closed_form", "w2", "w2_closed_form", "w2_deviation"]);
    let (mut w1_err, mut w2_dev) = (0.0f64, 0.0f64);
    for r in &strace.records {
        let tau = params.surrogate_eta * r.t as f64;
        if tau < params.tau_min || tau > params.tau_max * (1.0 + 1e-12) {
            continue;
        }
        let (w1, w2) = (gamma * tau, (1.0 + gamma2 * gamma2 * tau).ln() / gamma2);
        let dev = r.w[1] - w2;
        w1_err = w1_err.max((r.w[0] - w1).abs() / w1);
        w2_dev = w2_dev.max(dev.abs());
        surrogate.push(vec![tau.into(), r.w[0].into(), w1.into(), r.w[1].into(), w2.into(), dev.into()]);
    }
    out.checks.push(Check::assert(
        "surrogate_first_coordinate",
        !surrogate.rows.is_empty() && w1_err <= 1e-9,
        format!("max relative error of w1 against gamma tau: {w1_err:.2e}"),
    ));
    out.checks.push(Check::assert(
        "surrogate_second_coordinate",
        !surrogate.rows.is_empty() && w2_dev <= params.surrogate_tol,
        format!(
            "max |w2 - ln(1 + gamma2^2 tau)/gamma2| over tau in [{}, {}] = {w2_dev:.4} (limit {})",
            params.tau_min, params.tau_max, params.surrogate_tol
        ),
    ));
    out.set("surrogate_gd_constant", w2_dev);

    // surrogate regularization path, compared with its asymptotic expansion
    let mut spath = ResultTable::new("surrogate_path", &["lambda", "u1", "u2", "u2_expansion", "u2_deviation"]);
    let cutoff = gamma2 * gamma2 / std::f64::consts::E;
    let mut devs = Vec::new();
    for &lambda in grid.iter().filter(|l| **l <= cutoff) {
        let u2 = surrogate_u2(lambda, gamma2);
        let approx = ((gamma2 * gamma2 / lambda).ln() - (gamma * gamma / lambda).ln().ln()) / gamma2;
        devs.push((lambda, u2 - approx));
        spath.push(vec![lambda.into(), (gamma / lambda).into(), u2.into(), approx.into(), (u2 - approx).into()]);
    }
    let path_c = devs.iter().map(|d| d.1.abs()).fold(0.0, f64::max);
    let (x, y): (Vec<f64>, Vec<f64>) = devs.iter().map(|(l, d)| (-l.ln(), *d)).unzip();
    let slope = if x.len() >= 2 { linear_fit(&x, &y).0 } else { f64::NAN };
    out.checks.push(Check::observe(
        "surrogate_path_bounded_deviation",
        path_c.is_finite(),
        format!("max |u2 - expansion| = {path_c:.4}; slope in ln(1/lambda) {slope:.2e}"),
    ));
    out.set("surrogate_path_constant", path_c);
    out.set("final_t", trace.final_t);
    out.set("final_w_norm", trace.last().w_norm);
    out.set("support_condition", &rank);

    let ts = table.column("t")?;
    let ratio = table.column("ratio")?;
    let dist = table.column("distance")?;
    out.plots.push(Plot {
        name: "distance".into(),
        title: "Distance from GD to the regularization path".into(),
        x_label: "t".into(),
        log_x: true,
        series: vec![
            ("min distance".into(), ts.iter().copied().zip(dist).collect()),
            (
                "distance / ln ln ||w||".into(),
                ts.iter().copied().zip(ratio).filter(|(_, v)| v.is_finite()).collect(),
            ),
        ],
    });
    out.tables.push(table);
    out.tables.push(surrogate);
    out.tables.push(spath);
    Ok(out)
}
