use serde::{Deserialize, Serialize};

use super::{derive_seed, in_window, strictly_decreasing, Check, DataSpec, ExperimentConfig, ExperimentResult, Plot, ResultTable};
use crate::data_model::{Dataset, ParameterSpec, SpectrumSpec};
use crate::error::{Error, Result};
use crate::gd::{default_stepsize, run_gd, GdConfig, RecordSchedule};
use crate::margin::{check_separability, solve_max_margin_dual, support_rank_condition, DualSolution, RankReport, DUAL_TOL, RANK_TOL};
use crate::regpath::{compare_paths, PairingMode, PathComparison};

/// `1/sqrt(2)`-type constants of the fixed-lambda comparison.
const COSINE_FLOOR: f64 = std::f64::consts::FRAC_1_SQRT_2;
const NORM_RATIO_RANGE: (f64, f64) = (0.5857, 3.4143);
const BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathCompareParams {
    pub data: DataSpec,
    pub eta: Option<f64>,
    /// Largest recorded `eta t`; records sit on a 1-2-5 grid in `eta t`.
    pub eta_t_max: f64,
    /// Early reference point of the matched-norm distance, in `eta t`.
    pub eta_t_early: f64,
    /// Draws tried until the support condition holds.
    pub max_seed_tries: usize,
    /// Relative KKT tolerance of the path solves.
    pub path_tol: f64,
    pub window_decades: f64,
    /// Required `distance(final) / distance(early)` upper bound.
    pub distance_ratio: f64,
    /// Required `||w_final|| / ||w_early||` lower bound.
    pub norm_growth: f64,
}

impl Default for PathCompareParams {
    fn default() -> Self {
        let (n, d) = (100, 800);
        Self {
            // unit total variance keeps eta near 1, so t and eta t agree
            data: DataSpec {
                spectrum: SpectrumSpec::Identity { scale: 1.0 / d as f64 },
                d,
                n,
                parameter: ParameterSpec::Sparse { k: 4, sigma_norm: 1.0 },
            },
            eta: None,
            eta_t_max: 1e6,
            eta_t_early: 10.0,
            max_seed_tries: 50,
            path_tol: 1e-9,
            window_decades: 1.0,
            distance_ratio: 0.2,
            norm_growth: 5.0,
        }
    }
}

/// Steps whose `eta t` lies on the 1-2-5 grid up to `eta_t_max`, plus `eta_t_early`.
fn record_times(eta: f64, eta_t_max: f64, eta_t_early: f64) -> Vec<u64> {
    let mut times = vec![(eta_t_early / eta).round().max(1.0) as u64];
    let mut decade = 1.0;
    while decade <= eta_t_max {
        for m in [1.0, 2.0, 5.0] {
            if m * decade <= eta_t_max * (1.0 + 1e-12) {
                times.push((m * decade / eta).round().max(1.0) as u64);
            }
        }
        decade *= 10.0;
    }
    times.sort_unstable();
    times.dedup();
    times
}

fn find_instance(config: &ExperimentConfig, params: &PathCompareParams) -> Result<(Dataset, u64, usize, DualSolution, RankReport)> {
    for attempt in 0..params.max_seed_tries {
        let seed = derive_seed(config.seed, 0, attempt as u64);
        let (_, _, data) = params.data.build(seed)?;
        if !check_separability(&data)?.separable {
            continue;
        }
        let dual = solve_max_margin_dual(&data, DUAL_TOL)?;
        let rank = support_rank_condition(&data, &dual, RANK_TOL)?;
        if rank.holds {
            return Ok((data, seed, attempt + 1, dual, rank));
        }
    }
    Err(Error::InvalidArgument(format!(
        "no draw satisfied the support condition in {} tries",
        params.max_seed_tries
    )))
}

fn comparison_table(name: &str, cmp: &PathComparison) -> ResultTable {
    let mut table = ResultTable::new(name, &["t", "eta_t", "lambda", "distance", "cosine", "norm_ratio", "w_norm", "u_norm"]);
    for r in &cmp.rows {
        table.push(vec![
            r.t.into(),
            r.eta_t.into(),
            r.lambda.into(),
            r.distance.into(),
            r.cosine.into(),
            r.norm_ratio.into(),
            r.w_norm.into(),
            r.u_norm.into(),
        ]);
    }
    table
}

pub fn exp_path_compare(config: &ExperimentConfig, params: &PathCompareParams) -> Result<ExperimentResult> {
    let mut out = ExperimentResult::new(config);
    let (data, seed, tries, dual, rank) = find_instance(config, params)?;
    let eta = match params.eta {
        Some(eta) => eta,
        None => default_stepsize(&data)?.0,
    };
    let times = record_times(eta, params.eta_t_max, params.eta_t_early);
    let horizon = *times.last().expect("at least one record time");
    let gd = GdConfig {
        keep_risk_history: false,
        ..GdConfig::new(eta, horizon).with_record(RecordSchedule::Explicit { times })
    };
    let trace = run_gd(&data, &gd, &[], None, &[])?;

    let fixed = compare_paths(&trace, &data, PairingMode::LambdaOfT, params.path_tol, None)?;
    let violations: Vec<u64> = fixed
        .rows
        .iter()
        .filter(|r| {
            r.cosine < COSINE_FLOOR - BOUND_TOL
                || r.norm_ratio < NORM_RATIO_RANGE.0
                || r.norm_ratio > NORM_RATIO_RANGE.1
                || r.distance > r.w_norm * COSINE_FLOOR + BOUND_TOL
        })
        .map(|r| r.t)
        .collect();
    out.checks.push(Check::assert(
        "fixed_lambda_bounds",
        violations.is_empty() && !fixed.rows.is_empty(),
        format!("{} rows, violations at t = {violations:?}", fixed.rows.len()),
    ));

    let matched = compare_paths(&trace, &data, PairingMode::MatchedNorm, params.path_tol, Some(&dual.w_tilde))?;
    out.checks.push(Check::assert(
        "matched_pairs_resolved",
        matched.skipped.is_empty(),
        format!("skipped {:?}", matched.skipped),
    ));
    let early_t = (params.eta_t_early / eta).round().max(1.0) as u64;
    let early = matched.rows.iter().find(|r| r.t == early_t);
    let last = matched.rows.last();
    match (early, last) {
        (Some(e), Some(l)) => {
            out.checks.push(Check::assert(
                "matched_distance_shrinks",
                l.distance < params.distance_ratio * e.distance,
                format!(
                    "distance {:.4e} at eta t = {:.3}, {:.4e} at eta t = {:.3e} (ratio {:.3}, required < {})",
                    e.distance,
                    e.eta_t,
                    l.distance,
                    l.eta_t,
                    l.distance / e.distance,
                    params.distance_ratio
                ),
            ));
            out.checks.push(Check::assert(
                "norm_grows",
                l.w_norm >= params.norm_growth * e.w_norm,
                format!("||w|| {:.4} -> {:.4}", e.w_norm, l.w_norm),
            ));
            let peak = matched.rows.iter().map(|r| r.distance).fold(0.0, f64::max);
            out.set("matched_distance_peak", peak);
        }
        _ => out.checks.push(Check::assert("matched_distance_shrinks", false, "early or final pair missing")),
    }
    let t_final = trace.final_t;
    let tail: Vec<f64> = matched
        .rows
        .iter()
        .filter(|r| in_window(r.t, t_final, params.window_decades))
        .map(|r| r.lambda)
        .collect();
    out.checks.push(Check::assert(
        "matched_lambda_decreasing",
        tail.len() >= 2 && strictly_decreasing(&tail),
        format!("lambda over the tail {:?}", tail.iter().map(|l| format!("{l:.4e}")).collect::<Vec<_>>()),
    ));

    out.set("seed_used", seed);
    out.set("seed_tries", tries);
    out.set("eta", eta);
    out.set("max_margin", dual.gamma);
    out.set("support_condition", &rank);
    out.set("support_size", dual.support.len());

    let series = |name: &str, cmp: &PathComparison| -> (String, Vec<(f64, f64)>) {
        (name.into(), cmp.rows.iter().map(|r| (r.eta_t, r.distance)).collect())
    };
    out.plots.push(Plot {
        name: "distance".into(),
        title: "Distance between GD and the regularization path".into(),
        x_label: "eta t".into(),
        log_x: true,
        series: vec![series("lambda = 1/(eta t)", &fixed), series("matched norm", &matched)],
    });
    out.tables.push(comparison_table("lambda_of_t", &fixed));
    out.tables.push(comparison_table("matched_norm", &matched));
    Ok(out)
}
