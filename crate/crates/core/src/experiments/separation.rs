use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, median, strictly_decreasing, Check, DataSpec, ExperimentConfig, ExperimentResult, Plot, ResultTable, Value};
use crate::data_model::{CovarianceModel, ParameterSpec, SpectrumSpec, TrueParameter};
use crate::error::{Error, Result};
use crate::gd::{default_stepsize, run_gd, GdConfig, RecordSchedule, StoppingRule};
use crate::margin::{check_separability, interpolation_check, solve_max_margin_dual, DUAL_TOL};
use crate::risk::{bayes_risks, risks_of, QuadratureGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationParams {
    /// Sparsity of `Sigma^{1/2} w*`.
    pub k: usize,
    pub sigma_norm: f64,
    pub ns: Vec<usize>,
    /// `d = ceil(d_factor * n * ln n)`.
    pub d_factor: f64,
    /// Total variance of the uninformative directions.
    pub tail_trace: f64,
    pub seeds: usize,
    pub max_resamples: usize,
    pub gd_max_iters: u64,
    /// `delta_eff` in the reference rate `1 / (4 sqrt(ln n ln(1/delta_eff)))`.
    pub delta_eff: f64,
    pub control: ControlParams,
}

/// Dense `w*` with `n > d`: the data are not separable, so no interpolator exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    pub n: usize,
    pub d: usize,
    pub gd_horizon: u64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            n: 200,
            d: 20,
            gd_horizon: 10_000,
        }
    }
}

impl Default for SeparationParams {
    fn default() -> Self {
        Self {
            k: 4,
            sigma_norm: 1.0,
            ns: vec![100, 200, 400],
            d_factor: 8.0,
            tail_trace: 1.0,
            seeds: 10,
            max_resamples: 20,
            gd_max_iters: 100_000,
            delta_eff: 0.1,
            control: ControlParams::default(),
        }
    }
}

struct Replicate {
    seed: u64,
    resamples: usize,
    excess_max_margin: f64,
    excess_ols: f64,
    excess_gd: f64,
    stop_t: Option<u64>,
    gd_interpolates: bool,
}

fn excess(w: &DVector<f64>, cov: &CovarianceModel, p: &TrueParameter, grid: &QuadratureGrid) -> Result<f64> {
    let (_, bayes) = bayes_risks(p.coeffs(), cov, grid)?;
    Ok(risks_of(w, p, cov, grid)?.zero_one - bayes)
}

fn replicate(spec: &DataSpec, params: &SeparationParams, seed: u64, grid: &QuadratureGrid) -> Result<Replicate> {
    let mut resamples = 0;
    let (data, seed) = loop {
        let s = derive_seed(seed, 1, resamples as u64);
        let (_, _, data) = spec.build(s)?;
        if check_separability(&data)?.separable {
            break (data, s);
        }
        resamples += 1;
        if resamples > params.max_resamples {
            return Err(Error::InvalidArgument(format!(
                "no separable draw after {} resamples at n = {}",
                params.max_resamples, spec.n
            )));
        }
    };
    let (cov, p) = spec.population()?;

    let dual = solve_max_margin_dual(&data, DUAL_TOL)?;
    let (mm_ok, _) = interpolation_check(&dual.w_primal, &data)?;
    // minimum-norm interpolator X^T K^{-1} y
    let a = data
        .gram()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("singular Gram matrix".into()))?
        .solve(data.labels());
    let w_ols = data.features().tr_mul(&a);
    let (ols_ok, _) = interpolation_check(&w_ols, &data)?;
    if !(mm_ok && ols_ok) {
        return Err(Error::InvalidArgument("an interpolator failed the interpolation check".into()));
    }

    let (eta, _) = default_stepsize(&data)?;
    let gd = GdConfig {
        keep_risk_history: false,
        halt_when_crossed: true,
        ..GdConfig::new(eta, params.gd_max_iters).with_record(RecordSchedule::Explicit { times: vec![] })
    };
    let rule = StoppingRule::CrossHead { k: params.k };
    let trace = run_gd(&data, &gd, std::slice::from_ref(&rule), Some(&p), &[])?;
    let stop_t = trace.event(&rule.id()).and_then(|e| e.t);
    let w_gd = &trace.last().w;
    let (gd_interpolates, _) = interpolation_check(w_gd, &data)?;

    Ok(Replicate {
        seed,
        resamples,
        excess_max_margin: excess(&dual.w_primal, &cov, &p, grid)?,
        excess_ols: excess(&w_ols, &cov, &p, grid)?,
        excess_gd: excess(w_gd, &cov, &p, grid)?,
        stop_t,
        gd_interpolates,
    })
}

pub fn exp_separation(config: &ExperimentConfig, params: &SeparationParams) -> Result<ExperimentResult> {
    let mut out = ExperimentResult::new(config);
    let grid = config.oracle.grid()?;
    let mut reps = ResultTable::new(
        "replicates",
        &["n", "d", "replicate", "seed", "resamples", "excess_max_margin", "excess_ols", "excess_gd", "stop_t", "gd_interpolates"],
    );
    let mut summary = ResultTable::new(
        "summary",
        &["n", "d", "median_max_margin", "median_ols", "median_gd", "reference_rate"],
    );
    let mut medians = Vec::new();
    for (group, &n) in params.ns.iter().enumerate() {
        let d = (params.d_factor * n as f64 * (n as f64).ln()).ceil() as usize;
        let spec = DataSpec {
            spectrum: SpectrumSpec::Spiked { k: params.k, tail_trace: params.tail_trace },
            d,
            n,
            parameter: ParameterSpec::Sparse { k: params.k, sigma_norm: params.sigma_norm },
        };
        let results: Vec<Replicate> = (0..params.seeds)
            .into_par_iter()
            .map(|r| replicate(&spec, params, derive_seed(config.seed, group as u64, r as u64), &grid))
            .collect::<Result<_>>()?;
        for (r, rep) in results.iter().enumerate() {
            reps.push(vec![
                n.into(),
                d.into(),
                r.into(),
                rep.seed.into(),
                rep.resamples.into(),
                rep.excess_max_margin.into(),
                rep.excess_ols.into(),
                rep.excess_gd.into(),
                rep.stop_t.map_or_else(|| "none".into(), |t| t.into()),
                rep.gd_interpolates.into(),
            ]);
        }
        let col = |f: fn(&Replicate) -> f64| median(&results.iter().map(f).collect::<Vec<_>>());
        let m = (col(|r| r.excess_max_margin), col(|r| r.excess_ols), col(|r| r.excess_gd));
        let nf = n as f64;
        let reference = 1.0 / (4.0 * (nf.ln() * (1.0 / params.delta_eff).ln()).sqrt());
        summary.push(vec![n.into(), d.into(), m.0.into(), m.1.into(), m.2.into(), reference.into()]);
        medians.push((n, m, reference));
    }

    for &(n, (mm, ols, gd), _) in &medians {
        out.checks.push(Check::assert(
            &format!("separation_n{n}"),
            mm > gd && ols > gd,
            format!("median excess error: max-margin {mm:.5}, OLS {ols:.5}, early-stopped GD {gd:.5}"),
        ));
    }
    if medians.len() >= 2 {
        let gd: Vec<f64> = medians.iter().map(|m| m.1 .2).collect();
        let (first, last) = (medians[0], medians[medians.len() - 1]);
        let mm_ratio = last.1 .0 / first.1 .0;
        let gd_ratio = last.1 .2 / first.1 .2;
        out.checks.push(Check::assert(
            "gd_error_decreases",
            strictly_decreasing(&gd),
            format!("early-stopped medians {gd:.5?}"),
        ));
        out.checks.push(Check::assert(
            "interpolator_error_persists",
            mm_ratio > gd_ratio,
            format!("max-margin error kept {mm_ratio:.3} of its value over the n grid, early-stopped GD {gd_ratio:.3}"),
        ));
    }
    // fitted constant of the reference rate, reported only
    let fitted = medians.iter().map(|(_, m, r)| m.0 / r).fold(f64::INFINITY, f64::min);
    out.set("reference_rate_constant", fitted);

    let control = run_control(config, params, &grid)?;
    let separable = control.rows.iter().filter(|r| r[3] == true.into()).count();
    out.checks.push(Check::observe(
        "control_has_no_interpolator",
        separable == 0,
        format!(
            "dense w* with n = {} > d = {}: {separable} of {} draws separable",
            params.control.n,
            params.control.d,
            control.rows.len()
        ),
    ));
    out.tables.push(reps);

    let x: Vec<f64> = medians.iter().map(|m| m.0 as f64).collect();
    let line = |name: &str, f: fn(&(usize, (f64, f64, f64), f64)) -> f64| {
        (name.to_string(), x.iter().copied().zip(medians.iter().map(f)).collect::<Vec<_>>())
    };
    out.plots.push(Plot {
        name: "excess_error".into(),
        title: "Median excess zero-one error".into(),
        x_label: "n".into(),
        log_x: true,
        series: vec![
            line("max-margin", |m| m.1 .0),
            line("OLS interpolator", |m| m.1 .1),
            line("early-stopped GD", |m| m.1 .2),
        ],
    });
    out.tables.push(summary);
    out.tables.push(control);
    Ok(out)
}

fn run_control(config: &ExperimentConfig, params: &SeparationParams, grid: &QuadratureGrid) -> Result<ResultTable> {
    let c = &params.control;
    let spec = DataSpec {
        spectrum: SpectrumSpec::Identity { scale: 1.0 },
        d: c.d,
        n: c.n,
        parameter: ParameterSpec::Sparse { k: c.d, sigma_norm: params.sigma_norm },
    };
    let mut table = ResultTable::new("control", &["replicate", "seed", "n", "separable", "excess_gd_stop", "excess_gd_final"]);
    let group = params.ns.len() as u64;
    let rows: Vec<Vec<Value>> = (0..params.seeds)
        .into_par_iter()
        .map(|r| -> Result<Vec<Value>> {
            let seed = derive_seed(config.seed, group, r as u64);
            let (cov, p, data) = spec.build(seed)?;
            let separable = check_separability(&data)?.separable;
            let (eta, _) = default_stepsize(&data)?;
            let rule = StoppingRule::CrossStar;
            let gd = GdConfig {
                keep_risk_history: false,
                ..GdConfig::new(eta, c.gd_horizon).with_record(RecordSchedule::Explicit { times: vec![] })
            };
            let trace = run_gd(&data, &gd, std::slice::from_ref(&rule), Some(&p), &[])?;
            let stop = match trace.event(&rule.id()).and_then(|e| e.t) {
                Some(t) => excess(&trace.record_at(t)?.w, &cov, &p, grid)?,
                None => f64::NAN,
            };
            let fin = excess(&trace.last().w, &cov, &p, grid)?;
            Ok(vec![r.into(), seed.into(), c.n.into(), separable.into(), stop.into(), fin.into()])
        })
        .collect::<Result<_>>()?;
    for row in rows {
        table.push(row);
    }
    Ok(table)
}
