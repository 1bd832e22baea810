use serde::{Deserialize, Serialize};

use super::{Check, DataSpec, ExperimentConfig, ExperimentResult, Plot, ResultTable};
use crate::data_model::{ParameterSpec, SpectrumSpec};
use crate::error::Result;
use crate::gd::{default_stepsize, run_gd, GdConfig, RecordSchedule, StoppingRule, DESCENT_TOL};
use crate::margin::interpolation_check;
use crate::risk::{bayes_risks, monte_carlo_risks, risks_of, MIN_MC_SAMPLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Figure1Params {
    pub data: DataSpec,
    /// `None` uses `1 / beta_hat`.
    pub eta: Option<f64>,
    pub horizon: u64,
    pub record_ratio: f64,
    /// Head size of the `cross_head` stopping rule.
    pub stop_k: usize,
    /// Required rise of the population risk from its path minimum to the end.
    pub min_rise: f64,
}

impl Default for Figure1Params {
    fn default() -> Self {
        Self {
            data: DataSpec {
                spectrum: SpectrumSpec::PowerLaw { exponent: 2.0 },
                d: 2000,
                n: 1000,
                parameter: ParameterSpec::HeadConstant { k: 100, value: 1.0 },
            },
            eta: None,
            horizon: 1 << 18,
            record_ratio: 2f64.powf(0.25),
            stop_k: 100,
            min_rise: 0.05,
        }
    }
}

pub fn exp_figure1(config: &ExperimentConfig, params: &Figure1Params) -> Result<ExperimentResult> {
    let mut out = ExperimentResult::new(config);
    let grid = config.oracle.grid()?;
    let (cov, p, data) = params.data.build(config.seed)?;
    let eta = match params.eta {
        Some(eta) => eta,
        None => default_stepsize(&data)?.0,
    };
    let rules = [StoppingRule::CrossHead { k: params.stop_k }, StoppingRule::CrossStar];
    let gd = GdConfig {
        keep_risk_history: false,
        ..GdConfig::new(eta, params.horizon).with_record(RecordSchedule::Geometric { ratio: params.record_ratio })
    };
    let trace = run_gd(&data, &gd, &rules, Some(&p), &[])?;
    let (bayes_risk, bayes_error) = bayes_risks(p.coeffs(), &cov, &grid)?;

    let mut table = ResultTable::new(
        "trace",
        &["t", "eta_t", "emp_risk", "pop_risk", "emp_zero_one", "pop_zero_one", "calibration", "w_norm"],
    );
    let mut triples = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let rt = risks_of(&r.w, &p, &cov, &grid)?;
        table.push(vec![
            r.t.into(),
            (eta * r.t as f64).into(),
            r.emp_risk.into(),
            rt.logistic.into(),
            data.training_error(&r.w)?.into(),
            rt.zero_one.into(),
            rt.calibration.into(),
            r.w_norm.into(),
        ]);
        triples.push(rt);
    }

    let argmin = |f: &dyn Fn(usize) -> f64| (0..triples.len()).min_by(|&a, &b| f(a).total_cmp(&f(b))).unwrap();
    let risk_min = argmin(&|i| triples[i].logistic);
    let err_min = argmin(&|i| triples[i].zero_one);
    let last = triples.len() - 1;

    let mut markers = ResultTable::new("markers", &["marker", "t", "eta_t", "pop_risk", "pop_zero_one", "calibration"]);
    let mut mark = |name: &str, i: usize| {
        let r = &trace.records[i];
        markers.push(vec![
            name.into(),
            r.t.into(),
            (eta * r.t as f64).into(),
            triples[i].logistic.into(),
            triples[i].zero_one.into(),
            triples[i].calibration.into(),
        ]);
    };
    let mut stops = serde_json::Map::new();
    for ev in &trace.stop_events {
        match ev.t {
            Some(t) => {
                let i = trace.records.iter().position(|r| r.t == t).expect("stopping times are recorded");
                mark(&ev.rule, i);
                stops.insert(ev.rule.clone(), t.into());
            }
            None => {
                stops.insert(ev.rule.clone(), serde_json::Value::Null);
            }
        }
    }
    mark("risk_min", risk_min);
    mark("zero_one_min", err_min);
    mark("final", last);

    let emp = table.column("emp_risk")?;
    let monotone = emp.windows(2).all(|w| w[1] <= w[0] * (1.0 + DESCENT_TOL));
    out.checks.push(Check::assert(
        "emp_risk_monotone",
        monotone,
        format!("{} recorded points, descent tolerance {DESCENT_TOL:e} relative", emp.len()),
    ));
    let rise = triples[last].logistic - triples[risk_min].logistic;
    out.checks.push(Check::assert(
        "pop_risk_interior_min",
        risk_min > 0 && risk_min < last && rise >= params.min_rise,
        format!(
            "min R = {:.6} at t = {}; R(final) = {:.6}; rise {:.4} (required {})",
            triples[risk_min].logistic, trace.records[risk_min].t, triples[last].logistic, rise, params.min_rise
        ),
    ));
    out.checks.push(Check::assert(
        "zero_one_min_below_final",
        triples[err_min].zero_one < triples[last].zero_one,
        format!(
            "min error {:.6} at t = {}; final {:.6}",
            triples[err_min].zero_one, trace.records[err_min].t, triples[last].zero_one
        ),
    ));
    let head_id = rules[0].id();
    if let Some(t) = trace.event(&head_id).and_then(|e| e.t) {
        let (interpolates, margin) = interpolation_check(&trace.record_at(t)?.w, &data)?;
        out.checks.push(Check::observe(
            "stopped_iterate_interpolates",
            interpolates,
            format!("minimum margin {margin:.4e} at t = {t}"),
        ));
        if config.oracle.mc_budget >= MIN_MC_SAMPLES {
            let w = &trace.record_at(t)?.w;
            let mc = monte_carlo_risks(w, p.coeffs(), &cov, config.oracle.mc_budget, config.seed)?;
            let quad = risks_of(w, &p, &cov, &grid)?;
            let z = [
                (quad.logistic - mc.estimate.logistic) / mc.std_error.logistic,
                (quad.zero_one - mc.estimate.zero_one) / mc.std_error.zero_one,
                (quad.calibration - mc.estimate.calibration) / mc.std_error.calibration,
            ];
            out.checks.push(Check::observe(
                "monte_carlo_agrees",
                z.iter().all(|v| v.abs() <= 3.0),
                format!("standardized gaps {z:.2?} with {} draws", mc.samples),
            ));
            out.set("monte_carlo", &mc);
        }
    }

    out.set("eta", eta);
    out.set("beta_hat", trace.beta_hat);
    out.set("final_t", trace.final_t);
    out.set("bayes_risk", bayes_risk);
    out.set("bayes_zero_one", bayes_error);
    out.set("stopping_times", stops);
    out.set("risk_min_t", trace.records[risk_min].t);

    let x = table.column("eta_t")?;
    let series = |name: &str, col: &str| -> Result<(String, Vec<(f64, f64)>)> {
        let y = table.column(col)?;
        Ok((name.into(), x.iter().copied().zip(y).filter(|(t, _)| *t > 0.0).collect()))
    };
    out.plots.push(Plot {
        name: "risk".into(),
        title: "Logistic risk along the GD path".into(),
        x_label: "eta t".into(),
        log_x: true,
        series: vec![series("empirical", "emp_risk")?, series("population", "pop_risk")?],
    });
    out.plots.push(Plot {
        name: "zero_one".into(),
        title: "Zero-one error and calibration along the GD path".into(),
        x_label: "eta t".into(),
        log_x: true,
        series: vec![
            series("empirical zero-one", "emp_zero_one")?,
            series("population zero-one", "pop_zero_one")?,
            series("calibration", "calibration")?,
        ],
    });
    out.tables.push(table);
    out.tables.push(markers);
    Ok(out)
}
