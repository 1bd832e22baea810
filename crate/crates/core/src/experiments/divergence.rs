use serde::{Deserialize, Serialize};

use super::{in_window, linear_fit, strictly_decreasing, strictly_increasing, Check, DataSpec, ExperimentConfig, ExperimentResult, Plot, ResultTable};
use crate::data_model::{ParameterSpec, SpectrumSpec};
use crate::error::{Error, Result};
use crate::gd::{default_stepsize, run_gd, GdConfig, RecordSchedule, StoppingRule};
use crate::margin::{check_separability, solve_max_margin_dual, DUAL_TOL};
use crate::risk::{bayes_risks, risks_of};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DivergenceParams {
    pub data: DataSpec,
    pub eta: Option<f64>,
    pub horizon: u64,
    pub record_ratio: f64,
    pub stop_k: usize,
    /// Width of the asymptotic window, in decades of `t`.
    pub window_decades: f64,
    /// Required `R(final) / R(stop)`.
    pub risk_growth: f64,
    /// Required `min Cal over the window / Cal(stop)`.
    pub calibration_ratio: f64,
}

impl Default for DivergenceParams {
    fn default() -> Self {
        Self {
            // a few informative directions over a long flat tail: the data are
            // separable, yet early stopping recovers w* well
            data: DataSpec {
                spectrum: SpectrumSpec::Spiked { k: 4, tail_trace: 2.0 },
                d: 2000,
                n: 200,
                parameter: ParameterSpec::Sparse { k: 4, sigma_norm: 1.0 },
            },
            eta: None,
            horizon: 1 << 22,
            record_ratio: 2f64.powf(0.25),
            stop_k: 4,
            window_decades: 1.0,
            risk_growth: 2.0,
            calibration_ratio: 10.0,
        }
    }
}

pub fn exp_divergence(config: &ExperimentConfig, params: &DivergenceParams) -> Result<ExperimentResult> {
    let mut out = ExperimentResult::new(config);
    let grid = config.oracle.grid()?;
    let (cov, p, data) = params.data.build(config.seed)?;
    let sep = check_separability(&data)?;
    if !sep.separable {
        return Err(Error::Inseparable {
            witness_residual: match sep.certificate {
                crate::margin::Certificate::Witness { residual, .. } => residual,
                _ => 0.0,
            },
        });
    }
    let dual = solve_max_margin_dual(&data, DUAL_TOL)?;
    let eta = match params.eta {
        Some(eta) => eta,
        None => default_stepsize(&data)?.0,
    };
    let rule = StoppingRule::CrossHead { k: params.stop_k };
    let gd = GdConfig {
        keep_risk_history: false,
        ..GdConfig::new(eta, params.horizon).with_record(RecordSchedule::Geometric { ratio: params.record_ratio })
    };
    let trace = run_gd(&data, &gd, std::slice::from_ref(&rule), Some(&p), &[])?;

    let mut table = ResultTable::new(
        "trace",
        &["t", "eta_t", "w_norm", "emp_risk", "pop_risk", "pop_zero_one", "calibration", "directional_gap"],
    );
    for r in &trace.records {
        let rt = risks_of(&r.w, &p, &cov, &grid)?;
        let gap = if r.w_norm > 0.0 { (&r.w / r.w_norm - &dual.w_tilde).norm() } else { f64::NAN };
        table.push(vec![
            r.t.into(),
            (eta * r.t as f64).into(),
            r.w_norm.into(),
            r.emp_risk.into(),
            rt.logistic.into(),
            rt.zero_one.into(),
            rt.calibration.into(),
            gap.into(),
        ]);
    }

    let t_final = trace.final_t;
    let ts: Vec<u64> = trace.records.iter().map(|r| r.t).collect();
    let window: Vec<usize> = (0..ts.len()).filter(|&i| in_window(ts[i], t_final, params.window_decades)).collect();
    let pick = |col: &str| -> Result<Vec<f64>> {
        let c = table.column(col)?;
        Ok(window.iter().map(|&i| c[i]).collect())
    };
    let (risk_w, cal_w, gap_w, norm_w) = (pick("pop_risk")?, pick("calibration")?, pick("directional_gap")?, pick("w_norm")?);
    let last = trace.last();
    let final_risk = risk_w.last().copied().unwrap_or(f64::NAN);

    let stop_t = trace.event(&rule.id()).and_then(|e| e.t);
    let stop = match stop_t {
        Some(t) => Some(risks_of(&trace.record_at(t)?.w, &p, &cov, &grid)?),
        None => None,
    };
    out.checks.push(Check::assert(
        "separable",
        dual.gamma > 0.0,
        format!("certificate {}, max margin {:.4e}", sep.method, dual.gamma),
    ));
    out.checks.push(Check::assert(
        "risk_increasing_in_window",
        window.len() >= 3 && strictly_increasing(&risk_w),
        format!("{} records in the last {} decade(s)", window.len(), params.window_decades),
    ));
    let ratios: Vec<f64> = risk_w.iter().zip(&norm_w).map(|(r, n)| r / n).collect();
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let (slope, intercept) = linear_fit(&norm_w, &risk_w);
    out.checks.push(Check::assert(
        "risk_linear_in_norm",
        rmin > 0.0 && rmax <= 10.0 * rmin,
        format!("R/||w|| in [{rmin:.4}, {rmax:.4}]; fit R = {slope:.4} ||w|| + {intercept:.4}"),
    ));
    match (stop_t, stop) {
        (Some(t), Some(s)) => {
            out.checks.push(Check::assert(
                "risk_exceeds_early_stopped",
                final_risk >= params.risk_growth * s.logistic,
                format!("R(final) = {final_risk:.5}, R(stop at t = {t}) = {:.5}", s.logistic),
            ));
            let cal_min = cal_w.iter().copied().fold(f64::INFINITY, f64::min);
            out.checks.push(Check::assert(
                "calibration_floor",
                cal_min >= params.calibration_ratio * s.calibration,
                format!("min Cal in window = {cal_min:.5}, Cal(stop) = {:.5}", s.calibration),
            ));
            out.set("stop_t", t);
            out.set("stop_risks", s);
        }
        _ => out.checks.push(Check::assert("risk_exceeds_early_stopped", false, "the stopping rule never fired")),
    }
    out.checks.push(Check::assert(
        "directional_gap_decreasing",
        strictly_decreasing(&gap_w),
        format!("gap {:.4e} -> {:.4e}", gap_w.first().unwrap_or(&f64::NAN), gap_w.last().unwrap_or(&f64::NAN)),
    ));

    let (bayes_risk, bayes_error) = bayes_risks(p.coeffs(), &cov, &grid)?;
    out.set("eta", eta);
    out.set("final_t", t_final);
    out.set("final_w_norm", last.w_norm);
    out.set("max_margin", dual.gamma);
    out.set("risk_norm_fit", serde_json::json!({"slope": slope, "intercept": intercept}));
    out.set("calibration_floor", cal_w.iter().copied().fold(f64::INFINITY, f64::min));
    out.set("bayes_risk", bayes_risk);
    out.set("bayes_zero_one", bayes_error);

    let x = table.column("eta_t")?;
    let series = |name: &str, col: &str| -> Result<(String, Vec<(f64, f64)>)> {
        let y = table.column(col)?;
        Ok((name.into(), x.iter().copied().zip(y).filter(|(t, v)| *t > 0.0 && v.is_finite()).collect()))
    };
    out.plots.push(Plot {
        name: "risk".into(),
        title: "Population risk and calibration after interpolation".into(),
        x_label: "eta t".into(),
        log_x: true,
        series: vec![
            series("population risk", "pop_risk")?,
            series("calibration", "calibration")?,
            series("directional gap", "directional_gap")?,
        ],
    });
    out.tables.push(table);
    Ok(out)
}
