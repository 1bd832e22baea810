use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use earlystop::data_model::{CovarianceModel, Dataset, ParameterSpec, SpectrumSpec, TrueParameter};
use earlystop::experiments::{run_experiment, DataSpec, ExperimentConfig, ExperimentId, ExperimentSpec};
use earlystop::gd::{default_stepsize, read_iterates, run_gd, GdConfig, RecordSchedule, StoppingRule};
use earlystop::margin::{check_separability, solve_max_margin_dual, support_rank_condition, DUAL_TOL, RANK_TOL};
use earlystop::regpath::{build_reg_path, lambda_grid};
use earlystop::risk::{bayes_risks, monte_carlo_risks, risks_of, QuadratureGrid, DEFAULT_ORDER};
use nalgebra::DVector;

#[derive(Parser)]
#[command(name = "earlystop", version, about = "Early-stopped GD for overparameterized logistic regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct OracleFlags {
    /// Monte Carlo cross-check budget (0 disables it).
    #[arg(long)]
    mc_budget: Option<usize>,
    #[arg(long)]
    quad_order: Option<usize>,
}

#[derive(Args, Clone)]
struct LambdaFlags {
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_ratio: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset; the config is a data spec (spectrum, d, n, parameter).
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Run gradient descent on a dataset CSV.
    RunGd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Truth file written by gen-data; enables the crossing rules.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Defaults to 1 / beta_hat.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        max_iters: u64,
        /// Add the rule `L(w_t) <= L(w*_{0:k})`.
        #[arg(long)]
        stop_k: Option<usize>,
        /// Add the rule `L(w_t) <= L(w*)`.
        #[arg(long)]
        cross_star: bool,
    },
    /// Solve the l2-regularized path on a geometric lambda grid.
    RunRegpath {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lambda: LambdaFlags,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Separability certificate, max-margin dual and support condition.
    Margin {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Population risks of a predictor against a truth file.
    RiskEval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        oracle: OracleFlags,
        #[arg(long)]
        truth: PathBuf,
        /// One coefficient per line.
        #[arg(long, conflicts_with = "iterates")]
        weights: Option<PathBuf>,
        /// Iterate dump written by run-gd; `--t` selects the record (last by default).
        #[arg(long)]
        iterates: Option<PathBuf>,
        #[arg(long)]
        t: Option<u64>,
    },
    /// Run an experiment: figure1, divergence, separation, path-compare or counterexample.
    Exp {
        id: ExperimentId,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        oracle: OracleFlags,
        #[command(flatten)]
        lambda: LambdaFlags,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every asserted postcondition held.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::GenData { common } => gen_data(&common),
        Command::RunGd {
            common,
            data,
            truth,
            eta,
            max_iters,
            stop_k,
            cross_star,
        } => run_gd_cmd(&common, &data, truth.as_deref(), eta, max_iters, stop_k, cross_star),
        Command::RunRegpath { common, lambda, data, tol } => run_regpath(&common, &lambda, &data, tol),
        Command::Margin { common, data } => margin(&common, &data),
        Command::RiskEval {
            common,
            oracle,
            truth,
            weights,
            iterates,
            t,
        } => risk_eval(&common, &oracle, &truth, weights.as_deref(), iterates.as_deref(), t),
        Command::Exp {
            id,
            common,
            oracle,
            lambda,
            svg,
        } => experiment(id, &common, &oracle, &lambda, svg),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn gen_data(common: &Common) -> Result<bool> {
    let spec: DataSpec = match &common.config {
        Some(path) => read_json(path)?,
        None => DataSpec {
            spectrum: SpectrumSpec::PowerLaw { exponent: 2.0 },
            d: 400,
            n: 200,
            parameter: ParameterSpec::HeadConstant { k: 10, value: 1.0 },
        },
    };
    let seed = common.seed.unwrap_or(1);
    let (cov, p, data) = spec.build(seed)?;
    fs::create_dir_all(&common.out)?;
    data.write_csv(&common.out.join("dataset.csv"))?;
    write_json(
        &common.out.join("truth.json"),
        &serde_json::json!({
            "seed": seed,
            "spec": spec,
            "eigenvalues": cov.eigenvalues(),
            "coeffs": p.coeffs().as_slice(),
            "sigma_norm": p.sigma_norm(),
        }),
    )?;
    println!("wrote n = {}, d = {} to {}", data.n(), data.d(), common.out.display());
    Ok(true)
}

fn read_truth(path: &Path) -> Result<(CovarianceModel, TrueParameter)> {
    let v: serde_json::Value = read_json(path)?;
    let floats = |key: &str| -> Result<Vec<f64>> {
        v[key]
            .as_array()
            .with_context(|| format!("truth file lacks '{key}'"))?
            .iter()
            .map(|x| x.as_f64().context("non-numeric entry"))
            .collect()
    };
    let cov = CovarianceModel::new(floats("eigenvalues")?)?;
    let p = TrueParameter::new(&cov, DVector::from_vec(floats("coeffs")?))?;
    Ok((cov, p))
}

fn run_gd_cmd(
    common: &Common,
    data_path: &Path,
    truth: Option<&Path>,
    eta: Option<f64>,
    max_iters: u64,
    stop_k: Option<usize>,
    cross_star: bool,
) -> Result<bool> {
    let data = Dataset::read_csv(data_path)?;
    let config = match &common.config {
        Some(path) => read_json::<GdConfig>(path)?,
        None => {
            let eta = match eta {
                Some(eta) => eta,
                None => default_stepsize(&data)?.0,
            };
            GdConfig::new(eta, max_iters).with_record(RecordSchedule::Geometric { ratio: 2.0 })
        }
    };
    let truth = truth.map(read_truth).transpose()?;
    let mut rules = Vec::new();
    if let Some(k) = stop_k {
        rules.push(StoppingRule::CrossHead { k });
    }
    if cross_star {
        rules.push(StoppingRule::CrossStar);
    }
    let trace = run_gd(&data, &config, &rules, truth.as_ref().map(|t| &t.1), &[])?;
    fs::create_dir_all(&common.out)?;
    trace.write_csv(&common.out.join("gd_trace.csv"))?;
    trace.write_iterates(&common.out.join("gd_iterates.bin"))?;
    write_json(&common.out.join("gd_summary.json"), &trace.summary_json())?;
    for ev in &trace.stop_events {
        println!("{}: {}", ev.rule, ev.t.map_or("not reached".into(), |t| t.to_string()));
    }
    println!("final t = {}, L = {:.6e}", trace.final_t, trace.last().emp_risk);
    Ok(true)
}

fn run_regpath(common: &Common, lambda: &LambdaFlags, data_path: &Path, tol: f64) -> Result<bool> {
    let data = Dataset::read_csv(data_path)?;
    let grid = lambda_grid(
        lambda.lambda_max.unwrap_or(1.0),
        lambda.lambda_min.unwrap_or(1e-6),
        lambda.lambda_ratio.unwrap_or(1.5),
    )?;
    let path = build_reg_path(&data, &grid, tol)?;
    fs::create_dir_all(&common.out)?;
    path.write_csv(&common.out.join("regpath.csv"))?;
    println!("solved {} path points", path.points.len());
    Ok(true)
}

fn margin(common: &Common, data_path: &Path) -> Result<bool> {
    let data = Dataset::read_csv(data_path)?;
    let report = check_separability(&data)?;
    let mut out = serde_json::json!({ "separability": report });
    if report.separable {
        let dual = solve_max_margin_dual(&data, DUAL_TOL)?;
        let rank = support_rank_condition(&data, &dual, RANK_TOL)?;
        println!(
            "separable: margin {:.6e}, {} support vectors, support condition {}",
            dual.gamma,
            dual.support.len(),
            rank.holds
        );
        out["dual"] = dual.to_json(Some(&rank));
    } else {
        println!("not separable ({})", report.method);
    }
    fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("margin.json"), &out)?;
    Ok(true)
}

fn risk_eval(
    common: &Common,
    oracle: &OracleFlags,
    truth: &Path,
    weights: Option<&Path>,
    iterates: Option<&Path>,
    t: Option<u64>,
) -> Result<bool> {
    let (cov, p) = read_truth(truth)?;
    let (label, w) = match (weights, iterates) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)?;
            let v = text
                .split_whitespace()
                .map(|s| s.parse::<f64>().with_context(|| format!("bad number {s:?}")))
                .collect::<Result<Vec<_>>>()?;
            (path.display().to_string(), DVector::from_vec(v))
        }
        (None, Some(path)) => {
            let all = read_iterates(path)?;
            let (t, w) = match t {
                Some(t) => all.into_iter().find(|r| r.0 == t).with_context(|| format!("t = {t} was not recorded"))?,
                None => all.into_iter().last().context("empty iterate file")?,
            };
            (format!("t = {t}"), w)
        }
        _ => bail!("pass exactly one of --weights or --iterates"),
    };
    let grid = QuadratureGrid::new(oracle.quad_order.unwrap_or(DEFAULT_ORDER))?;
    let risks = risks_of(&w, &p, &cov, &grid)?;
    let (bayes_risk, bayes_error) = bayes_risks(p.coeffs(), &cov, &grid)?;
    let mut out = serde_json::json!({
        "predictor": label,
        "quadrature": risks,
        "bayes_risk": bayes_risk,
        "bayes_zero_one": bayes_error,
    });
    println!(
        "{label}: R = {:.6}, zero-one = {:.6}, Cal = {:.6} (Bayes {bayes_risk:.6}, {bayes_error:.6})",
        risks.logistic, risks.zero_one, risks.calibration
    );
    if let Some(budget) = oracle.mc_budget.filter(|b| *b > 0) {
        let mc = monte_carlo_risks(&w, p.coeffs(), &cov, budget, common.seed.unwrap_or(1))?;
        out["monte_carlo"] = serde_json::to_value(mc)?;
    }
    fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("risk.json"), &out)?;
    Ok(true)
}

fn experiment(id: ExperimentId, common: &Common, oracle: &OracleFlags, lambda: &LambdaFlags, svg: bool) -> Result<bool> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default_for(id),
    };
    if config.experiment.id() != id {
        bail!(
            "config describes '{}' but '{}' was requested",
            config.experiment.id().as_str(),
            id.as_str()
        );
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(b) = oracle.mc_budget {
        config.oracle.mc_budget = b;
    }
    if let Some(q) = oracle.quad_order {
        config.oracle.quad_order = q;
    }
    if let ExperimentSpec::Counterexample(p) = &mut config.experiment {
        p.lambda_max = lambda.lambda_max.unwrap_or(p.lambda_max);
        p.lambda_min = lambda.lambda_min.unwrap_or(p.lambda_min);
        p.lambda_ratio = lambda.lambda_ratio.unwrap_or(p.lambda_ratio);
    } else if lambda.lambda_max.is_some() || lambda.lambda_min.is_some() || lambda.lambda_ratio.is_some() {
        bail!("lambda grid flags only apply to the counterexample experiment");
    }

    let result = run_experiment(&config)?;
    let dir = common.out.join(id.as_str());
    let written = result.write(&dir, svg)?;
    for c in &result.checks {
        let tag = match (c.asserted, c.passed) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, _) => "NOTE",
        };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    println!("config {} -> {} files in {}", result.provenance.config_hash, written.len(), dir.display());
    Ok(result.passed())
}
