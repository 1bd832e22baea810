//! Fixed-stepsize gradient descent on the empirical risk, with oracle
//! stopping rules and per-iterate implicit-bias checks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_model::{split_parameter, Dataset, TrueParameter};
use crate::error::{check_len, Error, Result};
use crate::loss::{logistic_loss, Loss};

/// Relative slack allowed before a risk increase counts as a descent violation.
pub const DESCENT_TOL: f64 = 1e-12;

fn nonempty(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        Err(Error::EmptyDataset)
    } else {
        Ok(())
    }
}

/// `(1/n) sum_i l(y_i x_i^T w)` for the logistic loss.
pub fn empirical_risk(w: &DVector<f64>, data: &Dataset) -> Result<f64> {
    empirical_loss(w, data, Loss::Logistic)
}

pub fn empirical_loss(w: &DVector<f64>, data: &Dataset, loss: Loss) -> Result<f64> {
    nonempty(data)?;
    let m = data.margins(w)?;
    Ok(m.iter().map(|t| loss.value(*t)).sum::<f64>() / data.n() as f64)
}

/// `(1/n) sum_i l'(y_i x_i^T w) y_i x_i` for the logistic loss.
pub fn empirical_gradient(w: &DVector<f64>, data: &Dataset) -> Result<DVector<f64>> {
    nonempty(data)?;
    let m = data.margins(w)?;
    let mut g = DVector::zeros(data.d());
    gradient_from_margins(data, &m, Loss::Logistic, &mut g);
    Ok(g)
}

/// Coefficients `c` with `grad = X^T c`.
fn gradient_coefficients(data: &Dataset, m: &DVector<f64>, loss: Loss, log_risk: bool) -> DVector<f64> {
    if log_risk {
        // gradient of ln L for the exponential loss: a softmax-weighted average
        // of -y_i x_i, with a max shift so that tiny risks do not underflow
        let shift = m.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = m.iter().map(|t| (shift - t).exp()).collect();
        let total: f64 = weights.iter().sum();
        DVector::from_iterator(
            m.len(),
            weights
                .iter()
                .zip(data.labels().iter())
                .map(|(w, y)| -w * y / total),
        )
    } else {
        let n = data.n() as f64;
        DVector::from_iterator(
            m.len(),
            m.iter()
                .zip(data.labels().iter())
                .map(|(t, y)| loss.derivative(*t) * y / n),
        )
    }
}

fn gradient_from_margins(data: &Dataset, m: &DVector<f64>, loss: Loss, out: &mut DVector<f64>) {
    let coef = gradient_coefficients(data, m, loss, false);
    data.features().tr_mul_to(&coef, out);
}

/// Stepsize `1 / beta_hat` with `beta_hat = max(1, (1/n) sum_i ||x_i||^2)`,
/// an upper bound on the Hessian norm of the empirical logistic risk.
pub fn default_stepsize(data: &Dataset) -> Result<(f64, f64)> {
    nonempty(data)?;
    let beta = data.mean_squared_norm().max(1.0);
    Ok((1.0 / beta, beta))
}

/// Iteration indices at which full iterates are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordSchedule {
    /// `t = 0` and `ceil(ratio^j)` for `j = 0, 1, ...`.
    Geometric { ratio: f64 },
    /// Every `step`-th iteration.
    Every { step: u64 },
    Explicit { times: Vec<u64> },
}

impl Default for RecordSchedule {
    fn default() -> Self {
        RecordSchedule::Geometric { ratio: 2.0 }
    }
}

impl RecordSchedule {
    fn validate(&self) -> Result<()> {
        match self {
            RecordSchedule::Geometric { ratio } if !(*ratio > 1.0) => Err(Error::InvalidArgument(
                format!("geometric record ratio must exceed 1, got {ratio}"),
            )),
            RecordSchedule::Every { step: 0 } => {
                Err(Error::InvalidArgument("record step must be positive".into()))
            }
            RecordSchedule::Explicit { times } if times.windows(2).any(|p| p[1] <= p[0]) => Err(
                Error::InvalidArgument("record times must be strictly increasing".into()),
            ),
            _ => Ok(()),
        }
    }

    fn first(&self) -> Option<u64> {
        match self {
            RecordSchedule::Explicit { times } => times.first().copied(),
            _ => Some(0),
        }
    }

    /// Smallest scheduled time strictly after `current`.
    fn next_after(&self, current: u64) -> Option<u64> {
        match self {
            RecordSchedule::Geometric { ratio } => {
                let mut j = ((current.max(1) as f64).ln() / ratio.ln()).floor() as i32 - 1;
                loop {
                    let t = ratio.powi(j.max(0)).ceil();
                    if t >= 1.8e19 {
                        return None;
                    }
                    if t as u64 > current {
                        return Some(t as u64);
                    }
                    j += 1;
                }
            }
            RecordSchedule::Every { step } => current.checked_add(*step),
            RecordSchedule::Explicit { times } => times.iter().copied().find(|t| *t > current),
        }
    }

    fn cursor(&self) -> ScheduleCursor<'_> {
        ScheduleCursor {
            schedule: self,
            next: self.first(),
        }
    }
}

struct ScheduleCursor<'a> {
    schedule: &'a RecordSchedule,
    next: Option<u64>,
}

impl ScheduleCursor<'_> {
    /// True when `t` is scheduled. Calls must use nondecreasing `t`.
    fn hit(&mut self, t: u64) -> bool {
        while let Some(next) = self.next {
            if next > t {
                return false;
            }
            self.next = self.schedule.next_after(next);
            if next == t {
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub eta: f64,
    pub max_iters: u64,
    #[serde(default)]
    pub record: RecordSchedule,
    #[serde(default)]
    pub loss: Loss,
    /// Descend on `ln L(w)` instead of `L(w)` (used with the exponential loss).
    #[serde(default)]
    pub log_risk: bool,
    /// Keep `L(w_t)` for every `t` (needed by [`oracle_stopping_time`]).
    #[serde(default = "yes")]
    pub keep_risk_history: bool,
    /// Halt once every crossing rule has fired.
    #[serde(default)]
    pub halt_when_crossed: bool,
}

fn yes() -> bool {
    true
}

impl GdConfig {
    pub fn new(eta: f64, max_iters: u64) -> Self {
        Self {
            eta,
            max_iters,
            record: RecordSchedule::default(),
            loss: Loss::Logistic,
            log_risk: false,
            keep_risk_history: true,
            halt_when_crossed: false,
        }
    }

    pub fn with_record(mut self, record: RecordSchedule) -> Self {
        self.record = record;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "stepsize must be positive, got {}",
                self.eta
            )));
        }
        self.record.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingRule {
    /// First `t` with `L(w_t) <= L(w*_{0:k})`; needs the true parameter.
    CrossHead { k: usize },
    /// First `t` with `L(w_t) <= L(w*)`; needs the true parameter.
    CrossStar,
    /// First `t` with `L(w_t) <= threshold`.
    CrossThreshold { threshold: f64 },
    /// Halt at `t`.
    FixedHorizon { t: u64 },
    /// Halt once `||grad L(w_t)|| <= eps`.
    GradNorm { eps: f64 },
}

impl StoppingRule {
    pub fn id(&self) -> String {
        match self {
            StoppingRule::CrossHead { k } => format!("cross_head_{k}"),
            StoppingRule::CrossStar => "cross_star".into(),
            StoppingRule::CrossThreshold { threshold } => format!("cross_threshold_{threshold:e}"),
            StoppingRule::FixedHorizon { t } => format!("fixed_horizon_{t}"),
            StoppingRule::GradNorm { eps } => format!("grad_norm_{eps:e}"),
        }
    }
}

/// First trigger of a stopping rule. `t = None` means the rule never fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub rule: String,
    pub threshold: Option<f64>,
    pub t: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: u64,
    pub w: DVector<f64>,
    pub emp_risk: f64,
    pub w_norm: f64,
    pub grad_norm: f64,
}

/// Implicit-bias residual for one comparator at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorCheck {
    pub label: String,
    pub t: u64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdTrace {
    pub eta: f64,
    pub beta_hat: f64,
    pub loss: Loss,
    pub log_risk: bool,
    pub records: Vec<Record>,
    /// `L(w_t)` for `t = 0..=final_t` when history is kept, else empty.
    pub risk_history: Vec<f64>,
    pub stop_events: Vec<StopEvent>,
    /// Steps `t` with `L(w_t) > L(w_{t-1})` beyond the relative tolerance.
    pub descent_violations: Vec<u64>,
    pub comparator_checks: Vec<ComparatorCheck>,
    pub final_t: u64,
    pub halted_by: Option<String>,
}

impl GdTrace {
    pub fn record_at(&self, t: u64) -> Result<&Record> {
        self.records
            .binary_search_by_key(&t, |r| r.t)
            .map(|i| &self.records[i])
            .map_err(|_| Error::NotRecorded(t))
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("a trace always records t = 0")
    }

    pub fn event(&self, rule: &str) -> Option<&StopEvent> {
        self.stop_events.iter().find(|e| e.rule == rule)
    }

    /// `eta * t` for every record.
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| self.eta * r.t as f64).collect()
    }

    /// Writes `t, eta_t, emp_risk, grad_norm, w_norm` for every record.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "eta_t", "emp_risk", "grad_norm", "w_norm"])?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                format!("{:e}", self.eta * r.t as f64),
                format!("{:e}", r.emp_risk),
                format!("{:e}", r.grad_norm),
                format!("{:e}", r.w_norm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar with the stepsize, stop events and diagnostics (no iterates).
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eta": self.eta,
            "beta_hat": self.beta_hat,
            "loss": self.loss,
            "log_risk": self.log_risk,
            "final_t": self.final_t,
            "halted_by": self.halted_by,
            "stop_events": self.stop_events,
            "descent_violations": self.descent_violations,
            "records": self.records.len(),
        })
    }

    /// Binary dump of all recorded iterates: magic, count, dimension, then
    /// `t` and `d` little-endian `f64` per record.
    pub fn write_iterates(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        let d = self.records.first().map_or(0, |r| r.w.len());
        f.write_all(ITERATE_MAGIC)?;
        f.write_all(&(self.records.len() as u64).to_le_bytes())?;
        f.write_all(&(d as u64).to_le_bytes())?;
        for r in &self.records {
            f.write_all(&r.t.to_le_bytes())?;
            for v in r.w.iter() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

const ITERATE_MAGIC: &[u8; 8] = b"GDITER01";

/// Reads a file written by [`GdTrace::write_iterates`] as `(t, w_t)` pairs.
pub fn read_iterates(path: &Path) -> Result<Vec<(u64, DVector<f64>)>> {
    let mut f = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    f.read_exact(&mut word)?;
    if &word != ITERATE_MAGIC {
        return Err(Error::InvalidArgument("not an iterate dump".into()));
    }
    let mut next_u64 = |f: &mut BufReader<File>| -> Result<u64> {
        f.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let count = next_u64(&mut f)? as usize;
    let d = next_u64(&mut f)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = next_u64(&mut f)?;
        let mut w = DVector::zeros(d);
        for v in w.iter_mut() {
            *v = f64::from_bits(next_u64(&mut f)?);
        }
        out.push((t, w));
    }
    Ok(out)
}

/// A vector `u` against which the implicit-bias inequality is checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub label: String,
    pub u: DVector<f64>,
}

impl Comparator {
    pub fn new(label: impl Into<String>, u: DVector<f64>) -> Self {
        Self {
            label: label.into(),
            u,
        }
    }
}

/// `L(u) + ||u||^2/(2 eta t) - ||w_t - u||^2/(2 eta t) - L(w_t)`, which is
/// nonnegative along GD with `eta <= 1/beta` on a convex `beta`-smooth risk.
fn bias_residual(risk_u: f64, u: &DVector<f64>, w: &DVector<f64>, risk_w: f64, eta_t: f64) -> f64 {
    // ||u||^2 - ||w - u||^2 = 2<w, u> - ||w||^2, which avoids cancellation for u near w
    (risk_u - risk_w) + (2.0 * w.dot(u) - w.norm_squared()) / (2.0 * eta_t)
}

struct ActiveRule {
    rule: StoppingRule,
    threshold: Option<f64>,
    fired: Option<u64>,
}

/// Runs `w_{t+1} = w_t - eta grad L(w_t)` from `w_0 = 0`.
///
/// Crossing rules only record their first trigger; fixed-horizon and
/// gradient-norm rules halt the run. The run also halts at `max_iters`.
/// `truth` is required by `CrossHead` and `CrossStar`.
pub fn run_gd(
    data: &Dataset,
    config: &GdConfig,
    rules: &[StoppingRule],
    truth: Option<&TrueParameter>,
    comparators: &[Comparator],
) -> Result<GdTrace> {
    nonempty(data)?;
    config.validate()?;
    let d = data.d();
    for c in comparators {
        check_len(d, c.u.len())?;
    }
    let risk_of = |w: &DVector<f64>| empirical_loss(w, data, config.loss);
    let mut active = Vec::with_capacity(rules.len());
    for rule in rules {
        let threshold = match rule {
            StoppingRule::CrossHead { k } => {
                let p = truth.ok_or_else(|| {
                    Error::InvalidArgument("cross_head needs the true parameter".into())
                })?;
                check_len(d, p.dim())?;
                Some(risk_of(&split_parameter(p, *k)?.0)?)
            }
            StoppingRule::CrossStar => {
                let p = truth.ok_or_else(|| {
                    Error::InvalidArgument("cross_star needs the true parameter".into())
                })?;
                check_len(d, p.dim())?;
                Some(risk_of(p.coeffs())?)
            }
            StoppingRule::CrossThreshold { threshold } => Some(*threshold),
            StoppingRule::FixedHorizon { .. } | StoppingRule::GradNorm { .. } => None,
        };
        active.push(ActiveRule {
            rule: rule.clone(),
            threshold,
            fired: None,
        });
    }
    let comparator_risks: Vec<f64> = comparators
        .iter()
        .map(|c| risk_of(&c.u))
        .collect::<Result<_>>()?;
    let (_, beta_hat) = default_stepsize(data)?;

    let mut trace = GdTrace {
        eta: config.eta,
        beta_hat,
        loss: config.loss,
        log_risk: config.log_risk,
        records: Vec::new(),
        risk_history: Vec::new(),
        stop_events: Vec::new(),
        descent_violations: Vec::new(),
        comparator_checks: Vec::new(),
        final_t: 0,
        halted_by: None,
    };
    let mut schedule = config.record.cursor();
    let mut state = Iterate::new(data);
    let mut prev: Option<(f64, f64)> = None; // (risk, grad norm) at t - 1
    let mut t: u64 = 0;
    loop {
        let margins = state.margins(data);
        let risk = margins.iter().map(|m| config.loss.value(*m)).sum::<f64>() / data.n() as f64;
        let coef = gradient_coefficients(data, &margins, config.loss, config.log_risk);
        let grad_norm = state.prepare_step(data, &coef);
        if config.keep_risk_history {
            trace.risk_history.push(risk);
        }
        if let Some((prev_risk, _)) = prev {
            if risk > prev_risk * (1.0 + DESCENT_TOL) {
                trace.descent_violations.push(t);
            }
        }

        let mut event_now = false;
        for rule in active.iter_mut() {
            if rule.fired.is_some() {
                continue;
            }
            let fire = match rule.rule {
                StoppingRule::FixedHorizon { t: horizon } => t >= horizon,
                StoppingRule::GradNorm { eps } => grad_norm <= eps,
                _ => risk <= rule.threshold.expect("crossing rules carry thresholds"),
            };
            if fire {
                rule.fired = Some(t);
                event_now = true;
                if matches!(
                    rule.rule,
                    StoppingRule::FixedHorizon { .. } | StoppingRule::GradNorm { .. }
                ) && trace.halted_by.is_none()
                {
                    trace.halted_by = Some(rule.rule.id());
                }
            }
        }
        if config.halt_when_crossed
            && trace.halted_by.is_none()
            && active.iter().any(|r| r.threshold.is_some())
            && active.iter().all(|r| r.threshold.is_none() || r.fired.is_some())
        {
            trace.halted_by = Some("crossed".into());
        }
        let halt = trace.halted_by.is_some() || t >= config.max_iters;
        let scheduled = schedule.hit(t);

        if event_now && t > 0 && trace.records.last().is_none_or(|r| r.t < t - 1) {
            let (prev_risk, prev_grad) = prev.expect("t > 0 has a predecessor");
            let w_prev = state.previous(data);
            push_record(
                &mut trace,
                t - 1,
                &w_prev,
                prev_risk,
                prev_grad,
                comparators,
                &comparator_risks,
            );
        }
        if scheduled || event_now || halt {
            let w = state.current(data);
            push_record(&mut trace, t, &w, risk, grad_norm, comparators, &comparator_risks);
        }
        if halt {
            break;
        }
        state.step(config.eta, &coef);
        prev = Some((risk, grad_norm));
        t += 1;
    }
    trace.final_t = t;
    trace.stop_events = active
        .into_iter()
        .map(|r| StopEvent {
            rule: r.rule.id(),
            threshold: r.threshold,
            t: r.fired,
        })
        .collect();
    Ok(trace)
}

/// GD state. With more features than samples the iterates stay in the row
/// space, `w_t = X^T a_t`, and one step costs a single `n x n` product with
/// the Gram matrix instead of two passes over `X`.
enum Iterate {
    Primal {
        w: DVector<f64>,
        prev_w: DVector<f64>,
        grad: DVector<f64>,
    },
    Kernel {
        gram: DMatrix<f64>,
        a: DVector<f64>,
        prev_a: DVector<f64>,
        /// `K a`, updated incrementally and refreshed every `REFRESH` steps.
        scores: DVector<f64>,
        gram_coef: DVector<f64>,
        steps: u64,
    },
}

const REFRESH: u64 = 1024;

impl Iterate {
    fn new(data: &Dataset) -> Self {
        let (n, d) = (data.n(), data.d());
        if d > n {
            Iterate::Kernel {
                gram: data.gram(),
                a: DVector::zeros(n),
                prev_a: DVector::zeros(n),
                scores: DVector::zeros(n),
                gram_coef: DVector::zeros(n),
                steps: 0,
            }
        } else {
            Iterate::Primal {
                w: DVector::zeros(d),
                prev_w: DVector::zeros(d),
                grad: DVector::zeros(d),
            }
        }
    }

    fn margins(&self, data: &Dataset) -> DVector<f64> {
        match self {
            Iterate::Primal { w, .. } => {
                let mut m = data.features() * w;
                m.component_mul_assign(data.labels());
                m
            }
            Iterate::Kernel { scores, .. } => scores.component_mul(data.labels()),
        }
    }

    /// Forms the gradient (or its Gram image) and returns its norm.
    fn prepare_step(&mut self, data: &Dataset, coef: &DVector<f64>) -> f64 {
        match self {
            Iterate::Primal { grad, .. } => {
                data.features().tr_mul_to(coef, grad);
                grad.norm()
            }
            Iterate::Kernel { gram, gram_coef, .. } => {
                gram.mul_to(coef, gram_coef);
                coef.dot(gram_coef).max(0.0).sqrt()
            }
        }
    }

    fn step(&mut self, eta: f64, coef: &DVector<f64>) {
        match self {
            Iterate::Primal { w, prev_w, grad } => {
                prev_w.copy_from(w);
                w.axpy(-eta, grad, 1.0);
            }
            Iterate::Kernel { gram, a, prev_a, scores, gram_coef, steps } => {
                prev_a.copy_from(a);
                a.axpy(-eta, coef, 1.0);
                *steps += 1;
                if *steps % REFRESH == 0 {
                    gram.mul_to(a, scores);
                } else {
                    scores.axpy(-eta, gram_coef, 1.0);
                }
            }
        }
    }

    fn current(&self, data: &Dataset) -> DVector<f64> {
        match self {
            Iterate::Primal { w, .. } => w.clone(),
            Iterate::Kernel { a, .. } => data.features().tr_mul(a),
        }
    }

    fn previous(&self, data: &Dataset) -> DVector<f64> {
        match self {
            Iterate::Primal { prev_w, .. } => prev_w.clone(),
            Iterate::Kernel { prev_a, .. } => data.features().tr_mul(prev_a),
        }
    }
}

fn push_record(
    trace: &mut GdTrace,
    t: u64,
    w: &DVector<f64>,
    risk: f64,
    grad_norm: f64,
    comparators: &[Comparator],
    comparator_risks: &[f64],
) {
    if t > 0 {
        let eta_t = trace.eta * t as f64;
        for (c, risk_u) in comparators.iter().zip(comparator_risks) {
            trace.comparator_checks.push(ComparatorCheck {
                label: c.label.clone(),
                t,
                residual: bias_residual(*risk_u, &c.u, w, risk, eta_t),
            });
        }
    }
    trace.records.push(Record {
        t,
        w: w.clone(),
        emp_risk: risk,
        w_norm: w.norm(),
        grad_norm,
    });
}

/// First `t` with `L(w_t) <= threshold`, read from the risk history;
/// `None` if the threshold is never reached within the run.
pub fn oracle_stopping_time(trace: &GdTrace, threshold: f64) -> Result<Option<u64>> {
    if trace.risk_history.is_empty() {
        return Err(Error::InvalidArgument(
            "trace was run without keeping the risk history".into(),
        ));
    }
    Ok(trace
        .risk_history
        .iter()
        .position(|r| *r <= threshold)
        .map(|t| t as u64))
}

/// Implicit-bias residual
/// `L(u) + ||u||^2/(2 eta t) - ||w_t - u||^2/(2 eta t) - L(w_t)` at a recorded `t > 0`.
pub fn implicit_bias_residual(
    trace: &GdTrace,
    data: &Dataset,
    u: &DVector<f64>,
    t: u64,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidArgument("the residual is defined for t > 0".into()));
    }
    let rec = trace.record_at(t)?;
    check_len(rec.w.len(), u.len())?;
    let risk_u = empirical_loss(u, data, trace.loss)?;
    Ok(bias_residual(risk_u, u, &rec.w, rec.emp_risk, trace.eta * t as f64))
}

/// Logistic risk evaluated sample by sample; exposed for cross-checks.
pub fn logistic_losses(w: &DVector<f64>, data: &Dataset) -> Result<Vec<f64>> {
    Ok(data.margins(w)?.iter().map(|m| logistic_loss(*m)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn single(x: &[f64], y: f64) -> Dataset {
        Dataset::from_rows(&[x.to_vec()], &[y]).unwrap()
    }

    #[test]
    fn risk_and_gradient_at_origin() {
        let data = Dataset::from_rows(&[vec![1.0, 2.0], vec![-0.5, 1.0]], &[1.0, -1.0]).unwrap();
        let w = DVector::zeros(2);
        assert_eq!(empirical_risk(&w, &data).unwrap(), std::f64::consts::LN_2);
        let g = empirical_gradient(&w, &data).unwrap();
        // -(1/2n) sum y_i x_i
        assert!((g[0] - (-(1.0 + 0.5) / 4.0)).abs() < 1e-16);
        assert!((g[1] - (-(2.0 - 1.0) / 4.0)).abs() < 1e-16);
    }

    #[test]
    fn saturated_tail() {
        let data = single(&[1.0], 1.0);
        let r = empirical_risk(&DVector::from_element(1, 50.0), &data).unwrap();
        assert!(r > 0.0 && r < 1e-20);
        let hard = single(&[3.0, 4.0], 1.0);
        let w = DVector::from_vec(vec![12.0, 16.0]); // margin 100
        let g = empirical_gradient(&w, &hard).unwrap();
        assert!(g.norm() < 1e-40 * 5.0);
    }

    #[test]
    fn empty_data_is_rejected() {
        let data = Dataset::new(DMatrix::zeros(0, 2), DVector::zeros(0)).unwrap();
        assert!(matches!(empirical_risk(&DVector::zeros(2), &data), Err(Error::EmptyDataset)));
        assert!(default_stepsize(&data).is_err());
    }

    #[test]
    fn stepsize_examples() {
        assert_eq!(default_stepsize(&single(&[2.0, 0.0], 1.0)).unwrap(), (0.25, 4.0));
        assert_eq!(default_stepsize(&single(&[0.0, 0.0], 1.0)).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn geometric_schedule_times() {
        let s = RecordSchedule::Geometric { ratio: 2.0 };
        let mut c = s.cursor();
        let hits: Vec<u64> = (0..20).filter(|t| c.hit(*t)).collect();
        assert_eq!(hits, vec![0, 1, 2, 4, 8, 16]);
        let s = RecordSchedule::Geometric { ratio: 1.5 };
        let mut c = s.cursor();
        let hits: Vec<u64> = (0..12).filter(|t| c.hit(*t)).collect();
        // ceil(1.5^j) = 1, 2, 3, 4, 6, 8, 12, ...
        assert_eq!(hits, vec![0, 1, 2, 3, 4, 6, 8]);
        let s = RecordSchedule::Explicit { times: vec![3, 5] };
        let mut c = s.cursor();
        let hits: Vec<u64> = (0..10).filter(|t| c.hit(*t)).collect();
        assert_eq!(hits, vec![3, 5]);
        let s = RecordSchedule::Every { step: 3 };
        let mut c = s.cursor();
        let hits: Vec<u64> = (0..10).filter(|t| c.hit(*t)).collect();
        assert_eq!(hits, vec![0, 3, 6, 9]);
    }

    #[test]
    fn invalid_configs() {
        let data = single(&[1.0], 1.0);
        assert!(run_gd(&data, &GdConfig::new(0.0, 5), &[], None, &[]).is_err());
        let cfg = GdConfig::new(1.0, 5).with_record(RecordSchedule::Explicit { times: vec![2, 2] });
        assert!(run_gd(&data, &cfg, &[], None, &[]).is_err());
        assert!(run_gd(&data, &GdConfig::new(1.0, 5), &[StoppingRule::CrossStar], None, &[]).is_err());
    }

    #[test]
    fn one_point_trace() {
        let data = single(&[1.0, 0.0], 1.0);
        let trace = run_gd(&data, &GdConfig::new(1.0, 1000), &[], None, &[]).unwrap();
        assert_eq!(trace.final_t, 1000);
        assert_eq!(trace.records[0].w_norm, 0.0);
        assert!(trace.descent_violations.is_empty());
        assert!(trace.risk_history.windows(2).all(|p| p[1] < p[0]));
        assert!(trace.records.iter().all(|r| r.w[1] == 0.0));
        assert_eq!(trace.last().t, 1000);
    }

    #[test]
    fn horizon_and_gradient_rules_halt() {
        let data = single(&[1.0, 0.0], 1.0);
        let cfg = GdConfig::new(1.0, 10_000);
        let trace = run_gd(&data, &cfg, &[StoppingRule::FixedHorizon { t: 7 }], None, &[]).unwrap();
        assert_eq!(trace.final_t, 7);
        assert_eq!(trace.halted_by.as_deref(), Some("fixed_horizon_7"));
        let trace = run_gd(&data, &cfg, &[StoppingRule::GradNorm { eps: 0.01 }], None, &[]).unwrap();
        assert!(trace.last().grad_norm <= 0.01);
        assert!(trace.records[trace.records.len() - 2].grad_norm > 0.01);
    }

    #[test]
    fn oracle_time_conventions() {
        let data = single(&[1.0, 0.0], 1.0);
        let trace = run_gd(&data, &GdConfig::new(1.0, 50), &[], None, &[]).unwrap();
        assert_eq!(oracle_stopping_time(&trace, std::f64::consts::LN_2).unwrap(), Some(0));
        assert_eq!(oracle_stopping_time(&trace, 1.0).unwrap(), Some(0));
        let r5 = trace.risk_history[5];
        assert_eq!(oracle_stopping_time(&trace, r5).unwrap(), Some(5));
        assert_eq!(oracle_stopping_time(&trace, 0.0).unwrap(), None);
    }

    #[test]
    fn crossing_rule_records_neighbourhood() {
        let data = single(&[1.0, 0.0], 1.0);
        let threshold = 0.05;
        let trace = run_gd(
            &data,
            &GdConfig::new(1.0, 200),
            &[StoppingRule::CrossThreshold { threshold }],
            None,
            &[],
        )
        .unwrap();
        let t = trace.stop_events[0].t.unwrap();
        assert!(trace.record_at(t).unwrap().emp_risk <= threshold);
        assert!(trace.record_at(t - 1).unwrap().emp_risk > threshold);
        assert_eq!(Some(t), oracle_stopping_time(&trace, threshold).unwrap());
        assert!(trace.records.windows(2).all(|p| p[0].t < p[1].t));
    }

    #[test]
    fn self_and_zero_comparators() {
        let data = Dataset::from_rows(&[vec![1.0, 0.3], vec![-0.2, 1.0]], &[1.0, 1.0]).unwrap();
        let (eta, _) = default_stepsize(&data).unwrap();
        let trace = run_gd(&data, &GdConfig::new(eta, 64), &[], None, &[]).unwrap();
        for rec in trace.records.iter().filter(|r| r.t > 0) {
            let own = implicit_bias_residual(&trace, &data, &rec.w, rec.t).unwrap();
            let expect = rec.w.norm_squared() / (2.0 * eta * rec.t as f64);
            assert!((own - expect).abs() <= 1e-12 * (1.0 + expect));
            let zero = implicit_bias_residual(&trace, &data, &DVector::zeros(2), rec.t).unwrap();
            let expect = std::f64::consts::LN_2 - rec.emp_risk - rec.w.norm_squared() / (2.0 * eta * rec.t as f64);
            assert!((zero - expect).abs() < 1e-14);
            assert!(zero >= -1e-12);
        }
        assert!(matches!(
            implicit_bias_residual(&trace, &data, &DVector::zeros(2), 3),
            Err(Error::NotRecorded(3))
        ));
    }
}
