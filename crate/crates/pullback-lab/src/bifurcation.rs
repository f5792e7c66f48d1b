//! Diagram sweeps over (lambda, tau, seed) grids and recurrence
//! classification of branch traces.
//!
//! A failed cell never aborts a sweep: the error lands in the row's status
//! column and the numeric fields stay empty. Cells that run out of path
//! support or fail to settle retry on a widened window; widening keeps the
//! already-sampled nodes, so a retry refines the same realization instead of
//! drawing a new one.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{
    self, PitchforkParams, QuadratureSpec, QuasiSolutionTrace, TraceFrame, TranscriticalParams,
};
use crate::cocycle::{self, CocycleHandle, StabilityProbeOptions, StabilityVerdict};
use crate::coefficients::{pitchfork_envelope, validate_pairing, BetaFn, GammaFn, RecurrenceClass};
use crate::error::{Error, Result};
use crate::integrator::{DriftSpec, SdeSpec};
use crate::numerics::fmt_g17;
use crate::recurrence::{
    self, AlmostPeriodReport, AutomorphyReport, PeriodReport, ProbeVerdict,
};
use crate::wiener::{PathCache, TimeGrid, WienerPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Pitchfork,
    Transcritical,
}

/// Stability probe to run on each row's plotted state.
#[derive(Debug, Clone)]
pub struct ProbeSettings {
    pub horizon: f64,
    pub options: StabilityProbeOptions,
}

/// A grid of (lambda, tau, seed) cells over one coefficient pairing.
#[derive(Clone)]
pub struct SweepConfig {
    pub model: Model,
    pub lambdas: Vec<f64>,
    pub taus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub beta: BetaFn,
    pub gamma: GammaFn,
    /// Initial path window; cells widen it on demand.
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
    pub quad: QuadratureSpec,
    /// Pullback depths for integrator-backed cells.
    pub schedule: Vec<f64>,
    /// Scheme step for integrator-backed cells, a multiple of `step`.
    pub scheme_step: f64,
    /// Settling tolerance for pullback limits.
    pub atol: f64,
    /// Slack against pathwise monotonicity of endpoint pullbacks.
    pub slack: f64,
    pub probe: Option<ProbeSettings>,
    /// How many widened retries a cell gets before its error is recorded.
    pub max_extensions: u32,
}

impl SweepConfig {
    /// Window [-200, 50] at step 1e-3, schedule {5, 10, 20, 40}, seed 7,
    /// no probes.
    pub fn new(model: Model, beta: BetaFn, gamma: GammaFn, delta: f64) -> Self {
        SweepConfig {
            model,
            lambdas: vec![-1.0, -0.5, -0.1, 0.1, 0.5, 1.0],
            taus: vec![0.0],
            seeds: vec![7],
            delta,
            beta,
            gamma,
            t_min: -200.0,
            t_max: 50.0,
            step: 1e-3,
            quad: QuadratureSpec::default(),
            schedule: vec![5.0, 10.0, 20.0, 40.0],
            scheme_step: 1e-3,
            atol: 1e-6,
            slack: 1e-7,
            probe: None,
            max_extensions: 4,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.taus.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep grid has an empty axis".into()));
        }
        if !(self.t_min < 0.0 && self.t_max > 0.0) {
            return Err(Error::Config(format!(
                "sweep window must straddle zero, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.schedule.len() < 2 || self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "pullback schedule must be increasing with at least two depths".into(),
            ));
        }
        // Fails fast on an inconsistent pairing; cells revalidate per row.
        validate_pairing(&self.beta, &self.gamma)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramRow {
    pub lambda: f64,
    pub tau: f64,
    pub seed: u64,
    pub x_plus: Option<f64>,
    pub x_minus: Option<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub stability: Option<StabilityVerdict>,
    pub truncation_r: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BifurcationDiagram {
    pub model: Model,
    pub rows: Vec<DiagramRow>,
}

impl BifurcationDiagram {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "lambda,tau,seed,x_plus,x_minus,lower_bound,upper_bound,stability,truncation_r,status"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                fmt_g17(r.lambda),
                fmt_g17(r.tau),
                r.seed,
                opt_field(r.x_plus),
                opt_field(r.x_minus),
                opt_field(r.lower_bound),
                opt_field(r.upper_bound),
                verdict_label(r.stability),
                opt_field(r.truncation_r),
                r.status
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt_g17).unwrap_or_default()
}

fn verdict_label(v: Option<StabilityVerdict>) -> &'static str {
    match v {
        None => "",
        Some(StabilityVerdict::AsymptoticallyStable) => "asymptotically_stable",
        Some(StabilityVerdict::LyapunovStableOnly) => "lyapunov_stable_only",
        Some(StabilityVerdict::Unstable) => "unstable",
    }
}

/// Runs the sweep described by `cfg`. Paths come from the cache when one is
/// given, so reruns with the same window and seeds are byte-identical.
pub fn diagram_sweep(cfg: &SweepConfig, cache: Option<&PathCache>) -> Result<BifurcationDiagram> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(cfg.lambdas.len() * cfg.taus.len() * cfg.seeds.len());
    for &lambda in &cfg.lambdas {
        for &tau in &cfg.taus {
            for &seed in &cfg.seeds {
                cells.push((lambda, tau, seed));
            }
        }
    }
    // Rows are independent, so cells run in parallel; the indexed collect
    // keeps output order equal to the nested (lambda, tau, seed) order no
    // matter how the work is scheduled.
    let rows = cells
        .par_iter()
        .map(|&(lambda, tau, seed)| run_cell(cfg, cache, lambda, tau, seed))
        .collect();
    Ok(BifurcationDiagram { model: cfg.model, rows })
}

/// Values of one cell before stability is attached.
struct RowCore {
    x_plus: Option<f64>,
    x_minus: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    truncation_r: Option<f64>,
    status: &'static str,
    /// State whose stability the row reports; None skips the probe.
    probe_at: Option<f64>,
}

impl RowCore {
    fn trivial(status: &'static str) -> Self {
        RowCore {
            x_plus: Some(0.0),
            x_minus: Some(0.0),
            lower: None,
            upper: None,
            truncation_r: None,
            status,
            probe_at: Some(0.0),
        }
    }
}

fn wants_wider(e: &Error) -> bool {
    matches!(
        e,
        Error::InsufficientSupport { .. } | Error::NoConvergence(_) | Error::OutOfSupport { .. }
    )
}

/// Half-span hint carried by a support error, if any.
fn needed_hint(e: &Error) -> f64 {
    match e {
        Error::InsufficientSupport { needed, .. } if needed.is_finite() => *needed,
        _ => 0.0,
    }
}

/// Smallest multiple of `step` at or above `x`; widened windows must stay
/// on the grid.
fn align_up(x: f64, step: f64) -> f64 {
    (x / step).ceil() * step
}

fn sample_path(cache: Option<&PathCache>, grid: TimeGrid, seed: u64) -> Result<WienerPath> {
    match cache {
        Some(c) => c.load_or_sample(grid, seed),
        None => Ok(WienerPath::sample(grid, seed)),
    }
}

fn run_cell(
    cfg: &SweepConfig,
    cache: Option<&PathCache>,
    lambda: f64,
    tau: f64,
    seed: u64,
) -> DiagramRow {
    let mut t_min = cfg.t_min;
    let mut t_max = cfg.t_max;
    let mut schedule = cfg.schedule.clone();
    let mut extensions = 0u32;
    loop {
        let attempt = TimeGrid::new(t_min, t_max, cfg.step)
            .and_then(|grid| sample_path(cache, grid, seed))
            .and_then(|path| cell_values(cfg, lambda, tau, &path, &schedule));
        match attempt {
            Ok((core, stability)) => {
                return DiagramRow {
                    lambda,
                    tau,
                    seed,
                    x_plus: core.x_plus,
                    x_minus: core.x_minus,
                    lower_bound: core.lower,
                    upper_bound: core.upper,
                    stability,
                    truncation_r: core.truncation_r,
                    status: core.status.to_string(),
                };
            }
            Err(e) if extensions < cfg.max_extensions && wants_wider(&e) => {
                extensions += 1;
                let reach = align_up(1.25 * needed_hint(&e) + tau.abs() + 1.0, cfg.step);
                t_min = -(2.0 * t_min.abs()).max(reach);
                t_max = (2.0 * t_max).max(reach);
                if let Some(&last) = schedule.last() {
                    schedule.push(2.0 * last);
                }
            }
            Err(e) => {
                return DiagramRow {
                    lambda,
                    tau,
                    seed,
                    x_plus: None,
                    x_minus: None,
                    lower_bound: None,
                    upper_bound: None,
                    stability: None,
                    truncation_r: None,
                    status: format!("error: {e}"),
                };
            }
        }
    }
}

fn cell_values(
    cfg: &SweepConfig,
    lambda: f64,
    tau: f64,
    path: &WienerPath,
    schedule: &[f64],
) -> Result<(RowCore, Option<StabilityVerdict>)> {
    let core = match cfg.model {
        Model::Pitchfork => pitchfork_cell(cfg, lambda, tau, path, schedule)?,
        Model::Transcritical => transcritical_cell(cfg, lambda, tau, path, schedule)?,
    };
    let stability = match (&cfg.probe, core.probe_at) {
        (Some(p), Some(x_star)) => {
            let handle = probe_handle(cfg, lambda)?;
            let report = cocycle::stability_probe(&handle, path, tau, x_star, p.horizon, &p.options)?;
            Some(report.verdict)
        }
        _ => None,
    };
    Ok((core, stability))
}

fn pitchfork_cell(
    cfg: &SweepConfig,
    lambda: f64,
    tau: f64,
    path: &WienerPath,
    schedule: &[f64],
) -> Result<RowCore> {
    if cfg.gamma.is_zero() {
        if lambda <= 0.0 {
            // Every pullback collapses onto zero: exponentially for
            // lambda < 0, like one over the root of the dissipation integral
            // at lambda = 0. No quadrature is needed to plot the fiber.
            return Ok(RowCore::trivial("trivial"));
        }
        let params = PitchforkParams { lambda, delta: cfg.delta, beta: cfg.beta.clone() };
        let pair = closed_form::pitchfork_quasi_at(&params, path, tau, tau, &cfg.quad)?;
        let bounds = validate_pairing(&cfg.beta, &cfg.gamma)?;
        let sb = closed_form::sandwich_bounds(lambda, cfg.delta, &bounds, path, tau, tau, &cfg.quad)?;
        return Ok(RowCore {
            x_plus: Some(pair.plus),
            x_minus: Some(pair.minus),
            lower: Some(sb.lower),
            upper: Some(sb.upper),
            truncation_r: Some(pair.truncation_r.max(sb.truncation_r)),
            status: "closed_form",
            probe_at: Some(pair.plus),
        });
    }
    let bounds = validate_pairing(&cfg.beta, &cfg.gamma)?;
    let env = pitchfork_envelope(lambda, &bounds);
    let spec = SdeSpec {
        drift: DriftSpec::Pitchfork {
            lambda,
            beta: cfg.beta.clone(),
            gamma: cfg.gamma.clone(),
        },
        delta: cfg.delta,
    };
    let handle = CocycleHandle::integrator(spec, cfg.scheme_step)?;
    let ends = cocycle::attractor_endpoints(
        &handle, &env, path, tau, schedule, cfg.atol, cfg.slack, &cfg.quad,
    )?;
    let (lower, upper, trunc) = if lambda > 0.0 {
        // pullback endpoints anchor their noise window at path time zero, so
        // the bracket must read the same window: shift 0, not tau
        let sb = closed_form::sandwich_bounds(lambda, cfg.delta, &bounds, path, tau, 0.0, &cfg.quad)?;
        (Some(sb.lower), Some(sb.upper), Some(sb.truncation_r))
    } else {
        (None, None, None)
    };
    Ok(RowCore {
        x_plus: Some(ends.x_plus),
        x_minus: Some(ends.x_minus),
        lower,
        upper,
        truncation_r: trunc,
        status: "pullback",
        probe_at: Some(ends.x_plus),
    })
}

fn transcritical_cell(
    cfg: &SweepConfig,
    lambda: f64,
    tau: f64,
    path: &WienerPath,
    schedule: &[f64],
) -> Result<RowCore> {
    if lambda == 0.0 {
        // The branch formula divides by lambda, so the bifurcation point
        // itself carries no nontrivial branch to report.
        return Ok(RowCore::trivial("degenerate: no x_λ defined"));
    }
    let bounds = validate_pairing(&cfg.beta, &cfg.gamma)?;
    if cfg.gamma.is_zero() {
        // closed-form rows live on the (tau, tau) fiber, so the bracket reads
        // the same shifted noise as the quasi-solution
        let bracket =
            closed_form::transcritical_bracket(lambda, cfg.delta, &bounds, path, tau, &cfg.quad)?;
        let params = TranscriticalParams { lambda, delta: cfg.delta, beta: cfg.beta.clone() };
        let q = closed_form::transcritical_quasi_at(&params, path, tau, tau, &cfg.quad)?;
        return Ok(RowCore {
            x_plus: Some(q.value.max(0.0)),
            x_minus: Some(q.value.min(0.0)),
            lower: Some(bracket.lower),
            upper: Some(bracket.upper),
            truncation_r: Some(q.truncation_r.max(bracket.truncation_r)),
            status: "closed_form",
            probe_at: Some(q.value),
        });
    }
    // gauged rows report pullback objects anchored at path time zero; the
    // bracket localizing the branch must read that window (shift 0)
    let bracket =
        closed_form::transcritical_bracket(lambda, cfg.delta, &bounds, path, 0.0, &cfg.quad)?;
    if lambda > 0.0 {
        let spec = SdeSpec {
            drift: DriftSpec::Transcritical {
                lambda,
                beta: cfg.beta.clone(),
                gamma: cfg.gamma.clone(),
            },
            delta: cfg.delta,
        };
        let handle = CocycleHandle::integrator(spec, cfg.scheme_step)?;
        // Starting above the branch keeps the pullback inside its basin;
        // initial data below zero can blow up in finite time.
        let lim = cocycle::pullback_limit(&handle, path, tau, 2.0 * bracket.upper, schedule, cfg.atol)?;
        return Ok(RowCore {
            x_plus: Some(lim.value),
            x_minus: Some(0.0),
            lower: Some(bracket.lower),
            upper: Some(bracket.upper),
            truncation_r: Some(bracket.truncation_r),
            status: "pullback",
            probe_at: Some(lim.value),
        });
    }
    // For lambda < 0 under a nonzero gauge the branch repels, so no pullback
    // reaches it; the row reports the attractor {0} plus the bracket that
    // localizes the branch.
    Ok(RowCore {
        x_plus: Some(0.0),
        x_minus: Some(0.0),
        lower: Some(bracket.lower),
        upper: Some(bracket.upper),
        truncation_r: Some(bracket.truncation_r),
        status: "bracket_only",
        probe_at: Some(0.0),
    })
}

fn probe_handle(cfg: &SweepConfig, lambda: f64) -> Result<CocycleHandle> {
    if cfg.gamma.is_zero() {
        return match cfg.model {
            Model::Pitchfork => CocycleHandle::pitchfork(PitchforkParams {
                lambda,
                delta: cfg.delta,
                beta: cfg.beta.clone(),
            }),
            Model::Transcritical => CocycleHandle::transcritical(TranscriticalParams {
                lambda,
                delta: cfg.delta,
                beta: cfg.beta.clone(),
            }),
        };
    }
    let drift = match cfg.model {
        Model::Pitchfork => DriftSpec::Pitchfork {
            lambda,
            beta: cfg.beta.clone(),
            gamma: cfg.gamma.clone(),
        },
        Model::Transcritical => DriftSpec::Transcritical {
            lambda,
            beta: cfg.beta.clone(),
            gamma: cfg.gamma.clone(),
        },
    };
    CocycleHandle::integrator(SdeSpec { drift, delta: cfg.delta }, cfg.scheme_step)
}

/// Detector settings for recurrence sweeps, keyed off the coefficient class.
#[derive(Debug, Clone)]
pub struct DetectorSettings {
    /// Residual tolerance for constant and periodic classes.
    pub period_tol: f64,
    /// Residual tolerance defining an almost period.
    pub epsilon: f64,
    /// Offset window scanned for almost periods.
    pub scan_window: (f64, f64),
    /// Largest hit-free stretch the scan may contain and still count as
    /// relatively dense.
    pub gap_bound: f64,
    pub probe_times: Vec<f64>,
    pub probe_shifts: Vec<f64>,
    pub probe_tol: f64,
}

/// Sweep that builds a branch trace per lambda and checks it against the
/// recurrence class of the coefficients.
#[derive(Clone)]
pub struct RecurrenceSweepConfig {
    pub model: Model,
    pub lambdas: Vec<f64>,
    /// None runs on the zero path: the deterministic skeleton, where class
    /// inheritance is a theorem. A seeded path makes the rows exploratory.
    pub seed: Option<u64>,
    pub delta: f64,
    pub beta: BetaFn,
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
    pub quad: QuadratureSpec,
    pub trace_start: f64,
    pub trace_spacing: f64,
    pub trace_len: usize,
    pub frame: TraceFrame,
    pub detector: DetectorSettings,
    pub max_extensions: u32,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecurrenceFinding {
    Constant { residual: f64 },
    Periodic(PeriodReport),
    AlmostPeriodic(AlmostPeriodReport),
    Automorphy(AutomorphyReport),
}

#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceRow {
    pub lambda: f64,
    pub seed: Option<u64>,
    pub class: &'static str,
    /// Whether the trace satisfies its inherited class; None when the row is
    /// exploratory (seeded path) or failed.
    pub consistent: Option<bool>,
    pub finding: Option<RecurrenceFinding>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceSweepReport {
    pub model: Model,
    pub rows: Vec<RecurrenceRow>,
}

fn class_label(class: RecurrenceClass) -> &'static str {
    match class {
        RecurrenceClass::Constant => "constant",
        RecurrenceClass::Periodic { .. } => "periodic",
        RecurrenceClass::AlmostPeriodic => "almost_periodic",
        RecurrenceClass::AlmostAutomorphic => "almost_automorphic",
        RecurrenceClass::Unknown => "unknown",
    }
}

pub fn recurrence_sweep(
    cfg: &RecurrenceSweepConfig,
    cache: Option<&PathCache>,
) -> Result<RecurrenceSweepReport> {
    if cfg.lambdas.is_empty() {
        return Err(Error::Config("recurrence sweep needs at least one lambda".into()));
    }
    if !(cfg.trace_spacing > 0.0) || cfg.trace_len < 2 {
        return Err(Error::Config(format!(
            "bad trace layout: spacing {}, length {}",
            cfg.trace_spacing, cfg.trace_len
        )));
    }
    let rows = cfg
        .lambdas
        .par_iter()
        .map(|&lambda| run_recurrence_cell(cfg, cache, lambda))
        .collect();
    Ok(RecurrenceSweepReport { model: cfg.model, rows })
}

/// Builds the branch trace for one lambda, widening the path window on
/// support errors like a diagram cell.
pub fn recurrence_trace(
    cfg: &RecurrenceSweepConfig,
    cache: Option<&PathCache>,
    lambda: f64,
) -> Result<QuasiSolutionTrace> {
    let mut t_min = cfg.t_min;
    let mut t_max = cfg.t_max;
    let mut extensions = 0u32;
    loop {
        let attempt = TimeGrid::new(t_min, t_max, cfg.step)
            .and_then(|grid| match cfg.seed {
                Some(seed) => sample_path(cache, grid, seed),
                None => Ok(WienerPath::zero(grid)),
            })
            .and_then(|path| match cfg.model {
                Model::Pitchfork => closed_form::pitchfork_branch_trace(
                    &PitchforkParams { lambda, delta: cfg.delta, beta: cfg.beta.clone() },
                    &path,
                    cfg.trace_start,
                    cfg.trace_spacing,
                    cfg.trace_len,
                    cfg.frame,
                    &cfg.quad,
                ),
                Model::Transcritical => closed_form::transcritical_branch_trace(
                    &TranscriticalParams { lambda, delta: cfg.delta, beta: cfg.beta.clone() },
                    &path,
                    cfg.trace_start,
                    cfg.trace_spacing,
                    cfg.trace_len,
                    cfg.frame,
                    &cfg.quad,
                ),
            });
        match attempt {
            Ok(trace) => return Ok(trace),
            Err(e) if extensions < cfg.max_extensions && wants_wider(&e) => {
                extensions += 1;
                let span = align_up(
                    cfg.trace_start.abs()
                        + cfg.trace_spacing * cfg.trace_len as f64
                        + 1.25 * needed_hint(&e)
                        + 1.0,
                    cfg.step,
                );
                t_min = -(2.0 * t_min.abs()).max(span);
                t_max = (2.0 * t_max).max(span);
            }
            Err(e) => return Err(e),
        }
    }
}

fn run_recurrence_cell(
    cfg: &RecurrenceSweepConfig,
    cache: Option<&PathCache>,
    lambda: f64,
) -> RecurrenceRow {
    let label = class_label(cfg.beta.recurrence_class());
    let attempt = recurrence_trace(cfg, cache, lambda)
        .and_then(|trace| classify_trace(cfg, &trace));
    match attempt {
        Ok((finding, consistent)) => RecurrenceRow {
            lambda,
            seed: cfg.seed,
            class: label,
            consistent,
            finding: Some(finding),
            status: "ok".to_string(),
        },
        Err(e) => RecurrenceRow {
            lambda,
            seed: cfg.seed,
            class: label,
            consistent: None,
            finding: None,
            status: format!("error: {e}"),
        },
    }
}

/// Runs the detector matching the coefficient class on a prebuilt trace.
pub fn classify_trace(
    cfg: &RecurrenceSweepConfig,
    trace: &QuasiSolutionTrace,
) -> Result<(RecurrenceFinding, Option<bool>)> {
    let class = cfg.beta.recurrence_class();
    let det = &cfg.detector;
    // Inheritance is only a theorem on the deterministic skeleton.
    let assertable = cfg.seed.is_none();
    match class {
        RecurrenceClass::Constant => {
            let first = trace.values()[0];
            let residual = trace
                .values()
                .iter()
                .map(|v| (v - first).abs())
                .fold(0.0_f64, f64::max);
            let ok = residual <= det.period_tol;
            Ok((
                RecurrenceFinding::Constant { residual },
                assertable.then_some(ok),
            ))
        }
        RecurrenceClass::Periodic { period } => {
            let rep = recurrence::check_period(trace, period)?;
            let ok = rep.residual <= det.period_tol;
            Ok((RecurrenceFinding::Periodic(rep), assertable.then_some(ok)))
        }
        RecurrenceClass::AlmostPeriodic => {
            let rep = recurrence::almost_period_scan(
                trace,
                det.epsilon,
                det.scan_window.0,
                det.scan_window.1,
            )?;
            let ok = !rep.hits.is_empty() && rep.max_gap <= det.gap_bound;
            Ok((
                RecurrenceFinding::AlmostPeriodic(rep),
                assertable.then_some(ok),
            ))
        }
        RecurrenceClass::AlmostAutomorphic => {
            let rep = recurrence::automorphy_probe(
                recurrence::trace_generator(trace),
                &det.probe_times,
                &det.probe_shifts,
                det.probe_tol,
            )?;
            let ok = rep.verdict == ProbeVerdict::Consistent;
            Ok((RecurrenceFinding::Automorphy(rep), assertable.then_some(ok)))
        }
        RecurrenceClass::Unknown => {
            let rep = recurrence::almost_period_scan(
                trace,
                det.epsilon,
                det.scan_window.0,
                det.scan_window.1,
            )?;
            Ok((RecurrenceFinding::AlmostPeriodic(rep), None))
        }
    }
}
