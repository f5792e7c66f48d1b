//! Command-line surface: scenario configs, orchestration, artifact export.
//!
//! Every scenario resolves its config (JSON file, then flag overrides, then
//! defaults), computes, and writes artifacts plus a manifest naming the
//! config hash. Output bytes are a pure function of (config, seeds); the
//! manifest additionally records wall-clock time and is the one file exempt
//! from byte determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bifurcation::{
    self, DetectorSettings, Model, ProbeSettings, RecurrenceFinding, RecurrenceSweepConfig,
    SweepConfig,
};
use crate::closed_form::{
    self, PitchforkParams, QuadratureSpec, QuasiSolutionTrace, TraceFrame, TranscriticalParams,
};
use crate::cocycle::{
    self, CocycleHandle, CocycleSample, StabilityProbeOptions, TemperednessReport,
};
use crate::coefficients::{pitchfork_envelope, validate_pairing, BetaFn, GammaFn, GammaVariant};
use crate::error::{Error, Result};
use crate::integrator::{DriftSpec, Outcome, SdeSpec};
use crate::numerics::{fmt_g17, log_add_exp};
use crate::recurrence;
use crate::wiener::{PathCache, TimeGrid, WienerPath};

/// Coefficient descriptor as written in config files; the flag form is
/// `kind:arg,arg,...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    Constant { value: f64 },
    Periodic { mean: f64, amp: f64, period: f64 },
    QuasiPeriodic { mean: f64, amp_1: f64, amp_2: f64 },
    AlmostAutomorphic { mean: f64, amp: f64 },
}

impl BetaSpec {
    pub fn build(&self) -> Result<BetaFn> {
        match *self {
            BetaSpec::Constant { value } => BetaFn::constant(value),
            BetaSpec::Periodic { mean, amp, period } => BetaFn::periodic(mean, amp, period),
            BetaSpec::QuasiPeriodic { mean, amp_1, amp_2 } => {
                BetaFn::quasi_periodic(mean, amp_1, amp_2)
            }
            BetaSpec::AlmostAutomorphic { mean, amp } => BetaFn::almost_automorphic(mean, amp),
        }
    }

    pub fn parse_flag(s: &str) -> Result<Self> {
        let (kind, args) = split_descriptor(s);
        let v = parse_args(args)?;
        match (kind, v.as_slice()) {
            ("constant", [value]) => Ok(BetaSpec::Constant { value: *value }),
            ("periodic", [mean, amp, period]) => Ok(BetaSpec::Periodic {
                mean: *mean,
                amp: *amp,
                period: *period,
            }),
            ("quasi_periodic", [mean, a1, a2]) => Ok(BetaSpec::QuasiPeriodic {
                mean: *mean,
                amp_1: *a1,
                amp_2: *a2,
            }),
            ("almost_automorphic", [mean, amp]) => Ok(BetaSpec::AlmostAutomorphic {
                mean: *mean,
                amp: *amp,
            }),
            _ => Err(Error::Config(format!(
                "bad beta descriptor {s:?}; expected constant:b, periodic:mean,amp,period, \
                 quasi_periodic:mean,amp1,amp2 or almost_automorphic:mean,amp"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaSpec {
    Zero,
    CubicProfile { base: f64, amp: f64 },
    QuadraticProfile { base: f64, amp: f64 },
}

impl GammaSpec {
    /// The gauge must match the model: cubic perturbations pair with the
    /// cubic equation, quadratic ones with the quadratic equation.
    pub fn build(&self, model: Model) -> Result<GammaFn> {
        match (self, model) {
            (GammaSpec::Zero, Model::Pitchfork) => Ok(GammaFn::zero(GammaVariant::Cubic)),
            (GammaSpec::Zero, Model::Transcritical) => Ok(GammaFn::zero(GammaVariant::Quadratic)),
            (GammaSpec::CubicProfile { base, amp }, Model::Pitchfork) => {
                GammaFn::cubic_profile(*base, *amp)
            }
            (GammaSpec::QuadraticProfile { base, amp }, Model::Transcritical) => {
                GammaFn::quadratic_profile(*base, *amp)
            }
            (spec, model) => Err(Error::Config(format!(
                "gauge {spec:?} does not pair with the {} model",
                model_label(model)
            ))),
        }
    }

    pub fn parse_flag(s: &str) -> Result<Self> {
        let (kind, args) = split_descriptor(s);
        let v = parse_args(args)?;
        match (kind, v.as_slice()) {
            ("zero", []) => Ok(GammaSpec::Zero),
            ("cubic_profile", [base, amp]) => Ok(GammaSpec::CubicProfile {
                base: *base,
                amp: *amp,
            }),
            ("quadratic_profile", [base, amp]) => Ok(GammaSpec::QuadraticProfile {
                base: *base,
                amp: *amp,
            }),
            _ => Err(Error::Config(format!(
                "bad gamma descriptor {s:?}; expected zero, cubic_profile:base,amp or \
                 quadratic_profile:base,amp"
            ))),
        }
    }
}

fn model_label(model: Model) -> &'static str {
    match model {
        Model::Pitchfork => "pitchfork",
        Model::Transcritical => "transcritical",
    }
}

fn split_descriptor(s: &str) -> (&str, &str) {
    match s.split_once(':') {
        Some((k, rest)) => (k.trim(), rest),
        None => (s.trim(), ""),
    }
}

fn parse_args(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad numeric argument {p:?}")))
        })
        .collect()
}

fn parse_grid_list(s: &str) -> Result<Vec<f64>> {
    let v = parse_args(s)?;
    if v.is_empty() {
        return Err(Error::Config("empty value list".into()));
    }
    Ok(v)
}

/// Path sample window shared by all scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            t_min: -200.0,
            t_max: 50.0,
            step: 1e-3,
        }
    }
}

/// Quadrature, pullback, and scheme knobs shared by sweep-like scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsBlock {
    pub rel_tol: f64,
    pub schedule: Vec<f64>,
    pub scheme_step: f64,
    pub atol: f64,
    pub slack: f64,
    pub max_extensions: u32,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        NumericsBlock {
            rel_tol: 1e-8,
            schedule: vec![5.0, 10.0, 20.0, 40.0],
            scheme_step: 1e-3,
            atol: 1e-6,
            slack: 1e-7,
            max_extensions: 4,
        }
    }
}

impl NumericsBlock {
    fn quad(&self) -> QuadratureSpec {
        QuadratureSpec {
            rel_tol: self.rel_tol,
            ..QuadratureSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeBlock {
    pub horizon: f64,
    pub epsilons: Vec<f64>,
    pub bisection_iters: u32,
    pub contraction_factor: f64,
}

impl Default for ProbeBlock {
    fn default() -> Self {
        let opts = StabilityProbeOptions::default();
        ProbeBlock {
            horizon: 40.0,
            epsilons: opts.epsilons,
            bisection_iters: opts.bisection_iters,
            contraction_factor: opts.contraction_factor,
        }
    }
}

impl ProbeBlock {
    fn settings(&self) -> ProbeSettings {
        ProbeSettings {
            horizon: self.horizon,
            options: StabilityProbeOptions {
                epsilons: self.epsilons.clone(),
                bisection_iters: self.bisection_iters,
                contraction_factor: self.contraction_factor,
            },
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![7]
}

fn default_lambdas() -> Vec<f64> {
    vec![-1.0, -0.5, -0.1, 0.1, 0.5, 1.0]
}

fn default_delta() -> f64 {
    0.25
}

/// Config for `pitchfork-sweep` and `transcritical-sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepScenarioConfig {
    pub beta: BetaSpec,
    pub gamma: GammaSpec,
    pub delta: f64,
    pub lambdas: Vec<f64>,
    pub taus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub grid: GridSpec,
    pub numerics: NumericsBlock,
    pub probe: Option<ProbeBlock>,
}

impl Default for SweepScenarioConfig {
    fn default() -> Self {
        SweepScenarioConfig {
            beta: BetaSpec::Constant { value: 2.0 },
            gamma: GammaSpec::Zero,
            delta: default_delta(),
            lambdas: default_lambdas(),
            taus: vec![0.0],
            seeds: default_seeds(),
            grid: GridSpec::default(),
            numerics: NumericsBlock::default(),
            probe: None,
        }
    }
}

impl SweepScenarioConfig {
    fn to_sweep(&self, model: Model) -> Result<SweepConfig> {
        Ok(SweepConfig {
            model,
            lambdas: self.lambdas.clone(),
            taus: self.taus.clone(),
            seeds: self.seeds.clone(),
            delta: self.delta,
            beta: self.beta.build()?,
            gamma: self.gamma.build(model)?,
            t_min: self.grid.t_min,
            t_max: self.grid.t_max,
            step: self.grid.step,
            quad: self.numerics.quad(),
            schedule: self.numerics.schedule.clone(),
            scheme_step: self.numerics.scheme_step,
            atol: self.numerics.atol,
            slack: self.numerics.slack,
            probe: self.probe.as_ref().map(ProbeBlock::settings),
            max_extensions: self.numerics.max_extensions,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    Integrator,
}

/// Config for `verify-cocycle`: residuals of the two-parameter flow law on
/// the cross product of the sample lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyCocycleConfig {
    pub model: Model,
    pub backend: Backend,
    pub beta: BetaSpec,
    pub gamma: GammaSpec,
    pub delta: f64,
    pub lambda: f64,
    pub taus: Vec<f64>,
    pub first_legs: Vec<f64>,
    pub second_legs: Vec<f64>,
    pub initial_states: Vec<f64>,
    pub seeds: Vec<u64>,
    pub grid: GridSpec,
    pub scheme_step: f64,
    pub tolerance: f64,
}

impl Default for VerifyCocycleConfig {
    fn default() -> Self {
        VerifyCocycleConfig {
            model: Model::Pitchfork,
            backend: Backend::ClosedForm,
            beta: BetaSpec::Constant { value: 2.0 },
            gamma: GammaSpec::Zero,
            delta: default_delta(),
            lambda: 1.0,
            taus: vec![-3.0, 0.0, 3.0],
            first_legs: vec![1.0, 2.0],
            second_legs: vec![1.0, 3.0],
            initial_states: vec![0.5, -0.25, 1.0],
            seeds: default_seeds(),
            grid: GridSpec::default(),
            scheme_step: 1e-3,
            tolerance: 1e-9,
        }
    }
}

/// Config for `attractor`: endpoint pullback plus temperedness of the branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorConfig {
    pub beta: BetaSpec,
    pub gamma: GammaSpec,
    pub delta: f64,
    pub lambda: f64,
    pub tau: f64,
    pub seeds: Vec<u64>,
    pub grid: GridSpec,
    pub numerics: NumericsBlock,
    pub temperedness: Option<TemperednessBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperednessBlock {
    pub span: f64,
    pub spacing: f64,
    pub rates: Vec<f64>,
}

impl Default for TemperednessBlock {
    fn default() -> Self {
        TemperednessBlock {
            span: 100.0,
            spacing: 1.0,
            rates: vec![0.5, 1.0],
        }
    }
}

impl Default for AttractorConfig {
    fn default() -> Self {
        AttractorConfig {
            beta: BetaSpec::Constant { value: 2.0 },
            gamma: GammaSpec::Zero,
            delta: default_delta(),
            lambda: 1.0,
            tau: 0.0,
            seeds: default_seeds(),
            grid: GridSpec::default(),
            numerics: NumericsBlock::default(),
            temperedness: Some(TemperednessBlock::default()),
        }
    }
}

/// Config for `recurrence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceConfig {
    pub model: Model,
    pub beta: BetaSpec,
    pub delta: f64,
    pub lambdas: Vec<f64>,
    /// None runs on the zero path, where class inheritance is asserted.
    pub seed: Option<u64>,
    pub grid: GridSpec,
    pub rel_tol: f64,
    pub trace_start: f64,
    pub trace_spacing: f64,
    pub trace_len: usize,
    pub frame: TraceFrame,
    pub detector: DetectorBlock,
    pub max_extensions: u32,
    pub export_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorBlock {
    pub period_tol: f64,
    pub epsilon: f64,
    pub scan_window: (f64, f64),
    pub gap_bound: f64,
    pub probe_times: Vec<f64>,
    pub probe_shifts: Vec<f64>,
    pub probe_tol: f64,
}

impl Default for DetectorBlock {
    fn default() -> Self {
        DetectorBlock {
            period_tol: 1e-6,
            epsilon: 0.05,
            scan_window: (0.5, 50.0),
            gap_bound: 10.0,
            probe_times: vec![],
            probe_shifts: vec![],
            probe_tol: 0.05,
        }
    }
}

impl DetectorBlock {
    fn settings(&self) -> DetectorSettings {
        DetectorSettings {
            period_tol: self.period_tol,
            epsilon: self.epsilon,
            scan_window: self.scan_window,
            gap_bound: self.gap_bound,
            probe_times: self.probe_times.clone(),
            probe_shifts: self.probe_shifts.clone(),
            probe_tol: self.probe_tol,
        }
    }
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        RecurrenceConfig {
            model: Model::Pitchfork,
            beta: BetaSpec::Periodic {
                mean: 2.0,
                amp: 1.0,
                period: 2.0 * std::f64::consts::PI,
            },
            delta: default_delta(),
            lambdas: vec![0.5, 1.0],
            seed: None,
            grid: GridSpec::default(),
            rel_tol: 1e-8,
            trace_start: 0.0,
            trace_spacing: 2.0 * std::f64::consts::PI / 64.0,
            trace_len: 64 * 4 + 1,
            frame: TraceFrame::Section,
            detector: DetectorBlock::default(),
            max_extensions: 4,
            export_trace: true,
        }
    }
}

impl RecurrenceConfig {
    fn to_sweep(&self) -> Result<RecurrenceSweepConfig> {
        Ok(RecurrenceSweepConfig {
            model: self.model,
            lambdas: self.lambdas.clone(),
            seed: self.seed,
            delta: self.delta,
            beta: self.beta.build()?,
            t_min: self.grid.t_min,
            t_max: self.grid.t_max,
            step: self.grid.step,
            quad: QuadratureSpec {
                rel_tol: self.rel_tol,
                ..QuadratureSpec::default()
            },
            trace_start: self.trace_start,
            trace_spacing: self.trace_spacing,
            trace_len: self.trace_len,
            frame: self.frame,
            detector: self.detector.settings(),
            max_extensions: self.max_extensions,
        })
    }
}

/// Config for `integrate`: one forward trajectory of the scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateConfig {
    pub model: Model,
    pub beta: BetaSpec,
    pub gamma: GammaSpec,
    pub delta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub tau: f64,
    pub t_end: f64,
    pub x0: f64,
    pub scheme_step: f64,
    pub grid: GridSpec,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        IntegrateConfig {
            model: Model::Pitchfork,
            beta: BetaSpec::Constant { value: 2.0 },
            gamma: GammaSpec::Zero,
            delta: default_delta(),
            lambda: 1.0,
            seed: 7,
            tau: 0.0,
            t_end: 10.0,
            x0: 1.0,
            scheme_step: 1e-3,
            grid: GridSpec::default(),
        }
    }
}

/// Config for `selftest` (the battery has no knobs; the type keeps the
/// manifest shape uniform).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {}

fn load_config<C: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))
        }
    }
}

/// Artifact sink: buffers (name, bytes) pairs, then flushes them and the
/// manifest in one pass so partial runs never leave a manifest behind.
struct ArtifactSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn add_text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn flush<C: Serialize>(self, scenario: &str, config: &C, seeds: &[u64], t0: Instant) -> Result<()> {
        let config_json = serde_json::to_vec(config)?;
        let mut hasher = Sha256::new();
        hasher.update(&config_json);
        let hash = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        let manifest = Manifest {
            tool: "pullback-lab",
            version: env!("CARGO_PKG_VERSION"),
            scenario,
            config,
            config_sha256: hash,
            seeds: seeds.to_vec(),
            artifacts: self.files.iter().map(|(n, _)| n.clone()).collect(),
            wall_clock_seconds: t0.elapsed().as_secs_f64(),
        };
        for (name, bytes) in &self.files {
            fs::write(self.dir.join(name), bytes)?;
        }
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    scenario: &'a str,
    config: &'a C,
    config_sha256: String,
    seeds: Vec<u64>,
    artifacts: Vec<String>,
    /// Informational only; excluded from determinism comparisons.
    wall_clock_seconds: f64,
}

fn opt_dat(v: Option<f64>) -> String {
    v.map(fmt_g17).unwrap_or_else(|| "nan".to_string())
}

fn sweep_dat(diagram: &bifurcation::BifurcationDiagram) -> String {
    let mut out = String::from("# lambda x_plus x_minus (one block per tau, seed pair)\n");
    let mut current: Option<(f64, u64)> = None;
    for row in &diagram.rows {
        let key = (row.tau, row.seed);
        if let Some(prev) = current {
            if prev != key {
                out.push('\n');
            }
        }
        current = Some(key);
        out.push_str(&format!(
            "{} {} {}\n",
            fmt_g17(row.lambda),
            opt_dat(row.x_plus),
            opt_dat(row.x_minus)
        ));
    }
    out
}

#[derive(Serialize)]
struct SweepReport<'a> {
    scenario: &'static str,
    rows_failed: usize,
    rows: &'a [bifurcation::DiagramRow],
}

/// Rows are grouped per (tau, seed) in the flat diagram order, so the .dat
/// blocks line up with gnuplot's `index` selector.
pub fn run_sweep_scenario(
    model: Model,
    cfg: &SweepScenarioConfig,
    out_dir: &Path,
    cache: Option<&PathCache>,
) -> Result<i32> {
    let t0 = Instant::now();
    let sweep = cfg.to_sweep(model)?;
    // Row order is (lambda, tau, seed); regroup to (tau, seed, lambda) for
    // plotting so each block is one curve in lambda.
    let mut diagram = bifurcation::diagram_sweep(&sweep, cache)?;
    diagram.rows.sort_by(|a, b| {
        (a.tau, a.seed, a.lambda)
            .partial_cmp(&(b.tau, b.seed, b.lambda))
            .expect("diagram grids are finite")
    });
    let failed = diagram
        .rows
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .count();
    let scenario = match model {
        Model::Pitchfork => "pitchfork-sweep",
        Model::Transcritical => "transcritical-sweep",
    };
    let mut artifacts = ArtifactSet::new(out_dir)?;
    artifacts.add_text("diagram.csv", diagram.to_csv_string());
    artifacts.add_text("diagram.dat", sweep_dat(&diagram));
    artifacts.add_json(
        "report.json",
        &SweepReport {
            scenario,
            rows_failed: failed,
            rows: &diagram.rows,
        },
    )?;
    artifacts.flush(scenario, cfg, &cfg.seeds, t0)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

#[derive(Serialize)]
struct VerifySeedReport {
    seed: u64,
    max_residual: f64,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    tolerance: f64,
    max_residual: f64,
    per_seed: Vec<VerifySeedReport>,
    rows: Vec<VerifyRow<'a>>,
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    seed: u64,
    #[serde(flatten)]
    row: &'a cocycle::CocycleRow,
}

fn build_handle(
    model: Model,
    backend: Backend,
    lambda: f64,
    delta: f64,
    beta: &BetaFn,
    gamma: &GammaFn,
    scheme_step: f64,
) -> Result<CocycleHandle> {
    match backend {
        Backend::ClosedForm => {
            if !gamma.is_zero() {
                return Err(Error::Config(
                    "the closed-form backend requires a zero gauge; use the integrator backend"
                        .into(),
                ));
            }
            match model {
                Model::Pitchfork => CocycleHandle::pitchfork(PitchforkParams {
                    lambda,
                    delta,
                    beta: beta.clone(),
                }),
                Model::Transcritical => CocycleHandle::transcritical(TranscriticalParams {
                    lambda,
                    delta,
                    beta: beta.clone(),
                }),
            }
        }
        Backend::Integrator => {
            let drift = match model {
                Model::Pitchfork => DriftSpec::Pitchfork {
                    lambda,
                    beta: beta.clone(),
                    gamma: gamma.clone(),
                },
                Model::Transcritical => DriftSpec::Transcritical {
                    lambda,
                    beta: beta.clone(),
                    gamma: gamma.clone(),
                },
            };
            CocycleHandle::integrator(SdeSpec { drift, delta }, scheme_step)
        }
    }
}

pub fn run_verify_cocycle(
    cfg: &VerifyCocycleConfig,
    out_dir: &Path,
    cache: Option<&PathCache>,
) -> Result<i32> {
    let t0 = Instant::now();
    let beta = cfg.beta.build()?;
    let gamma = cfg.gamma.build(cfg.model)?;
    let handle = build_handle(
        cfg.model,
        cfg.backend,
        cfg.lambda,
        cfg.delta,
        &beta,
        &gamma,
        cfg.scheme_step,
    )?;
    let mut samples = Vec::new();
    for &tau in &cfg.taus {
        for &s in &cfg.first_legs {
            for &t in &cfg.second_legs {
                for &x in &cfg.initial_states {
                    samples.push(CocycleSample { tau, s, t, x });
                }
            }
        }
    }
    let grid = TimeGrid::new(cfg.grid.t_min, cfg.grid.t_max, cfg.grid.step)?;
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let path = match cache {
            Some(c) => c.load_or_sample(grid, seed)?,
            None => WienerPath::sample(grid, seed),
        };
        reports.push((seed, cocycle::check_cocycle_law(&handle, &path, &samples)?));
    }
    let max_residual = reports
        .iter()
        .map(|(_, r)| r.max_residual)
        .fold(0.0_f64, f64::max);

    let mut csv = String::from("seed,tau,s,t,x,residual\n");
    let mut dat = String::from("# total_leg residual (one block per seed)\n");
    for (i, (seed, report)) in reports.iter().enumerate() {
        if i > 0 {
            dat.push('\n');
        }
        for row in &report.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                seed,
                fmt_g17(row.sample.tau),
                fmt_g17(row.sample.s),
                fmt_g17(row.sample.t),
                fmt_g17(row.sample.x),
                fmt_g17(row.residual)
            ));
            dat.push_str(&format!(
                "{} {}\n",
                fmt_g17(row.sample.s + row.sample.t),
                fmt_g17(row.residual)
            ));
        }
    }
    let report = VerifyReport {
        tolerance: cfg.tolerance,
        max_residual,
        per_seed: reports
            .iter()
            .map(|(seed, r)| VerifySeedReport {
                seed: *seed,
                max_residual: r.max_residual,
            })
            .collect(),
        rows: reports
            .iter()
            .flat_map(|(seed, r)| r.rows.iter().map(|row| VerifyRow { seed: *seed, row }))
            .collect(),
    };
    let mut artifacts = ArtifactSet::new(out_dir)?;
    artifacts.add_text("residuals.csv", csv);
    artifacts.add_text("residuals.dat", dat);
    artifacts.add_json("report.json", &report)?;
    artifacts.flush("verify-cocycle", cfg, &cfg.seeds, t0)?;
    Ok(if max_residual <= cfg.tolerance { 0 } else { 1 })
}

#[derive(Serialize)]
struct AttractorSeedReport {
    seed: u64,
    x_minus: f64,
    x_plus: f64,
    depth_used: f64,
    history: Vec<cocycle::AttractorDepthRow>,
    temperedness: Option<TemperednessReport>,
}

#[derive(Serialize)]
struct AttractorReport {
    lambda: f64,
    tau: f64,
    seeds: Vec<AttractorSeedReport>,
}

pub fn run_attractor(
    cfg: &AttractorConfig,
    out_dir: &Path,
    cache: Option<&PathCache>,
) -> Result<i32> {
    let t0 = Instant::now();
    let beta = cfg.beta.build()?;
    let gamma = cfg.gamma.build(Model::Pitchfork)?;
    let bounds = validate_pairing(&beta, &gamma)?;
    let env = pitchfork_envelope(cfg.lambda, &bounds);
    let backend = if gamma.is_zero() {
        Backend::ClosedForm
    } else {
        Backend::Integrator
    };
    let handle = build_handle(
        Model::Pitchfork,
        backend,
        cfg.lambda,
        cfg.delta,
        &beta,
        &gamma,
        cfg.numerics.scheme_step,
    )?;
    let quad = cfg.numerics.quad();
    let grid = TimeGrid::new(cfg.grid.t_min, cfg.grid.t_max, cfg.grid.step)?;
    let mut seed_reports = Vec::new();
    let mut all_tempered = true;
    for &seed in &cfg.seeds {
        let path = match cache {
            Some(c) => c.load_or_sample(grid, seed)?,
            None => WienerPath::sample(grid, seed),
        };
        let ends = cocycle::attractor_endpoints(
            &handle,
            &env,
            &path,
            cfg.tau,
            &cfg.numerics.schedule,
            cfg.numerics.atol,
            cfg.numerics.slack,
            &quad,
        )?;
        // Temperedness is sampled from the closed-form branch, so it is only
        // asserted when the branch exists in closed form.
        let temperedness = match &cfg.temperedness {
            Some(block) if gamma.is_zero() && cfg.lambda > 0.0 => {
                let params = PitchforkParams {
                    lambda: cfg.lambda,
                    delta: cfg.delta,
                    beta: beta.clone(),
                };
                let n = (block.span / block.spacing).round() as usize + 1;
                let trace = closed_form::pitchfork_branch_trace(
                    &params,
                    &path,
                    cfg.tau - block.span,
                    block.spacing,
                    n,
                    TraceFrame::Orbit,
                    &quad,
                )?;
                let samples: Vec<(f64, f64)> = (0..trace.len())
                    .map(|k| (trace.tau_at(k) - cfg.tau, trace.values()[k]))
                    .collect();
                let report = cocycle::temperedness_check(&samples, &block.rates)?;
                all_tempered &= report.tempered;
                Some(report)
            }
            _ => None,
        };
        seed_reports.push(AttractorSeedReport {
            seed,
            x_minus: ends.x_minus,
            x_plus: ends.x_plus,
            depth_used: ends.depth_used,
            history: ends.history,
            temperedness,
        });
    }

    let mut csv = String::from("seed,depth,xi,plus,minus\n");
    let mut dat = String::from("# depth plus minus (one block per seed)\n");
    for (i, rep) in seed_reports.iter().enumerate() {
        if i > 0 {
            dat.push('\n');
        }
        for row in &rep.history {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                rep.seed,
                fmt_g17(row.depth),
                fmt_g17(row.xi),
                fmt_g17(row.plus),
                fmt_g17(row.minus)
            ));
            dat.push_str(&format!(
                "{} {} {}\n",
                fmt_g17(row.depth),
                fmt_g17(row.plus),
                fmt_g17(row.minus)
            ));
        }
    }
    let report = AttractorReport {
        lambda: cfg.lambda,
        tau: cfg.tau,
        seeds: seed_reports,
    };
    let mut artifacts = ArtifactSet::new(out_dir)?;
    artifacts.add_text("history.csv", csv);
    artifacts.add_text("history.dat", dat);
    artifacts.add_json("report.json", &report)?;
    artifacts.flush("attractor", cfg, &cfg.seeds, t0)?;
    Ok(if all_tempered { 0 } else { 1 })
}

pub fn run_recurrence(
    cfg: &RecurrenceConfig,
    out_dir: &Path,
    cache: Option<&PathCache>,
) -> Result<i32> {
    let t0 = Instant::now();
    let sweep = cfg.to_sweep()?;
    let mut artifacts = ArtifactSet::new(out_dir)?;
    if cfg.export_trace {
        for (i, &lambda) in cfg.lambdas.iter().enumerate() {
            match bifurcation::recurrence_trace(&sweep, cache, lambda) {
                Ok(trace) => artifacts.add_text(&format!("trace_{i}.dat"), trace_dat(&trace)),
                // The sweep row below reports the same failure.
                Err(_) => continue,
            }
        }
    }
    let report = bifurcation::recurrence_sweep(&sweep, cache)?;
    for (i, row) in report.rows.iter().enumerate() {
        if let Some(RecurrenceFinding::AlmostPeriodic(scan)) = &row.finding {
            let mut buf = Vec::new();
            recurrence::write_scan_csv(scan, &mut buf)?;
            artifacts.add_text(
                &format!("scan_{i}.csv"),
                String::from_utf8(buf).expect("scan csv is ascii"),
            );
        }
    }
    let failed = report
        .rows
        .iter()
        .filter(|r| r.status.starts_with("error") || r.consistent == Some(false))
        .count();
    artifacts.add_json("report.json", &report)?;
    let seeds: Vec<u64> = cfg.seed.into_iter().collect();
    artifacts.flush("recurrence", cfg, &seeds, t0)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

fn trace_dat(trace: &QuasiSolutionTrace) -> String {
    let mut out = String::from("# tau value\n");
    for k in 0..trace.len() {
        out.push_str(&format!(
            "{} {}\n",
            fmt_g17(trace.tau_at(k)),
            fmt_g17(trace.values()[k])
        ));
    }
    out
}

#[derive(Serialize)]
struct IntegrateReport {
    outcome: Outcome,
    final_state: Option<f64>,
    steps: usize,
}

pub fn run_integrate(
    cfg: &IntegrateConfig,
    out_dir: &Path,
    cache: Option<&PathCache>,
) -> Result<i32> {
    let t0 = Instant::now();
    let beta = cfg.beta.build()?;
    let gamma = cfg.gamma.build(cfg.model)?;
    let drift = match cfg.model {
        Model::Pitchfork => DriftSpec::Pitchfork {
            lambda: cfg.lambda,
            beta,
            gamma,
        },
        Model::Transcritical => DriftSpec::Transcritical {
            lambda: cfg.lambda,
            beta,
            gamma,
        },
    };
    let spec = SdeSpec {
        drift,
        delta: cfg.delta,
    };
    let grid = TimeGrid::new(cfg.grid.t_min, cfg.grid.t_max, cfg.grid.step)?;
    let path = match cache {
        Some(c) => c.load_or_sample(grid, cfg.seed)?,
        None => WienerPath::sample(grid, cfg.seed),
    };
    let traj = crate::integrator::integrate(&spec, &path, cfg.tau, cfg.t_end, cfg.x0, cfg.scheme_step)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    let mut dat = String::from("# t x\n");
    for (t, x) in traj.times().iter().zip(traj.states()) {
        dat.push_str(&format!("{} {}\n", fmt_g17(*t), fmt_g17(*x)));
    }
    let report = IntegrateReport {
        outcome: traj.outcome,
        final_state: match traj.outcome {
            Outcome::Complete => Some(traj.final_state()?),
            Outcome::BlewUp { .. } => None,
        },
        steps: traj.times().len().saturating_sub(1),
    };
    let mut artifacts = ArtifactSet::new(out_dir)?;
    artifacts.add_text(
        "trajectory.csv",
        String::from_utf8(csv).expect("trajectory csv is ascii"),
    );
    artifacts.add_text("trajectory.dat", dat);
    artifacts.add_json("report.json", &report)?;
    artifacts.flush("integrate", cfg, &[cfg.seed], t0)?;
    // A detected blow-up is a valid, reported outcome.
    Ok(0)
}

#[derive(Serialize)]
struct BatteryRow {
    check: &'static str,
    measured: f64,
    bound: f64,
    pass: bool,
}

fn battery_row(check: &'static str, measured: f64, bound: f64) -> BatteryRow {
    BatteryRow {
        check,
        measured,
        bound,
        pass: measured <= bound,
    }
}

/// Fast oracle battery: each check compares one code path against an
/// independently known value. Deterministic, so two runs emit identical
/// bytes (criterion: the manifest alone carries wall-clock).
fn selftest_battery() -> Result<Vec<BatteryRow>> {
    let mut rows = Vec::new();

    rows.push(battery_row(
        "log_add_exp_2_plus_3",
        (log_add_exp(2.0_f64.ln(), 3.0_f64.ln()) - 5.0_f64.ln()).abs(),
        1e-14,
    ));

    let grid = TimeGrid::new(-60.0, 4.0, 1e-3)?;
    let zero = WienerPath::zero(grid);
    let quad = QuadratureSpec::default();

    let pf = PitchforkParams {
        lambda: 1.0,
        delta: 0.0,
        beta: BetaFn::constant(2.0)?,
    };
    let pair = closed_form::pitchfork_quasi_at(&pf, &zero, 0.0, 0.0, &quad)?;
    rows.push(battery_row(
        "cubic_branch_sqrt_half",
        (pair.plus - 0.5_f64.sqrt()).abs(),
        1e-6,
    ));

    let tc = TranscriticalParams {
        lambda: 0.5,
        delta: 0.0,
        beta: BetaFn::constant(2.0)?,
    };
    let q = closed_form::transcritical_quasi_at(&tc, &zero, 0.0, 0.0, &quad)?;
    rows.push(battery_row(
        "quadratic_branch_quarter",
        (q.value - 0.25).abs(),
        1e-6,
    ));

    let wgrid = TimeGrid::new(-30.0, 30.0, 1e-3)?;
    let path = WienerPath::sample(wgrid, 7);
    let again = WienerPath::sample(wgrid, 7);
    let wiener_dev = [-11.25, 0.5, 17.75]
        .iter()
        .map(|&t| (path.eval(t).unwrap() - again.eval(t).unwrap()).abs())
        .fold(0.0_f64, f64::max);
    rows.push(battery_row("wiener_resample_identical", wiener_dev, 0.0));

    let handle = CocycleHandle::pitchfork(PitchforkParams {
        lambda: 1.0,
        delta: 0.5,
        beta: BetaFn::constant(2.0)?,
    })?;
    let law = cocycle::check_cocycle_law(
        &handle,
        &path,
        &[
            CocycleSample { tau: 0.0, s: 1.0, t: 2.0, x: 0.4 },
            CocycleSample { tau: -2.0, s: 2.0, t: 1.0, x: -0.3 },
        ],
    )?;
    rows.push(battery_row("cocycle_law_residual", law.max_residual, 1e-9));

    let lin = SdeSpec {
        drift: DriftSpec::Custom(Arc::new(|_, x| 0.8 * x)),
        delta: 0.5,
    };
    let traj = crate::integrator::integrate(&lin, &path, 0.0, 1.0, 0.7, 1e-3)?;
    let exact = 0.7 * (0.8 + 0.5 * path.eval(1.0)?).exp();
    rows.push(battery_row(
        "heun_geometric_budget",
        (traj.final_state()? - exact).abs(),
        crate::scheme_budget(1e-3),
    ));

    // From x = -1 with dx/dt = -x^2 the solution 1/(t - 1) blows up at t = 1.
    let tc0 = CocycleHandle::transcritical(TranscriticalParams {
        lambda: 0.0,
        delta: 0.0,
        beta: BetaFn::constant(1.0)?,
    })?;
    let measured = match tc0.forward(&zero, 0.0, 2.0, -1.0)? {
        closed_form::FlowValue::BlowUp { after, before } => {
            let inside = after <= 1.0 && 1.0 <= before;
            if inside {
                before - after
            } else {
                f64::INFINITY
            }
        }
        closed_form::FlowValue::Value(_) => f64::INFINITY,
    };
    rows.push(battery_row("quadratic_blow_up_bracket", measured, 2.5e-3));

    let spacing = 2.0 * std::f64::consts::PI / 64.0;
    let values: Vec<f64> = (0..=(64 * 4))
        .map(|k| 2.0 + 0.5 * (spacing * k as f64).sin())
        .collect();
    let trace = QuasiSolutionTrace::new(
        0.0,
        spacing,
        values,
        closed_form::Branch::Plus,
        TraceFrame::Section,
        1.0,
        0,
    )?;
    let period = recurrence::check_period(&trace, 2.0 * std::f64::consts::PI)?;
    rows.push(battery_row("sine_period_residual", period.residual, 1e-12));

    Ok(rows)
}

#[derive(Serialize)]
struct SelftestReport {
    passed: usize,
    failed: usize,
    rows: Vec<BatteryRow>,
}

pub fn run_selftest(cfg: &SelftestConfig, out_dir: &Path) -> Result<i32> {
    let t0 = Instant::now();
    let rows = selftest_battery()?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    let mut csv = String::from("check,measured,bound,pass\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.check,
            fmt_g17(r.measured),
            fmt_g17(r.bound),
            r.pass
        ));
    }
    let report = SelftestReport {
        passed: rows.len() - failed,
        failed,
        rows,
    };
    let mut artifacts = ArtifactSet::new(out_dir)?;
    artifacts.add_text("selftest.csv", csv);
    artifacts.add_json("report.json", &report)?;
    artifacts.flush("selftest", cfg, &[], t0)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

#[derive(Parser)]
#[command(
    name = "pullback-lab",
    version,
    about = "Pathwise bifurcation laboratory for scalar noisy systems"
)]
struct Cli {
    /// Directory for artifacts (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Directory of cached path samples; the PBL_PATH_CACHE environment
    /// variable overrides this flag.
    #[arg(long, global = true)]
    path_cache: Option<PathBuf>,
    /// JSON config for the chosen scenario; flags override single fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SweepArgs {
    /// Coefficient descriptor, e.g. periodic:2,1,6.2831853
    #[arg(long)]
    beta: Option<String>,
    /// Gauge descriptor: zero, cubic_profile:base,amp, quadratic_profile:base,amp
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Comma-separated lambda values.
    #[arg(long, allow_hyphen_values = true)]
    lambda_grid: Option<String>,
    /// Comma-separated tau values.
    #[arg(long, allow_hyphen_values = true)]
    tau_grid: Option<String>,
    /// Repeatable; replaces the config seed list.
    #[arg(long)]
    seed: Vec<u64>,
}

impl SweepArgs {
    fn apply(&self, cfg: &mut SweepScenarioConfig) -> Result<()> {
        if let Some(b) = &self.beta {
            cfg.beta = BetaSpec::parse_flag(b)?;
        }
        if let Some(g) = &self.gamma {
            cfg.gamma = GammaSpec::parse_flag(g)?;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(l) = &self.lambda_grid {
            cfg.lambdas = parse_grid_list(l)?;
        }
        if let Some(t) = &self.tau_grid {
            cfg.taus = parse_grid_list(t)?;
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep the cubic model over a lambda grid.
    PitchforkSweep(SweepArgs),
    /// Sweep the quadratic model over a lambda grid.
    TranscriticalSweep(SweepArgs),
    /// Check the two-parameter flow law on sampled legs.
    VerifyCocycle,
    /// Pullback endpoints and temperedness at one fiber.
    Attractor,
    /// Classify branch traces against the coefficient recurrence class.
    Recurrence,
    /// One forward trajectory of the scheme.
    Integrate,
    /// Built-in oracle battery with byte-stable artifacts.
    Selftest,
}

fn resolve_cache(flag: Option<&Path>) -> Result<Option<PathCache>> {
    let dir = match std::env::var_os("PBL_PATH_CACHE") {
        Some(d) => Some(PathBuf::from(d)),
        None => flag.map(Path::to_path_buf),
    };
    dir.map(PathCache::new).transpose()
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let cache = resolve_cache(cli.path_cache.as_deref())?;
    let cache = cache.as_ref();
    let config = cli.config.as_deref();
    let out = cli.out_dir.as_path();
    match &cli.cmd {
        Cmd::PitchforkSweep(args) => {
            let mut cfg: SweepScenarioConfig = load_config(config)?;
            args.apply(&mut cfg)?;
            run_sweep_scenario(Model::Pitchfork, &cfg, out, cache)
        }
        Cmd::TranscriticalSweep(args) => {
            let mut cfg: SweepScenarioConfig = load_config(config)?;
            args.apply(&mut cfg)?;
            run_sweep_scenario(Model::Transcritical, &cfg, out, cache)
        }
        Cmd::VerifyCocycle => {
            let cfg: VerifyCocycleConfig = load_config(config)?;
            run_verify_cocycle(&cfg, out, cache)
        }
        Cmd::Attractor => {
            let cfg: AttractorConfig = load_config(config)?;
            run_attractor(&cfg, out, cache)
        }
        Cmd::Recurrence => {
            let cfg: RecurrenceConfig = load_config(config)?;
            run_recurrence(&cfg, out, cache)
        }
        Cmd::Integrate => {
            let cfg: IntegrateConfig = load_config(config)?;
            run_integrate(&cfg, out, cache)
        }
        Cmd::Selftest => {
            let cfg: SelftestConfig = load_config(config)?;
            run_selftest(&cfg, out)
        }
    }
}

pub fn main_entry() -> std::process::ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => std::process::ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(e.exit_code() as u8)
        }
    }
}
