//! Cocycle handles and the dynamical checks built on them: the cocycle law,
//! quasi-solution invariance, pullback limits, attractor endpoints,
//! temperedness, and a finite-window stability probe.
//!
//! A handle evaluates Phi(t, tau, omega, x) where omega is the path argument
//! of the cocycle; callers realize shifted fibers by passing shifted paths.
//! Closed-form handles share quadrature cells between a composed evaluation
//! and its one-shot counterpart, so their law residuals sit at rounding
//! level; integrator handles obey the law up to time-stamp rounding only.

use serde::Serialize;

use crate::closed_form::{
    cubic_cocycle, envelope_cocycle, envelope_quasi_at, pitchfork_pullback, quadratic_cocycle,
    transcritical_pullback, envelope_pullback, FlowValue, PitchforkParams, QuadratureSpec,
    QuasiSolutionTrace, TraceFrame, TranscriticalParams,
};
use crate::coefficients::EnvelopeData;
use crate::error::{Error, Result};
use crate::integrator::{heun_outcome_to_flow, pullback_integrate, shifted_integrate, SdeSpec};
use crate::numerics::bisect_sup;
use crate::wiener::{TimeGrid, WienerPath};

enum HandleKind {
    Pitchfork(PitchforkParams),
    Transcritical(TranscriticalParams),
    Envelope { env: EnvelopeData, delta: f64 },
    Integrator { spec: SdeSpec, step: f64 },
}

/// A scalar cocycle over the shift on paths.
pub struct CocycleHandle {
    kind: HandleKind,
}

impl CocycleHandle {
    pub fn pitchfork(params: PitchforkParams) -> Result<Self> {
        Self::probed(HandleKind::Pitchfork(params))
    }

    pub fn transcritical(params: TranscriticalParams) -> Result<Self> {
        Self::probed(HandleKind::Transcritical(params))
    }

    pub fn envelope(env: EnvelopeData, delta: f64) -> Result<Self> {
        Self::probed(HandleKind::Envelope { env, delta })
    }

    pub fn integrator(spec: SdeSpec, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("integrator step must be positive, got {step}")));
        }
        Self::probed(HandleKind::Integrator { spec, step })
    }

    /// Every handle passes a cheap identity and two-leg composition probe on
    /// a synthetic path before it is handed out.
    fn probed(kind: HandleKind) -> Result<Self> {
        let handle = CocycleHandle { kind };
        let h = handle.scheme_step().unwrap_or(0.125);
        let span = 64.0 * h;
        let probe = WienerPath::zero(TimeGrid::new(-span, span, h)?);
        let x0 = 0.375;
        let same = handle.forward(&probe, 0.0, 0.0, x0)?.value()?;
        if same != x0 {
            return Err(Error::Scheme {
                what: "identity probe failed: Phi(0, tau, omega) moved the state",
                t: 0.0,
            });
        }
        let s = 4.0 * h;
        let t = 8.0 * h;
        let whole = handle.forward(&probe, 0.0, s + t, x0)?.value()?;
        let first = handle.forward(&probe, 0.0, s, x0)?.value()?;
        let split = handle.forward(&probe.shift(s)?, s, t, first)?.value()?;
        if (whole - split).abs() > 1e-9 * whole.abs().max(1.0) {
            return Err(Error::Scheme {
                what: "composition probe failed on a synthetic path",
                t: s + t,
            });
        }
        Ok(handle)
    }

    /// Integrator handles carry a scheme step; closed forms do not.
    pub fn scheme_step(&self) -> Option<f64> {
        match &self.kind {
            HandleKind::Integrator { step, .. } => Some(*step),
            _ => None,
        }
    }

    /// Noise intensity of the underlying equation.
    pub fn delta(&self) -> f64 {
        match &self.kind {
            HandleKind::Pitchfork(p) => p.delta,
            HandleKind::Transcritical(p) => p.delta,
            HandleKind::Envelope { delta, .. } => *delta,
            HandleKind::Integrator { spec, .. } => spec.delta,
        }
    }

    /// Phi(t, tau, omega, x): the state at time tau + t of the solution
    /// driven by the supplied path, started at x at time tau. The path
    /// argument is read on [0, t].
    pub fn forward(&self, path: &WienerPath, tau: f64, t: f64, x: f64) -> Result<FlowValue> {
        match &self.kind {
            HandleKind::Pitchfork(p) => Ok(FlowValue::Value(cubic_cocycle(p, path, tau, t, x)?)),
            HandleKind::Transcritical(p) => quadratic_cocycle(p, path, tau, t, x),
            HandleKind::Envelope { env, delta } => {
                Ok(FlowValue::Value(envelope_cocycle(env, *delta, path, tau, t, x)?))
            }
            HandleKind::Integrator { spec, step } => {
                let traj = shifted_integrate(spec, path, tau, t, x, *step)?;
                Ok(heun_outcome_to_flow(&traj, *step))
            }
        }
    }

    /// The depth-t pullback at tau: Phi(t, tau - t, shift_{-t} omega, x0),
    /// reading path data on [-t, 0].
    pub fn pullback(&self, path: &WienerPath, tau: f64, depth: f64, x0: f64) -> Result<FlowValue> {
        match &self.kind {
            HandleKind::Pitchfork(p) => {
                Ok(FlowValue::Value(pitchfork_pullback(p, path, tau, depth, x0)?))
            }
            HandleKind::Transcritical(p) => transcritical_pullback(p, path, tau, depth, x0),
            HandleKind::Envelope { env, delta } => Ok(FlowValue::Value(envelope_pullback(
                env, *delta, path, tau, depth, x0,
            )?)),
            HandleKind::Integrator { spec, step } => {
                let traj = pullback_integrate(spec, path, tau, depth, x0, *step)?;
                Ok(heun_outcome_to_flow(&traj, *step))
            }
        }
    }
}

/// One cocycle-law sample: compare Phi(s + t, tau, omega, x) with the
/// composition through the fiber at tau + s.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CocycleSample {
    pub tau: f64,
    pub s: f64,
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CocycleRow {
    pub sample: CocycleSample,
    pub one_shot: f64,
    pub composed: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CocycleReport {
    pub rows: Vec<CocycleRow>,
    pub max_residual: f64,
}

/// Checks the cocycle law on the given samples. Shifted fibers are realized
/// by path shifts, so each s must sit on the path grid.
pub fn check_cocycle_law(
    handle: &CocycleHandle,
    path: &WienerPath,
    samples: &[CocycleSample],
) -> Result<CocycleReport> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut max_residual = 0.0_f64;
    for &sample in samples {
        let CocycleSample { tau, s, t, x } = sample;
        let one_shot = handle.forward(path, tau, s + t, x)?;
        let mid = handle.forward(path, tau, s, x)?;
        let composed = match mid {
            FlowValue::Value(v) => handle.forward(&path.shift(s)?, tau + s, t, v)?,
            FlowValue::BlowUp { .. } => mid,
        };
        let (a, b, residual) = match (one_shot, composed) {
            (FlowValue::Value(a), FlowValue::Value(b)) => (a, b, (a - b).abs()),
            (FlowValue::BlowUp { after, .. }, FlowValue::BlowUp { after: after2, .. }) => {
                (after, after2, 0.0)
            }
            (FlowValue::Value(a), FlowValue::BlowUp { .. }) => (a, f64::NAN, f64::INFINITY),
            (FlowValue::BlowUp { .. }, FlowValue::Value(b)) => (f64::NAN, b, f64::INFINITY),
        };
        max_residual = max_residual.max(residual);
        rows.push(CocycleRow {
            sample,
            one_shot: a,
            composed: b,
            residual,
        });
    }
    Ok(CocycleReport { rows, max_residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiCheckRow {
    pub tau: f64,
    pub t: f64,
    pub pushed: f64,
    pub trace_value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiCheckReport {
    pub rows: Vec<QuasiCheckRow>,
    pub max_residual: f64,
}

/// Verifies that an orbit-frame trace is invariant under the cocycle:
/// Phi(t, tau, shift_tau omega, v(tau)) = v(tau + t) for each requested pair.
/// Section-frame traces are rejected; their samples live on different fibers
/// and the identity does not even parse for them.
pub fn check_quasi_solution(
    handle: &CocycleHandle,
    path: &WienerPath,
    trace: &QuasiSolutionTrace,
    pairs: &[(f64, f64)],
) -> Result<QuasiCheckReport> {
    if trace.frame != TraceFrame::Orbit {
        return Err(Error::Config(
            "quasi-solution invariance needs an orbit-frame trace; \
             section-frame values compare states on different fibers"
                .into(),
        ));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut max_residual = 0.0_f64;
    for &(tau, t) in pairs {
        let v_tau = trace.value_at(tau)?;
        let v_end = trace.value_at(tau + t)?;
        let shifted = path.shift(tau)?;
        let pushed = match handle.forward(&shifted, tau, t, v_tau)? {
            FlowValue::Value(v) => v,
            FlowValue::BlowUp { .. } => f64::INFINITY,
        };
        let residual = (pushed - v_end).abs();
        max_residual = max_residual.max(residual);
        rows.push(QuasiCheckRow {
            tau,
            t,
            pushed,
            trace_value: v_end,
            residual,
        });
    }
    Ok(QuasiCheckReport { rows, max_residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct PullbackLimit {
    pub value: f64,
    pub depth_used: f64,
    pub history: Vec<(f64, f64)>,
}

/// Runs the pullback at increasing depths until two consecutive values agree
/// within atol.
pub fn pullback_limit(
    handle: &CocycleHandle,
    path: &WienerPath,
    tau: f64,
    x0: f64,
    schedule: &[f64],
    atol: f64,
) -> Result<PullbackLimit> {
    if schedule.len() < 2 {
        return Err(Error::Config("pullback schedule needs at least two depths".into()));
    }
    let mut history: Vec<(f64, f64)> = Vec::with_capacity(schedule.len());
    for &depth in schedule {
        let v = handle.pullback(path, tau, depth, x0)?.value()?;
        if let Some(&(_, prev)) = history.last() {
            if (v - prev).abs() <= atol {
                history.push((depth, v));
                return Ok(PullbackLimit {
                    value: v,
                    depth_used: depth,
                    history,
                });
            }
        }
        history.push((depth, v));
    }
    Err(Error::NoConvergence(format!(
        "pullback at tau = {tau} did not settle within atol = {atol}; history {history:?}"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct AttractorDepthRow {
    pub depth: f64,
    pub xi: f64,
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttractorEndpoints {
    pub x_minus: f64,
    pub x_plus: f64,
    pub depth_used: f64,
    pub history: Vec<AttractorDepthRow>,
}

/// Pullback endpoints of the attractor fiber at tau: the flow is pulled back
/// from the envelope values +-xi(tau - t, shift_{-t} omega), which dominate
/// every bounded orbit. Domination makes the plus sequence nonincreasing and
/// the minus sequence nondecreasing in depth (up to slack, which covers
/// quadrature or scheme error); violations are reported, not smoothed over.
pub fn attractor_endpoints(
    handle: &CocycleHandle,
    env: &EnvelopeData,
    path: &WienerPath,
    tau: f64,
    schedule: &[f64],
    atol: f64,
    slack: f64,
    quad: &QuadratureSpec,
) -> Result<AttractorEndpoints> {
    if schedule.len() < 2 {
        return Err(Error::Config("endpoint schedule needs at least two depths".into()));
    }
    let delta = handle.delta();
    let mut history: Vec<AttractorDepthRow> = Vec::with_capacity(schedule.len());
    for &depth in schedule {
        let xi = envelope_quasi_at(env, delta, path, tau - depth, -depth, quad)?.value;
        let plus = handle.pullback(path, tau, depth, xi)?.value()?;
        let minus = handle.pullback(path, tau, depth, -xi)?.value()?;
        if let Some(prev) = history.last() {
            if plus > prev.plus + slack {
                return Err(Error::MonotonicityViolation {
                    t: depth,
                    value: plus,
                    previous: prev.plus,
                    slack,
                });
            }
            if minus < prev.minus - slack {
                return Err(Error::MonotonicityViolation {
                    t: depth,
                    value: minus,
                    previous: prev.minus,
                    slack,
                });
            }
            if (plus - prev.plus).abs() <= atol && (minus - prev.minus).abs() <= atol {
                history.push(AttractorDepthRow { depth, xi, plus, minus });
                return Ok(AttractorEndpoints {
                    x_minus: minus,
                    x_plus: plus,
                    depth_used: depth,
                    history,
                });
            }
        }
        history.push(AttractorDepthRow { depth, xi, plus, minus });
    }
    let tail: Vec<(f64, f64, f64)> = history.iter().map(|r| (r.depth, r.plus, r.minus)).collect();
    Err(Error::NoConvergence(format!(
        "attractor endpoints at tau = {tau} did not settle within atol = {atol}; history {tail:?}"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct TemperednessRow {
    pub rate: f64,
    pub inner_max: f64,
    pub outer_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TemperednessReport {
    pub tempered: bool,
    pub rows: Vec<TemperednessRow>,
}

/// Empirical temperedness of sampled values |v(t_k)|: for each tested rate c
/// the weights e^{-c |t|} |v(t)| over the outer half of the window must not
/// exceed their inner-half maximum. Exponential growth at any tested rate
/// fails; subexponential families pass every rate.
pub fn temperedness_check(samples: &[(f64, f64)], rates: &[f64]) -> Result<TemperednessReport> {
    if samples.len() < 4 {
        return Err(Error::Coverage("temperedness needs at least four samples".into()));
    }
    if rates.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("temperedness rates must be positive".into()));
    }
    let t_abs_max = samples.iter().map(|(t, _)| t.abs()).fold(0.0, f64::max);
    let split = 0.5 * t_abs_max;
    let mut rows = Vec::with_capacity(rates.len());
    let mut tempered = true;
    for &c in rates {
        let mut inner_max = 0.0_f64;
        let mut outer_max = 0.0_f64;
        for &(t, v) in samples {
            let w = (-c * t.abs()).exp() * v.abs();
            if t.abs() <= split {
                inner_max = inner_max.max(w);
            } else {
                outer_max = outer_max.max(w);
            }
        }
        if outer_max > inner_max {
            tempered = false;
        }
        rows.push(TemperednessRow {
            rate: c,
            inner_max,
            outer_max,
        });
    }
    Ok(TemperednessReport { tempered, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    AsymptoticallyStable,
    LyapunovStableOnly,
    Unstable,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    /// Largest initial offset that kept the orbit within epsilon of the
    /// reference over the window, if any survived the bisection.
    pub delta_found: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionRow {
    pub delta0: f64,
    pub final_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    /// The probe window [tau, tau + horizon]; every verdict is a statement
    /// about this window only.
    pub tau: f64,
    pub horizon: f64,
    pub epsilons: Vec<EpsilonRow>,
    pub contractions: Vec<ContractionRow>,
}

#[derive(Debug, Clone)]
pub struct StabilityProbeOptions {
    pub epsilons: Vec<f64>,
    pub bisection_iters: u32,
    /// Deviations at the horizon must shrink below this fraction of the
    /// initial offset to count as attraction.
    pub contraction_factor: f64,
}

impl Default for StabilityProbeOptions {
    fn default() -> Self {
        StabilityProbeOptions {
            epsilons: vec![1e-1, 1e-2, 1e-3],
            bisection_iters: 20,
            contraction_factor: 0.2,
        }
    }
}

/// Finite-window stability trichotomy for the orbit through (tau, x_star).
///
/// For each epsilon the probe bisects for the largest two-sided initial
/// offset whose orbits stay within epsilon of the reference at the sample
/// times; failure at any epsilon reads unstable. A stable orbit is
/// asymptotically stable when the smallest-epsilon offsets also contract by
/// the configured factor at the horizon.
pub fn stability_probe(
    handle: &CocycleHandle,
    path: &WienerPath,
    tau: f64,
    x_star: f64,
    horizon: f64,
    opts: &StabilityProbeOptions,
) -> Result<StabilityReport> {
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("probe horizon must be positive, got {horizon}")));
    }
    let step = path.grid().step();
    let mut sample_times = Vec::new();
    let mut frac = 1.0;
    while frac > 1.0 / 128.0 {
        let t = (horizon * frac / step).round() * step;
        if t > 0.0 && !sample_times.contains(&t) {
            sample_times.push(t);
        }
        frac *= 0.5;
    }
    sample_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let reference: Vec<f64> = sample_times
        .iter()
        .map(|&t| handle.forward(path, tau, t, x_star)?.value())
        .collect::<Result<_>>()?;

    // sup deviation over the sampled window; blow-up or support exhaustion on
    // a perturbed orbit counts as escape
    let deviation = |x0: f64| -> Result<f64> {
        let mut worst = 0.0_f64;
        for (&t, &r) in sample_times.iter().zip(&reference) {
            match handle.forward(path, tau, t, x0) {
                Ok(FlowValue::Value(v)) => worst = worst.max((v - r).abs()),
                Ok(FlowValue::BlowUp { .. }) => return Ok(f64::INFINITY),
                Err(Error::Scheme { .. }) => return Ok(f64::INFINITY),
                Err(e) => return Err(e),
            }
        }
        Ok(worst)
    };

    let mut epsilons = Vec::with_capacity(opts.epsilons.len());
    let mut stable = true;
    for &eps in &opts.epsilons {
        let mut failure: Option<Error> = None;
        let delta_found = bisect_sup(eps, opts.bisection_iters, |d| {
            if failure.is_some() {
                return false;
            }
            let up = deviation(x_star + d);
            let down = deviation(x_star - d);
            match (up, down) {
                (Ok(a), Ok(b)) => a <= eps && b <= eps,
                (Err(e), _) | (_, Err(e)) => {
                    failure = Some(e);
                    false
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if delta_found.is_none() {
            stable = false;
        }
        epsilons.push(EpsilonRow { epsilon: eps, delta_found });
    }

    let mut contractions = Vec::new();
    let mut attracting = true;
    let probe_offsets: Vec<f64> = opts.epsilons.iter().map(|e| 0.5 * e).collect();
    let t_end = *sample_times.last().expect("nonempty");
    let r_end = *reference.last().expect("nonempty");
    for &d0 in &probe_offsets {
        let mut worst_ratio = 0.0_f64;
        for x0 in [x_star + d0, x_star - d0] {
            let ratio = match handle.forward(path, tau, t_end, x0) {
                Ok(FlowValue::Value(v)) => (v - r_end).abs() / d0,
                Ok(FlowValue::BlowUp { .. }) => f64::INFINITY,
                Err(Error::Scheme { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            worst_ratio = worst_ratio.max(ratio);
        }
        if worst_ratio > opts.contraction_factor {
            attracting = false;
        }
        contractions.push(ContractionRow {
            delta0: d0,
            final_ratio: worst_ratio,
        });
    }

    let verdict = if !stable {
        StabilityVerdict::Unstable
    } else if attracting {
        StabilityVerdict::AsymptoticallyStable
    } else {
        StabilityVerdict::LyapunovStableOnly
    };
    Ok(StabilityReport {
        verdict,
        tau,
        horizon,
        epsilons,
        contractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{
        pitchfork_branch_trace, pitchfork_quasi_at, sandwich_bounds,
    };
    use crate::coefficients::{pitchfork_envelope, BetaFn, CertifiedBounds, GammaFn, GammaVariant, TimeFn};
    use crate::integrator::DriftSpec;
    use crate::scheme_budget;

    fn seeded_path(t_min: f64, t_max: f64, step: f64, seed: u64) -> WienerPath {
        WienerPath::sample(TimeGrid::new(t_min, t_max, step).unwrap(), seed)
    }

    fn pitchfork_params(lambda: f64, delta: f64) -> PitchforkParams {
        PitchforkParams {
            lambda,
            delta,
            beta: BetaFn::periodic(2.0, 1.0, 2.0 * std::f64::consts::PI).unwrap(),
        }
    }

    fn handles_under_test() -> Vec<(&'static str, CocycleHandle)> {
        let params = pitchfork_params(1.0, 0.5);
        let spec = SdeSpec {
            drift: DriftSpec::Pitchfork {
                lambda: 1.0,
                beta: params.beta.clone(),
                gamma: GammaFn::zero(GammaVariant::Cubic),
            },
            delta: 0.5,
        };
        vec![
            ("pitchfork", CocycleHandle::pitchfork(params.clone()).unwrap()),
            (
                "transcritical",
                CocycleHandle::transcritical(TranscriticalParams {
                    lambda: 1.0,
                    delta: 0.5,
                    beta: params.beta.clone(),
                })
                .unwrap(),
            ),
            (
                "envelope",
                CocycleHandle::envelope(
                    EnvelopeData::new(1.0, TimeFn::Zero, TimeFn::Constant(2.0), 0.5).unwrap(),
                    0.5,
                )
                .unwrap(),
            ),
            ("integrator", CocycleHandle::integrator(spec, 1e-3).unwrap()),
        ]
    }

    #[test]
    fn construction_probe_accepts_all_handle_kinds() {
        for (name, handle) in handles_under_test() {
            let expected = matches!(name, "integrator");
            assert_eq!(handle.scheme_step().is_some(), expected, "{name}");
        }
    }

    #[test]
    fn cocycle_law_holds_on_seeded_paths() {
        let path = seeded_path(-5.0, 20.0, 1e-3, 7);
        let samples: Vec<CocycleSample> = [(0.0, 1.0, 2.0), (0.5, 2.0, 3.0), (-1.0, 3.0, 1.0)]
            .iter()
            .flat_map(|&(tau, s, t)| {
                [0.3, 1.1].into_iter().map(move |x| CocycleSample { tau, s, t, x })
            })
            .collect();
        for (name, handle) in handles_under_test() {
            let report = check_cocycle_law(&handle, &path, &samples).unwrap();
            assert!(
                report.max_residual < 1e-9,
                "{name}: residual {}",
                report.max_residual
            );
            assert_eq!(report.rows.len(), samples.len());
        }
    }

    #[test]
    fn quasi_solution_is_invariant_for_the_closed_form_handle() {
        let path = seeded_path(-60.0, 20.0, 1e-3, 7);
        let params = pitchfork_params(1.0, 0.5);
        let quad = QuadratureSpec::default();
        let trace =
            pitchfork_branch_trace(&params, &path, 0.0, 1.0, 9, TraceFrame::Orbit, &quad).unwrap();
        let handle = CocycleHandle::pitchfork(params).unwrap();
        let pairs = [(0.0, 1.0), (0.0, 4.0), (2.0, 3.0), (1.0, 7.0)];
        let report = check_quasi_solution(&handle, &path, &trace, &pairs).unwrap();
        assert!(report.max_residual < 1e-7, "residual {}", report.max_residual);
    }

    #[test]
    fn section_traces_are_rejected_for_invariance_checks() {
        let path = seeded_path(-60.0, 20.0, 1e-3, 7);
        let params = pitchfork_params(1.0, 0.5);
        let trace = pitchfork_branch_trace(
            &params,
            &path,
            0.0,
            1.0,
            9,
            TraceFrame::Section,
            &QuadratureSpec::default(),
        )
        .unwrap();
        let handle = CocycleHandle::pitchfork(params).unwrap();
        assert!(matches!(
            check_quasi_solution(&handle, &path, &trace, &[(0.0, 1.0)]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pullback_limit_reaches_the_branch() {
        let path = seeded_path(-60.0, 5.0, 1e-3, 7);
        let params = pitchfork_params(1.0, 0.5);
        let handle = CocycleHandle::pitchfork(params.clone()).unwrap();
        let limit =
            pullback_limit(&handle, &path, 0.0, 1.0, &[5.0, 10.0, 20.0, 40.0], 1e-9).unwrap();
        let quasi = pitchfork_quasi_at(&params, &path, 0.0, 0.0, &QuadratureSpec::default())
            .unwrap()
            .plus;
        assert!((limit.value - quasi).abs() < 1e-7, "{} vs {quasi}", limit.value);
        assert!(limit.history.len() >= 2);
    }

    #[test]
    fn pullback_limit_reports_no_convergence() {
        // lambda < 0 decay is slow enough that depths {1, 2} disagree
        let path = seeded_path(-60.0, 5.0, 1e-3, 7);
        let handle = CocycleHandle::pitchfork(pitchfork_params(-0.1, 0.5)).unwrap();
        assert!(matches!(
            pullback_limit(&handle, &path, 0.0, 1.0, &[1.0, 2.0], 1e-12),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn attractor_endpoints_match_the_quasi_pair() {
        let path = seeded_path(-120.0, 5.0, 1e-3, 7);
        let params = pitchfork_params(1.0, 0.25);
        let bounds = CertifiedBounds {
            beta_0: 1.0,
            beta_1: 3.0,
            c_1: 0.0,
            c_2: 0.0,
        };
        let env = pitchfork_envelope(1.0, &bounds);
        let handle = CocycleHandle::pitchfork(params.clone()).unwrap();
        let quad = QuadratureSpec::default();
        let report = attractor_endpoints(
            &handle,
            &env,
            &path,
            0.0,
            &[5.0, 10.0, 20.0, 40.0, 80.0],
            1e-9,
            1e-9,
            &quad,
        )
        .unwrap();
        // gamma = 0 keeps the flow odd, so the endpoints are symmetric
        assert!((report.x_plus + report.x_minus).abs() < 1e-12);
        let quasi = pitchfork_quasi_at(&params, &path, 0.0, 0.0, &quad).unwrap();
        assert!(
            (report.x_plus - quasi.plus).abs() < 1e-7,
            "{} vs {}",
            report.x_plus,
            quasi.plus
        );
        // endpoints sit inside the certified bracket
        let s = sandwich_bounds(1.0, 0.25, &bounds, &path, 0.0, 0.0, &quad).unwrap();
        assert!(s.lower <= report.x_plus * (1.0 + 1e-9));
        assert!(report.x_plus <= s.upper * (1.0 + 1e-9));
        // the plus history is nonincreasing
        for pair in report.history.windows(2) {
            assert!(pair[1].plus <= pair[0].plus + 1e-9);
            assert!(pair[1].minus >= pair[0].minus - 1e-9);
        }
    }

    #[test]
    fn temperedness_flags_exponential_growth() {
        let tempered: Vec<(f64, f64)> = (-40..=40)
            .map(|k| {
                let t = k as f64;
                (t, (t.abs() + 1.0).sqrt() * (1.0 + 0.3 * (t * 0.7).sin()))
            })
            .collect();
        let report = temperedness_check(&tempered, &[0.05, 0.1, 0.5]).unwrap();
        assert!(report.tempered, "{report:?}");
        let growing: Vec<(f64, f64)> = (-40..=40)
            .map(|k| {
                let t = k as f64;
                (t, (0.3 * t.abs()).exp())
            })
            .collect();
        let report = temperedness_check(&growing, &[0.05, 0.1, 0.5]).unwrap();
        assert!(!report.tempered);
        // rate 0.5 alone cannot see growth at rate 0.3
        let report = temperedness_check(&growing, &[0.5]).unwrap();
        assert!(report.tempered);
    }

    #[test]
    fn stability_probe_separates_the_branches() {
        let path = seeded_path(-2.0, 45.0, 1e-3, 7);
        let params = pitchfork_params(1.0, 0.3);
        let handle = CocycleHandle::pitchfork(params.clone()).unwrap();
        let quad = QuadratureSpec::default();
        let long_path = seeded_path(-60.0, 45.0, 1e-3, 7);
        let plus = pitchfork_quasi_at(&params, &long_path, 0.0, 0.0, &quad).unwrap().plus;

        let trivial = stability_probe(&handle, &path, 0.0, 0.0, 30.0, &Default::default()).unwrap();
        assert_eq!(trivial.verdict, StabilityVerdict::Unstable, "{trivial:?}");

        let branch =
            stability_probe(&handle, &long_path, 0.0, plus, 30.0, &Default::default()).unwrap();
        assert_eq!(branch.verdict, StabilityVerdict::AsymptoticallyStable, "{branch:?}");

        // below the bifurcation point the trivial branch attracts
        let stable_handle = CocycleHandle::pitchfork(pitchfork_params(-0.5, 0.3)).unwrap();
        let down = stability_probe(&stable_handle, &path, 0.0, 0.0, 30.0, &Default::default()).unwrap();
        assert_eq!(down.verdict, StabilityVerdict::AsymptoticallyStable);
    }

    #[test]
    fn stability_probe_sees_algebraic_marginality_at_zero() {
        // lambda = 0 transcritical: deviations decay only algebraically, so
        // the window shows stability without contraction
        let path = WienerPath::zero(TimeGrid::new(-1.0, 45.0, 1e-3).unwrap());
        let handle = CocycleHandle::transcritical(TranscriticalParams {
            lambda: 0.0,
            delta: 0.0,
            beta: BetaFn::constant(1.0).unwrap(),
        })
        .unwrap();
        let report = stability_probe(&handle, &path, 0.0, 0.0, 40.0, &Default::default()).unwrap();
        assert_eq!(report.verdict, StabilityVerdict::LyapunovStableOnly, "{report:?}");
    }

    #[test]
    fn integrator_handle_endpoints_agree_with_closed_form() {
        let params = pitchfork_params(1.0, 0.25);
        let spec = SdeSpec {
            drift: DriftSpec::Pitchfork {
                lambda: 1.0,
                beta: params.beta.clone(),
                gamma: GammaFn::zero(GammaVariant::Cubic),
            },
            delta: 0.25,
        };
        let path = seeded_path(-120.0, 5.0, 1e-3, 11);
        let bounds = CertifiedBounds {
            beta_0: 1.0,
            beta_1: 3.0,
            c_1: 0.0,
            c_2: 0.0,
        };
        let env = pitchfork_envelope(1.0, &bounds);
        let quad = QuadratureSpec::default();
        let step = 1e-3;
        let schedule = [5.0, 10.0, 20.0, 40.0];
        let budget = scheme_budget(step);
        let numeric = attractor_endpoints(
            &CocycleHandle::integrator(spec, step).unwrap(),
            &env,
            &path,
            0.0,
            &schedule,
            budget,
            budget,
            &quad,
        )
        .unwrap();
        let exact = attractor_endpoints(
            &CocycleHandle::pitchfork(params).unwrap(),
            &env,
            &path,
            0.0,
            &schedule,
            1e-9,
            1e-9,
            &quad,
        )
        .unwrap();
        assert!(
            (numeric.x_plus - exact.x_plus).abs() < budget,
            "{} vs {}",
            numeric.x_plus,
            exact.x_plus
        );
        assert!((numeric.x_minus - exact.x_minus).abs() < budget);
    }
}
