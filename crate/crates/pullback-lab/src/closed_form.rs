//! Closed-form solution maps and tempered quasi-solutions.
//!
//! Every integral is a composite trapezoid sum over the path's native grid,
//! accumulated in log space so deep pullback windows cannot overflow. The
//! noise enters each closed form only through increments omega(s + b) -
//! omega(b) for a grid-aligned frame time b, so all operations below reduce
//! to two walkers over one family of integrands
//!
//!   exp(p s + q (omega(s + b) - omega(b))) * w(s + c),
//!
//! a finite-range walk (solution maps, with optional sign-crossing detection
//! for quadratic blow-up) and a half-line walk (quasi-solutions).
//!
//! Half-line integrals truncate at a depth R picked by a running tail
//! certificate: beyond R the path is bounded by the empirical growth ratio
//! eps(R) = sup |increment / s| over the remaining support, the tail mass by
//! sup_w * e^{-(decay - noise_mult * eps) R} / (decay - noise_mult * eps),
//! and the walk stops once that bound falls below rel_tol times the
//! accumulated integral. The certificate is finite-window by nature: eps is
//! a sup over available nodes, and is reported alongside the result.

use crate::coefficients::{BetaFn, CertifiedBounds, EnvelopeData};
use crate::error::{Error, Result};
use crate::numerics::{log_add_exp, LogSum};
use crate::wiener::WienerPath;

/// Controls for half-line quadrature: target relative tail mass and a cap on
/// the truncation depth (the path support always caps it too). The rule is
/// always trapezoid on the path grid; sub-grid refinement cannot help because
/// the integrand is only as smooth as the path itself.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub max_truncation: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-8,
            max_truncation: f64::INFINITY,
        }
    }
}

/// Parameters of the cubic equation dx = (lambda x - beta(t) x^3) dt
/// + delta x ∘ dW.
#[derive(Debug, Clone)]
pub struct PitchforkParams {
    pub lambda: f64,
    pub delta: f64,
    pub beta: BetaFn,
}

/// Parameters of the quadratic equation dx = (lambda x - beta(t) x^2) dt
/// + delta x ∘ dW.
#[derive(Debug, Clone)]
pub struct TranscriticalParams {
    pub lambda: f64,
    pub delta: f64,
    pub beta: BetaFn,
}

/// A half-line integral value with its truncation certificate.
#[derive(Debug, Clone, Copy)]
pub struct QuasiValue {
    pub value: f64,
    pub truncation_r: f64,
    pub tail_bound: f64,
    /// Empirical growth ratio the certificate assumed beyond the truncation.
    pub epsilon: f64,
}

/// The symmetric pair of nontrivial cubic branches.
#[derive(Debug, Clone, Copy)]
pub struct QuasiPair {
    pub plus: f64,
    pub minus: f64,
    pub truncation_r: f64,
    pub tail_bound: f64,
    pub epsilon: f64,
}

/// Pathwise bracket for the nontrivial cubic branches under a banded
/// perturbation.
#[derive(Debug, Clone, Copy)]
pub struct SandwichBounds {
    pub lower: f64,
    pub upper: f64,
    pub truncation_r: f64,
}

/// Outcome of a quadratic solution map: a value, or finite-time blow-up
/// bracketed to one grid cell (possible only from negative initial data).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowValue {
    Value(f64),
    BlowUp { after: f64, before: f64 },
}

impl FlowValue {
    pub fn value(self) -> Result<f64> {
        match self {
            FlowValue::Value(v) => Ok(v),
            FlowValue::BlowUp { after, before } => Err(Error::Domain(format!(
                "solution blew up between t = {after} and t = {before}"
            ))),
        }
    }
}

/// How a trace indexes the noise: a section fixes one path and varies only
/// the coefficient time (the frame recurrence detectors need), an orbit
/// shifts the path along with the time so that the cocycle identity
/// Phi(t, tau, shift_tau(omega), v(tau)) = v(tau + t) can be checked from the
/// trace alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFrame {
    Section,
    Orbit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
    Transcritical,
    EnvelopeXi,
}

/// A candidate complete quasi-solution sampled on a uniform time grid along
/// one path.
#[derive(Debug, Clone)]
pub struct QuasiSolutionTrace {
    tau_start: f64,
    d_tau: f64,
    values: Vec<f64>,
    pub branch: Branch,
    pub frame: TraceFrame,
    pub lambda: f64,
    pub seed: u64,
}

impl QuasiSolutionTrace {
    pub fn new(
        tau_start: f64,
        d_tau: f64,
        values: Vec<f64>,
        branch: Branch,
        frame: TraceFrame,
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Coverage("trace needs at least two samples".into()));
        }
        if !(d_tau > 0.0) {
            return Err(Error::Config(format!("trace spacing must be positive, got {d_tau}")));
        }
        let ok = match branch {
            Branch::Plus => values.iter().all(|v| *v > 0.0),
            Branch::Minus => values.iter().all(|v| *v < 0.0),
            Branch::EnvelopeXi => values.iter().all(|v| *v >= 0.0),
            Branch::Transcritical => {
                values.iter().all(|v| *v > 0.0) || values.iter().all(|v| *v < 0.0)
            }
        };
        if !ok {
            return Err(Error::Config(format!("trace values violate the {branch:?} branch sign")));
        }
        Ok(QuasiSolutionTrace {
            tau_start,
            d_tau,
            values,
            branch,
            frame,
            lambda,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.d_tau
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_start
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_start + self.d_tau * (self.values.len() - 1) as f64
    }

    pub fn tau_at(&self, k: usize) -> f64 {
        self.tau_start + self.d_tau * k as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of a trace time, which must align with the trace grid.
    pub fn index_of(&self, tau: f64) -> Result<usize> {
        let pos = (tau - self.tau_start) / self.d_tau;
        let k = pos.round();
        if (pos - k).abs() > 1e-6 {
            return Err(Error::Misaligned { t: tau, step: self.d_tau });
        }
        if k < 0.0 || k as usize >= self.values.len() {
            return Err(Error::Coverage(format!(
                "tau = {tau} outside trace coverage [{}, {}]",
                self.tau_min(),
                self.tau_max()
            )));
        }
        Ok(k as usize)
    }

    pub fn value_at(&self, tau: f64) -> Result<f64> {
        Ok(self.values[self.index_of(tau)?])
    }

    /// The reflected trace (plus <-> minus).
    pub fn mirrored(&self) -> Self {
        let branch = match self.branch {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
            other => other,
        };
        QuasiSolutionTrace {
            tau_start: self.tau_start,
            d_tau: self.d_tau,
            values: self.values.iter().map(|v| -v).collect(),
            branch,
            frame: self.frame,
            lambda: self.lambda,
            seed: self.seed,
        }
    }
}

/// Integrand weight shapes the kernels support.
#[derive(Clone, Copy)]
enum Weight<'a> {
    One,
    Beta(&'a BetaFn),
    Forcing(&'a EnvelopeData),
}

impl<'a> Weight<'a> {
    fn log_eval(&self, t: f64) -> f64 {
        match self {
            Weight::One => 0.0,
            Weight::Beta(b) => b.eval(t).ln(),
            Weight::Forcing(e) => {
                let v = e.forcing(t);
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Suffix growth ratios of a shifted path: eps[k] bounds
/// |omega(s + b) - omega(b)| / |s| over every supported node with depth
/// >= k cells in the walk direction.
pub(crate) struct GrowthProfile {
    eps: Vec<f64>,
}

impl GrowthProfile {
    fn at(&self, k: usize) -> f64 {
        self.eps[k.min(self.eps.len() - 1)]
    }
}

struct Kernel<'a> {
    path: &'a WienerPath,
    p: f64,
    q: f64,
    base_idx: i64,
    base_val: f64,
    coef_offset: f64,
    weight: Weight<'a>,
    h: f64,
}

enum RangeWalk {
    Completed { log_value: f64 },
    Crossed { k_after: i64, k_before: i64 },
}

struct HalflineIntegral {
    log_value: f64,
    truncation_r: f64,
    tail_bound: f64,
    epsilon: f64,
}

impl<'a> Kernel<'a> {
    fn new(
        path: &'a WienerPath,
        p: f64,
        q: f64,
        frame_time: f64,
        coef_offset: f64,
        weight: Weight<'a>,
    ) -> Result<Self> {
        let base_idx = path.grid().index_of(frame_time)? as i64;
        Ok(Kernel {
            path,
            p,
            q,
            base_idx,
            base_val: path.value_at_node(base_idx as usize),
            coef_offset,
            weight,
            h: path.grid().step(),
        })
    }

    fn n_points(&self) -> i64 {
        self.path.grid().n_points() as i64
    }

    fn increment(&self, k: i64) -> Result<f64> {
        let idx = self.base_idx + k;
        if idx < 0 || idx >= self.n_points() {
            return Err(Error::OutOfSupport {
                t: k as f64 * self.h + self.path.grid().node_time(self.base_idx as usize),
                t_min: self.path.grid().t_min(),
                t_max: self.path.grid().t_max(),
            });
        }
        Ok(self.path.value_at_node(idx as usize) - self.base_val)
    }

    fn log_g(&self, k: i64) -> Result<f64> {
        let s = k as f64 * self.h;
        Ok(self.p * s + self.q * self.increment(k)? + self.weight.log_eval(s + self.coef_offset))
    }

    /// Trapezoid over s in [k_from h, k_to h]; crossing detection fires when
    /// the accumulated log integral reaches log_threshold.
    fn walk_range(&self, k_from: i64, k_to: i64, log_threshold: Option<f64>) -> Result<RangeWalk> {
        debug_assert!(k_from <= k_to);
        let mut acc = LogSum::new();
        if k_from == k_to {
            return Ok(RangeWalk::Completed {
                log_value: f64::NEG_INFINITY,
            });
        }
        let log_half_h = (0.5 * self.h).ln();
        let mut prev = self.log_g(k_from)?;
        for k in k_from + 1..=k_to {
            let cur = self.log_g(k)?;
            acc.add_log_term(log_half_h + log_add_exp(prev, cur));
            prev = cur;
            if let Some(th) = log_threshold {
                if acc.log_total() >= th {
                    return Ok(RangeWalk::Crossed {
                        k_after: k - 1,
                        k_before: k,
                    });
                }
            }
        }
        Ok(RangeWalk::Completed {
            log_value: acc.log_total(),
        })
    }

    /// Depth (in cells) of the available support in the walk direction.
    fn support_cells(&self, backward: bool) -> i64 {
        if backward {
            self.base_idx
        } else {
            self.n_points() - 1 - self.base_idx
        }
    }

    fn growth_profile(&self, backward: bool) -> GrowthProfile {
        let cells = self.support_cells(backward) as usize;
        let mut eps = vec![0.0_f64; cells + 1];
        let mut running: f64 = 0.0;
        for k in (1..=cells).rev() {
            let j = if backward { -(k as i64) } else { k as i64 };
            let ratio = (self.increment(j).unwrap() / (k as f64 * self.h)).abs();
            running = running.max(ratio);
            eps[k] = running;
        }
        eps[0] = running;
        GrowthProfile { eps }
    }

    /// Certified half-line integral toward -inf (backward) or +inf.
    ///
    /// decay is the positive exponential rate of the weight-free integrand,
    /// noise_mult scales the empirical growth ratio, log_sup_weight bounds
    /// the weight over the tail.
    fn walk_halfline(
        &self,
        backward: bool,
        decay: f64,
        noise_mult: f64,
        log_sup_weight: f64,
        quad: &QuadratureSpec,
        profile: Option<&GrowthProfile>,
        what: &'static str,
    ) -> Result<HalflineIntegral> {
        let own_profile;
        let profile = match profile {
            Some(p) => p,
            None => {
                own_profile = self.growth_profile(backward);
                &own_profile
            }
        };
        let support = self.support_cells(backward);
        let cap = if quad.max_truncation.is_finite() {
            support.min((quad.max_truncation / self.h).floor() as i64)
        } else {
            support
        };
        let mut acc = LogSum::new();
        let log_half_h = (0.5 * self.h).ln();
        let mut prev = self.log_g(0)?;
        let mut best_needed = f64::INFINITY;
        for k in 1..=cap {
            let j = if backward { -k } else { k };
            let cur = self.log_g(j)?;
            acc.add_log_term(log_half_h + log_add_exp(prev, cur));
            prev = cur;
            let r = k as f64 * self.h;
            // piecewise-linear interpolants between nodes can exceed the node
            // ratios by at most a factor (1 + h/r)
            let epsilon = profile.at(k as usize) * (1.0 + self.h / r);
            let rate = decay - noise_mult * epsilon;
            if rate <= 0.0 {
                continue;
            }
            let log_tail = log_sup_weight - rate * r - rate.ln();
            let log_value = acc.log_total();
            if log_tail <= quad.rel_tol.ln() + log_value
                || (log_tail == f64::NEG_INFINITY && log_value == f64::NEG_INFINITY)
            {
                return Ok(HalflineIntegral {
                    log_value,
                    truncation_r: r,
                    tail_bound: log_tail.exp(),
                    epsilon,
                });
            }
            if log_value > f64::NEG_INFINITY {
                best_needed = (log_sup_weight - rate.ln() - quad.rel_tol.ln() - log_value) / rate;
            }
        }
        Err(Error::InsufficientSupport {
            what,
            available: cap as f64 * self.h,
            needed: best_needed,
        })
    }
}

fn aligned_depth(path: &WienerPath, t: f64) -> Result<i64> {
    let k = path.grid().aligned_steps(t)?;
    if k < 0 {
        return Err(Error::Domain(format!("time span must be nonnegative, got {t}")));
    }
    Ok(k)
}

/// Cubic solution map core in a normalized noise frame: the state after
/// advancing time t >= 0 from x, where frame_time is the grid time of the
/// starting instant and coef_time its coefficient time.
fn cubic_core(
    params: &PitchforkParams,
    path: &WienerPath,
    frame_time: f64,
    coef_time: f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    let kt = aligned_depth(path, t)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let kernel = Kernel::new(
        path,
        2.0 * params.lambda,
        2.0 * params.delta,
        frame_time,
        coef_time,
        Weight::Beta(&params.beta),
    )?;
    let log_l2 = match kernel.walk_range(0, kt, None)? {
        RangeWalk::Completed { log_value } => log_value,
        RangeWalk::Crossed { .. } => unreachable!(),
    };
    let dw = kernel.increment(kt)?;
    let log_denom_sq = log_add_exp(0.0, (2.0 * x * x).ln() + log_l2);
    let log_abs = x.abs().ln() + params.lambda * t + params.delta * dw - 0.5 * log_denom_sq;
    Ok(x.signum() * log_abs.exp())
}

/// The cubic solution x(t, tau, omega, x_tau) for t >= tau.
pub fn pitchfork_flow(
    params: &PitchforkParams,
    path: &WienerPath,
    tau: f64,
    t: f64,
    x_tau: f64,
) -> Result<f64> {
    cubic_core(params, path, tau, tau, t - tau, x_tau)
}

/// The pulled-back cubic state x(tau, tau - t, shift_{-tau}(omega), x0) for
/// pullback depth t >= 0; only path data on [-t, 0] is read.
pub fn pitchfork_pullback(
    params: &PitchforkParams,
    path: &WienerPath,
    tau: f64,
    t: f64,
    x0: f64,
) -> Result<f64> {
    cubic_core(params, path, -t, tau - t, t, x0)
}

/// Cocycle evaluation on an explicitly shifted path: the state after time t
/// starting at x at time tau, with the supplied path playing the role of the
/// already-shifted noise.
pub(crate) fn cubic_cocycle(
    params: &PitchforkParams,
    shifted_path: &WienerPath,
    tau: f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    cubic_core(params, shifted_path, 0.0, tau, t, x)
}

fn quasi_from_halfline(h: HalflineIntegral, map: impl Fn(f64) -> f64) -> QuasiValue {
    QuasiValue {
        value: map(h.log_value),
        truncation_r: h.truncation_r,
        tail_bound: h.tail_bound,
        epsilon: h.epsilon,
    }
}

/// The tempered cubic branch pair at coefficient time tau along
/// shift_{path_shift}(omega); lambda > 0 required. path_shift = 0 gives the
/// section value, path_shift = tau the orbit value.
pub fn pitchfork_quasi_at(
    params: &PitchforkParams,
    path: &WienerPath,
    tau: f64,
    path_shift: f64,
    quad: &QuadratureSpec,
) -> Result<QuasiPair> {
    pitchfork_quasi_profiled(params, path, tau, path_shift, quad, None)
}

pub(crate) fn pitchfork_quasi_profiled(
    params: &PitchforkParams,
    path: &WienerPath,
    tau: f64,
    path_shift: f64,
    quad: &QuadratureSpec,
    profile: Option<&GrowthProfile>,
) -> Result<QuasiPair> {
    if !(params.lambda > 0.0) {
        return Err(Error::Domain(format!(
            "nontrivial cubic branches exist only for lambda > 0, got {}",
            params.lambda
        )));
    }
    let kernel = Kernel::new(
        path,
        2.0 * params.lambda,
        2.0 * params.delta,
        path_shift,
        tau,
        Weight::Beta(&params.beta),
    )?;
    let integral = kernel.walk_halfline(
        true,
        2.0 * params.lambda,
        2.0 * params.delta.abs(),
        params.beta.beta_1().ln(),
        quad,
        profile,
        "cubic branch quadrature",
    )?;
    let plus = (-0.5 * (std::f64::consts::LN_2 + integral.log_value)).exp();
    Ok(QuasiPair {
        plus,
        minus: -plus,
        truncation_r: integral.truncation_r,
        tail_bound: integral.tail_bound,
        epsilon: integral.epsilon,
    })
}

/// Shared growth profile for repeated section-frame quasi evaluations.
pub(crate) fn section_growth_profile(path: &WienerPath, backward: bool) -> Result<GrowthProfile> {
    let kernel = Kernel::new(path, 0.0, 0.0, 0.0, 0.0, Weight::One)?;
    Ok(kernel.growth_profile(backward))
}

/// Quadratic solution map core; see cubic_core for the frame convention.
fn quadratic_core(
    params: &TranscriticalParams,
    path: &WienerPath,
    frame_time: f64,
    coef_time: f64,
    t: f64,
    x: f64,
    phys_base: f64,
) -> Result<FlowValue> {
    let kt = aligned_depth(path, t)?;
    if x == 0.0 {
        return Ok(FlowValue::Value(0.0));
    }
    let kernel = Kernel::new(
        path,
        params.lambda,
        params.delta,
        frame_time,
        coef_time,
        Weight::Beta(&params.beta),
    )?;
    let threshold = if x < 0.0 { Some(-x.abs().ln()) } else { None };
    let log_l = match kernel.walk_range(0, kt, threshold)? {
        RangeWalk::Completed { log_value } => log_value,
        RangeWalk::Crossed { k_after, k_before } => {
            return Ok(FlowValue::BlowUp {
                after: phys_base + k_after as f64 * path.grid().step(),
                before: phys_base + k_before as f64 * path.grid().step(),
            })
        }
    };
    let dw = kernel.increment(kt)?;
    let log_growth = params.lambda * t + params.delta * dw;
    let w = x.abs().ln() + log_l;
    let log_abs = if x > 0.0 {
        x.ln() + log_growth - log_add_exp(0.0, w)
    } else {
        // no crossing, so w < 0 and 1 - e^w > 0
        x.abs().ln() + log_growth - (-(w.exp_m1())).ln()
    };
    Ok(FlowValue::Value(x.signum() * log_abs.exp()))
}

/// The quadratic solution x(t, tau, omega, x_tau) for t >= tau; negative
/// initial data may blow up, reported as a bracketed time.
pub fn transcritical_flow(
    params: &TranscriticalParams,
    path: &WienerPath,
    tau: f64,
    t: f64,
    x_tau: f64,
) -> Result<FlowValue> {
    quadratic_core(params, path, tau, tau, t - tau, x_tau, tau)
}

/// The pulled-back quadratic state for pullback depth t >= 0.
pub fn transcritical_pullback(
    params: &TranscriticalParams,
    path: &WienerPath,
    tau: f64,
    t: f64,
    x0: f64,
) -> Result<FlowValue> {
    quadratic_core(params, path, -t, tau - t, t, x0, tau - t)
}

pub(crate) fn quadratic_cocycle(
    params: &TranscriticalParams,
    shifted_path: &WienerPath,
    tau: f64,
    t: f64,
    x: f64,
) -> Result<FlowValue> {
    quadratic_core(params, shifted_path, 0.0, tau, t, x, tau)
}

/// The tempered quadratic branch at coefficient time tau along
/// shift_{path_shift}(omega); lambda != 0 required, and the branch carries
/// the sign of lambda.
pub fn transcritical_quasi_at(
    params: &TranscriticalParams,
    path: &WienerPath,
    tau: f64,
    path_shift: f64,
    quad: &QuadratureSpec,
) -> Result<QuasiValue> {
    if params.lambda == 0.0 {
        return Err(Error::Domain(
            "the quadratic branch is undefined at lambda = 0 (bifurcation point)".into(),
        ));
    }
    let kernel = Kernel::new(
        path,
        params.lambda,
        params.delta,
        path_shift,
        tau,
        Weight::Beta(&params.beta),
    )?;
    let backward = params.lambda > 0.0;
    let integral = kernel.walk_halfline(
        backward,
        params.lambda.abs(),
        params.delta.abs(),
        params.beta.beta_1().ln(),
        quad,
        None,
        "quadratic branch quadrature",
    )?;
    let sign = params.lambda.signum();
    Ok(quasi_from_halfline(integral, |log_i| sign * (-log_i).exp()))
}

/// Linear envelope solution y(t, tau, omega, y_tau) for t >= tau.
pub fn envelope_flow(
    env: &EnvelopeData,
    delta: f64,
    path: &WienerPath,
    tau: f64,
    t: f64,
    y_tau: f64,
) -> Result<f64> {
    envelope_core(env, delta, path, tau, tau, t - tau, y_tau)
}

/// Pulled-back envelope state for pullback depth t >= 0.
pub fn envelope_pullback(
    env: &EnvelopeData,
    delta: f64,
    path: &WienerPath,
    tau: f64,
    t: f64,
    y0: f64,
) -> Result<f64> {
    envelope_core(env, delta, path, -t, tau - t, t, y0)
}

pub(crate) fn envelope_cocycle(
    env: &EnvelopeData,
    delta: f64,
    shifted_path: &WienerPath,
    tau: f64,
    t: f64,
    y: f64,
) -> Result<f64> {
    envelope_core(env, delta, shifted_path, 0.0, tau, t, y)
}

fn envelope_core(
    env: &EnvelopeData,
    delta: f64,
    path: &WienerPath,
    frame_time: f64,
    coef_time: f64,
    t: f64,
    y: f64,
) -> Result<f64> {
    let kt = aligned_depth(path, t)?;
    let kernel = Kernel::new(
        path,
        env.nu,
        -delta,
        frame_time,
        coef_time,
        Weight::Forcing(env),
    )?;
    let log_e = match kernel.walk_range(0, kt, None)? {
        RangeWalk::Completed { log_value } => log_value,
        RangeWalk::Crossed { .. } => unreachable!(),
    };
    let dw = kernel.increment(kt)?;
    let log_factor = -env.nu * t + delta * dw;
    if y >= 0.0 {
        let log_y = if y > 0.0 { y.ln() } else { f64::NEG_INFINITY };
        let log_bracket = log_add_exp(log_y, log_e);
        if log_bracket == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        Ok((log_factor + log_bracket).exp())
    } else {
        let m = y.abs().ln().max(log_e);
        let inner = if log_e == f64::NEG_INFINITY {
            -(y.abs().ln() - m).exp()
        } else {
            (log_e - m).exp() - (y.abs().ln() - m).exp()
        };
        Ok((log_factor + m).exp() * inner)
    }
}

/// The tempered envelope quasi-solution at coefficient time tau along
/// shift_{path_shift}(omega); always nonnegative, zero when the forcing
/// vanishes.
pub fn envelope_quasi_at(
    env: &EnvelopeData,
    delta: f64,
    path: &WienerPath,
    tau: f64,
    path_shift: f64,
    quad: &QuadratureSpec,
) -> Result<QuasiValue> {
    let kernel = Kernel::new(path, env.nu, -delta, path_shift, tau, Weight::Forcing(env))?;
    // sup of the forcing over the tail, exact for the built-in shapes
    let span = path.grid().t_max() - path.grid().t_min();
    let sup = env.forcing_sup(tau - 4.0 * span, tau);
    let log_sup = if sup > 0.0 { sup.ln() } else { f64::NEG_INFINITY };
    let integral = kernel.walk_halfline(
        true,
        env.nu,
        delta.abs(),
        log_sup,
        quad,
        None,
        "envelope quadrature",
    )?;
    Ok(quasi_from_halfline(integral, |log_i| {
        if log_i == f64::NEG_INFINITY {
            0.0
        } else {
            log_i.exp()
        }
    }))
}

/// Pathwise bracket of the nontrivial cubic branches:
/// (2 (beta_1 - c_1) I)^{-1/2} <= |x| <= (2 (beta_0 - c_2) I)^{-1/2} with
/// I the weight-free half-line integral; lambda > 0 required.
pub fn sandwich_bounds(
    lambda: f64,
    delta: f64,
    bounds: &CertifiedBounds,
    path: &WienerPath,
    tau: f64,
    path_shift: f64,
    quad: &QuadratureSpec,
) -> Result<SandwichBounds> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "the branch bracket is defined for lambda > 0, got {lambda}"
        )));
    }
    let _ = tau; // the weight-free integral does not see coefficient time
    let kernel = Kernel::new(path, 2.0 * lambda, 2.0 * delta, path_shift, tau, Weight::One)?;
    let integral = kernel.walk_halfline(
        true,
        2.0 * lambda,
        2.0 * delta.abs(),
        0.0,
        quad,
        None,
        "bracket quadrature",
    )?;
    let log_i = integral.log_value;
    let lower = (-0.5 * ((2.0 * (bounds.beta_1 - bounds.c_1)).ln() + log_i)).exp();
    let upper = (-0.5 * ((2.0 * (bounds.beta_0 - bounds.c_2)).ln() + log_i)).exp();
    Ok(SandwichBounds {
        lower,
        upper,
        truncation_r: integral.truncation_r,
    })
}

/// Pathwise bracket of the quadratic branch under a banded perturbation:
/// the branch of beta replaced by its certified constant bounds. Defined for
/// lambda != 0; the bracket carries the sign of lambda.
pub fn transcritical_bracket(
    lambda: f64,
    delta: f64,
    bounds: &CertifiedBounds,
    path: &WienerPath,
    path_shift: f64,
    quad: &QuadratureSpec,
) -> Result<SandwichBounds> {
    if lambda == 0.0 {
        return Err(Error::Domain(
            "the quadratic bracket is undefined at lambda = 0 (bifurcation point)".into(),
        ));
    }
    let kernel = Kernel::new(path, lambda, delta, path_shift, 0.0, Weight::One)?;
    let integral = kernel.walk_halfline(
        lambda > 0.0,
        lambda.abs(),
        delta.abs(),
        0.0,
        quad,
        None,
        "quadratic bracket quadrature",
    )?;
    let log_i = integral.log_value;
    let wide = (-(bounds.beta_1 - bounds.c_1).ln() - log_i).exp();
    let narrow = (-(bounds.beta_0 - bounds.c_2).ln() - log_i).exp();
    let (lower, upper) = if lambda > 0.0 {
        (wide, narrow)
    } else {
        (-narrow, -wide)
    };
    Ok(SandwichBounds {
        lower,
        upper,
        truncation_r: integral.truncation_r,
    })
}

/// Builds the plus-branch trace of the cubic equation on a uniform time grid.
/// Section frames allow arbitrary spacing; orbit frames need grid-aligned
/// times because the path is re-framed at each sample.
pub fn pitchfork_branch_trace(
    params: &PitchforkParams,
    path: &WienerPath,
    tau_start: f64,
    d_tau: f64,
    n: usize,
    frame: TraceFrame,
    quad: &QuadratureSpec,
) -> Result<QuasiSolutionTrace> {
    let profile = match frame {
        TraceFrame::Section => Some(section_growth_profile(path, true)?),
        TraceFrame::Orbit => None,
    };
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let tau = tau_start + d_tau * k as f64;
        let shift = match frame {
            TraceFrame::Section => 0.0,
            TraceFrame::Orbit => tau,
        };
        let pair = pitchfork_quasi_profiled(params, path, tau, shift, quad, profile.as_ref())?;
        values.push(pair.plus);
    }
    QuasiSolutionTrace::new(
        tau_start,
        d_tau,
        values,
        Branch::Plus,
        frame,
        params.lambda,
        path.seed(),
    )
}

/// Builds the quadratic branch trace; see pitchfork_branch_trace.
pub fn transcritical_branch_trace(
    params: &TranscriticalParams,
    path: &WienerPath,
    tau_start: f64,
    d_tau: f64,
    n: usize,
    frame: TraceFrame,
    quad: &QuadratureSpec,
) -> Result<QuasiSolutionTrace> {
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let tau = tau_start + d_tau * k as f64;
        let shift = match frame {
            TraceFrame::Section => 0.0,
            TraceFrame::Orbit => tau,
        };
        values.push(transcritical_quasi_at(params, path, tau, shift, quad)?.value);
    }
    QuasiSolutionTrace::new(
        tau_start,
        d_tau,
        values,
        Branch::Transcritical,
        frame,
        params.lambda,
        path.seed(),
    )
}

/// Builds the envelope quasi-solution trace; see pitchfork_branch_trace.
pub fn envelope_xi_trace(
    env: &EnvelopeData,
    delta: f64,
    path: &WienerPath,
    tau_start: f64,
    d_tau: f64,
    n: usize,
    frame: TraceFrame,
    quad: &QuadratureSpec,
) -> Result<QuasiSolutionTrace> {
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let tau = tau_start + d_tau * k as f64;
        let shift = match frame {
            TraceFrame::Section => 0.0,
            TraceFrame::Orbit => tau,
        };
        values.push(envelope_quasi_at(env, delta, path, tau, shift, quad)?.value);
    }
    QuasiSolutionTrace::new(
        tau_start,
        d_tau,
        values,
        Branch::EnvelopeXi,
        frame,
        0.0,
        path.seed(),
    )
}
