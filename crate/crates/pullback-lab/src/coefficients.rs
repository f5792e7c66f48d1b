//! Coefficient families for the cubic and quadratic equations.
//!
//! Every family carries certified bounds: beta stays in [beta_0, beta_1] with
//! beta_0 > 0, and the perturbation gamma stays inside a band measured against
//! x^4 (cubic variant) or x^2 (quadratic variant). Built-in kinds get their
//! bounds analytically; custom closures declare bounds and are checked by
//! dense sampling at construction, with violations treated as hard errors.

use crate::error::{Error, Result};
use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

/// Recurrence structure of a time-dependent coefficient, used by sweeps to
/// decide which detector a branch trace must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecurrenceClass {
    Constant,
    Periodic { period: f64 },
    AlmostPeriodic,
    AlmostAutomorphic,
    Unknown,
}

type TimeClosure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type StateClosure = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Sampling window used to vet user-supplied closures.
const CHECK_WINDOW: f64 = 60.0;
const CHECK_STEP: f64 = 0.01;
/// Rounding slack for bound checks, relative to the bound magnitude.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone)]
enum BetaKind {
    Constant {
        b: f64,
    },
    Periodic {
        a: f64,
        b: f64,
        period: f64,
    },
    QuasiPeriodic {
        a: f64,
        b: f64,
        c: f64,
    },
    AlmostAutomorphic {
        a: f64,
        b: f64,
    },
    Custom {
        f: TimeClosure,
        class: RecurrenceClass,
    },
}

/// Time-dependent cubic/quadratic damping coefficient with certified bounds
/// 0 < beta_0 <= beta(t) <= beta_1.
#[derive(Clone)]
pub struct BetaFn {
    kind: BetaKind,
    beta_0: f64,
    beta_1: f64,
}

impl fmt::Debug for BetaFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            BetaKind::Constant { .. } => "constant",
            BetaKind::Periodic { .. } => "periodic",
            BetaKind::QuasiPeriodic { .. } => "quasi_periodic",
            BetaKind::AlmostAutomorphic { .. } => "almost_automorphic",
            BetaKind::Custom { .. } => "custom",
        };
        write!(f, "BetaFn({name}, [{}, {}])", self.beta_0, self.beta_1)
    }
}

impl BetaFn {
    pub fn constant(b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::Config(format!("constant beta must be positive, got {b}")));
        }
        Ok(BetaFn {
            kind: BetaKind::Constant { b },
            beta_0: b,
            beta_1: b,
        })
    }

    /// a + b sin(2 pi t / period), bounds (a - |b|, a + |b|).
    pub fn periodic(a: f64, b: f64, period: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        if !(a > b.abs()) {
            return Err(Error::Config(format!(
                "periodic beta needs a > |b| to stay positive: a = {a}, b = {b}"
            )));
        }
        Ok(BetaFn {
            kind: BetaKind::Periodic { a, b, period },
            beta_0: a - b.abs(),
            beta_1: a + b.abs(),
        })
    }

    /// a + b sin t + c sin(sqrt(2) t): almost periodic, not periodic, for
    /// nonzero b and c.
    pub fn quasi_periodic(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > b.abs() + c.abs()) {
            return Err(Error::Config(format!(
                "quasi-periodic beta needs a > |b| + |c|: a = {a}, b = {b}, c = {c}"
            )));
        }
        Ok(BetaFn {
            kind: BetaKind::QuasiPeriodic { a, b, c },
            beta_0: a - b.abs() - c.abs(),
            beta_1: a + b.abs() + c.abs(),
        })
    }

    /// a + b sin(1 / (2 + cos t + cos(sqrt(2) t))): bounded and smooth but not
    /// uniformly continuous; almost automorphic without being almost periodic.
    pub fn almost_automorphic(a: f64, b: f64) -> Result<Self> {
        if !(a > b.abs()) {
            return Err(Error::Config(format!(
                "almost-automorphic beta needs a > |b|: a = {a}, b = {b}"
            )));
        }
        Ok(BetaFn {
            kind: BetaKind::AlmostAutomorphic { a, b },
            beta_0: a - b.abs(),
            beta_1: a + b.abs(),
        })
    }

    /// User closure with asserted bounds, vetted by dense sampling on
    /// [-CHECK_WINDOW, CHECK_WINDOW].
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta_0: f64,
        beta_1: f64,
        class: RecurrenceClass,
    ) -> Result<Self> {
        if !(beta_0 > 0.0 && beta_1 >= beta_0) {
            return Err(Error::Config(format!(
                "custom beta bounds must satisfy 0 < beta_0 <= beta_1, got ({beta_0}, {beta_1})"
            )));
        }
        let slack = BOUND_SLACK * beta_1.abs().max(1.0);
        let mut t = -CHECK_WINDOW;
        while t <= CHECK_WINDOW {
            let v = f(t);
            if !v.is_finite() || v < beta_0 - slack || v > beta_1 + slack {
                return Err(Error::Config(format!(
                    "custom beta leaves its asserted bounds at t = {t}: value {v}, bounds ({beta_0}, {beta_1})"
                )));
            }
            t += CHECK_STEP;
        }
        Ok(BetaFn {
            kind: BetaKind::Custom { f: Arc::new(f), class },
            beta_0,
            beta_1,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            BetaKind::Constant { b } => *b,
            BetaKind::Periodic { a, b, period } => {
                a + b * (2.0 * std::f64::consts::PI * t / period).sin()
            }
            BetaKind::QuasiPeriodic { a, b, c } => a + b * t.sin() + c * (SQRT_2 * t).sin(),
            BetaKind::AlmostAutomorphic { a, b } => {
                a + b * (1.0 / (2.0 + t.cos() + (SQRT_2 * t).cos())).sin()
            }
            BetaKind::Custom { f, .. } => f(t),
        }
    }

    pub fn beta_0(&self) -> f64 {
        self.beta_0
    }

    pub fn beta_1(&self) -> f64 {
        self.beta_1
    }

    pub fn recurrence_class(&self) -> RecurrenceClass {
        match &self.kind {
            BetaKind::Constant { .. } => RecurrenceClass::Constant,
            BetaKind::Periodic { period, .. } => RecurrenceClass::Periodic { period: *period },
            BetaKind::QuasiPeriodic { .. } => RecurrenceClass::AlmostPeriodic,
            BetaKind::AlmostAutomorphic { .. } => RecurrenceClass::AlmostAutomorphic,
            BetaKind::Custom { class, .. } => *class,
        }
    }
}

/// Which power of x the perturbation band is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaVariant {
    /// Band c_1 x^4 <= gamma(t, x) x <= c_2 x^4 (cubic equation).
    Cubic,
    /// Band c_1 x^2 <= gamma(t, x) <= c_2 x^2 (quadratic equation).
    Quadratic,
}

#[derive(Clone)]
enum GammaKind {
    Zero,
    /// (base + amp sin t) * x^3 or * x^2.
    Profile { base: f64, amp: f64 },
    Custom { f: StateClosure },
}

/// State-dependent perturbation gamma(t, x) with a certified band
/// 0 <= c_1 <= c_2 and gamma(t, 0) = 0.
#[derive(Clone)]
pub struct GammaFn {
    kind: GammaKind,
    variant: GammaVariant,
    c_1: f64,
    c_2: f64,
    profile_class: RecurrenceClass,
}

impl fmt::Debug for GammaFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            GammaKind::Zero => "zero",
            GammaKind::Profile { .. } => "profile",
            GammaKind::Custom { .. } => "custom",
        };
        write!(
            f,
            "GammaFn({name}, {:?}, [{}, {}])",
            self.variant, self.c_1, self.c_2
        )
    }
}

impl GammaFn {
    pub fn zero(variant: GammaVariant) -> Self {
        GammaFn {
            kind: GammaKind::Zero,
            variant,
            c_1: 0.0,
            c_2: 0.0,
            profile_class: RecurrenceClass::Constant,
        }
    }

    /// gamma(t, x) = (base + amp sin t) x^3, band (base - |amp|, base + |amp|).
    pub fn cubic_profile(base: f64, amp: f64) -> Result<Self> {
        Self::profile(GammaVariant::Cubic, base, amp)
    }

    /// gamma(t, x) = (base + amp sin t) x^2, band (base - |amp|, base + |amp|).
    pub fn quadratic_profile(base: f64, amp: f64) -> Result<Self> {
        Self::profile(GammaVariant::Quadratic, base, amp)
    }

    fn profile(variant: GammaVariant, base: f64, amp: f64) -> Result<Self> {
        let c_1 = base - amp.abs();
        let c_2 = base + amp.abs();
        if !(c_1 >= 0.0) {
            return Err(Error::Config(format!(
                "gamma profile must stay nonnegative: base = {base}, amp = {amp}"
            )));
        }
        let profile_class = if amp == 0.0 {
            RecurrenceClass::Constant
        } else {
            RecurrenceClass::Periodic {
                period: 2.0 * std::f64::consts::PI,
            }
        };
        Ok(GammaFn {
            kind: GammaKind::Profile { base, amp },
            variant,
            c_1,
            c_2,
            profile_class,
        })
    }

    /// User closure with an asserted band, vetted by sampling (t, x) over
    /// [-CHECK_WINDOW, CHECK_WINDOW] x [-10, 10]; gamma(t, 0) must vanish
    /// exactly.
    pub fn custom(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        variant: GammaVariant,
        c_1: f64,
        c_2: f64,
        profile_class: RecurrenceClass,
    ) -> Result<Self> {
        if !(0.0 <= c_1 && c_1 <= c_2) {
            return Err(Error::Config(format!(
                "gamma band must satisfy 0 <= c_1 <= c_2, got ({c_1}, {c_2})"
            )));
        }
        let mut t = -CHECK_WINDOW;
        while t <= CHECK_WINDOW {
            if f(t, 0.0) != 0.0 {
                return Err(Error::Config(format!(
                    "custom gamma must vanish at x = 0; gamma({t}, 0) = {}",
                    f(t, 0.0)
                )));
            }
            let mut x = -10.0_f64;
            while x <= 10.0 {
                let v = f(t, x);
                let (lo, hi) = match variant {
                    GammaVariant::Cubic => (c_1 * x.powi(4), c_2 * x.powi(4)),
                    GammaVariant::Quadratic => (c_1 * x * x, c_2 * x * x),
                };
                let gauge = match variant {
                    GammaVariant::Cubic => v * x,
                    GammaVariant::Quadratic => v,
                };
                let slack = BOUND_SLACK * hi.abs().max(1.0);
                if !gauge.is_finite() || gauge < lo - slack || gauge > hi + slack {
                    return Err(Error::Config(format!(
                        "custom gamma leaves its band at (t, x) = ({t}, {x}): gauge {gauge}, band [{lo}, {hi}]"
                    )));
                }
                x += 0.25;
            }
            t += 0.25;
        }
        Ok(GammaFn {
            kind: GammaKind::Custom { f: Arc::new(f) },
            variant,
            c_1,
            c_2,
            profile_class,
        })
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            GammaKind::Zero => 0.0,
            GammaKind::Profile { base, amp } => {
                let c = base + amp * t.sin();
                match self.variant {
                    GammaVariant::Cubic => c * x * x * x,
                    GammaVariant::Quadratic => c * x * x,
                }
            }
            GammaKind::Custom { f } => f(t, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, GammaKind::Zero)
    }

    pub fn variant(&self) -> GammaVariant {
        self.variant
    }

    pub fn band(&self) -> (f64, f64) {
        (self.c_1, self.c_2)
    }

    pub fn profile_class(&self) -> RecurrenceClass {
        self.profile_class
    }
}

/// Certified bounds of a validated (beta, gamma) pair.
#[derive(Debug, Clone, Copy)]
pub struct CertifiedBounds {
    pub beta_0: f64,
    pub beta_1: f64,
    pub c_1: f64,
    pub c_2: f64,
}

/// Checks the standing assumption that the perturbation band sits strictly
/// below the damping floor: c_2 < beta_0.
pub fn validate_pairing(beta: &BetaFn, gamma: &GammaFn) -> Result<CertifiedBounds> {
    let (c_1, c_2) = gamma.band();
    if c_2 >= beta.beta_0() {
        return Err(Error::Config(format!(
            "standing assumption violated: gamma band top c_2 = {c_2} must stay below beta_0 = {}",
            beta.beta_0()
        )));
    }
    Ok(CertifiedBounds {
        beta_0: beta.beta_0(),
        beta_1: beta.beta_1(),
        c_1,
        c_2,
    })
}

/// Time functions for the linear comparison equation.
#[derive(Clone)]
pub enum TimeFn {
    Zero,
    Constant(f64),
    Custom(TimeClosure),
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Zero => write!(f, "TimeFn(0)"),
            TimeFn::Constant(c) => write!(f, "TimeFn({c})"),
            TimeFn::Custom(_) => write!(f, "TimeFn(custom)"),
        }
    }
}

impl TimeFn {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeFn::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Zero => 0.0,
            TimeFn::Constant(c) => *c,
            TimeFn::Custom(f) => f(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TimeFn::Zero)
    }
}

/// Data of the linear comparison equation
/// dy/dt = -nu y + |g(t)| + h(t) + delta y ∘ dW/dt.
#[derive(Debug, Clone)]
pub struct EnvelopeData {
    pub nu: f64,
    pub g: TimeFn,
    pub h: TimeFn,
    /// Exponent in (0, nu) for which e^{alpha t}(|g| + h) is assumed
    /// integrable on (-inf, 0]; recorded for diagnostics.
    pub alpha: f64,
}

impl EnvelopeData {
    pub fn new(nu: f64, g: TimeFn, h: TimeFn, alpha: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::Config(format!("envelope decay nu must be positive, got {nu}")));
        }
        if !(alpha > 0.0 && alpha < nu) {
            return Err(Error::Config(format!(
                "envelope exponent alpha must lie in (0, nu): alpha = {alpha}, nu = {nu}"
            )));
        }
        if let TimeFn::Constant(c) = h {
            if c < 0.0 {
                return Err(Error::Config(format!("envelope input h must be nonnegative, got {c}")));
            }
        }
        if let TimeFn::Custom(f) = &h {
            let mut t = -CHECK_WINDOW;
            while t <= CHECK_WINDOW {
                if f(t) < 0.0 {
                    return Err(Error::Config(format!(
                        "envelope input h must be nonnegative; h({t}) = {}",
                        f(t)
                    )));
                }
                t += CHECK_STEP;
            }
        }
        Ok(EnvelopeData { nu, g, h, alpha })
    }

    /// Pointwise forcing |g(t)| + h(t).
    pub fn forcing(&self, t: f64) -> f64 {
        self.g.eval(t).abs() + self.h.eval(t)
    }

    /// Upper bound of the forcing over a window, for tail certificates.
    pub fn forcing_sup(&self, lo: f64, hi: f64) -> f64 {
        match (&self.g, &self.h) {
            (TimeFn::Zero, TimeFn::Zero) => 0.0,
            (TimeFn::Zero, TimeFn::Constant(c)) => *c,
            (TimeFn::Constant(g), TimeFn::Constant(c)) => g.abs() + c,
            _ => {
                let mut sup: f64 = 0.0;
                let n = 4096;
                for i in 0..=n {
                    let t = lo + (hi - lo) * i as f64 / n as f64;
                    sup = sup.max(self.forcing(t));
                }
                sup
            }
        }
    }
}

/// Constant c with (lambda + 1)|x| <= (beta_0 - c_2)|x|^3 / 2 + c for all x,
/// padded by 10%. This turns the cubic dissipativity estimate
/// f(t, x) x <= -x^2 + c|x| into the linear envelope with nu = 1, g = 0,
/// h = c. Zero when lambda <= -1 (the estimate then needs no forcing).
pub fn young_envelope_constant(lambda: f64, bounds: &CertifiedBounds) -> f64 {
    let a = lambda + 1.0;
    if a <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * (bounds.beta_0 - bounds.c_2);
    let x_star = (a / (3.0 * k)).sqrt();
    1.1 * (a * x_star - k * x_star.powi(3))
}

/// The linear envelope dominating the cubic equation with the given bounds.
pub fn pitchfork_envelope(lambda: f64, bounds: &CertifiedBounds) -> EnvelopeData {
    let c = young_envelope_constant(lambda, bounds);
    EnvelopeData {
        nu: 1.0,
        g: TimeFn::Zero,
        h: TimeFn::Constant(c),
        alpha: 0.5,
    }
}
