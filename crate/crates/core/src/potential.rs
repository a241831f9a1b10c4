//! External potentials with exact first and second spatial derivatives.
//!
//! The Gaussian reduction only needs `V`, `V'` and `V''` at the packet
//! center, so every family here evaluates all three together.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, KostinError, Result};

/// A scalar function of time: constant, tabulated (linear interpolation,
/// clamped at the ends), sinusoidal, or an arbitrary closure.
#[derive(Clone)]
pub enum TimeFunction {
    Constant(f64),
    Tabulated { times: Vec<f64>, values: Vec<f64> },
    /// `offset + amplitude * cos(angular_frequency * t + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl TimeFunction {
    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(invalid(
                "table",
                format!("need matching non-empty columns, got {} times and {} values", times.len(), values.len()),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("table", "times must be strictly increasing"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("table", "entries must be finite"));
        }
        Ok(Self::Tabulated { times, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Tabulated { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let j = times.partition_point(|&s| s <= t);
                let (t0, t1) = (times[j - 1], times[j]);
                let w = (t - t0) / (t1 - t0);
                values[j - 1] + w * (values[j] - values[j - 1])
            }
            Self::Sinusoid {
                offset,
                amplitude,
                angular_frequency,
                phase,
            } => offset + amplitude * (angular_frequency * t + phase).cos(),
            Self::Custom(f) => f(t),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::Tabulated { times, values } => f
                .debug_struct("Tabulated")
                .field("times", times)
                .field("values", values)
                .finish(),
            Self::Sinusoid {
                offset,
                amplitude,
                angular_frequency,
                phase,
            } => f
                .debug_struct("Sinusoid")
                .field("offset", offset)
                .field("amplitude", amplitude)
                .field("angular_frequency", angular_frequency)
                .field("phase", phase)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<f64> for TimeFunction {
    fn from(c: f64) -> Self {
        Self::Constant(c)
    }
}

type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// User-supplied `V`, `V'`, `V''` on an interval of `x`. The three closures
/// are checked against finite differences when constructed.
#[derive(Clone)]
pub struct UserCallable {
    value: SpaceTimeFn,
    slope: SpaceTimeFn,
    curvature: SpaceTimeFn,
    domain: (f64, f64),
}

impl fmt::Debug for UserCallable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserCallable")
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl UserCallable {
    /// Builds the potential and verifies the supplied derivatives at probe
    /// points spread over the domain at `t` in `probe_times`.
    pub fn new<V, D1, D2>(
        value: V,
        slope: D1,
        curvature: D2,
        domain: (f64, f64),
        probe_times: &[f64],
    ) -> Result<Self>
    where
        V: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let (lo, hi) = domain;
        if !(lo < hi) || lo.is_nan() || hi.is_nan() {
            return Err(invalid("domain", format!("need lo < hi, got ({lo}, {hi})")));
        }
        let this = Self {
            value: Arc::new(value),
            slope: Arc::new(slope),
            curvature: Arc::new(curvature),
            domain,
        };
        // keep probes far enough inside that x +- h stays in the domain
        let (plo, phi) = if lo.is_finite() && hi.is_finite() {
            let w = hi - lo;
            (lo + 0.05 * w, hi - 0.05 * w)
        } else {
            (lo.max(-10.0) + 1.0, hi.min(10.0) - 1.0)
        };
        let times: &[f64] = if probe_times.is_empty() { &[0.0] } else { probe_times };
        let mut probes = Vec::new();
        for &t in times {
            for i in 0..=16 {
                probes.push((plo + (phi - plo) * i as f64 / 16.0, t));
            }
        }
        let pot = Potential::Callable(this.clone());
        let report = derivative_consistency(&pot, &probes)?;
        if !report.passes(DERIVATIVE_RTOL) {
            return Err(invalid(
                "potential",
                format!(
                    "supplied derivatives disagree with finite differences: slope err {:e}, curvature err {:e}",
                    report.max_slope_error, report.max_curvature_error
                ),
            ));
        }
        Ok(this)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// Polynomial potential `sum c_k x^k` of degree at most four.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polynomial {
    coeffs: [f64; 5],
}

impl Polynomial {
    /// Coefficients in ascending order; at most five.
    pub fn new(coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() > 5 {
            return Err(invalid(
                "coefficients",
                format!("degree is capped at 4, got {} coefficients", coeffs.len()),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coefficients", "must be finite"));
        }
        let mut c = [0.0; 5];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Self { coeffs: c })
    }

    pub fn coeffs(&self) -> &[f64; 5] {
        &self.coeffs
    }

    fn eval(&self, x: f64) -> PotentialValue {
        let [c0, c1, c2, c3, c4] = self.coeffs;
        PotentialValue {
            value: c0 + x * (c1 + x * (c2 + x * (c3 + x * c4))),
            slope: c1 + x * (2.0 * c2 + x * (3.0 * c3 + x * 4.0 * c4)),
            curvature: 2.0 * c2 + x * (6.0 * c3 + x * 12.0 * c4),
        }
    }
}

/// External potential families.
#[derive(Debug, Clone)]
pub enum Potential {
    Free,
    /// `V = stiffness(t) x^2 / 2`, i.e. `stiffness = m omega0^2`.
    Harmonic { stiffness: TimeFunction },
    /// `V = -F(t) x`.
    UniformForce { force: TimeFunction },
    Polynomial(Polynomial),
    Callable(UserCallable),
}

/// `(V, V', V'')` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl Potential {
    pub fn harmonic(stiffness: f64) -> Self {
        Self::Harmonic {
            stiffness: TimeFunction::Constant(stiffness),
        }
    }

    pub fn uniform_force(force: f64) -> Self {
        Self::UniformForce {
            force: TimeFunction::Constant(force),
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<PotentialValue> {
        potential_eval(self, x, t)
    }

    /// True when `V''` does not depend on `x`, so the width equation
    /// decouples from the center-of-mass equation.
    pub fn curvature_is_uniform(&self) -> bool {
        match self {
            Self::Free | Self::Harmonic { .. } | Self::UniformForce { .. } => true,
            Self::Polynomial(p) => p.coeffs[3] == 0.0 && p.coeffs[4] == 0.0,
            Self::Callable(_) => false,
        }
    }

    /// True when the truncated Taylor expansion to second order is exact, which
    /// makes the Gaussian class closed under the dynamics.
    pub fn is_quadratic_or_lower(&self) -> bool {
        self.curvature_is_uniform()
    }

    pub fn is_free(&self) -> bool {
        match self {
            Self::Free => true,
            Self::Polynomial(p) => p.coeffs[1..].iter().all(|&c| c == 0.0),
            _ => false,
        }
    }

    /// Constant harmonic stiffness, if this is a time-independent quadratic
    /// well centered at the origin.
    pub fn constant_stiffness(&self) -> Option<f64> {
        match self {
            Self::Harmonic { stiffness } => stiffness.as_constant(),
            _ => None,
        }
    }
}

/// Evaluates `(V, V', V'')` at `(x, t)`.
pub fn potential_eval(pot: &Potential, x: f64, t: f64) -> Result<PotentialValue> {
    Ok(match pot {
        Potential::Free => PotentialValue {
            value: 0.0,
            slope: 0.0,
            curvature: 0.0,
        },
        Potential::Harmonic { stiffness } => {
            let k = stiffness.eval(t);
            PotentialValue {
                value: 0.5 * k * x * x,
                slope: k * x,
                curvature: k,
            }
        }
        Potential::UniformForce { force } => {
            let f = force.eval(t);
            PotentialValue {
                value: -f * x,
                slope: -f,
                curvature: 0.0,
            }
        }
        Potential::Polynomial(p) => p.eval(x),
        Potential::Callable(c) => {
            let (lo, hi) = c.domain;
            if !(x >= lo && x <= hi) {
                return Err(KostinError::Domain(format!(
                    "potential evaluated at x = {x} outside its domain [{lo}, {hi}]"
                )));
            }
            PotentialValue {
                value: (c.value)(x, t),
                slope: (c.slope)(x, t),
                curvature: (c.curvature)(x, t),
            }
        }
    })
}

/// Relative tolerance for the derivative consistency check.
pub const DERIVATIVE_RTOL: f64 = 1e-6;

/// Largest relative disagreement between the exact derivatives of a
/// potential and centered finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    pub max_slope_error: f64,
    pub max_curvature_error: f64,
}

impl DerivativeReport {
    pub fn passes(&self, rtol: f64) -> bool {
        self.max_slope_error <= rtol && self.max_curvature_error <= rtol
    }
}

/// Compares `V'` against the centered difference of `V`, and `V''` against
/// the centered difference of `V'`, with step `h = max(|x|, 1) * 1e-5`.
///
/// Errors are relative to the exact derivative once the floating-point
/// noise of the difference quotient has been allowed for.
pub fn derivative_consistency(pot: &Potential, probes: &[(f64, f64)]) -> Result<DerivativeReport> {
    let mut report = DerivativeReport {
        max_slope_error: 0.0,
        max_curvature_error: 0.0,
    };
    for &(x, t) in probes {
        let h = x.abs().max(1.0) * 1e-5;
        let c = pot.eval(x, t)?;
        let p = pot.eval(x + h, t)?;
        let m = pot.eval(x - h, t)?;
        let fd_slope = (p.value - m.value) / (2.0 * h);
        let fd_curv = (p.slope - m.slope) / (2.0 * h);
        let noise_slope = 64.0 * f64::EPSILON * (p.value.abs() + m.value.abs()) / (2.0 * h);
        let noise_curv = 64.0 * f64::EPSILON * (p.slope.abs() + m.slope.abs()) / (2.0 * h);
        let rel = |fd: f64, exact: f64, noise: f64| {
            let excess = ((fd - exact).abs() - noise).max(0.0);
            if excess == 0.0 {
                0.0
            } else {
                excess / exact.abs().max(f64::MIN_POSITIVE)
            }
        };
        report.max_slope_error = report.max_slope_error.max(rel(fd_slope, c.slope, noise_slope));
        report.max_curvature_error = report
            .max_curvature_error
            .max(rel(fd_curv, c.curvature, noise_curv));
    }
    Ok(report)
}
