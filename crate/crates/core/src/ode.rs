//! Dormand-Prince 5(4) integrator with continuous (dense) output.
//!
//! Step control is componentwise: a step is accepted when every component
//! of the embedded error estimate satisfies `|err_i| <= atol + rtol * |y_i|`.

use crate::error::{invalid, KostinError, Result};

/// Tolerances and limits for [`dopri5`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: None,
            max_steps: 5_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol.is_finite() && self.rtol > 0.0) {
            return Err(invalid("rtol", format!("must be > 0, got {}", self.rtol)));
        }
        if !(self.atol.is_finite() && self.atol > 0.0) {
            return Err(invalid("atol", format!("must be > 0, got {}", self.atol)));
        }
        Ok(())
    }
}

/// Accepted/rejected step counts and the largest normalized error estimate
/// among accepted steps (always <= 1).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_error: f64,
}

impl StepStats {
    pub fn merge(self, other: StepStats) -> StepStats {
        StepStats {
            accepted: self.accepted + other.accepted,
            rejected: self.rejected + other.rejected,
            max_error: self.max_error.max(other.max_error),
        }
    }
}

/// One accepted step with its fourth-order continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; N] {
        self.coeffs[0]
    }

    pub fn end(&self) -> [f64; N] {
        std::array::from_fn(|i| self.coeffs[0][i] + self.coeffs[1][i])
    }

    /// Interpolated state at `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let c = &self.coeffs;
        std::array::from_fn(|i| {
            c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])))
        })
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end` (forward in time),
/// calling `on_step` with each accepted step. Either closure may abort the
/// integration by returning an error.
pub fn dopri5<const N: usize, F, G>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    mut on_step: G,
) -> Result<StepStats>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    G: FnMut(&DenseSegment<N>) -> Result<()>,
{
    opts.validate()?;
    if !(t_end >= t0) {
        return Err(invalid("t_end", format!("must be >= start time {t0}, got {t_end}")));
    }
    let mut stats = StepStats::default();
    if t_end == t0 {
        return Ok(stats);
    }
    let span = t_end - t0;
    let scale = |y: &[f64; N], z: &[f64; N], i: usize| opts.atol + opts.rtol * y[i].abs().max(z[i].abs());

    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y)?;
    let mut h = match opts.initial_step {
        Some(h) if h > 0.0 => h.min(span),
        _ => initial_step(&mut rhs, t, &y, &k1, opts, span)?,
    };
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(KostinError::TooManySteps(opts.max_steps));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(KostinError::StepUnderflow { t, h });
        }

        let k2 = rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = rhs(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = rhs(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = rhs(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t1 = if last { t_end } else { t + h };
        let k7 = rhs(t1, &y1)?;

        let mut err = 0.0f64;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let r = (e / scale(&y, &y1, i)).abs();
            err = err.max(if r.is_nan() { f64::INFINITY } else { r });
        }

        if err <= 1.0 {
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err);
            let mut coeffs = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                coeffs[0][i] = y[i];
                coeffs[1][i] = ydiff;
                coeffs[2][i] = bspl;
                coeffs[3][i] = ydiff - h * k7[i] - bspl;
                coeffs[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            on_step(&DenseSegment { t0: t, h, coeffs })?;
            t = t1;
            y = y1;
            k1 = k7;
            if last {
                return Ok(stats);
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.1
            };
            h *= fac;
            last_rejected = true;
        }
    }
}

/// Starting step heuristic from Hairer, Norsett & Wanner (HINIT).
fn initial_step<const N: usize, F>(
    rhs: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    opts: &OdeOptions,
    span: f64,
) -> Result<f64>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let sc: [f64; N] = std::array::from_fn(|i| opts.atol + opts.rtol * y[i].abs());
    let norm = |v: &[f64; N]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = rhs(t + h0, &y1)?;
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut end = 0.0;
        let stats = dopri5(
            |_, y: &[f64; 1]| Ok([-y[0]]),
            0.0,
            [1.0],
            5.0,
            &OdeOptions::with_tolerances(1e-12, 1e-14),
            |seg| {
                end = seg.end()[0];
                Ok(())
            },
        )
        .unwrap();
        assert!(((end - (-5.0f64).exp()) / end).abs() < 1e-10);
        assert!(stats.accepted > 0);
        assert!(stats.max_error <= 1.0);
    }

    #[test]
    fn dense_output_on_oscillator() {
        let mut worst = 0.0f64;
        dopri5(
            |_, y: &[f64; 2]| Ok([y[1], -y[0]]),
            0.0,
            [1.0, 0.0],
            10.0,
            &OdeOptions::with_tolerances(1e-11, 1e-13),
            |seg| {
                for j in 0..=10 {
                    let t = seg.t0 + seg.h * j as f64 / 10.0;
                    let y = seg.eval(t);
                    worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
                }
                Ok(())
            },
        )
        .unwrap();
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn callback_error_aborts() {
        let r = dopri5(
            |_, y: &[f64; 1]| Ok([y[0]]),
            0.0,
            [1.0],
            10.0,
            &OdeOptions::default(),
            |seg| {
                if seg.end()[0] > 2.0 {
                    Err(KostinError::Domain("stop".into()))
                } else {
                    Ok(())
                }
            },
        );
        assert!(matches!(r, Err(KostinError::Domain(_))));
    }

    #[test]
    fn rejects_backward_span_and_bad_tolerances() {
        let f = |_: f64, y: &[f64; 1]| Ok([y[0]]);
        assert!(dopri5(f, 1.0, [1.0], 0.0, &OdeOptions::default(), |_| Ok(())).is_err());
        assert!(dopri5(f, 0.0, [1.0], 1.0, &OdeOptions::with_tolerances(0.0, 1e-9), |_| Ok(())).is_err());
    }

    #[test]
    fn blow_up_reports_underflow_or_step_limit() {
        // y' = y^2 from y(0) = 1 blows up at t = 1
        let opts = OdeOptions {
            max_steps: 100_000,
            ..OdeOptions::default()
        };
        let r = dopri5(|_, y: &[f64; 1]| Ok([y[0] * y[0]]), 0.0, [1.0], 2.0, &opts, |_| Ok(()));
        assert!(matches!(
            r,
            Err(KostinError::StepUnderflow { .. }) | Err(KostinError::TooManySteps(_))
        ));
    }
}
