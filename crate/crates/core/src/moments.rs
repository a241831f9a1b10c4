//! Reduced Gaussian dynamics: the damped Newton equation for the packet
//! center and the damped Pinney equation for its width,
//!
//! ```text
//! q'' + nu q' = -V'(q, t) / m
//! a'' + nu a' + omega^2(t) a = hbar^2 / (4 m^2 a^3),   omega^2 = V''(q, t) / m
//! ```
//!
//! plus the closed forms used to cross-check the integrator.

use std::io;

use crate::error::{invalid, KostinError, Result};
use crate::export;
use crate::ode::{dopri5, DenseSegment, OdeOptions, StepStats};
use crate::params::{GridSpec, PacketState, PhysicalParams};
use crate::potential::Potential;

/// Integration aborts when the width drops below this value.
pub const A_FLOOR: f64 = 1e-12;

/// Output of [`integrate_moments`].
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub params: PhysicalParams,
    pub potential: Potential,
    /// States at the requested sample times.
    pub samples: Vec<PacketState>,
    /// States at every accepted step of the width integration, starting
    /// with the initial state.
    pub steps: Vec<PacketState>,
    pub stats: StepStats,
}

impl MomentTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.a).collect()
    }

    pub fn last(&self) -> &PacketState {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Columns `t, q, qdot, a, adot, E_w`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> io::Result<()> {
        let rows = self.samples.iter().map(|s| {
            [s.t, s.q, s.qdot, s.a, s.adot, width_energy(&self.params, s)]
        });
        export::write_csv(w, &["t", "q", "qdot", "a", "adot", "E_w"], rows)
    }
}

/// Integrates the moment equations from `init.t` to `grid.t_end`, sampling
/// every `grid.dt` (and at `t_end`).
pub fn integrate_moments(
    params: &PhysicalParams,
    pot: &Potential,
    init: &PacketState,
    grid: &GridSpec,
    rtol: f64,
    atol: f64,
) -> Result<MomentTrajectory> {
    grid.validate()?;
    let times = sample_times(init.t, grid.t_end, grid.dt)?;
    integrate_moments_at(params, pot, init, &times, &OdeOptions::with_tolerances(rtol, atol))
}

/// Evenly spaced sample times `t0, t0 + dt, ...`, always ending at `t_end`.
pub fn sample_times(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "sample spacing must be > 0"));
    }
    if !(t_end >= t0) {
        return Err(invalid("t_end", format!("must be >= initial time {t0}")));
    }
    let n = ((t_end - t0) / dt * (1.0 + 1e-12)).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * dt).filter(|&t| t <= t_end).collect();
    if t_end - v[v.len() - 1] > 1e-12 * dt {
        v.push(t_end);
    } else {
        let last = v.len() - 1;
        v[last] = t_end;
    }
    Ok(v)
}

/// Integrates the moment equations and samples the dense output at `times`
/// (sorted, not before `init.t`); integration ends at the last sample time.
///
/// When `V''` is independent of position the width equation does not see the
/// center, and the two pairs are integrated with separate step controllers.
/// The width trajectory is then identical for any two potentials with the
/// same curvature, e.g. a uniform force and no potential at all.
pub fn integrate_moments_at(
    params: &PhysicalParams,
    pot: &Potential,
    init: &PacketState,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<MomentTrajectory> {
    params.validate()?;
    init.validate()?;
    opts.validate()?;
    if times.is_empty() {
        return Err(invalid("times", "need at least one sample time"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < init.t {
        return Err(invalid("times", "must be sorted and not precede the initial time"));
    }
    let t_end = times[times.len() - 1];
    let &PhysicalParams { hbar, mass, nu } = params;
    let quantum = hbar * hbar / (4.0 * mass * mass);

    let mut samples = Vec::with_capacity(times.len());
    let mut steps = vec![*init];

    let stats = if pot.curvature_is_uniform() {
        let mut center = Vec::new();
        let c_stats = dopri5(
            |t, y: &[f64; 2]| {
                let v = pot.eval(y[0], t)?;
                Ok([y[1], -nu * y[1] - v.slope / mass])
            },
            init.t,
            [init.q, init.qdot],
            t_end,
            opts,
            |seg| {
                center.push(*seg);
                Ok(())
            },
        )?;
        let mut width = Vec::new();
        let w_stats = dopri5(
            |t, y: &[f64; 2]| {
                let w2 = pot.eval(0.0, t)?.curvature / mass;
                Ok([y[1], -nu * y[1] - w2 * y[0] + quantum / (y[0] * y[0] * y[0])])
            },
            init.t,
            [init.a, init.adot],
            t_end,
            opts,
            |seg| {
                check_width(seg.t1(), seg.end()[0])?;
                width.push(*seg);
                Ok(())
            },
        )?;
        let state_at = |t: f64| {
            let c = eval_segments(&center, t).unwrap_or([init.q, init.qdot]);
            let w = eval_segments(&width, t).unwrap_or([init.a, init.adot]);
            PacketState {
                t,
                q: c[0],
                qdot: c[1],
                a: w[0],
                adot: w[1],
            }
        };
        for seg in &width {
            let t = seg.t1();
            let c = eval_segments(&center, t).unwrap_or([init.q, init.qdot]);
            let w = seg.end();
            steps.push(PacketState {
                t,
                q: c[0],
                qdot: c[1],
                a: w[0],
                adot: w[1],
            });
        }
        samples.extend(times.iter().map(|&t| state_at(t)));
        c_stats.merge(w_stats)
    } else {
        let mut segs = Vec::new();
        let stats = dopri5(
            |t, y: &[f64; 4]| {
                let v = pot.eval(y[0], t)?;
                let w2 = v.curvature / mass;
                Ok([
                    y[1],
                    -nu * y[1] - v.slope / mass,
                    y[3],
                    -nu * y[3] - w2 * y[2] + quantum / (y[2] * y[2] * y[2]),
                ])
            },
            init.t,
            init.phase(),
            t_end,
            opts,
            |seg| {
                check_width(seg.t1(), seg.end()[2])?;
                segs.push(*seg);
                Ok(())
            },
        )?;
        steps.extend(segs.iter().map(|s| PacketState::from_phase(s.t1(), &s.end())));
        samples.extend(times.iter().map(|&t| {
            let y = eval_segments(&segs, t).unwrap_or(init.phase());
            PacketState::from_phase(t, &y)
        }));
        stats
    };

    Ok(MomentTrajectory {
        params: *params,
        potential: pot.clone(),
        samples,
        steps,
        stats,
    })
}

fn check_width(t: f64, a: f64) -> Result<()> {
    if a > A_FLOOR {
        Ok(())
    } else {
        Err(KostinError::Singularity {
            t,
            a,
            floor: A_FLOOR,
        })
    }
}

fn eval_segments<const N: usize>(segs: &[DenseSegment<N>], t: f64) -> Option<[f64; N]> {
    if segs.is_empty() {
        return None;
    }
    let i = segs.partition_point(|s| s.t1() < t).min(segs.len() - 1);
    let s = &segs[i];
    if t == s.t1() {
        Some(s.end())
    } else {
        Some(s.eval(t))
    }
}

/// Closed-form center of mass without a potential: returns `(q, qdot)`.
/// For `nu = 0` this is ballistic motion.
pub fn free_particle_center(params: &PhysicalParams, q0: f64, qdot0: f64, t: f64) -> Result<(f64, f64)> {
    params.validate()?;
    let nu = params.nu;
    let x = nu * t;
    // (1 - e^{-nu t}) / nu
    let reach = if x.abs() < 1e-8 {
        t * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / nu
    };
    Ok((q0 + qdot0 * reach, qdot0 * (-x).exp()))
}

/// Exact undamped free width `a^2 = (a0 + adot0 t)^2 + hbar^2 t^2 / (4 m^2 a0^2)`.
pub fn conservative_width_exact(params: &PhysicalParams, a0: f64, adot0: f64, t: f64) -> Result<f64> {
    params.validate()?;
    if !(a0 > 0.0) {
        return Err(invalid("a0", format!("width must be > 0, got {a0}")));
    }
    let lin = a0 + adot0 * t;
    let spread = params.hbar * t / (2.0 * params.mass * a0);
    Ok(lin.hypot(spread))
}

/// Damping-dominated asymptote `a ~ (hbar^2 t / (m^2 nu))^{1/4}`, valid for
/// `nu t >> 1` where `a'' / (nu a') ~ -3 / (4 nu t)` is negligible.
pub fn asymptotic_width(params: &PhysicalParams, t: f64) -> Result<f64> {
    params.validate()?;
    if params.nu <= 0.0 {
        return Err(KostinError::Domain("asymptotic width needs nu > 0".into()));
    }
    if !(t > 0.0) {
        return Err(KostinError::Domain(format!("asymptotic width needs t > 0, got {t}")));
    }
    let &PhysicalParams { hbar, mass, nu } = params;
    Ok((hbar * hbar * t / (mass * mass * nu)).powf(0.25))
}

/// Width energy `E_w = adot^2 / 2 + hbar^2 / (8 m^2 a^2)`. Without a
/// potential it decays as `dE_w/dt = -nu adot^2`.
pub fn lyapunov_energy(params: &PhysicalParams, state: &PacketState) -> Result<f64> {
    if !(state.a > 0.0) {
        return Err(invalid("a", format!("width must be > 0, got {}", state.a)));
    }
    Ok(width_energy(params, state))
}

fn width_energy(params: &PhysicalParams, s: &PacketState) -> f64 {
    let m = params.mass;
    0.5 * s.adot * s.adot + params.hbar * params.hbar / (8.0 * m * m * s.a * s.a)
}

/// Estimates `kappa` in `dE_w/dt = -kappa nu adot^2` from sampled states by
/// comparing the total energy drop with the trapezoidal integral of
/// `nu adot^2`. Returns `None` when nothing was dissipated.
pub fn measured_decay_coefficient(params: &PhysicalParams, states: &[PacketState]) -> Option<f64> {
    if states.len() < 2 || params.nu <= 0.0 {
        return None;
    }
    let dissipated: f64 = states
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * params.nu * (w[0].adot.powi(2) + w[1].adot.powi(2)))
        .sum();
    if dissipated <= 0.0 {
        return None;
    }
    let drop = width_energy(params, &states[0]) - width_energy(params, &states[states.len() - 1]);
    Some(drop / dissipated)
}

/// Closed-form solution of `q'' + nu q' + (k/m) q = 0`: returns `(q, qdot)`
/// in the under-, critically- or over-damped regime as appropriate.
pub fn damped_oscillator_center(
    params: &PhysicalParams,
    stiffness: f64,
    q0: f64,
    qdot0: f64,
    t: f64,
) -> Result<(f64, f64)> {
    params.validate()?;
    let g = 0.5 * params.nu;
    let disc = stiffness / params.mass - g * g;
    let x = disc * t * t;
    // c(t) and s(t) solve c' = -disc s, s' = c with c(0) = 1, s(0) = 0
    let (c, s) = if x.abs() < 1e-6 {
        (1.0 - x / 2.0 + x * x / 24.0, t * (1.0 - x / 6.0 + x * x / 120.0))
    } else if disc > 0.0 {
        let w = disc.sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        let b = (-disc).sqrt();
        ((b * t).cosh(), (b * t).sinh() / b)
    };
    let e = (-g * t).exp();
    let amp = qdot0 + g * q0;
    let q = e * (q0 * c + amp * s);
    let qdot = -g * q + e * (-q0 * disc * s + amp * c);
    Ok((q, qdot))
}

/// Least-squares fit of `y = prefactor * t^exponent` in log-log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
}

pub fn fit_power_law(ts: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(invalid("samples", "need at least two (t, y) pairs"));
    }
    if ts.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(invalid("samples", "power-law fit needs positive data"));
    }
    let n = ts.len() as f64;
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("samples", "all sample times coincide"));
    }
    let exponent = sxy / sxx;
    Ok(PowerLawFit {
        exponent,
        prefactor: (my - exponent * mx).exp(),
    })
}
