//! Split-step solver for the Kostin equation
//!
//! ```text
//! i hbar dpsi/dt = -hbar^2/(2m) psi_xx
//!                  + [V - i (hbar nu / 2) ln(psi/psi*) + i (hbar nu / 2) <ln(psi/psi*)>] psi
//! ```
//!
//! With `psi = A exp(i S / hbar)` the logarithmic term is the real potential
//! `nu (S - <S>)`, so the equation splits into a kinetic part (exact in
//! Fourier space) and a local part that only rotates the phase. The local
//! part is itself linear in `S`,
//!
//! ```text
//! dS/dt = -V - nu (S - <S>),
//! ```
//!
//! and is advanced with its exact solution over each half step. Strang
//! composition of the two exact flows is second order in `dt`.
//!
//! `S` is reconstructed by unwrapping `arg psi` outward from the density
//! maximum. Where the density is below a cutoff the phase is meaningless;
//! there `S` is continued as a constant, which leaves the dynamics unchanged
//! to round-off because the logarithmic term multiplies `psi`.

use std::f64::consts::PI;
use std::io;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, KostinError, Result};
use crate::export;
use crate::params::{GridSpec, PacketState, PhysicalParams};
use crate::potential::Potential;

/// Density cutoff for the phase, relative to the density maximum.
pub const RHO_CUT_REL: f64 = 1e-14;
/// Largest allowed `|psi|^2 dx` on the two outermost points at each edge.
pub const EDGE_DENSITY_MAX: f64 = 1e-10;
/// A single step whose norm changes by more than this is a failure.
pub const STEP_DRIFT_MAX: f64 = 1e-9;

/// Complex wavefunction sampled on a [`GridSpec`] at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub grid: GridSpec,
    pub t: f64,
    pub psi: Vec<Complex64>,
}

/// Norm and central moments of the position density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionMoments {
    pub norm: f64,
    pub mean: f64,
    pub variance: f64,
    /// `<(x - <x>)^4> / variance^2 - 3`; zero for a Gaussian.
    pub excess_kurtosis: f64,
}

impl GridWavefunction {
    pub fn new(grid: GridSpec, t: f64, psi: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if psi.len() != grid.n_points {
            return Err(invalid(
                "psi",
                format!("expected {} samples, got {}", grid.n_points, psi.len()),
            ));
        }
        Ok(Self { grid, t, psi })
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Discrete norm `sum |psi|^2 dx`.
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let s = self.norm().sqrt().recip();
        self.psi.iter_mut().for_each(|z| *z *= s);
    }

    pub fn position_moments(&self) -> PositionMoments {
        let dx = self.grid.dx();
        let rho = self.density();
        let norm = rho.iter().sum::<f64>() * dx;
        let mean = rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * self.grid.x(i))
            .sum::<f64>()
            * dx
            / norm;
        let (mut m2, mut m4) = (0.0, 0.0);
        for (i, r) in rho.iter().enumerate() {
            let d2 = (self.grid.x(i) - mean).powi(2);
            m2 += r * d2;
            m4 += r * d2 * d2;
        }
        m2 *= dx / norm;
        m4 *= dx / norm;
        PositionMoments {
            norm,
            mean,
            variance: m2,
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
        }
    }

    /// Largest `|psi|^2 dx` among the two outermost points on either side.
    pub fn edge_density(&self) -> f64 {
        let n = self.psi.len();
        let dx = self.grid.dx();
        [0, 1, n - 2, n - 1]
            .iter()
            .map(|&i| self.psi[i].norm_sqr() * dx)
            .fold(0.0, f64::max)
    }

    /// Momentum amplitude `(2 pi hbar)^{-1/2} sum psi(x) exp(-i p x / hbar) dx`
    /// at an arbitrary momentum.
    pub fn momentum_amplitude(&self, hbar: f64, p: f64) -> Complex64 {
        let dx = self.grid.dx();
        let sum: Complex64 = self
            .psi
            .iter()
            .enumerate()
            .map(|(i, z)| z * Complex64::cis(-p * self.grid.x(i) / hbar))
            .sum();
        sum * dx / (2.0 * PI * hbar).sqrt()
    }

    pub fn momentum_density(&self, hbar: f64, p: f64) -> f64 {
        self.momentum_amplitude(hbar, p).norm_sqr()
    }

    /// Columns `x, re, im, rho, S, v`; `S` and `v` are zero where the density
    /// is below the phase cutoff.
    pub fn write_snapshot_csv<W: io::Write>(&self, params: &PhysicalParams, w: W) -> io::Result<()> {
        let rho_max = self.density().into_iter().fold(0.0, f64::max);
        let hydro = madelung_decompose(params, self, RHO_CUT_REL * rho_max)
            .map_err(|e| io::Error::other(e.to_string()))?;
        let rows = (0..self.psi.len()).map(|i| {
            let (s, v) = if hydro.mask[i] {
                (hydro.phase[i], hydro.velocity[i])
            } else {
                (0.0, 0.0)
            };
            [self.grid.x(i), self.psi[i].re, self.psi[i].im, hydro.rho[i], s, v]
        });
        export::write_csv(w, &["x", "re", "im", "rho", "S", "v"], rows)
    }
}

/// Samples the Gaussian packet
/// `(2 pi a^2)^{-1/4} exp(-(x-q)^2/(4a^2)) exp(i m/hbar [adot/(2a) (x-q)^2 + qdot (x-q)])`
/// and renormalizes it on the grid.
pub fn gaussian_wavefunction(
    params: &PhysicalParams,
    state: &PacketState,
    grid: &GridSpec,
) -> Result<GridWavefunction> {
    params.validate()?;
    state.validate()?;
    grid.validate()?;
    let &PacketState { t, q, qdot, a, adot } = state;
    let last = grid.x(grid.n_points - 1);
    if q - 8.0 * a < grid.x_min || q + 8.0 * a > last {
        return Err(KostinError::GridTooNarrow(format!(
            "packet at q = {q} with width {a} needs [{}, {}] inside [{}, {last}]",
            q - 8.0 * a,
            q + 8.0 * a,
            grid.x_min
        )));
    }
    let m = params.mass;
    let hbar = params.hbar;
    let dp = ((m * adot).powi(2) + hbar * hbar / (4.0 * a * a)).sqrt();
    let k_needed = (m * qdot.abs() + 8.0 * dp) / hbar;
    if k_needed > grid.k_max() {
        return Err(KostinError::GridTooNarrow(format!(
            "momentum content up to k = {k_needed} exceeds the grid limit {}",
            grid.k_max()
        )));
    }
    let amp = (2.0 * PI * a * a).powf(-0.25);
    let psi: Vec<Complex64> = (0..grid.n_points)
        .map(|i| {
            let d = grid.x(i) - q;
            let phase = m / hbar * (adot / (2.0 * a) * d * d + qdot * d);
            Complex64::from_polar(amp * (-d * d / (4.0 * a * a)).exp(), phase)
        })
        .collect();
    let mut wf = GridWavefunction::new(*grid, t, psi)?;
    let factor = wf.norm().sqrt().recip();
    if (factor - 1.0).abs() > 1e-9 {
        return Err(KostinError::GridTooNarrow(format!(
            "grid too coarse for width {a}: norm correction {factor}"
        )));
    }
    wf.psi.iter_mut().for_each(|z| *z *= factor);
    Ok(wf)
}

/// Density, unwrapped phase `S` (action units) and fluid velocity
/// `v = S_x / m`. `mask[i]` is true where the density exceeds the cutoff;
/// elsewhere `S` is continued from the nearest unmasked point and `v = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroFields {
    pub rho: Vec<f64>,
    pub phase: Vec<f64>,
    pub velocity: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Wraps an angle into `(-pi, pi]`.
fn wrap_angle(d: f64) -> f64 {
    let w = d - 2.0 * PI * (d / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Splits `psi = sqrt(rho) exp(i S / hbar)`.
///
/// The phase is unwrapped starting at the density maximum and sweeping
/// outward in both directions, so that adjacent unmasked points differ by
/// less than `pi` in `S / hbar`. A jump of exactly `pi` cannot be resolved
/// and is reported as an error.
pub fn madelung_decompose(params: &PhysicalParams, wf: &GridWavefunction, rho_cut: f64) -> Result<HydroFields> {
    let n = wf.psi.len();
    let hbar = params.hbar;
    let rho = wf.density();
    let mask: Vec<bool> = rho.iter().map(|&r| r > rho_cut).collect();
    let mut phase = vec![0.0; n];
    let (start, _) = rho
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });

    if mask[start] {
        let theta = |i: usize| wf.psi[i].arg();
        phase[start] = hbar * theta(start);
        let mut sweep = |range: &mut dyn Iterator<Item = usize>, step_back: isize| -> Result<()> {
            let mut ref_theta = theta(start);
            for i in range {
                let prev = (i as isize + step_back) as usize;
                if !mask[i] {
                    phase[i] = phase[prev];
                    continue;
                }
                let d = wrap_angle(theta(i) - ref_theta);
                if mask[prev] && (d.abs() - PI).abs() < 1e-12 {
                    return Err(KostinError::AmbiguousUnwrap(prev.min(i), prev.max(i)));
                }
                phase[i] = phase[prev] + hbar * d;
                ref_theta = theta(i);
            }
            Ok(())
        };
        sweep(&mut (start + 1..n), -1)?;
        sweep(&mut (0..start).rev(), 1)?;
    }

    let dx = wf.grid.dx();
    let m = params.mass;
    let velocity = (0..n)
        .map(|i| {
            if !mask[i] {
                return 0.0;
            }
            let left = i > 0 && mask[i - 1];
            let right = i + 1 < n && mask[i + 1];
            match (left, right) {
                (true, true) => (phase[i + 1] - phase[i - 1]) / (2.0 * dx * m),
                (false, true) => (phase[i + 1] - phase[i]) / (dx * m),
                (true, false) => (phase[i] - phase[i - 1]) / (dx * m),
                (false, false) => 0.0,
            }
        })
        .collect();

    Ok(HydroFields {
        rho,
        phase,
        velocity,
        mask,
    })
}

/// Expectation values recorded during an evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub t: f64,
    pub norm: f64,
    pub mean_x: f64,
    pub delta_x: f64,
    pub mean_p: f64,
    pub delta_p: f64,
    /// `<S> = sum rho S dx`, the gauge term of the equation.
    pub mean_phase: f64,
    /// `<V'>`.
    pub mean_force: f64,
    pub excess_kurtosis: f64,
    pub edge_density: f64,
}

impl Observables {
    pub const HEADER: [&'static str; 9] = [
        "t",
        "norm",
        "mean_x",
        "delta_x",
        "mean_p",
        "delta_p",
        "mean_phase",
        "mean_force",
        "excess_kurtosis",
    ];

    fn row(&self) -> [f64; 9] {
        [
            self.t,
            self.norm,
            self.mean_x,
            self.delta_x,
            self.mean_p,
            self.delta_p,
            self.mean_phase,
            self.mean_force,
            self.excess_kurtosis,
        ]
    }

    pub fn mean_p2(&self) -> f64 {
        self.delta_p * self.delta_p + self.mean_p * self.mean_p
    }
}

/// Writes an observable series as CSV.
pub fn write_series_csv<W: io::Write>(series: &[Observables], w: W) -> io::Result<()> {
    export::write_csv(w, &Observables::HEADER, series.iter().map(Observables::row))
}

/// Reusable propagator: FFT plans and cached kinetic phases for one grid.
pub struct KostinSolver {
    params: PhysicalParams,
    potential: Potential,
    grid: GridSpec,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
    kinetic: Vec<Complex64>,
    kinetic_dt: f64,
    static_potential: Option<Vec<f64>>,
    /// Include the `<S>` term. It only changes the global phase.
    pub include_gauge_term: bool,
}

impl std::fmt::Debug for KostinSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KostinSolver")
            .field("params", &self.params)
            .field("potential", &self.potential)
            .field("grid", &self.grid)
            .field("include_gauge_term", &self.include_gauge_term)
            .finish_non_exhaustive()
    }
}

impl KostinSolver {
    pub fn new(params: &PhysicalParams, potential: &Potential, grid: &GridSpec) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        let mut planner = FftPlanner::new();
        let n = grid.n_points;
        let static_potential = match potential {
            Potential::Free | Potential::Polynomial(_) => Some(()),
            Potential::Harmonic { stiffness } if stiffness.as_constant().is_some() => Some(()),
            Potential::UniformForce { force } if force.as_constant().is_some() => Some(()),
            _ => None,
        }
        .map(|_| {
            (0..n)
                .map(|i| potential.eval(grid.x(i), 0.0).map(|v| v.value))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
        Ok(Self {
            params: *params,
            potential: potential.clone(),
            grid: *grid,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            wavenumbers: grid.wavenumbers(),
            kinetic: Vec::new(),
            kinetic_dt: f64::NAN,
            static_potential,
            include_gauge_term: true,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn potential_values(&self, t: f64) -> Result<Vec<f64>> {
        match &self.static_potential {
            Some(v) => Ok(v.clone()),
            None => (0..self.grid.n_points)
                .map(|i| self.potential.eval(self.grid.x(i), t).map(|v| v.value))
                .collect(),
        }
    }

    /// Exact flow of `dS/dt = -V - nu (S - <S>)` over `h` with `V` frozen
    /// at time `t_v`; the density is unchanged.
    fn local_flow(&self, wf: &mut GridWavefunction, h: f64, t_v: f64) -> Result<()> {
        let rho_max = wf.psi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let hydro = madelung_decompose(&self.params, wf, RHO_CUT_REL * rho_max)?;
        let v = self.potential_values(t_v)?;
        let dx = self.grid.dx();
        let nu = self.params.nu;
        let decay = -(-nu * h).exp_m1();
        let g = if nu > 0.0 { decay / nu } else { h };
        let shift = if self.include_gauge_term {
            let mean_s: f64 = hydro.rho.iter().zip(&hydro.phase).map(|(r, s)| r * s).sum::<f64>() * dx;
            let mean_v: f64 = hydro.rho.iter().zip(&v).map(|(r, v)| r * v).sum::<f64>() * dx;
            mean_s * decay - mean_v * (h - g)
        } else {
            0.0
        };
        let hbar = self.params.hbar;
        for ((z, s), vi) in wf.psi.iter_mut().zip(&hydro.phase).zip(&v) {
            let ds = -vi * g - s * decay + shift;
            *z *= Complex64::cis(ds / hbar);
        }
        Ok(())
    }

    fn kinetic_flow(&mut self, psi: &mut [Complex64], dt: f64) {
        if self.kinetic_dt != dt {
            let c = self.params.hbar * dt / (2.0 * self.params.mass);
            self.kinetic = self.wavenumbers.iter().map(|k| Complex64::cis(-c * k * k)).collect();
            self.kinetic_dt = dt;
        }
        self.fft.process(psi);
        let scale = 1.0 / psi.len() as f64;
        for (z, f) in psi.iter_mut().zip(&self.kinetic) {
            *z *= f * scale;
        }
        self.ifft.process(psi);
    }

    /// Advances `wf` by `dt` (local half step, kinetic step, local half
    /// step). Returns the change of the norm.
    pub fn step(&mut self, wf: &mut GridWavefunction, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("step must be > 0, got {dt}")));
        }
        if dt > self.grid.dt * (1.0 + 1e-12) {
            return Err(invalid(
                "dt",
                format!("step {dt} exceeds the grid step {}", self.grid.dt),
            ));
        }
        if wf.psi.len() != self.grid.n_points {
            return Err(invalid("psi", "wavefunction does not match the solver grid"));
        }
        let t = wf.t;
        let before = wf.norm();
        self.local_flow(wf, 0.5 * dt, t + 0.25 * dt)?;
        self.kinetic_flow(&mut wf.psi, dt);
        self.local_flow(wf, 0.5 * dt, t + 0.75 * dt)?;
        wf.t = t + dt;
        let drift = wf.norm() - before;
        if drift.abs() > STEP_DRIFT_MAX {
            return Err(KostinError::NormDrift { t: wf.t, drift });
        }
        Ok(drift)
    }

    /// Position, momentum and phase expectation values of `wf`.
    pub fn observables(&self, wf: &GridWavefunction) -> Result<Observables> {
        let pos = wf.position_moments();
        let mut spectrum = wf.psi.clone();
        self.fft.process(&mut spectrum);
        let (mut w, mut k1, mut k2) = (0.0, 0.0, 0.0);
        for (z, k) in spectrum.iter().zip(&self.wavenumbers) {
            let p = z.norm_sqr();
            w += p;
            k1 += p * k;
            k2 += p * k * k;
        }
        let hbar = self.params.hbar;
        let mean_k = k1 / w;
        let var_k = (k2 / w - mean_k * mean_k).max(0.0);
        let rho_max = wf.psi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let hydro = madelung_decompose(&self.params, wf, RHO_CUT_REL * rho_max)?;
        let dx = self.grid.dx();
        let mean_phase = hydro.rho.iter().zip(&hydro.phase).map(|(r, s)| r * s).sum::<f64>() * dx;
        let mut mean_force = 0.0;
        for (i, r) in hydro.rho.iter().enumerate() {
            mean_force += r * self.potential.eval(self.grid.x(i), wf.t)?.slope;
        }
        mean_force *= dx;
        Ok(Observables {
            t: wf.t,
            norm: pos.norm,
            mean_x: pos.mean,
            delta_x: pos.variance.sqrt(),
            mean_p: hbar * mean_k,
            delta_p: hbar * var_k.sqrt(),
            mean_phase,
            mean_force,
            excess_kurtosis: pos.excess_kurtosis,
            edge_density: wf.edge_density(),
        })
    }
}

/// One step of the Kostin equation with a freshly planned solver.
pub fn kostin_step(
    params: &PhysicalParams,
    pot: &Potential,
    wf: &GridWavefunction,
    dt: f64,
) -> Result<GridWavefunction> {
    let mut solver = KostinSolver::new(params, pot, &wf.grid)?;
    let mut out = wf.clone();
    solver.step(&mut out, dt)?;
    Ok(out)
}

/// Controls for [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    /// Record observables every this many steps (and always at the end).
    pub observe_every: usize,
    /// Times at which to keep a copy of the wavefunction.
    pub snapshot_times: Vec<f64>,
    pub include_gauge_term: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            observe_every: 10,
            snapshot_times: Vec::new(),
            include_gauge_term: true,
        }
    }
}

/// Result of [`evolve`]. When a step fails the evolution stops early,
/// `truncated` holds the error and the series covers the completed steps.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub series: Vec<Observables>,
    pub final_state: GridWavefunction,
    pub snapshots: Vec<GridWavefunction>,
    pub steps: usize,
    pub step_dt: f64,
    pub max_step_drift: f64,
    pub truncated: Option<KostinError>,
}

impl Evolution {
    pub fn is_complete(&self) -> bool {
        self.truncated.is_none()
    }

    pub fn write_series_csv<W: io::Write>(&self, w: W) -> io::Result<()> {
        write_series_csv(&self.series, w)
    }
}

/// Fixed-step evolution from `wf0.t` to `grid.t_end` with the largest step
/// not exceeding `grid.dt` that lands exactly on `t_end`.
pub fn evolve(
    params: &PhysicalParams,
    pot: &Potential,
    wf0: &GridWavefunction,
    grid: &GridSpec,
    options: &EvolveOptions,
) -> Result<Evolution> {
    if wf0.grid != *grid {
        return Err(invalid("grid", "initial wavefunction was sampled on a different grid"));
    }
    let norm0 = wf0.norm();
    if (norm0 - 1.0).abs() > 1e-6 {
        return Err(invalid("psi", format!("initial state must be normalized, norm = {norm0}")));
    }
    let edge = wf0.edge_density();
    if edge > EDGE_DENSITY_MAX {
        return Err(KostinError::PacketEscaped {
            t: wf0.t,
            edge_density: edge,
        });
    }
    if !(grid.t_end >= wf0.t) {
        return Err(invalid("t_end", "must not precede the initial time"));
    }
    let mut solver = KostinSolver::new(params, pot, grid)?;
    solver.include_gauge_term = options.include_gauge_term;
    let span = grid.t_end - wf0.t;
    let n_steps = ((span / grid.dt) * (1.0 - 1e-12)).ceil().max(0.0) as usize;
    let dt = if n_steps > 0 { span / n_steps as f64 } else { grid.dt };
    let every = options.observe_every.max(1);

    let mut wf = wf0.clone();
    let mut series = vec![solver.observables(&wf)?];
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = options.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    let mut pending = pending.into_iter().peekable();
    let mut take_snapshots = |wf: &GridWavefunction, last: bool| {
        while let Some(&ts) = pending.peek() {
            if ts <= wf.t + 0.5 * dt || last {
                snapshots.push(wf.clone());
                pending.next();
            } else {
                break;
            }
        }
    };
    take_snapshots(&wf, false);

    let mut max_step_drift = 0.0f64;
    let mut truncated = None;
    let t0 = wf0.t;
    for k in 1..=n_steps {
        let result = solver.step(&mut wf, dt).and_then(|drift| {
            let edge = wf.edge_density();
            if edge > EDGE_DENSITY_MAX {
                Err(KostinError::PacketEscaped {
                    t: wf.t,
                    edge_density: edge,
                })
            } else {
                Ok(drift)
            }
        });
        match result {
            Ok(drift) => max_step_drift = max_step_drift.max(drift.abs()),
            Err(e) => {
                log::warn!("evolution stopped at t = {}: {e}", wf.t);
                truncated = Some(e);
                break;
            }
        }
        // avoid accumulating round-off in the clock
        wf.t = t0 + k as f64 * dt;
        if k % every == 0 || k == n_steps {
            series.push(solver.observables(&wf)?);
        }
        take_snapshots(&wf, false);
    }
    if truncated.is_none() {
        take_snapshots(&wf, true);
    }
    let steps = series.last().map_or(0, |o| ((o.t - t0) / dt).round() as usize);
    Ok(Evolution {
        series,
        final_state: wf,
        snapshots,
        steps,
        step_dt: dt,
        max_step_drift,
        truncated,
    })
}
