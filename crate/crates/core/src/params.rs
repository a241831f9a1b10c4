//! Shared value types: physical constants, the reduced Gaussian state and
//! the spatial/temporal grid used by the wavefunction solver.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// The three dimensional constants of every equation: reduced Planck
/// constant, particle mass and Ohmic damping rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
    /// Damping rate; zero is the conservative limit.
    pub nu: f64,
}

impl PhysicalParams {
    pub fn new(hbar: f64, mass: f64, nu: f64) -> Result<Self> {
        let p = Self { hbar, mass, nu };
        p.validate()?;
        Ok(p)
    }

    /// `hbar = mass = 1` with the given damping.
    pub fn natural(nu: f64) -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            nu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(invalid("hbar", format!("must be finite and > 0, got {}", self.hbar)));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(invalid("mass", format!("must be finite and > 0, got {}", self.mass)));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(invalid("nu", format!("must be finite and >= 0, got {}", self.nu)));
        }
        Ok(())
    }
}

/// Reduced description of a Gaussian packet at time `t`: center `q`, its
/// velocity, the width `a` (standard deviation of the density) and its rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketState {
    pub t: f64,
    pub q: f64,
    pub qdot: f64,
    pub a: f64,
    pub adot: f64,
}

impl PacketState {
    pub fn new(t: f64, q: f64, qdot: f64, a: f64, adot: f64) -> Result<Self> {
        let s = Self { t, q, qdot, a, adot };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t", self.t),
            ("q", self.q),
            ("qdot", self.qdot),
            ("adot", self.adot),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(invalid("a", format!("width must be finite and > 0, got {}", self.a)));
        }
        Ok(())
    }

    pub(crate) fn from_phase(t: f64, y: &[f64; 4]) -> Self {
        Self {
            t,
            q: y[0],
            qdot: y[1],
            a: y[2],
            adot: y[3],
        }
    }

    pub(crate) fn phase(&self) -> [f64; 4] {
        [self.q, self.qdot, self.a, self.adot]
    }
}

/// Uniform periodic grid on `[x_min, x_max)` plus the time step and horizon
/// used by the wavefunction solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_points: usize, dt: f64, t_end: f64) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            n_points,
            dt,
            t_end,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(invalid(
                "x_min",
                format!("need finite x_min < x_max, got [{}, {}]", self.x_min, self.x_max),
            ));
        }
        if self.n_points < 16 {
            return Err(invalid("n_points", format!("need at least 16, got {}", self.n_points)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !self.t_end.is_finite() {
            return Err(invalid("t_end", "must be finite"));
        }
        Ok(())
    }

    /// Grid for a packet starting at `init`: the domain spans twenty initial
    /// widths (or ten widths of the undamped free spread, if larger) around
    /// the start, extended by the distance the center can drift. The step
    /// satisfies `hbar k_max^2 dt / (2m) < 0.5` and `nu dt < 0.01`.
    pub fn for_packet(
        params: &PhysicalParams,
        init: &PacketState,
        t_end: f64,
        n_points: usize,
    ) -> Result<Self> {
        params.validate()?;
        init.validate()?;
        let horizon = (t_end - init.t).max(0.0);
        let spread = {
            let ad = init.adot.max(0.0);
            let lin = init.a + ad * horizon;
            let q = params.hbar * horizon / (2.0 * params.mass * init.a);
            (lin * lin + q * q).sqrt()
        };
        let half = (20.0 * init.a).max(10.0 * spread);
        let drift = if params.nu > 0.0 {
            init.qdot / params.nu
        } else {
            init.qdot * horizon
        };
        let (lo, hi) = if drift >= 0.0 {
            (init.q - half, init.q + half + drift)
        } else {
            (init.q - half + drift, init.q + half)
        };
        let dt = Self::default_dt(params, (hi - lo) / n_points as f64);
        Self::new(lo, hi, n_points, dt, t_end)
    }

    /// Step used by [`GridSpec::for_packet`] for spacing `dx`.
    pub fn default_dt(params: &PhysicalParams, dx: f64) -> f64 {
        let k_max = PI / dx;
        let mut dt = 0.9 * params.mass / (params.hbar * k_max * k_max);
        if params.nu > 0.0 {
            dt = dt.min(0.9 * 0.01 / params.nu);
        }
        dt
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / self.length();
        (0..n)
            .map(|i| {
                let j = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
                j * dk
            })
            .collect()
    }

    /// Largest representable |k| on this grid.
    pub fn k_max(&self) -> f64 {
        PI / self.dx()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        assert!(PhysicalParams::new(0.0, 1.0, 0.0).is_err());
        assert!(PhysicalParams::new(1.0, -1.0, 0.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, -0.1).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, f64::NAN).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn rejects_nonpositive_width() {
        assert!(PacketState::new(0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(PacketState::new(0.0, 0.0, 0.0, -1.0, 0.0).is_err());
        assert!(PacketState::new(0.0, f64::INFINITY, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn grid_invariants() {
        assert!(GridSpec::new(1.0, 1.0, 64, 0.1, 1.0).is_err());
        assert!(GridSpec::new(0.0, 1.0, 8, 0.1, 1.0).is_err());
        assert!(GridSpec::new(0.0, 1.0, 64, 0.0, 1.0).is_err());
        let g = GridSpec::new(-2.0, 2.0, 16, 0.1, 1.0).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.x(4), -1.0);
        let k = g.wavenumbers();
        assert_eq!(k[0], 0.0);
        assert!((k[1] - PI / 2.0).abs() < 1e-15);
        assert!((k[15] + PI / 2.0).abs() < 1e-15);
        assert!((k[8] + g.k_max()).abs() < 1e-12);
    }

    #[test]
    fn packet_grid_respects_step_rules() {
        let p = PhysicalParams::natural(1.0);
        let s = PacketState::new(0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let g = GridSpec::for_packet(&p, &s, 5.0, 1024).unwrap();
        assert!(g.x_min <= 1.0 - 20.0 && g.x_max >= 1.0 + 20.0 + 1.0);
        let kmax = g.k_max();
        assert!(kmax * kmax * g.dt / 2.0 < 0.5);
        assert!(g.dt * p.nu < 0.01);
    }
}
