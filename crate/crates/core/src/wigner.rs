//! Wigner quasiprobability of gridded wavefunctions and of the Gaussian
//! packet family.
//!
//! The transform
//!
//! ```text
//! f(x, p) = 1/(pi hbar) int ds psi*(x + s) psi(x - s) exp(2 i p s / hbar)
//! ```
//!
//! is evaluated at the grid points `x_j` with `s = k dx`, so both factors
//! fall on samples and no interpolation is needed. The resulting function is
//! periodic in `p` with period `pi hbar / dx`; momenta are only faithful for
//! `|p| < pi hbar / (2 dx)`, half the spectral limit of the grid.

use std::f64::consts::PI;
use std::io;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, KostinError, Result};
use crate::export;
use crate::params::{PacketState, PhysicalParams};
use crate::pde::GridWavefunction;

/// Samples with `|psi|` below this fraction of the maximum are dropped.
pub const SUPPORT_CUT: f64 = 1e-12;
/// Allowed deviation of the total weight from one before the transform is
/// declared failed.
pub const NORMALIZATION_TOL: f64 = 1e-4;

/// Wigner function tabulated on `x_axis` by `p_axis`, stored row-major with
/// one row per `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub f: Vec<f64>,
    pub t: f64,
    /// Largest `|Im|` of the quadrature sums, already scaled like `f`.
    pub imaginary_residue: f64,
}

/// Trapezoidal weights for a monotone axis.
fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
            let right = if i + 1 < n { axis[i + 1] - axis[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

impl WignerGrid {
    pub fn value(&self, ix: usize, ip: usize) -> f64 {
        self.f[ix * self.p_axis.len() + ip]
    }

    pub fn row(&self, ix: usize) -> &[f64] {
        let np = self.p_axis.len();
        &self.f[ix * np..(ix + 1) * np]
    }

    /// Spacing of the (uniform) position axis.
    pub fn dx(&self) -> f64 {
        if self.x_axis.len() < 2 {
            return 0.0;
        }
        (self.x_axis[self.x_axis.len() - 1] - self.x_axis[0]) / (self.x_axis.len() - 1) as f64
    }

    /// `sum_p f dp` at every `x` (trapezoidal in `p`).
    pub fn position_marginal(&self) -> Vec<f64> {
        let w = trapezoid_weights(&self.p_axis);
        (0..self.x_axis.len())
            .map(|i| self.row(i).iter().zip(&w).map(|(f, w)| f * w).sum())
            .collect()
    }

    /// `sum_x f dx` at every `p`.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let dx = self.dx();
        let np = self.p_axis.len();
        let mut out = vec![0.0; np];
        for i in 0..self.x_axis.len() {
            for (o, f) in out.iter_mut().zip(self.row(i)) {
                *o += f * dx;
            }
        }
        out
    }

    /// Total weight `sum f dx dp`.
    pub fn normalization(&self) -> f64 {
        self.position_marginal().iter().sum::<f64>() * self.dx()
    }

    pub fn max_value(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Phase-space area of `{f >= level * f_max}` by counting cells, each
    /// cell weighted by its trapezoidal `dp` and by `dx`.
    pub fn level_set_area(&self, level: f64) -> f64 {
        let cut = level * self.max_value();
        let w = trapezoid_weights(&self.p_axis);
        let dx = self.dx();
        (0..self.x_axis.len())
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(&w)
                    .filter(|(f, _)| **f >= cut)
                    .map(|(_, w)| w)
                    .sum::<f64>()
            })
            .sum::<f64>()
            * dx
    }

    /// Matrix CSV: the first row is `x\p` followed by the momenta, each
    /// following row starts with its `x`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["x\\p".to_string()];
        header.extend(self.p_axis.iter().map(|&p| export::format_f64(p)));
        out.write_record(&header)?;
        for (i, &x) in self.x_axis.iter().enumerate() {
            let mut rec = vec![export::format_f64(x)];
            rec.extend(self.row(i).iter().map(|&f| export::format_f64(f)));
            out.write_record(&rec)?;
        }
        out.flush()
    }

    /// Gnuplot `nonuniform matrix` text: first line is the column count and
    /// the momenta, then one line per `x`. Plot with
    /// `plot 'file' nonuniform matrix with image`.
    pub fn write_gnuplot<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let mut line = self.p_axis.len().to_string();
        for &p in &self.p_axis {
            line.push(' ');
            line.push_str(&export::format_f64(p));
        }
        writeln!(w, "{line}")?;
        for (i, &x) in self.x_axis.iter().enumerate() {
            let mut line = export::format_f64(x);
            for &f in self.row(i) {
                line.push(' ');
                line.push_str(&export::format_f64(f));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Momentum axis conjugate to the grid: spacing `2 pi hbar / L`, limited to
/// the faithful band `|p| < pi hbar / (2 dx)`.
pub fn default_p_axis(params: &PhysicalParams, wf: &GridWavefunction) -> Vec<f64> {
    let dp = 2.0 * PI * params.hbar / wf.grid.length();
    let half = wf.grid.n_points / 4;
    (0..2 * half).map(|m| (m as f64 - half as f64) * dp).collect()
}

/// Numeric Wigner transform of `wf` at every grid point of its support.
pub fn wigner_numeric(params: &PhysicalParams, wf: &GridWavefunction, p_axis: &[f64]) -> Result<WignerGrid> {
    params.validate()?;
    if p_axis.is_empty() {
        return Err(invalid("p_axis", "must not be empty"));
    }
    if p_axis.iter().any(|p| !p.is_finite()) || p_axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("p_axis", "must be finite and strictly increasing"));
    }
    let norm = wf.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(invalid("psi", format!("must be normalized, norm = {norm}")));
    }
    let amp_max = wf.psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut = SUPPORT_CUT * amp_max;
    let lo = wf.psi.iter().position(|z| z.norm() > cut).unwrap_or(0);
    let hi = wf.psi.iter().rposition(|z| z.norm() > cut).unwrap_or(0);
    let psi: Vec<Complex64> = wf.psi[lo..=hi].to_vec();
    let nx = psi.len();
    let kmax = (nx - 1) / 2;
    let dx = wf.grid.dx();
    let hbar = params.hbar;
    let scale = dx / (PI * hbar);

    // phasors exp(2 i p k dx / hbar) for k = 0..=kmax, per momentum
    let phasors: Vec<Vec<Complex64>> = p_axis
        .par_iter()
        .map(|&p| (0..=kmax).map(|k| Complex64::cis(2.0 * p * k as f64 * dx / hbar)).collect())
        .collect();

    let rows: Vec<(Vec<f64>, f64)> = (0..nx)
        .into_par_iter()
        .map(|j| {
            let kj = j.min(nx - 1 - j);
            let mut row = Vec::with_capacity(p_axis.len());
            let mut residue = 0.0f64;
            for ph in &phasors {
                let mut sum = psi[j].conj() * psi[j];
                for k in 1..=kj {
                    sum += psi[j + k].conj() * psi[j - k] * ph[k];
                    sum += psi[j - k].conj() * psi[j + k] * ph[k].conj();
                }
                residue = residue.max(sum.im.abs());
                row.push(sum.re * scale);
            }
            (row, residue * scale)
        })
        .collect();

    let imaginary_residue = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let f: Vec<f64> = rows.into_iter().flat_map(|r| r.0).collect();
    let grid = WignerGrid {
        x_axis: (lo..=hi).map(|i| wf.grid.x(i)).collect(),
        p_axis: p_axis.to_vec(),
        f,
        t: wf.t,
        imaginary_residue,
    };
    let total = grid.normalization();
    if !((total - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(KostinError::QuadratureFailure(total));
    }
    Ok(grid)
}

/// Closed-form Wigner function of the Gaussian packet:
/// `(1/(pi hbar)) exp[-(x-q)^2/(2a^2) - (2a^2/hbar^2)(p - m qdot - (m adot/a)(x-q))^2]`.
pub fn wigner_gaussian_analytic(params: &PhysicalParams, state: &PacketState, x: f64, p: f64) -> f64 {
    let hbar = params.hbar;
    let m = params.mass;
    let a = state.a;
    let d = x - state.q;
    let u = p - m * state.qdot - m * state.adot / a * d;
    (-(d * d) / (2.0 * a * a) - 2.0 * a * a / (hbar * hbar) * u * u).exp() / (PI * hbar)
}

/// Tabulates [`wigner_gaussian_analytic`] on the given axes.
pub fn wigner_gaussian_grid(params: &PhysicalParams, state: &PacketState, x_axis: &[f64], p_axis: &[f64]) -> WignerGrid {
    let f = x_axis
        .iter()
        .flat_map(|&x| p_axis.iter().map(move |&p| wigner_gaussian_analytic(params, state, x, p)))
        .collect();
    WignerGrid {
        x_axis: x_axis.to_vec(),
        p_axis: p_axis.to_vec(),
        f,
        t: state.t,
        imaginary_residue: 0.0,
    }
}

/// Position spread, momentum spread and their product for a packet state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uncertainties {
    pub dx: f64,
    pub dp: f64,
    pub product: f64,
}

pub fn uncertainties(params: &PhysicalParams, state: &PacketState) -> Uncertainties {
    let m = params.mass;
    let hbar = params.hbar;
    let a = state.a;
    let dp = ((m * state.adot).powi(2) + (hbar / (2.0 * a)).powi(2)).sqrt();
    Uncertainties {
        dx: a,
        dp,
        product: a * dp,
    }
}

/// Area inside the level curve `f = level * f_max` of the Gaussian Wigner
/// function, from the determinant of its quadratic form.
pub fn ellipse_area(params: &PhysicalParams, state: &PacketState, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("level", format!("must lie in (0, 1), got {level}")));
    }
    let hbar = params.hbar;
    let a = state.a;
    let cp = 2.0 * a * a / (hbar * hbar);
    // m11 m22 - m12^2 with the shear terms cancelled analytically; the
    // expanded form loses all digits once the shear is large
    let det = cp / (2.0 * a * a);
    Ok(PI * (1.0 / level).ln() / det.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::GridSpec;
    use crate::pde::gaussian_wavefunction;

    fn unit() -> PhysicalParams {
        PhysicalParams::natural(0.0)
    }

    fn packet(q: f64, qdot: f64, a: f64, adot: f64) -> PacketState {
        PacketState::new(0.0, q, qdot, a, adot).unwrap()
    }

    fn wf(state: &PacketState, n: usize) -> GridWavefunction {
        let g = GridSpec::new(-20.0, 20.0, n, 1e-3, 1.0).unwrap();
        gaussian_wavefunction(&unit(), state, &g).unwrap()
    }

    #[test]
    fn ground_state_peak() {
        let s = packet(0.0, 0.0, 1.0, 0.0);
        let psi = wf(&s, 512);
        let w = wigner_numeric(&unit(), &psi, &[-0.5, 0.0, 0.5]).unwrap_err();
        // three momenta cannot carry the unit weight
        assert!(matches!(w, KostinError::QuadratureFailure(_)));
        let axis = default_p_axis(&unit(), &psi);
        let w = wigner_numeric(&unit(), &psi, &axis).unwrap();
        let ix = w.x_axis.iter().position(|&x| x == 0.0).unwrap();
        let ip = w.p_axis.iter().position(|&p| p == 0.0).unwrap();
        assert!((w.value(ix, ip) - 1.0 / PI).abs() < 1e-12);
        assert!((wigner_gaussian_analytic(&unit(), &s, 0.0, 0.0) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn squeezed_boosted_packet_matches_closed_form() {
        let p = unit();
        let s = packet(1.0, 0.5, 0.7, 0.2);
        let psi = wf(&s, 512);
        let axis = default_p_axis(&p, &psi);
        let w = wigner_numeric(&p, &psi, &axis).unwrap();
        let exact = wigner_gaussian_grid(&p, &s, &w.x_axis, &w.p_axis);
        let sup = w.f.iter().zip(&exact.f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(sup <= 1e-6 / PI, "{sup}");
        assert!(w.imaginary_residue <= 1e-9);
        assert!((w.normalization() - 1.0).abs() < 1e-6);

        let rho = psi.density();
        for (x, m) in w.x_axis.iter().zip(w.position_marginal()) {
            let i = ((x - psi.grid.x_min) / psi.grid.dx()).round() as usize;
            assert!((m - rho[i]).abs() < 1e-6);
        }
        for (pp, m) in w.p_axis.iter().zip(w.momentum_marginal()) {
            assert!((m - psi.momentum_density(1.0, *pp)).abs() < 1e-6);
        }
    }

    #[test]
    fn analytic_form_is_positive_and_normalized() {
        let p = PhysicalParams::new(0.8, 1.7, 0.0).unwrap();
        let s = packet(-0.3, 0.4, 1.2, -0.6);
        let (dx, dp) = (1.2 * 10.0, uncertainties(&p, &s).dp * 10.0);
        let n = 801;
        let xs: Vec<f64> = (0..n).map(|i| s.q - dx + 2.0 * dx * i as f64 / (n - 1) as f64).collect();
        let p0 = p.mass * s.qdot;
        let ps: Vec<f64> = (0..n).map(|i| p0 - dp + 2.0 * dp * i as f64 / (n - 1) as f64).collect();
        let g = wigner_gaussian_grid(&p, &s, &xs, &ps);
        assert!(g.f.iter().all(|&f| f >= 0.0));
        assert!((g.normalization() - 1.0).abs() < 1e-8, "{}", g.normalization());
    }

    #[test]
    fn analytic_form_positive_at_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..10_000 {
            let p = PhysicalParams::new(rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0), 0.0).unwrap();
            let s = packet(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.1..4.0),
                rng.gen_range(-2.0..2.0),
            );
            let d = s.a * rng.gen_range(-5.0..5.0);
            let ridge = p.mass * (s.qdot + s.adot / s.a * d);
            let pp = ridge + p.hbar / (2.0 * s.a) * rng.gen_range(-5.0..5.0);
            let x = s.q + d;
            assert!(wigner_gaussian_analytic(&p, &s, x, pp) > 0.0);
        }
    }

    #[test]
    fn uncertainty_examples() {
        let u = uncertainties(&unit(), &packet(0.0, 0.0, 1.0, 1.0));
        assert!((u.dp - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((u.product - 1.25f64.sqrt()).abs() < 1e-15);
        for a in [0.01, 0.3, 1.0, 7.0, 300.0] {
            let u = uncertainties(&unit(), &packet(0.0, 0.0, a, 0.0));
            assert!((u.product - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_area_is_state_independent() {
        let p = unit();
        let a1 = ellipse_area(&p, &packet(0.0, 0.0, 1.0, 0.0), (-1.0f64).exp()).unwrap();
        assert!((a1 - PI).abs() < 1e-12);
        let a2 = ellipse_area(&p, &packet(2.0, -1.0, 3.0, 0.7), (-1.0f64).exp()).unwrap();
        assert!((a1 - a2).abs() < 1e-12);
        assert!(ellipse_area(&p, &packet(0.0, 0.0, 1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn ellipse_area_against_cell_count() {
        let p = unit();
        let s = packet(0.0, 0.0, 1.0, 0.3);
        let g = GridSpec::new(-20.0, 20.0, 1600, 1e-3, 1.0).unwrap();
        let psi = gaussian_wavefunction(&p, &s, &g).unwrap();
        let axis: Vec<f64> = (0..601).map(|i| -3.0 + 0.01 * i as f64).collect();
        let w = wigner_numeric(&p, &psi, &axis).unwrap();
        let level = (-1.0f64).exp();
        let counted = w.level_set_area(level);
        let exact = ellipse_area(&p, &s, level).unwrap();
        assert!(((counted - exact) / exact).abs() < 5e-3, "{counted} vs {exact}");
    }

    #[test]
    fn exports_have_axis_headers() {
        let s = packet(0.0, 0.0, 1.0, 0.0);
        let g = wigner_gaussian_grid(&unit(), &s, &[-1.0, 0.0, 1.0], &[-0.5, 0.5]);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x\\p,-0.5,0.5\n-1,"));
        assert_eq!(text.lines().count(), 4);
        let mut buf = Vec::new();
        g.write_gnuplot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("2 -0.5 0.5\n-1 "));
    }

    #[test]
    fn rejects_bad_axes() {
        let psi = wf(&packet(0.0, 0.0, 1.0, 0.0), 256);
        assert!(wigner_numeric(&unit(), &psi, &[]).is_err());
        assert!(wigner_numeric(&unit(), &psi, &[0.0, 0.0]).is_err());
    }
}
