//! Friction-dominated perturbation theory for the free width.
//!
//! In units where time is measured in `1/nu` and lengths in
//! `(hbar / (m nu))^{1/2}`, the free width obeys
//! `eps a'' + a' = 1 / (4 a^3)`. Expanding `a = alpha0 + eps alpha1` gives
//!
//! ```text
//! alpha0 = (tau + c1^4)^{1/4}
//! alpha1 = (c2 + (3/16) ln(tau + c1^4)) / (tau + c1^4)^{3/4}
//! ```
//!
//! and the width is approximated by `alpha0 + alpha1` (eps = 1). The two
//! constants follow from the initial width and rate; eliminating `c2` leaves
//! a scalar equation in `c1` that may have several positive roots.

use std::io;

use crate::error::{invalid, KostinError, Result};
use crate::export;
use crate::moments::integrate_moments_at;
use crate::ode::OdeOptions;
use crate::params::{PacketState, PhysicalParams};
use crate::potential::Potential;
use crate::roots::{find_sign_change_roots, log_space};

/// Order of the series; corrections beyond first order are not computed.
pub const SERIES_ORDER: usize = 1;
/// The series is only meant to track the width after this dimensionless time.
pub const TAU_MIN: f64 = 1.0;
pub const SCAN_RANGE: (f64, f64) = (1e-3, 1e3);
pub const SCAN_PROBES: usize = 2000;
/// Polishing target for `|R(c1)|`.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Time and length scales of the friction-dominated regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescaling {
    /// `nu`: multiply a physical time to get `tau`.
    pub rate: f64,
    /// `(hbar / (m nu))^{1/2}`: divide a physical length by it.
    pub length: f64,
}

/// Width and rate in dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessWidth {
    pub tau: f64,
    pub a: f64,
    pub adot: f64,
}

impl Rescaling {
    pub fn new(params: &PhysicalParams) -> Result<Self> {
        params.validate()?;
        if params.nu <= 0.0 {
            return Err(KostinError::Domain(
                "friction-dominated rescaling needs nu > 0".into(),
            ));
        }
        Ok(Self {
            rate: params.nu,
            length: (params.hbar / (params.mass * params.nu)).sqrt(),
        })
    }

    pub fn to_dimensionless(&self, t: f64, a: f64, adot: f64) -> DimensionlessWidth {
        DimensionlessWidth {
            tau: self.rate * t,
            a: a / self.length,
            adot: adot / (self.length * self.rate),
        }
    }

    /// Inverse of [`Rescaling::to_dimensionless`]: `(t, a, adot)`.
    pub fn to_physical(&self, d: &DimensionlessWidth) -> (f64, f64, f64) {
        (d.tau / self.rate, d.a * self.length, d.adot * self.length * self.rate)
    }
}

/// Maps the width part of a physical state to dimensionless units.
pub fn rescale(params: &PhysicalParams, state: &PacketState) -> Result<DimensionlessWidth> {
    Ok(Rescaling::new(params)?.to_dimensionless(state.t, state.a, state.adot))
}

/// Maps dimensionless `(tau, a, a')` back to physical `(t, a, adot)`.
pub fn unrescale(params: &PhysicalParams, d: &DimensionlessWidth) -> Result<(f64, f64, f64)> {
    Ok(Rescaling::new(params)?.to_physical(d))
}

/// One admissible pair of integration constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationConstants {
    pub c1: f64,
    pub c2: f64,
    /// Position among the roots, sorted by descending `c1`.
    pub branch_index: usize,
}

impl PerturbationConstants {
    pub fn new(c1: f64, c2: f64, branch_index: usize) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(invalid("c1", format!("must be finite and > 0, got {c1}")));
        }
        if !c2.is_finite() {
            return Err(invalid("c2", "must be finite"));
        }
        Ok(Self { c1, c2, branch_index })
    }

    pub fn order(&self) -> usize {
        SERIES_ORDER
    }

    /// `(a(0), a'(0))` implied by these constants.
    pub fn initial_conditions(&self) -> (f64, f64) {
        initial_conditions(self.c1, self.c2)
    }
}

fn shifted_time(c1: f64, tau: f64) -> Result<f64> {
    let s = tau + c1.powi(4);
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(KostinError::Domain(format!(
            "tau + c1^4 must be positive, got {s} (c1 = {c1}, tau = {tau})"
        )))
    }
}

/// Zeroth-order width `(tau + c1^4)^{1/4}`.
pub fn alpha0(c1: f64, tau: f64) -> Result<f64> {
    Ok(shifted_time(c1, tau)?.powf(0.25))
}

/// First-order correction `(c2 + (3/16) ln(tau + c1^4)) / (tau + c1^4)^{3/4}`.
pub fn alpha1(c1: f64, c2: f64, tau: f64) -> Result<f64> {
    let s = shifted_time(c1, tau)?;
    Ok((c2 + 0.1875 * s.ln()) / s.powf(0.75))
}

/// Both series terms with their exact time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTerms {
    pub alpha0: f64,
    pub alpha0_rate: f64,
    pub alpha0_accel: f64,
    pub alpha1: f64,
    pub alpha1_rate: f64,
}

pub fn series_terms(c1: f64, c2: f64, tau: f64) -> Result<SeriesTerms> {
    let s = shifted_time(c1, tau)?;
    let ln = s.ln();
    let s14 = s.powf(0.25);
    let s34 = s.powf(0.75);
    let s74 = s * s34;
    Ok(SeriesTerms {
        alpha0: s14,
        alpha0_rate: 0.25 / s34,
        alpha0_accel: -0.1875 / s74,
        alpha1: (c2 + 0.1875 * ln) / s34,
        alpha1_rate: (0.1875 - 0.75 * c2 - 0.140625 * ln) / s74,
    })
}

/// First-order width `alpha0 + alpha1`.
pub fn perturbative_width(consts: &PerturbationConstants, tau: f64) -> Result<f64> {
    let t = series_terms(consts.c1, consts.c2, tau)?;
    Ok(t.alpha0 + t.alpha1)
}

/// `d(alpha0 + alpha1)/dtau`.
pub fn perturbative_width_rate(consts: &PerturbationConstants, tau: f64) -> Result<f64> {
    let t = series_terms(consts.c1, consts.c2, tau)?;
    Ok(t.alpha0_rate + t.alpha1_rate)
}

/// `(a(0), a'(0))` of the first-order series with constants `(c1, c2)`.
pub fn initial_conditions(c1: f64, c2: f64) -> (f64, f64) {
    let c3 = c1.powi(3);
    let c4 = c3 * c1;
    let c7 = c4 * c3;
    let ln = c1.ln();
    (
        c1 + c2 / c3 + 0.75 * ln / c3,
        (3.0 - 12.0 * c2 + 4.0 * c4 - 9.0 * ln) / (16.0 * c7),
    )
}

/// `c2` that makes the series start at width `a0`.
pub fn c2_from_c1(c1: f64, a0: f64) -> f64 {
    c1.powi(3) * (a0 - c1) - 0.75 * c1.ln()
}

/// Residual `R(c1) = a'(0) - [1/c1^3 - 3 a(0) / (4 c1^4) + 3 / (16 c1^7)]`
/// (with `c2` eliminated) and its derivative.
pub fn constants_residual(c1: f64, a0: f64, adot0: f64) -> (f64, f64) {
    let i = 1.0 / c1;
    let i3 = i * i * i;
    let i4 = i3 * i;
    let i7 = i4 * i3;
    let r = adot0 - (i3 - 0.75 * a0 * i4 + 0.1875 * i7);
    let dr = 3.0 * i4 - 3.0 * a0 * i4 * i + 1.3125 * i7 * i;
    (r, dr)
}

/// Every pair `(c1 > 0, c2)` consistent with the dimensionless initial
/// width `a0` and rate `adot0`, sorted by descending `c1`.
///
/// Roots are located by sign changes of [`constants_residual`] on
/// [`SCAN_PROBES`] log-spaced probes over [`SCAN_RANGE`]; tangential
/// (double) roots and roots outside the range are not found.
pub fn solve_constants(a0: f64, adot0: f64) -> Result<Vec<PerturbationConstants>> {
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(invalid("a0", format!("initial width must be finite and > 0, got {a0}")));
    }
    if !adot0.is_finite() {
        return Err(invalid("adot0", "must be finite"));
    }
    let probes = log_space(SCAN_RANGE.0, SCAN_RANGE.1, SCAN_PROBES);
    let scan = find_sign_change_roots(|c| constants_residual(c, a0, adot0), &probes, RESIDUAL_TOL);
    if scan.roots.is_empty() {
        return Err(KostinError::NoSolution {
            lo: SCAN_RANGE.0,
            hi: SCAN_RANGE.1,
            min_residual: scan.min_residual,
            max_residual: scan.max_residual,
        });
    }
    let mut roots = scan.roots;
    for r in &roots {
        if r.bracket == 0 || r.bracket + 2 >= probes.len() {
            log::warn!(
                "constants root c1 = {} lies at the edge of the scan range [{}, {}]; roots beyond it are not searched",
                r.x,
                SCAN_RANGE.0,
                SCAN_RANGE.1
            );
        }
    }
    roots.sort_by(|a, b| b.x.total_cmp(&a.x));
    roots
        .iter()
        .enumerate()
        .map(|(i, r)| PerturbationConstants::new(r.x, c2_from_c1(r.x, a0), i))
        .collect()
}

/// [`solve_constants`] for a physical initial width and rate.
pub fn solve_constants_physical(
    params: &PhysicalParams,
    a0: f64,
    adot0: f64,
) -> Result<Vec<PerturbationConstants>> {
    let d = Rescaling::new(params)?.to_dimensionless(0.0, a0, adot0);
    solve_constants(d.a, d.adot)
}

/// Series width in physical units at elapsed time `t` since the initial state.
pub fn perturbative_width_physical(
    params: &PhysicalParams,
    consts: &PerturbationConstants,
    t: f64,
) -> Result<f64> {
    let sc = Rescaling::new(params)?;
    Ok(perturbative_width(consts, sc.rate * t)? * sc.length)
}

/// One row of the series-versus-numeric comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub tau: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub series: f64,
    pub numeric: f64,
    pub rel_dev: f64,
    /// `tau >= TAU_MIN`: outside the initial transient.
    pub valid: bool,
}

/// The first-order series for one branch against the numerically integrated
/// dimensionless width equation.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchComparison {
    pub consts: PerturbationConstants,
    pub rows: Vec<ComparisonRow>,
}

impl BranchComparison {
    /// Largest relative deviation among rows with `tau >= tau_min`.
    pub fn max_rel_dev_after(&self, tau_min: f64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.tau >= tau_min)
            .map(|r| r.rel_dev)
            .fold(0.0, f64::max)
    }

    /// Columns `tau, alpha0, alpha1, series, numeric, rel_dev`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> io::Result<()> {
        export::write_csv(
            w,
            &["tau", "alpha0", "alpha1", "series", "numeric", "rel_dev"],
            self.rows
                .iter()
                .map(|r| [r.tau, r.alpha0, r.alpha1, r.series, r.numeric, r.rel_dev]),
        )
    }
}

/// Integrates `a'' + a' = 1/(4 a^3)` from `(a0, adot0)` and compares it with
/// the series at each of `taus` (sorted, starting at or after zero).
pub fn compare_with_numeric(
    consts: &PerturbationConstants,
    a0: f64,
    adot0: f64,
    taus: &[f64],
    opts: &OdeOptions,
) -> Result<BranchComparison> {
    let numeric = numeric_dimensionless_width(a0, adot0, taus, opts)?;
    let rows = taus
        .iter()
        .zip(&numeric)
        .map(|(&tau, &num)| {
            let t = series_terms(consts.c1, consts.c2, tau)?;
            let series = t.alpha0 + t.alpha1;
            Ok(ComparisonRow {
                tau,
                alpha0: t.alpha0,
                alpha1: t.alpha1,
                series,
                numeric: num,
                rel_dev: ((series - num) / num).abs(),
                valid: tau >= TAU_MIN,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchComparison {
        consts: *consts,
        rows,
    })
}

/// Width of `a'' + a' = 1/(4 a^3)` at each of `taus`.
pub fn numeric_dimensionless_width(a0: f64, adot0: f64, taus: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
    let init = PacketState::new(0.0, 0.0, 0.0, a0, adot0)?;
    let traj = integrate_moments_at(&PhysicalParams::natural(1.0), &Potential::Free, &init, taus, opts)?;
    Ok(traj.samples.iter().map(|s| s.a).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_examples() {
        let id = PhysicalParams::natural(1.0);
        let s = PacketState::new(2.5, 0.0, 0.0, 1.5, -0.3).unwrap();
        let d = rescale(&id, &s).unwrap();
        assert_eq!((d.tau, d.a, d.adot), (2.5, 1.5, -0.3));
        let p = PhysicalParams::new(1.0, 1.0, 4.0).unwrap();
        let s = PacketState::new(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let d = rescale(&p, &s).unwrap();
        assert_eq!(d.tau, 4.0);
        assert_eq!(d.a, 2.0);
        assert!((d.adot - 0.5).abs() < 1e-15);
        assert!(rescale(&PhysicalParams::natural(0.0), &s).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha0(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(alpha0(1.0, 15.0).unwrap(), 2.0);
        assert!((alpha0(1.437, 0.0).unwrap() - 1.437).abs() < 1e-15);
        assert_eq!(alpha1(1.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(alpha1(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert!(alpha0(1.0, -2.0).is_err());
        assert!(alpha1(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn exact_derivatives_match_finite_differences() {
        let (c1, c2) = (0.8, -0.4);
        let h = 1e-5;
        for &tau in &[0.0, 0.3, 2.0, 17.0] {
            let t = series_terms(c1, c2, tau).unwrap();
            let d = |f: &dyn Fn(f64) -> f64| (f(tau + h) - f(tau - h)) / (2.0 * h);
            let a0 = |x: f64| alpha0(c1, x).unwrap();
            let a1 = |x: f64| alpha1(c1, c2, x).unwrap();
            let a0r = |x: f64| series_terms(c1, c2, x).unwrap().alpha0_rate;
            let close = |fd: f64, exact: f64| (fd - exact).abs() <= 1e-8 * exact.abs().max(1.0);
            assert!(close(d(&a0), t.alpha0_rate));
            assert!(close(d(&a1), t.alpha1_rate), "{tau}: {} vs {}", d(&a1), t.alpha1_rate);
            assert!(close(d(&a0r), t.alpha0_accel));
        }
    }

    #[test]
    fn series_initial_conditions_match_closed_form() {
        let k = PerturbationConstants::new(1.3, 0.4, 0).unwrap();
        let (a0, ad0) = k.initial_conditions();
        assert!((perturbative_width(&k, 0.0).unwrap() - a0).abs() < 1e-14);
        assert!((perturbative_width_rate(&k, 0.0).unwrap() - ad0).abs() < 1e-14);
    }

    #[test]
    fn residual_derivative_is_exact() {
        let h = 1e-6;
        for &c in &[0.3, 0.9, 1.7] {
            let (_, dr) = constants_residual(c, 2.0, 0.1);
            let fd = (constants_residual(c + h, 2.0, 0.1).0 - constants_residual(c - h, 2.0, 0.1).0) / (2.0 * h);
            assert!((fd - dr).abs() < 1e-6 * dr.abs().max(1.0));
        }
    }

    #[test]
    fn reported_constants_for_width_two_at_rest() {
        let roots = solve_constants(2.0, 0.0).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0].c1 - 1.437).abs() < 1e-3 && (roots[0].c2 - 1.399).abs() < 1e-3);
        assert!((roots[1].c1 - 0.591).abs() < 1e-3 && (roots[1].c2 - 0.685).abs() < 1e-3);
        assert_eq!(roots[0].branch_index, 0);
        assert_eq!(roots[1].branch_index, 1);
    }

    #[test]
    fn every_root_reproduces_initial_conditions() {
        for &(a0, ad0) in &[(2.0, 0.0), (0.5, 0.1), (1.2, -0.05), (5.0, 0.01)] {
            let Ok(roots) = solve_constants(a0, ad0) else { continue };
            for r in roots {
                let (res, _) = constants_residual(r.c1, a0, ad0);
                assert!(res.abs() <= RESIDUAL_TOL, "{a0} {ad0}: {res}");
                let (a, ad) = r.initial_conditions();
                assert!((a - a0).abs() <= 1e-10 && (ad - ad0).abs() <= 1e-10, "{r:?}");
            }
        }
    }

    #[test]
    fn no_solution_carries_residual_range() {
        // for a narrow packet g(c1) = 1/c1^3 - 3 a0/(4 c1^4) + 3/(16 c1^7) stays
        // positive, so a contracting start has R < 0 everywhere
        match solve_constants(0.5, -0.1) {
            Err(KostinError::NoSolution {
                min_residual,
                max_residual,
                ..
            }) => {
                assert!(max_residual < 0.0 && min_residual <= max_residual);
            }
            other => panic!("expected NoSolution, got {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(solve_constants(0.0, 0.0).is_err());
        assert!(solve_constants(f64::NAN, 0.0).is_err());
        assert!(PerturbationConstants::new(-1.0, 0.0, 0).is_err());
    }
}
