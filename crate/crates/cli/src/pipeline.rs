//! The scenario pipelines. Each one writes its artifacts into the output
//! directory and records checks in the report.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use kostin::moments::{
    conservative_width_exact, damped_oscillator_center, fit_power_law, free_particle_center,
    integrate_moments_at, lyapunov_energy, measured_decay_coefficient, sample_times, MomentTrajectory,
};
use kostin::ode::OdeOptions;
use kostin::pde::{evolve, gaussian_wavefunction, madelung_decompose, EvolveOptions, Evolution, RHO_CUT_REL};
use kostin::perturbation::{compare_with_numeric, rescale, solve_constants, BranchComparison};
use kostin::roots::log_space;
use kostin::wigner::{default_p_axis, ellipse_area, uncertainties, wigner_gaussian_grid, wigner_numeric};
use kostin::{KostinError, PacketState, Potential};
use serde_json::{json, Value};

use crate::config::{Pipeline, ScenarioConfig};
use crate::output::{write_table, write_wigner, Table};
use crate::report::{Comparison, Failure, Report};

/// Samples written by the moment pipelines.
const MOMENT_SAMPLES: usize = 500;
/// Observables recorded per PDE run, roughly.
const PDE_RECORDS: usize = 500;

fn fail(module: &str, e: impl ToString) -> Failure {
    Failure {
        module: module.to_string(),
        message: e.to_string(),
    }
}

trait Stage<T> {
    fn stage(self, module: &str) -> Result<T, Failure>;
}

impl<T> Stage<T> for kostin::Result<T> {
    fn stage(self, module: &str) -> Result<T, Failure> {
        self.map_err(|e| fail(module, e))
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, module: &str) -> Result<T, Failure> {
        self.map_err(|e| fail(module, format!("i/o: {e}")))
    }
}

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    dir: &'a Path,
    report: Report,
}

/// Runs the configured pipeline, writing artifacts and `report.json` into
/// `cfg.output.dir`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Report {
    let dir = cfg.output.dir.as_path();
    let mut run = Run {
        cfg,
        dir,
        report: Report::new(cfg.pipeline.name(), &cfg.entries, &cfg.disabled_checks, cfg.tolerances.scale),
    };
    let outcome = fs::create_dir_all(dir).stage("output").and_then(|_| match cfg.pipeline {
        Pipeline::Moments => run.moments(),
        Pipeline::Perturbation => run.perturbation(),
        Pipeline::Pde => run.pde(),
        Pipeline::Wigner => run.wigner(),
        Pipeline::CrossValidate => run.cross_validate(),
    });
    if let Err(f) = outcome {
        log::error!("{}: {}", f.module, f.message);
        run.report.error = Some(f);
    }
    let mut report = run.report;
    report.artifacts.sort();
    let text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes") + "\n";
    if let Err(e) = fs::write(dir.join("report.json"), text) {
        if report.error.is_none() {
            report.error = Some(fail("output", format!("i/o: {e}")));
        }
    }
    report
}

fn state_json(s: &PacketState) -> Value {
    json!({ "t": s.t, "q": s.q, "qdot": s.qdot, "a": s.a, "adot": s.adot })
}

fn max_abs<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

impl Run<'_> {
    fn table(&mut self, stem: &str, table: &Table) -> Result<(), Failure> {
        let name = write_table(self.dir, stem, table, self.cfg.output.format).stage("output")?;
        self.report.artifacts.push(name);
        Ok(())
    }

    fn integrator(&self) -> OdeOptions {
        OdeOptions::with_tolerances(self.cfg.tolerances.rtol, self.cfg.tolerances.atol)
    }

    fn oracle_integrator() -> OdeOptions {
        OdeOptions::with_tolerances(1e-12, 1e-14)
    }

    fn moment_times(&self) -> kostin::Result<Vec<f64>> {
        let t0 = self.cfg.initial.t;
        let t1 = self.cfg.grid.t_end;
        sample_times(t0, t1, (t1 - t0) / MOMENT_SAMPLES as f64)
    }

    fn moments_table(&mut self, traj: &MomentTrajectory) -> Result<(), Failure> {
        let mut t = Table::new(&["t", "q", "qdot", "a", "adot", "E_w"]);
        for s in &traj.samples {
            let e = lyapunov_energy(&traj.params, s).stage("moments")?;
            t.push(vec![s.t, s.q, s.qdot, s.a, s.adot, e]);
        }
        self.table("moments", &t)
    }

    fn uncertainty_check(&mut self, min_excess: f64) {
        self.report.check(
            "uncertainty_bound",
            "min over states of dx dp - hbar/2 (dx = a, dp^2 = m^2 adot^2 + hbar^2/(4 a^2) or grid moments)",
            min_excess,
            -1e-12,
            Comparison::AtLeast,
        );
    }

    fn moments(&mut self) -> Result<(), Failure> {
        let cfg = self.cfg;
        let p = &cfg.params;
        let init = &cfg.initial;
        let times = self.moment_times().stage("moments")?;
        let traj = integrate_moments_at(p, &cfg.potential, init, &times, &self.integrator()).stage("moments")?;
        self.moments_table(&traj)?;

        let curvature_free = matches!(cfg.potential, Potential::Free | Potential::UniformForce { .. });
        if p.nu == 0.0 && curvature_free {
            let mut worst = 0.0f64;
            for s in &traj.samples {
                let exact = conservative_width_exact(p, init.a, init.adot, s.t - init.t).stage("moments")?;
                worst = worst.max(((s.a - exact) / exact).abs());
            }
            self.report.check(
                "conservative_oracle",
                "closed-form width a^2 = (a0 + adot0 t)^2 + hbar^2 t^2 / (4 m^2 a0^2), max relative error",
                worst,
                1e-8,
                Comparison::AtMost,
            );
        }
        if matches!(cfg.potential, Potential::Free) {
            let mut worst = 0.0f64;
            for s in &traj.samples {
                let (q, _) = free_particle_center(p, init.q, init.qdot, s.t - init.t).stage("moments")?;
                worst = worst.max((s.q - q).abs() / q.abs().max(init.a));
            }
            self.report.check(
                "free_center_oracle",
                "closed-form center q0 + qdot0 (1 - exp(-nu t)) / nu, error relative to max(|q|, a0)",
                worst,
                1e-8,
                Comparison::AtMost,
            );
        }
        if let Some(k) = cfg.potential.constant_stiffness() {
            let mut worst = 0.0f64;
            for s in &traj.samples {
                let (q, _) = damped_oscillator_center(p, k, init.q, init.qdot, s.t - init.t).stage("moments")?;
                worst = worst.max((s.q - q).abs() / q.abs().max(init.a));
            }
            self.report.check(
                "ehrenfest_center_oracle",
                "closed-form damped oscillator q'' + nu q' + (k/m) q = 0, error relative to max(|q|, a0)",
                worst,
                1e-8,
                Comparison::AtMost,
            );
        }
        let min_excess = traj
            .samples
            .iter()
            .chain(&traj.steps)
            .map(|s| uncertainties(p, s).product - p.hbar / 2.0)
            .fold(f64::INFINITY, f64::min);
        self.uncertainty_check(min_excess);
        if p.nu > 0.0 && curvature_free {
            let energies: Vec<f64> = traj
                .steps
                .iter()
                .map(|s| lyapunov_energy(p, s))
                .collect::<kostin::Result<_>>()
                .stage("moments")?;
            let rise = energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            self.report.check(
                "lyapunov_monotone",
                "E_w = adot^2/2 + hbar^2/(8 m^2 a^2) at consecutive accepted steps, largest increase",
                rise,
                1e-12,
                Comparison::AtMost,
            );
            if let Some(k) = measured_decay_coefficient(p, &traj.steps) {
                self.report.result("decay_coefficient", json!(k));
            }
        }
        self.report.result("accepted_steps", json!(traj.stats.accepted));
        self.report.result("final_state", state_json(traj.last()));
        Ok(())
    }

    fn perturbation(&mut self) -> Result<(), Failure> {
        let cfg = self.cfg;
        let d = rescale(&cfg.params, &cfg.initial).stage("perturbation")?;
        let roots = solve_constants(d.a, d.adot).stage("perturbation")?;
        self.report.result(
            "roots",
            Value::Array(roots.iter().map(|c| json!([c.c1, c.c2])).collect()),
        );
        self.report.result("dimensionless_initial", json!({ "a": d.a, "adot": d.adot }));

        let tau_end = cfg.params.nu * (cfg.grid.t_end - cfg.initial.t);
        let mut taus: Vec<f64> = (0..20).map(|i| tau_end.min(1.0) * i as f64 / 20.0).collect();
        if tau_end > 1.0 {
            taus.extend(log_space(1.0, tau_end, 400));
        } else {
            taus.push(tau_end);
        }
        let comparisons: Vec<BranchComparison> = roots
            .iter()
            .map(|c| compare_with_numeric(c, d.a, d.adot, &taus, &Self::oracle_integrator()))
            .collect::<kostin::Result<_>>()
            .stage("perturbation")?;
        let window = tau_end.min(100.0);
        let mut devs = Vec::new();
        for (i, cmp) in comparisons.iter().enumerate() {
            let mut t = Table::new(&["tau", "alpha0", "alpha1", "series", "numeric", "rel_dev"]);
            for r in &cmp.rows {
                t.push(vec![r.tau, r.alpha0, r.alpha1, r.series, r.numeric, r.rel_dev]);
            }
            self.table(&format!("perturbation_branch{}", i + 1), &t)?;
            devs.push(
                cmp.rows
                    .iter()
                    .filter(|r| r.tau >= 1.0 && r.tau <= window)
                    .map(|r| r.rel_dev)
                    .fold(0.0, f64::max),
            );
        }
        self.report.result("branch_max_deviation", json!(devs));
        if tau_end >= 1.0 {
            if let Some(&first) = devs.first() {
                self.report.check(
                    "series_fidelity",
                    "numeric integration of a'' + a' = 1/(4 a^3) (rtol 1e-12), max relative deviation of \
                     branch 1 for 1 <= tau <= min(100, tau_end)",
                    first,
                    0.01,
                    Comparison::AtMost,
                );
            }
            if devs.len() > 1 {
                self.report.check(
                    "branch_ordering",
                    "max deviation of branch 2 minus that of branch 1",
                    devs[1] - devs[0],
                    0.0,
                    Comparison::AtLeast,
                );
            }
        }
        if tau_end >= 1000.0 {
            let fit_taus = log_space(100.0, 1000.0, 200);
            let cmp = compare_with_numeric(&roots[0], d.a, d.adot, &fit_taus, &Self::oracle_integrator())
                .stage("perturbation")?;
            let widths: Vec<f64> = cmp.rows.iter().map(|r| r.numeric).collect();
            let fit = fit_power_law(&fit_taus, &widths).stage("perturbation")?;
            self.report.result("asymptotic_fit", json!({ "exponent": fit.exponent, "prefactor": fit.prefactor }));
            self.report.check(
                "asymptotic_exponent",
                "log-log fit of the numeric width over 100 <= tau <= 1000, |exponent - 1/4|",
                (fit.exponent - 0.25).abs(),
                0.01,
                Comparison::AtMost,
            );
            self.report.check(
                "asymptotic_prefactor",
                "fitted prefactor against (hbar^2 t / (m^2 nu))^(1/4) in scaled units, relative deviation",
                (fit.prefactor - 1.0).abs(),
                0.05,
                Comparison::AtMost,
            );
        }
        Ok(())
    }

    fn evolve_packet(&mut self) -> Result<(Evolution, MomentTrajectory), Failure> {
        let cfg = self.cfg;
        let wf = gaussian_wavefunction(&cfg.params, &cfg.initial, &cfg.grid).stage("pde")?;
        let steps = ((cfg.grid.t_end - cfg.initial.t) / cfg.grid.dt).ceil().max(1.0) as usize;
        let opts = EvolveOptions {
            observe_every: (steps / PDE_RECORDS).max(1),
            snapshot_times: cfg.output.snapshots.clone(),
            include_gauge_term: true,
        };
        let ev = evolve(&cfg.params, &cfg.potential, &wf, &cfg.grid, &opts).stage("pde")?;

        let mut t = Table::new(&[
            "t",
            "norm",
            "mean_x",
            "delta_x",
            "mean_p",
            "delta_p",
            "mean_phase",
            "mean_force",
            "excess_kurtosis",
        ]);
        for o in &ev.series {
            t.push(vec![
                o.t,
                o.norm,
                o.mean_x,
                o.delta_x,
                o.mean_p,
                o.delta_p,
                o.mean_phase,
                o.mean_force,
                o.excess_kurtosis,
            ]);
        }
        self.table("pde_series", &t)?;
        for (i, snap) in ev.snapshots.iter().enumerate() {
            let rho_max = snap.density().into_iter().fold(0.0, f64::max);
            let h = madelung_decompose(&cfg.params, snap, RHO_CUT_REL * rho_max).stage("pde")?;
            let mut t = Table::new(&["x", "re", "im", "rho", "S", "v"]);
            for (j, z) in snap.psi.iter().enumerate() {
                let (s, v) = if h.mask[j] { (h.phase[j], h.velocity[j]) } else { (0.0, 0.0) };
                t.push(vec![snap.grid.x(j), z.re, z.im, h.rho[j], s, v]);
            }
            self.table(&format!("snapshot_{i:03}"), &t)?;
        }
        self.report.result("pde_steps", json!(ev.steps));
        self.report.result("pde_dt", json!(ev.step_dt));
        if let Some(e) = &ev.truncated {
            return Err(fail("pde", format!("evolution stopped early: {e}")));
        }

        let times: Vec<f64> = ev.series.iter().map(|o| o.t).collect();
        let oracle = integrate_moments_at(&cfg.params, &cfg.potential, &cfg.initial, &times, &Self::oracle_integrator())
            .stage("moments")?;
        Ok((ev, oracle))
    }

    fn reduction_checks(&mut self, ev: &Evolution, oracle: &MomentTrajectory) -> (f64, f64) {
        let a0 = self.cfg.initial.a;
        let width = max_abs(ev.series.iter().zip(&oracle.samples).map(|(o, s)| (o.delta_x - s.a) / s.a));
        let center = max_abs(
            ev.series
                .iter()
                .zip(&oracle.samples)
                .map(|(o, s)| (o.mean_x - s.q) / s.q.abs().max(a0)),
        );
        self.report.check(
            "pde_vs_moments_width",
            "moment equations (rtol 1e-12): max relative deviation of grid dx from a(t)",
            width,
            1e-3,
            Comparison::AtMost,
        );
        self.report.check(
            "pde_vs_moments_center",
            "moment equations (rtol 1e-12): max deviation of grid <x> from q(t), relative to max(|q|, a0)",
            center,
            1e-3,
            Comparison::AtMost,
        );
        (width, center)
    }

    fn pde(&mut self) -> Result<(), Failure> {
        let (ev, oracle) = self.evolve_packet()?;
        let drift = max_abs(ev.series.iter().map(|o| o.norm - 1.0));
        self.report.check(
            "norm_drift",
            "unit norm of the initial state, max |norm - 1|",
            drift,
            1e-6,
            Comparison::AtMost,
        );
        if self.cfg.potential.is_quadratic_or_lower() {
            self.reduction_checks(&ev, &oracle);
            let kurt = max_abs(ev.series.iter().map(|o| o.excess_kurtosis));
            self.report.check(
                "gaussian_shape",
                "Gaussian density, max |excess kurtosis|",
                kurt,
                1e-3,
                Comparison::AtMost,
            );
        }
        let min_excess = ev
            .series
            .iter()
            .map(|o| o.delta_x * o.delta_p - self.cfg.params.hbar / 2.0)
            .fold(f64::INFINITY, f64::min);
        self.uncertainty_check(min_excess);
        self.report.result("final_observables", {
            let o = ev.series.last().expect("series is never empty");
            json!({ "t": o.t, "mean_x": o.mean_x, "delta_x": o.delta_x, "mean_p": o.mean_p, "delta_p": o.delta_p })
        });
        Ok(())
    }

    fn wigner(&mut self) -> Result<(), Failure> {
        let cfg = self.cfg;
        let p = &cfg.params;
        let s = &cfg.initial;
        let wf = gaussian_wavefunction(p, s, &cfg.grid).stage("wigner")?;
        let w = wigner_numeric(p, &wf, &default_p_axis(p, &wf)).stage("wigner")?;
        let names = write_wigner(self.dir, "wigner", &w, cfg.output.format, cfg.output.gnuplot).stage("output")?;
        self.report.artifacts.extend(names);

        let exact = wigner_gaussian_grid(p, s, &w.x_axis, &w.p_axis);
        let sup = max_abs(w.f.iter().zip(&exact.f).map(|(a, b)| a - b));
        self.report.check(
            "wigner_analytic",
            "closed-form Gaussian Wigner function, sup-norm deviation",
            sup,
            1e-6 / (PI * p.hbar),
            Comparison::AtMost,
        );
        let rho = wf.density();
        let dx = cfg.grid.dx();
        let mx = max_abs(w.x_axis.iter().zip(w.position_marginal()).map(|(x, m)| {
            let i = ((x - cfg.grid.x_min) / dx).round() as usize;
            m - rho[i]
        }));
        self.report.check(
            "wigner_position_marginal",
            "|psi(x)|^2 on the grid, max deviation of sum_p f dp",
            mx,
            1e-6,
            Comparison::AtMost,
        );
        let mp = max_abs(
            w.p_axis
                .iter()
                .zip(w.momentum_marginal())
                .map(|(pp, m)| m - wf.momentum_density(p.hbar, *pp)),
        );
        self.report.check(
            "wigner_momentum_marginal",
            "|psi~(p)|^2 by direct Fourier sum, max deviation of sum_x f dx",
            mp,
            1e-6,
            Comparison::AtMost,
        );
        self.report.check(
            "wigner_normalization",
            "unit total weight, |sum f dx dp - 1|",
            (w.normalization() - 1.0).abs(),
            1e-6,
            Comparison::AtMost,
        );
        self.report.check(
            "wigner_realness",
            "real transform, largest imaginary residue",
            w.imaginary_residue,
            1e-9,
            Comparison::AtMost,
        );

        let level = (-1.0f64).exp();
        let times: Vec<f64> = {
            let (t0, t1) = (s.t, cfg.grid.t_end);
            (0..100).map(|i| t0 + (t1 - t0) * i as f64 / 99.0).collect()
        };
        let traj = integrate_moments_at(p, &cfg.potential, s, &times, &self.integrator()).stage("moments")?;
        let areas: Vec<f64> = traj
            .samples
            .iter()
            .map(|st| ellipse_area(p, st, level))
            .collect::<kostin::Result<_>>()
            .stage("wigner")?;
        let spread = areas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - areas.iter().copied().fold(f64::INFINITY, f64::min);
        self.report.check(
            "ellipse_area_invariance",
            "area of the 1/e level set along the moment trajectory (100 samples), max - min",
            spread,
            1e-12,
            Comparison::AtMost,
        );
        let u = uncertainties(p, s);
        self.report.result("ellipse_area", json!(areas[0]));
        self.report.result("uncertainty", json!({ "dx": u.dx, "dp": u.dp, "product": u.product }));
        Ok(())
    }

    fn cross_validate(&mut self) -> Result<(), Failure> {
        let cfg = self.cfg;
        let p = &cfg.params;
        let init = &cfg.initial;
        let (ev, oracle) = self.evolve_packet()?;
        self.moments_table(&oracle)?;
        let (width, center) = self.reduction_checks(&ev, &oracle);
        let mut deviations = json!({ "pde_vs_moments_width": width, "pde_vs_moments_center": center });

        if let Some(k) = cfg.potential.constant_stiffness() {
            let mut worst = 0.0f64;
            for o in &ev.series {
                let (q, _) = damped_oscillator_center(p, k, init.q, init.qdot, o.t - init.t).stage("moments")?;
                worst = worst.max((o.mean_x - q).abs() / q.abs().max(init.a));
            }
            self.report.check(
                "pde_vs_ehrenfest_center",
                "closed-form damped oscillator center, deviation of grid <x> relative to max(|q|, a0)",
                worst,
                1e-4,
                Comparison::AtMost,
            );
            deviations["pde_vs_ehrenfest_center"] = json!(worst);
        }

        if p.nu > 0.0 && matches!(cfg.potential, Potential::Free | Potential::UniformForce { .. }) {
            let d = rescale(p, init).stage("perturbation")?;
            match solve_constants(d.a, d.adot) {
                Ok(roots) => {
                    let tau_end = p.nu * (cfg.grid.t_end - init.t);
                    if tau_end > 1.0 {
                        let taus = log_space(1.0, tau_end, 200);
                        let cmp = compare_with_numeric(&roots[0], d.a, d.adot, &taus, &Self::oracle_integrator())
                            .stage("perturbation")?;
                        deviations["series_vs_moments"] = json!(cmp.max_rel_dev_after(1.0));
                    }
                }
                Err(KostinError::NoSolution { .. }) => {
                    deviations["series_vs_moments"] = Value::Null;
                }
                Err(e) => return Err(fail("perturbation", e)),
            }
        }

        let min_excess = oracle
            .samples
            .iter()
            .map(|s| uncertainties(p, s).product - p.hbar / 2.0)
            .chain(ev.series.iter().map(|o| o.delta_x * o.delta_p - p.hbar / 2.0))
            .fold(f64::INFINITY, f64::min);
        self.uncertainty_check(min_excess);
        deviations["uncertainty_min"] = json!(min_excess);
        self.report.result("deviations", deviations);
        Ok(())
    }
}
