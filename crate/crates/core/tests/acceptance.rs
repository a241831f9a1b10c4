//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any of them failed.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use kostin::moments::{
    asymptotic_width, conservative_width_exact, fit_power_law, integrate_moments_at, lyapunov_energy,
    measured_decay_coefficient, MomentTrajectory,
};
use kostin::ode::OdeOptions;
use kostin::pde::{evolve, gaussian_wavefunction, EvolveOptions, Evolution};
use kostin::perturbation::{compare_with_numeric, perturbative_width, solve_constants};
use kostin::roots::log_space;
use kostin::wigner::{default_p_axis, uncertainties, wigner_gaussian_grid, wigner_numeric};
use kostin::{GridSpec, PacketState, PhysicalParams, Potential};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Trajectories handed from the producing criteria to criteria 8 and 9.
#[derive(Default)]
struct Shared {
    conservative: Vec<MomentTrajectory>,
    damped_free: Vec<MomentTrajectory>,
    pde: Vec<Evolution>,
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn c1_constants() -> Outcome {
    let start = Instant::now();
    let roots = solve_constants(2.0, 0.0).expect("roots exist for a(0) = 2");
    let elapsed = start.elapsed();
    let expected = [(1.437, 1.399), (0.591, 0.685)];
    let found: Vec<(f64, f64)> = roots.iter().map(|c| (c.c1, c.c2)).collect();
    let matched = found.len() == 2
        && found
            .iter()
            .zip(expected)
            .all(|(f, e)| (f.0 - e.0).abs() <= 1e-3 && (f.1 - e.1).abs() <= 1e-3);
    outcome(
        matched && within(elapsed, 1.0),
        format!("roots {found:.6?} expected {expected:?} (+-0.001), {:.3}s < 1s", elapsed.as_secs_f64()),
    )
}

fn c2_branch_fidelity() -> Outcome {
    let start = Instant::now();
    let roots = solve_constants(2.0, 0.0).unwrap();
    let taus = log_space(1.0, 100.0, 2000);
    let opts = OdeOptions::with_tolerances(1e-12, 1e-14);
    let dev: Vec<f64> = roots
        .iter()
        .map(|c| compare_with_numeric(c, 2.0, 0.0, &taus, &opts).unwrap().max_rel_dev_after(1.0))
        .collect();
    let second = &roots[1];
    let tail = perturbative_width(second, 1e4).unwrap() / 1e4f64.powf(0.25);
    let elapsed = start.elapsed();
    let pass = dev[0] < 0.01 && dev[1] > dev[0] && (tail - 1.0).abs() < 0.01 && within(elapsed, 5.0);
    outcome(
        pass,
        format!(
            "branch 1 max dev {:.4} (< 0.01), branch 2 max dev {:.4} (> branch 1), \
             branch 2 / tau^(1/4) at 1e4 = {tail:.5} (1 +- 0.01), {:.2}s < 5s",
            dev[0],
            dev[1],
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_asymptotic_law(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let params = PhysicalParams::natural(1.0);
    let init = PacketState::new(0.0, 0.0, 0.0, 1.0, 0.0).unwrap();
    let mut times = vec![0.0];
    times.extend(log_space(100.0, 1000.0, 400));
    let traj = integrate_moments_at(
        &params,
        &Potential::Free,
        &init,
        &times,
        &OdeOptions::with_tolerances(1e-12, 1e-14),
    )
    .unwrap();
    let fit_t = &times[1..];
    let widths: Vec<f64> = traj.samples[1..].iter().map(|s| s.a).collect();
    let fit = fit_power_law(fit_t, &widths).unwrap();
    let prefactor_ref = asymptotic_width(&params, 1.0).unwrap();
    let elapsed = start.elapsed();
    shared.damped_free.push(traj);
    let rel = (fit.prefactor - prefactor_ref).abs() / prefactor_ref;
    outcome(
        (fit.exponent - 0.25).abs() <= 0.01 && rel <= 0.05 && within(elapsed, 5.0),
        format!(
            "a(0) = 1, adot(0) = 0: exponent {:.5} (0.25 +- 0.01), prefactor {:.5} vs {prefactor_ref} ({:.2}% <= 5%), {:.2}s < 5s",
            fit.exponent,
            fit.prefactor,
            100.0 * rel,
            elapsed.as_secs_f64()
        ),
    )
}

fn c4_conservative_oracle(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(4);
    let times: Vec<f64> = (0..=400).map(|i| 10.0 * i as f64 / 400.0).collect();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let params = PhysicalParams::new(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), 0.0).unwrap();
        let init = PacketState::new(
            0.0,
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.2..3.0),
            rng.gen_range(-1.0..1.0),
        )
        .unwrap();
        let traj = integrate_moments_at(&params, &Potential::Free, &init, &times, &OdeOptions::default()).unwrap();
        for s in &traj.samples {
            let exact = conservative_width_exact(&params, init.a, init.adot, s.t).unwrap();
            worst = worst.max(((s.a - exact) / exact).abs());
        }
        shared.conservative.push(traj);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-8 && within(elapsed, 10.0),
        format!(
            "100 random states, max relative width error {worst:.3e} (<= 1e-8), {:.2}s < 10s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c5_gaussian_reduction(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let params = PhysicalParams::natural(1.0);
    let init = PacketState::new(0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
    let grid = GridSpec::for_packet(&params, &init, 5.0, 1024).unwrap();
    let wf = gaussian_wavefunction(&params, &init, &grid).unwrap();
    let ev = evolve(
        &params,
        &Potential::Free,
        &wf,
        &grid,
        &EvolveOptions {
            observe_every: 20,
            ..EvolveOptions::default()
        },
    )
    .unwrap();
    let times: Vec<f64> = ev.series.iter().map(|o| o.t).collect();
    let oracle = integrate_moments_at(
        &params,
        &Potential::Free,
        &init,
        &times,
        &OdeOptions::with_tolerances(1e-12, 1e-14),
    )
    .unwrap();
    let (mut eq, mut ea, mut kurt, mut drift) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (o, s) in ev.series.iter().zip(&oracle.samples) {
        eq = eq.max(((o.mean_x - s.q) / s.q).abs());
        ea = ea.max(((o.delta_x - s.a) / s.a).abs());
        kurt = kurt.max(o.excess_kurtosis.abs());
        drift = drift.max((o.norm - 1.0).abs());
    }
    let elapsed = start.elapsed();
    let complete = ev.is_complete() && (ev.final_state.t - 5.0).abs() < 1e-12;
    shared.damped_free.push(oracle);
    shared.pde.push(ev);
    outcome(
        complete && eq <= 1e-3 && ea <= 1e-3 && drift <= 1e-6 && kurt <= 1e-3 && within(elapsed, 120.0),
        format!(
            "<x> vs q {eq:.2e}, dx vs a {ea:.2e} (<= 1e-3), norm drift {drift:.2e} (<= 1e-6), \
             |excess kurtosis| {kurt:.2e} (<= 1e-3), {:.2}s < 120s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c6_stationary_state(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let params = PhysicalParams::natural(1.0);
    let omega: f64 = 1.0;
    let a = (params.hbar / (2.0 * params.mass * omega)).sqrt();
    let init = PacketState::new(0.0, 0.0, 0.0, a, 0.0).unwrap();
    let dt = 1e-4;
    let grid = GridSpec::new(-12.0, 12.0, 512, dt, 1e4 * dt).unwrap();
    let wf = gaussian_wavefunction(&params, &init, &grid).unwrap();
    let ev = evolve(
        &params,
        &Potential::harmonic(params.mass * omega * omega),
        &wf,
        &grid,
        &EvolveOptions {
            observe_every: 100,
            ..EvolveOptions::default()
        },
    )
    .unwrap();
    let change = wf
        .psi
        .iter()
        .zip(&ev.final_state.psi)
        .map(|(x, y)| (x.norm_sqr() - y.norm_sqr()).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = ev.is_complete() && ev.steps == 10_000 && change <= 1e-8 && within(elapsed, 60.0);
    let steps = ev.steps;
    shared.pde.push(ev);
    outcome(
        pass,
        format!(
            "{steps} steps of dt = {dt}, nu = 1: max density change {change:.2e} (<= 1e-8), {:.2}s < 60s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c7_wigner() -> Outcome {
    let start = Instant::now();
    let params = PhysicalParams::natural(0.0);
    let states = [
        (1.0, 0.5, 0.7, 0.2),
        (0.0, 0.0, 1.0, 0.0),
        (-2.0, -1.0, 1.5, -0.4),
        (0.5, 1.5, 0.5, 0.6),
    ];
    let grid = GridSpec::new(-20.0, 20.0, 512, 1e-3, 1.0).unwrap();
    let (mut sup, mut mx, mut mp, mut norm, mut imag) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (q, qdot, a, adot) in states {
        let s = PacketState::new(0.0, q, qdot, a, adot).unwrap();
        let wf = gaussian_wavefunction(&params, &s, &grid).unwrap();
        let w = wigner_numeric(&params, &wf, &default_p_axis(&params, &wf)).unwrap();
        let exact = wigner_gaussian_grid(&params, &s, &w.x_axis, &w.p_axis);
        sup = sup.max(w.f.iter().zip(&exact.f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let rho = wf.density();
        for (x, m) in w.x_axis.iter().zip(w.position_marginal()) {
            let i = ((x - grid.x_min) / grid.dx()).round() as usize;
            mx = mx.max((m - rho[i]).abs());
        }
        for (p, m) in w.p_axis.iter().zip(w.momentum_marginal()) {
            mp = mp.max((m - wf.momentum_density(params.hbar, *p)).abs());
        }
        norm = norm.max((w.normalization() - 1.0).abs());
        imag = imag.max(w.imaginary_residue);
    }
    let elapsed = start.elapsed();
    let bound = 1e-6 / (PI * params.hbar);
    outcome(
        sup <= bound && mx <= 1e-6 && mp <= 1e-6 && norm <= 1e-6 && imag <= 1e-9 && within(elapsed, 30.0),
        format!(
            "sup |f - f_exact| {sup:.2e} (<= {bound:.2e}), marginals x {mx:.2e} p {mp:.2e} (<= 1e-6), \
             |norm - 1| {norm:.2e} (<= 1e-6), imaginary residue {imag:.2e}, {:.2}s < 30s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c8_uncertainty(shared: &Shared) -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut min_excess = f64::INFINITY;
    let mut equality = 0.0f64;
    for _ in 0..10_000 {
        let params = PhysicalParams::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), 0.0).unwrap();
        let a = 10f64.powf(rng.gen_range(-2.0..2.0));
        let s = PacketState::new(0.0, 0.0, 0.0, a, rng.gen_range(-5.0..5.0)).unwrap();
        min_excess = min_excess.min(uncertainties(&params, &s).product - params.hbar / 2.0);
        let s0 = PacketState::new(0.0, 0.0, 0.0, a, 0.0).unwrap();
        equality = equality.max((uncertainties(&params, &s0).product - params.hbar / 2.0).abs());
    }
    let mut states = 0;
    for traj in &shared.conservative {
        for s in traj.samples.iter().chain(&traj.steps) {
            min_excess = min_excess.min(uncertainties(&traj.params, s).product - traj.params.hbar / 2.0);
            states += 1;
        }
    }
    for ev in &shared.pde {
        for o in &ev.series {
            min_excess = min_excess.min(o.delta_x * o.delta_p - 0.5);
            states += 1;
        }
    }
    outcome(
        min_excess >= -1e-12 && equality <= 1e-12 && !shared.conservative.is_empty() && shared.pde.len() == 2,
        format!(
            "10^4 random states + {states} trajectory states: min(dx dp - hbar/2) {min_excess:.2e} (>= -1e-12), \
             |dx dp - hbar/2| at adot = 0 {equality:.2e} (<= 1e-12)"
        ),
    )
}

fn c9_lyapunov(shared: &mut Shared) -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    for _ in 0..20 {
        let nu = rng.gen_range(0.1..3.0);
        let params = PhysicalParams::new(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), nu).unwrap();
        let init = PacketState::new(
            0.0,
            0.0,
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.2..3.0),
            rng.gen_range(-1.0..1.0),
        )
        .unwrap();
        let times = [0.0, 50.0 / nu];
        let traj = integrate_moments_at(&params, &Potential::Free, &init, &times, &OdeOptions::default()).unwrap();
        shared.damped_free.push(traj);
    }
    let mut worst_rise = f64::NEG_INFINITY;
    let mut steps = 0;
    let mut kappa_range = (f64::INFINITY, f64::NEG_INFINITY);
    for traj in &shared.damped_free {
        let e: Vec<f64> = traj.steps.iter().map(|s| lyapunov_energy(&traj.params, s).unwrap()).collect();
        for w in e.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
        steps += e.len();
        if let Some(k) = measured_decay_coefficient(&traj.params, &traj.steps) {
            kappa_range = (kappa_range.0.min(k), kappa_range.1.max(k));
        }
    }
    outcome(
        worst_rise <= 1e-12,
        format!(
            "{} runs, {steps} accepted steps: largest E_w increase {worst_rise:.2e} (<= 1e-12); \
             measured decay coefficient kappa in dE_w/dt = -kappa nu adot^2: [{:.6}, {:.6}]",
            shared.damped_free.len(),
            kappa_range.0,
            kappa_range.1
        ),
    )
}

fn c10_convergence() -> Outcome {
    let params = PhysicalParams::natural(1.0);
    let init = PacketState::new(0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
    let error = |n: usize, dt: f64| -> f64 {
        let mut grid = GridSpec::for_packet(&params, &init, 5.0, n).unwrap();
        grid.dt = dt;
        let wf = gaussian_wavefunction(&params, &init, &grid).unwrap();
        let ev = evolve(&params, &Potential::Free, &wf, &grid, &EvolveOptions::default()).unwrap();
        assert!(ev.is_complete());
        let times: Vec<f64> = ev.series.iter().map(|o| o.t).collect();
        let oracle = integrate_moments_at(
            &params,
            &Potential::Free,
            &init,
            &times,
            &OdeOptions::with_tolerances(1e-13, 1e-15),
        )
        .unwrap();
        ev.series
            .iter()
            .zip(&oracle.samples)
            .map(|(o, s)| ((o.mean_x - s.q) / s.q).abs().max(((o.delta_x - s.a) / s.a).abs()))
            .fold(0.0, f64::max)
    };
    let coarse = error(1024, 0.02);
    let fine = error(1024, 0.01);
    let refined = error(2048, 0.01);
    let order = coarse / fine;
    let spatial = refined / fine;
    outcome(
        (order - 4.0).abs() <= 0.8 && (spatial - 1.0).abs() <= 0.1,
        format!(
            "error dt=0.02 {coarse:.3e}, dt=0.01 {fine:.3e}: ratio {order:.3} (4 +- 20%); \
             2048 vs 1024 points: ratio {spatial:.4} (1 +- 10%)"
        ),
    )
}

fn main() -> ExitCode {
    let mut shared = Shared::default();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let result = panic::catch_unwind(AssertUnwindSafe(run));
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {n:>2} {name:<28} {} {detail}", if pass { "PASS" } else { "FAIL" });
    };

    report(1, "perturbation constants", &mut c1_constants);
    report(2, "branch fidelity", &mut c2_branch_fidelity);
    report(3, "asymptotic law", &mut || c3_asymptotic_law(&mut shared));
    report(4, "conservative oracle", &mut || c4_conservative_oracle(&mut shared));
    report(5, "gaussian reduction", &mut || c5_gaussian_reduction(&mut shared));
    report(6, "stationary state", &mut || c6_stationary_state(&mut shared));
    report(7, "wigner consistency", &mut c7_wigner);
    report(8, "uncertainty bound", &mut || c8_uncertainty(&shared));
    report(9, "lyapunov monotonicity", &mut || c9_lyapunov(&mut shared));
    report(10, "convergence order", &mut c10_convergence);

    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
