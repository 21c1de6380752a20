//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::f64::consts::PI;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use kslab::evolution::{ou_gaussian, run, Coupling, EvolutionConfig, InitialProfile, RunRecord};
use kslab::experiments::{decay_rate_from_run, lp_decay_from_run, DecayRateRecord};
use kslab::gap_constants::{chain_steady_options, delta_rate, gap_report_from, DEFAULT_P_TRAP};
use kslab::linear_spectrum::{harmonic_oscillator_check, spectral_gap, spectrum_grid};
use kslab::potential::{poisson_residual_l1, solve_potential};
use kslab::quad::exp_sinh;
use kslab::radial_field::{integrate, RadialGrid};
use kslab::steady_state::{solve_steady_state_with, steady_state_cached, SteadyOptions};
use kslab::trap_constants::{kappa, m1, mass_threshold, z1};

type Outcome = Result<(bool, String), String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

/// Every run made by the suite, for the conservation criterion.
static RUNS: Mutex<Vec<(String, f64, f64)>> = Mutex::new(Vec::new());

fn keep(label: &str, r: &RunRecord) {
    RUNS.lock()
        .unwrap()
        .push((label.to_string(), r.max_mass_drift, r.max_energy_increase));
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn trap_threshold() -> Outcome {
    let m0 = mass_threshold(1e8).map_err(e)?;
    let lim = m1();
    let ok = (m0 - 0.822663).abs() <= 1e-4 && (lim - 0.822663).abs() <= 1e-4;
    Ok((ok, format!("M0(1e8) = {m0:.7}, M1 = {lim:.7}")))
}

fn oscillator() -> Outcome {
    let c = harmonic_oscillator_check(1.0, RadialGrid::production()).map_err(e)?;
    let ok = (c.ev1 - 1.0).abs() <= 1e-3 && (c.ev2 - 2.0).abs() <= 1e-3;
    Ok((ok, format!("eigenvalues ({:.6}, {:.6})", c.ev1, c.ev2)))
}

/// `kappa` from the defining Gaussian moment integral over the plane.
fn kappa_by_quadrature(sigma: f64) -> f64 {
    let inner =
        |x1: f64| exp_sinh(|x2| (-sigma * (x1 * x1 + x2 * x2) / 4.0).exp(), 1e-14) * x1.powf(sigma);
    let integral = 4.0 * exp_sinh(inner, 1e-13);
    ((8.0 * PI).powf(-sigma) * integral).powf(1.0 / sigma)
}

fn kappa_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in [1.0, 1.35, 1.5, 1.75, 1.99] {
        let a = kappa(s).map_err(e)?;
        worst = worst.max(((a - kappa_by_quadrature(s)) / a).abs());
    }
    Ok((
        worst <= 1e-8,
        format!("max relative difference {worst:.2e}"),
    ))
}

fn steady_consistency() -> Outcome {
    let opts = SteadyOptions::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [0.1, 0.5, 1.0, 2.0] {
        let s = solve_steady_state_with(m, RadialGrid::production(), &opts).map_err(e)?;
        let mass_err = (integrate(&s.n_inf) - m).abs();
        let orders: Vec<f64> = {
            let res: Vec<f64> = [250, 500, 1000]
                .iter()
                .map(|&n| {
                    let g = RadialGrid::new(RadialGrid::DEFAULT_R_MAX, n).unwrap();
                    let s = solve_steady_state_with(m, g, &opts).unwrap();
                    poisson_residual_l1(&s.n_inf, &solve_potential(&s.n_inf).unwrap())
                })
                .collect();
            res.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
        };
        let this = s.residual <= 1e-10
            && mass_err <= 1e-10
            && orders.iter().all(|o| (o - 2.0).abs() <= 0.2);
        ok &= this;
        detail.push(format!(
            "M={m}: residual {:.1e}, mass err {mass_err:.1e}, orders {:.2}/{:.2}",
            s.residual, orders[0], orders[1]
        ));
    }
    let small = solve_steady_state_with(0.05, RadialGrid::production(), &opts).map_err(e)?;
    let ratio = small.n_inf_sup * 2.0 * PI / 0.05;
    ok &= (ratio - 1.0).abs() <= 0.02;
    detail.push(format!("2 pi sup n / M at M=0.05: {ratio:.5}"));
    Ok((ok, detail.join("; ")))
}

fn ou_limit() -> Outcome {
    let mut cfg = EvolutionConfig::new(1.0, InitialProfile::Gaussian { sigma2: 2.0 }, 1.0);
    cfg.coupling = Coupling::Disabled;
    let rec = run(&cfg, usize::MAX, None).map_err(e)?;
    keep("decoupled relaxation", &rec);
    let g = cfg.grid;
    let exact = ou_gaussian(1.0, 2.0, 1.0, g);
    let err: f64 = rec
        .final_state
        .n
        .values()
        .iter()
        .zip(exact.values())
        .enumerate()
        .map(|(i, (a, b))| g.weight(i) * (a - b).abs())
        .sum();
    Ok((err <= 1e-4, format!("L1 error at tau = 1: {err:.2e}")))
}

fn decay_runs(masses: &[f64]) -> Result<Vec<DecayRateRecord>, String> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = masses
            .iter()
            .map(|&m| {
                scope.spawn(move || -> Result<DecayRateRecord, String> {
                    let g = RadialGrid::production();
                    let ss = steady_state_cached(m, g, &chain_steady_options()).map_err(e)?;
                    let gap = gap_report_from(&ss, DEFAULT_P_TRAP);
                    let cfg =
                        EvolutionConfig::new(m, InitialProfile::Gaussian { sigma2: 2.0 }, 8.0);
                    let rec = run(&cfg, 200, Some(&ss)).map_err(e)?;
                    keep(&format!("gaussian M={m}"), &rec);
                    decay_rate_from_run(rec, gap).map_err(e)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn exponential_decay() -> Outcome {
    let recs = decay_runs(&[0.05, 0.1, 0.2, 0.01])?;
    let mut ok = true;
    let mut detail = Vec::new();
    for r in &recs[..3] {
        let fit = r.fit.ok_or("missing fit")?;
        let this = r.guaranteed && fit.r2 >= 0.999 && fit.rate >= r.gap.delta && r.pass;
        ok &= this;
        detail.push(format!(
            "M={}: rate {:.4} >= delta {:.4}, r2 {:.6}",
            r.gap.mass, fit.rate, r.gap.delta, fit.r2
        ));
    }
    let rate = recs[3].fit.ok_or("missing fit")?.rate;
    ok &= (rate - 2.0).abs() <= 0.2;
    detail.push(format!("M=0.01 radial rate {rate:.4}"));
    let deltas: Vec<f64> = [0.2, 0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&m| delta_rate(m, DEFAULT_P_TRAP, RadialGrid::production()).delta)
        .collect();
    let monotone = deltas.windows(2).all(|w| w[1] > w[0]) && deltas.iter().all(|&d| d < 1.0);
    let gaps: Vec<f64> = deltas.iter().map(|d| 1.0 - d).collect();
    let to_one = gaps.windows(2).all(|w| (w[1] / w[0] - 0.5).abs() < 0.1);
    ok &= monotone && to_one;
    detail.push(format!(
        "delta sweep {:?}",
        deltas.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>()
    ));
    Ok((ok, detail.join("; ")))
}

fn spectral_ordering() -> Outcome {
    let g = spectrum_grid();
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [0.05, 0.1, 0.2, 0.4] {
        let ss = steady_state_cached(m, g, &chain_steady_options()).map_err(e)?;
        let gap1 = spectral_gap(&ss, 1, 1).map_err(e)?.gap;
        let delta = delta_rate(m, DEFAULT_P_TRAP, RadialGrid::production()).delta;
        ok &= gap1 >= delta;
        detail.push(format!("M={m}: gap1 {gap1:.5} vs delta {delta:.4}"));
    }
    let ss = steady_state_cached(0.01, g, &chain_steady_options()).map_err(e)?;
    let g1 = spectral_gap(&ss, 1, 1).map_err(e)?.gap;
    let g0 = spectral_gap(&ss, 0, 1).map_err(e)?.gap;
    ok &= (g1 - 1.0).abs() <= 0.02 && (g0 - 2.0).abs() <= 0.04;
    detail.push(format!("M=0.01: gap1 {g1:.5}, gap0 {g0:.5}"));
    Ok((ok, detail.join("; ")))
}

fn trap_original_variables() -> Outcome {
    let g = RadialGrid::production();
    let ss = steady_state_cached(0.2, g, &chain_steady_options()).map_err(e)?;
    let cfg = EvolutionConfig::new(0.2, InitialProfile::Gaussian { sigma2: 2.0 }, 8.0);
    let rec = run(&cfg, 200, Some(&ss)).map_err(e)?;
    keep("trap M=0.2", &rec);
    let z = z1(0.2, DEFAULT_P_TRAP).map_err(e)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [2.0, f64::INFINITY] {
        let r = lp_decay_from_run(rec.clone(), &ss, p, DEFAULT_P_TRAP).map_err(e)?;
        let this = r.trap_check.passed && r.limit > 0.0 && r.limit_deviation() <= 0.05;
        ok &= this;
        detail.push(format!(
            "p={p}: final {:.5} -> limit {:.5}",
            r.final_value, r.limit
        ));
        if p.is_infinite() {
            detail.push(format!(
                "sup t|u|_inf {:.5} <= z1 {z:.5}",
                r.trap_check.sup_t_u_inf
            ));
        }
    }
    Ok((ok, detail.join("; ")))
}

fn conservation() -> Outcome {
    let runs = RUNS.lock().unwrap();
    if runs.is_empty() {
        return Err("no runs recorded".into());
    }
    let drift = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let rise = runs.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    Ok((
        drift <= 1e-12 && rise <= 1e-9,
        format!(
            "{} runs, max mass drift {drift:.1e}, max energy increase {rise:.1e}",
            runs.len()
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "trap threshold", Duration::from_secs(1), trap_threshold),
        (
            2,
            "harmonic oscillator",
            Duration::from_secs(30),
            oscillator,
        ),
        (
            3,
            "kappa closed form",
            Duration::from_secs(5),
            kappa_agreement,
        ),
        (
            4,
            "steady-state consistency",
            Duration::from_secs(60),
            steady_consistency,
        ),
        (5, "decoupled limit", Duration::from_secs(60), ou_limit),
        (
            7,
            "exponential decay",
            Duration::from_secs(600),
            exponential_decay,
        ),
        (
            8,
            "spectral gap ordering",
            Duration::from_secs(300),
            spectral_ordering,
        ),
        (
            9,
            "trap bound in original variables",
            Duration::from_secs(120),
            trap_original_variables,
        ),
        // Uses the runs above.
        (
            6,
            "conservation and Lyapunov",
            Duration::from_secs(600),
            conservation,
        ),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && elapsed <= budget, d),
            Err(msg) => (false, format!("error: {msg}")),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} criterion {id} ({name}): {detail} [{:.2}s of {}s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
