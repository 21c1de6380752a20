mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};

use kslab::csvio::{self, Manifest};
use kslab::evolution::{self, Coupling, EvolutionConfig, InitialProfile};
use kslab::experiments::{self, decay_rate_from_run, lp_decay_from_run};
use kslab::gap_constants::{self, chain_steady_options, gap_report_from, GapReport};
use kslab::linear_spectrum::{self, spectral_gap, SpectrumResult};
use kslab::radial_field::RadialGrid;
use kslab::steady_state::{
    self, steady_state_cached, BifurcationPoint, SteadyCache, SteadyOptions,
};
use kslab::trap_constants::{self, c0, m1, trap_profile, trap_report};

/// Numerical laboratory for the radial parabolic–elliptic Keller–Segel model
/// in self-similar variables.
#[derive(Parser, Debug)]
#[command(name = "ks-lab", version, args_override_self = true)]
struct Cli {
    /// File of `key=value` lines (long flag names, `#` comments); command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for sweeps [default: number of processors].
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve for the self-similar profile and write it with a `.meta` sidecar.
    Steady(SteadyArgs),
    /// Trap constants: M0(p), kappa, C0 and, with --mass, the roots of H.
    Constants(ConstantsArgs),
    /// Spectral-gap chain: Lambda, C*, C1, C2, gamma, delta.
    Gap(GapArgs),
    /// Eigenvalues of the linearised operator per angular mode.
    Spectrum(SpectrumArgs),
    /// Time evolution in self-similar variables.
    Evolve(EvolveArgs),
    /// Fitted decay rate against delta(M), trap bound and L^p decay.
    Rates(RatesArgs),
    /// Sweep of steady-state norms against mass.
    Bifurcation(BifurcationArgs),
}

#[derive(Args, Debug, Clone, Copy)]
struct GridArgs {
    /// Outer radius of the computational domain.
    #[arg(long, default_value_t = RadialGrid::DEFAULT_R_MAX)]
    rmax: f64,
    /// Number of cells.
    #[arg(long, default_value_t = RadialGrid::DEFAULT_N_CELLS)]
    cells: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<RadialGrid> {
        Ok(RadialGrid::new(self.rmax, self.cells)?)
    }
}

#[derive(Args, Debug)]
struct SteadyArgs {
    #[arg(long)]
    mass: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Fixed-point tolerance (relative to M / 2pi).
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Damping of the fixed-point map.
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    #[arg(long, default_value_t = 20000)]
    max_iterations: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConstantsArgs {
    /// Trap exponent (> 4; `inf` allowed).
    #[arg(long, conflicts_with = "p_sweep")]
    p: Option<f64>,
    /// Linear sweep `lo:hi:n` of trap exponents.
    #[arg(long, value_name = "LO:HI:N")]
    p_sweep: Option<String>,
    #[arg(long)]
    mass: Option<f64>,
    /// CSV of `p,sigma,theta,kappa,C0_at_M,M0`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of `z,H` for the trap function (needs --mass and a single --p).
    #[arg(long)]
    profile_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(long, conflicts_with = "mass_sweep")]
    mass: Option<f64>,
    /// Linear sweep `lo:hi:n` of masses.
    #[arg(long, value_name = "LO:HI:N")]
    mass_sweep: Option<String>,
    #[arg(long, default_value_t = gap_constants::DEFAULT_P_TRAP)]
    p_trap: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Also locate the largest mass with a positive certified rate.
    #[arg(long)]
    m_star: bool,
    /// CSV of `M,C1,C2,Lambda,sigma_opt,C_star,gamma,delta,valid`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    mass: f64,
    /// Angular modes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0u32, 1])]
    ell: Vec<u32>,
    /// Eigenvalues reported per mode.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = RadialGrid::DEFAULT_R_MAX)]
    rmax: f64,
    #[arg(long, default_value_t = 500)]
    cells: usize,
    /// CSV of `M,ell,index,eigenvalue`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[arg(long)]
    mass: f64,
    /// gaussian:S2, annulus:R0,WIDTH, steady_perturbation:A or steady.
    #[arg(long, default_value = "gaussian:2")]
    init: InitialProfile,
    #[arg(long, default_value_t = 8.0)]
    tau_end: f64,
    /// Time step [default: min(1e-3, half the CFL bound)].
    #[arg(long)]
    dt: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    /// Drop the Poisson coupling (linear Fokker–Planck flow).
    #[arg(long)]
    no_coupling: bool,
    /// Record a sample every this many steps [default: every 0.05 in tau].
    #[arg(long)]
    sample_every: Option<usize>,
    /// Output directory for `evolve.csv` and `evolve.manifest`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[arg(long)]
    mass: f64,
    #[arg(long, default_value = "gaussian:2")]
    init: InitialProfile,
    #[arg(long, default_value_t = 8.0)]
    tau_end: f64,
    #[arg(long, default_value_t = gap_constants::DEFAULT_P_TRAP)]
    p_trap: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Output directory for `rates.csv` and `rates.manifest`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BifurcationArgs {
    /// Masses, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "mass_sweep")]
    masses: Vec<f64>,
    /// Linear sweep `lo:hi:n` of masses.
    #[arg(long, value_name = "LO:HI:N")]
    mass_sweep: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    /// CSV of `M,n_inf_sup,grad_c_inf_sup,n_inf_l2`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Raised when the numbers were computed but a guaranteed check failed.
#[derive(Debug)]
struct AcceptanceFailure(String);

impl std::fmt::Display for AcceptanceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AcceptanceFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    kslab::Error::InvalidInput(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<AcceptanceFailure>().is_some() {
        return 4;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<kslab::Error>() {
            return if e.is_input_error() { 2 } else { 3 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    2
}

fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(usage(format!("sweep {spec:?} must be LO:HI:N")));
    };
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad sweep start {lo:?}")))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad sweep end {hi:?}")))?;
    let n: usize = n
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad sweep count {n:?}")))?;
    if n == 0 || !(lo.is_finite() && hi.is_finite()) || (n > 1 && hi < lo) {
        return Err(usage(format!(
            "sweep {spec:?} needs finite LO <= HI and N >= 1"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn kv(key: &str, value: impl std::fmt::Display) {
    println!("{key}={value}");
}

fn cmd_steady(a: &SteadyArgs) -> Result<()> {
    let grid = a.grid.grid()?;
    let opts = SteadyOptions {
        omega: a.omega,
        tol: a.tol,
        max_iterations: a.max_iterations,
    };
    steady_state::check_mass(a.mass)?;
    let s = steady_state_cached(a.mass, grid, &opts)?;
    let out = SteadyCache::new(&a.out);
    std::fs::create_dir_all(&a.out)?;
    out.store(&s)?;
    kv("M", s.mass);
    kv("n_inf_sup", csvio::fmt_f64(s.n_inf_sup));
    kv("grad_c_inf_sup", csvio::fmt_f64(s.grad_c_inf_sup));
    kv("n_inf_l2", csvio::fmt_f64(s.n_inf_l2));
    kv("residual", csvio::fmt_f64(s.residual));
    kv("iterations", s.iterations);
    kv("csv", out.csv_path(s.mass, &grid).display());
    Ok(())
}

fn cmd_constants(a: &ConstantsArgs) -> Result<()> {
    let ps = match (&a.p, &a.p_sweep) {
        (Some(p), None) => vec![*p],
        (None, Some(s)) => parse_sweep(s)?,
        _ => return Err(usage("give exactly one of --p or --p-sweep")),
    };
    let mut rows = Vec::new();
    for &p in &ps {
        let rep = trap_report(p, a.mass)?;
        // Without a mass, C0 is reported at the threshold M0(p).
        let c0_at = c0(a.mass.unwrap_or(rep.m0), p)?;
        if ps.len() == 1 {
            kv("p", p);
            kv("sigma", rep.sigma);
            kv("theta", rep.theta);
            kv("kappa", rep.kappa_sigma);
            kv("C_HLS", rep.c_hls);
            kv("M0", rep.m0);
            kv("C0_at_M", c0_at);
            if let (Some(m), Some(r)) = (rep.mass, rep.roots) {
                kv("M", m);
                kv("z0", r.z0);
                kv("H_z0", r.h_at_z0);
                match r.z1 {
                    Some(z) => {
                        kv("z1", z);
                        kv("H_z1", trap_constants::trap_function(z, m, p)?);
                    }
                    None => {
                        eprintln!("warning: M = {m} is above M0(p); the trap does not close");
                        kv("z1", "none");
                    }
                }
                kv(
                    "z2",
                    r.z2.map(|z| z.to_string()).unwrap_or_else(|| "none".into()),
                );
            }
        } else {
            println!("p={p} M0={} kappa={}", rep.m0, rep.kappa_sigma);
        }
        rows.push([p, rep.sigma, rep.theta, rep.kappa_sigma, c0_at, rep.m0]);
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        csvio::write_header(&mut w, &["p", "sigma", "theta", "kappa", "C0_at_M", "M0"])?;
        for r in &rows {
            csvio::write_row(&mut w, r)?;
        }
        w.flush()?;
    }
    if let Some(path) = &a.profile_out {
        let (Some(m), [p]) = (a.mass, ps.as_slice()) else {
            return Err(usage("--profile-out needs --mass and a single --p"));
        };
        let roots = trap_constants::trap_roots(m, *p)?;
        let z_hi = roots.z1.map(|z| 4.0 * z).unwrap_or(2.0 * roots.z0);
        let mut w = create(path)?;
        csvio::write_header(&mut w, &["z", "H"])?;
        for (z, h) in trap_profile(m, *p, z_hi, 400)? {
            csvio::write_row(&mut w, &[z, h])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn report_for(mass: f64, p_trap: f64, grid: RadialGrid) -> Result<GapReport> {
    let ss = steady_state_cached(mass, grid, &chain_steady_options())?;
    Ok(gap_report_from(&ss, p_trap))
}

fn cmd_gap(a: &GapArgs) -> Result<()> {
    let grid = a.grid.grid()?;
    let masses = match (&a.mass, &a.mass_sweep) {
        (Some(m), None) => vec![*m],
        (None, Some(s)) => parse_sweep(s)?,
        (None, None) if a.m_star => Vec::new(),
        _ => return Err(usage("give exactly one of --mass or --mass-sweep")),
    };
    trap_constants::TrapExponents::new(a.p_trap)?;
    let reports = {
        use rayon::prelude::*;
        masses
            .par_iter()
            .map(|&m| report_for(m, a.p_trap, grid))
            .collect::<Result<Vec<_>>>()?
    };
    for r in &reports {
        println!(
            "M={} C1={} C2={} Lambda={} sigma_opt={} C_star={} gamma={} delta={} valid={}",
            r.mass, r.c1, r.c2, r.lambda, r.sigma_opt, r.c_star, r.gamma, r.delta, r.valid
        );
        if let Some(f) = &r.failure {
            eprintln!("warning: M = {}: {f}", r.mass);
        }
    }
    if a.m_star {
        let s = gap_constants::m_star(a.p_trap, grid)?;
        kv("M_star", s.m_star);
        kv("M_star_reached_M1", s.reached_m1);
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        gap_constants::write_reports_csv(&mut w, &reports)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<()> {
    let grid = RadialGrid::new(a.rmax, a.cells)?;
    if a.cells > linear_spectrum::MAX_DENSE_CELLS {
        return Err(usage(format!(
            "--cells {} exceeds the dense eigensolver limit {}",
            a.cells,
            linear_spectrum::MAX_DENSE_CELLS
        )));
    }
    if a.ell.is_empty() {
        return Err(usage("--ell needs at least one mode"));
    }
    let ss = steady_state_cached(a.mass, grid, &chain_steady_options())?;
    let results = {
        use rayon::prelude::*;
        a.ell
            .par_iter()
            .map(|&l| spectral_gap(&ss, l, a.k))
            .collect::<kslab::Result<Vec<SpectrumResult>>>()?
    };
    for r in &results {
        if results.len() == 1 {
            kv("gap", r.gap);
        }
        kv(&format!("gap_ell{}", r.ell), r.gap);
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        linear_spectrum::write_spectra_csv(&mut w, &results)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_evolve(a: &EvolveArgs) -> Result<()> {
    let mut cfg = EvolutionConfig::new(a.mass, a.init, a.tau_end);
    cfg.grid = a.grid.grid()?;
    cfg.dt = a.dt;
    if a.no_coupling {
        cfg.coupling = Coupling::Disabled;
        if a.init.needs_steady_state() {
            return Err(usage("steady-state initial data needs the coupling"));
        }
    }
    cfg.validate()?;
    let reference = if cfg.coupling == Coupling::Full {
        Some(steady_state_cached(
            a.mass,
            cfg.grid,
            &chain_steady_options(),
        )?)
    } else {
        None
    };
    let every = match a.sample_every {
        Some(0) => return Err(usage("--sample-every must be positive")),
        Some(k) => k,
        None => {
            let n0 = evolution::initial_state(&cfg, reference.as_ref())?.n;
            let dt = cfg
                .dt
                .unwrap_or_else(|| evolution::Evolver::new(cfg.grid, cfg.coupling).default_dt(&n0));
            ((experiments::SAMPLE_DTAU / dt).round() as usize).max(1)
        }
    };
    let rec = evolution::run(&cfg, every, reference.as_ref())?;
    let mut man = experiments::run_manifest(&rec);
    let conserved = rec.max_mass_drift <= 1e-12;
    let dissipative = rec.max_energy_increase <= 1e-9;
    let positive = rec.min_value >= 0.0;
    man.set("min_value", csvio::fmt_f64(rec.min_value))
        .set("pass", conserved && dissipative && positive);
    let (csv, manifest) = experiments::write_artifacts(&a.out, "evolve", &rec, &man)?;
    let last = rec.samples.last().expect("runs record samples");
    kv("steps", rec.steps);
    kv("dt", rec.dt);
    kv("final_free_energy", csvio::fmt_f64(last.free_energy));
    kv("final_weighted_error", csvio::fmt_f64(last.weighted_error));
    kv("max_mass_drift", csvio::fmt_f64(rec.max_mass_drift));
    kv(
        "max_energy_increase",
        csvio::fmt_f64(rec.max_energy_increase),
    );
    kv("csv", csv.display());
    kv("manifest", manifest.display());
    if !(conserved && dissipative && positive) {
        return Err(AcceptanceFailure(format!(
            "run postconditions failed: mass drift {:e}, energy increase {:e}, min value {:e}",
            rec.max_mass_drift, rec.max_energy_increase, rec.min_value
        ))
        .into());
    }
    Ok(())
}

fn cmd_rates(a: &RatesArgs) -> Result<()> {
    let grid = a.grid.grid()?;
    let mut cfg = EvolutionConfig::new(a.mass, a.init, a.tau_end);
    cfg.grid = grid;
    cfg.validate()?;
    trap_constants::TrapExponents::new(a.p_trap)?;
    let top = m1();
    if a.mass >= top {
        eprintln!(
            "warning: M = {} is not below M1 = {top:.6}; running in observational mode",
            a.mass
        );
    }
    let ss = steady_state_cached(a.mass, grid, &chain_steady_options())?;
    let gap = gap_report_from(&ss, a.p_trap);
    let n0 = evolution::initial_state(&cfg, Some(&ss))?.n;
    let dt = evolution::Evolver::new(grid, cfg.coupling).default_dt(&n0);
    let every = ((experiments::SAMPLE_DTAU / dt).round() as usize).max(1);
    let run = evolution::run(&cfg, every, Some(&ss))?;
    let rec = decay_rate_from_run(run, gap)?;
    let guaranteed = rec.guaranteed && a.mass < top;
    if !guaranteed && a.mass < top {
        eprintln!(
            "warning: delta(M) is not certified at M = {}; running in observational mode",
            a.mass
        );
    }
    let mut man: Manifest = rec.manifest();
    man.set("guaranteed", guaranteed);
    let mut trap_ok = true;
    if a.mass < top {
        for p in [2.0, f64::INFINITY] {
            match lp_decay_from_run(rec.run.clone(), &ss, p, a.p_trap) {
                Ok(lp) => {
                    let tag = if p.is_infinite() {
                        "inf".to_string()
                    } else {
                        p.to_string()
                    };
                    man.set(
                        &format!("lp{tag}_measured_sup"),
                        csvio::fmt_f64(lp.measured_sup),
                    )
                    .set(
                        &format!("lp{tag}_theoretical"),
                        csvio::fmt_f64(lp.theoretical),
                    )
                    .set(&format!("lp{tag}_limit"), csvio::fmt_f64(lp.limit));
                    if p.is_infinite() {
                        man.set("sup_t_u_inf", csvio::fmt_f64(lp.trap_check.sup_t_u_inf))
                            .set("z1", csvio::fmt_f64(lp.trap_check.z1))
                            .set("trap_pass", lp.trap_check.passed);
                        trap_ok = lp.trap_check.passed;
                    }
                }
                Err(e) => eprintln!("warning: L^p decay check skipped: {e}"),
            }
        }
    }
    let (csv, manifest) = experiments::write_artifacts(&a.out, "rates", &rec.run, &man)?;
    kv("fitted_rate", man.get("fitted_rate").unwrap_or("skipped"));
    kv("delta_bound", rec.gap.delta);
    kv("pass", rec.pass);
    kv("guaranteed", guaranteed);
    kv("csv", csv.display());
    kv("manifest", manifest.display());
    if guaranteed && !(rec.pass && trap_ok) {
        return Err(AcceptanceFailure(format!(
            "guaranteed configuration failed its checks (pass = {}, trap = {trap_ok})",
            rec.pass
        ))
        .into());
    }
    Ok(())
}

fn cmd_bifurcation(a: &BifurcationArgs) -> Result<()> {
    let grid = a.grid.grid()?;
    let masses = match (&a.mass_sweep, a.masses.is_empty()) {
        (Some(s), true) => parse_sweep(s)?,
        (None, false) => a.masses.clone(),
        _ => return Err(usage("give --masses or --mass-sweep")),
    };
    for &m in &masses {
        steady_state::check_mass(m)?;
    }
    let cache = SteadyCache::from_env();
    let points = steady_state::bifurcation_sweep_with(
        &masses,
        grid,
        &SteadyOptions::default(),
        cache.as_ref(),
    );
    let points: Vec<BifurcationPoint> = points.into_iter().collect::<kslab::Result<_>>()?;
    for p in &points {
        println!(
            "M={} n_inf_sup={} grad_c_inf_sup={} n_inf_l2={}",
            p.mass, p.n_inf_sup, p.grad_c_inf_sup, p.n_inf_l2
        );
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        csvio::write_header(&mut w, &["M", "n_inf_sup", "grad_c_inf_sup", "n_inf_l2"])?;
        for p in &points {
            csvio::write_row(&mut w, &[p.mass, p.n_inf_sup, p.grad_c_inf_sup, p.n_inf_l2])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run(args: Vec<OsString>) -> Result<()> {
    let args = config::splice(args, &Cli::command()).map_err(|e| usage(format!("{e:#}")))?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Cmd::Steady(a) => cmd_steady(a),
        Cmd::Constants(a) => cmd_constants(a),
        Cmd::Gap(a) => cmd_gap(a),
        Cmd::Spectrum(a) => cmd_spectrum(a),
        Cmd::Evolve(a) => cmd_evolve(a),
        Cmd::Rates(a) => cmd_rates(a),
        Cmd::Bifurcation(a) => cmd_bifurcation(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
