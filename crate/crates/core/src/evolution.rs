//! Radial finite-volume solver for the rescaled system
//! `d_tau n = div(grad n - n grad(c - |x|^2/2))`, `c = -(1/2pi) log * n`.
//!
//! Face fluxes are Scharfetter–Gummel with the potential `Phi = c - r^2/2`
//! frozen at the start of each step and the density taken at the new time
//! level. The step matrix is a tridiagonal M-matrix whose column sums equal
//! the cell areas over `dt`, so every step is positivity preserving and
//! conserves mass by telescoping. Densities of the form `e^Phi` carry zero
//! flux, which makes the fixed point of the steady-state iteration an exact
//! discrete steady state.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::csvio;
use crate::error::{Error, Result};
use crate::potential::LogKernel;
use crate::radial_field::{
    integrate, lp_norm, weighted_l2_error, RadialField, RadialGrid, WeightKind,
};
use crate::steady_state::{check_mass, SteadyState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    Full,
    /// `c = 0`: the Fokker–Planck equation with exact Gaussian relaxation.
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialProfile {
    /// Centred Gaussian with variance parameter `sigma2`.
    Gaussian { sigma2: f64 },
    /// `exp(-(r - r0)^2 / (2 width^2))`.
    Annulus { r0: f64, width: f64 },
    /// `n_inf (1 + a (2 e^{-r^2/2} - 1))`, needs `|a| < 1`.
    SteadyPerturbation { amplitude: f64 },
}

impl fmt::Display for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { sigma2 } => write!(f, "gaussian:{sigma2}"),
            Self::Annulus { r0, width } => write!(f, "annulus:{r0},{width}"),
            Self::SteadyPerturbation { amplitude } => write!(f, "steady_perturbation:{amplitude}"),
        }
    }
}

impl FromStr for InitialProfile {
    type Err = Error;

    /// `gaussian:S2`, `annulus:R0,WIDTH`, `steady_perturbation:A` or `steady`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(format!("initial profile {s:?}: {e}")))
                })
                .collect::<Result<_>>()?
        };
        let profile = match (name.trim(), nums.as_slice()) {
            ("gaussian", [s2]) => Self::Gaussian { sigma2: *s2 },
            ("annulus", [r0, w]) => Self::Annulus { r0: *r0, width: *w },
            ("steady_perturbation", [a]) => Self::SteadyPerturbation { amplitude: *a },
            ("steady", []) => Self::SteadyPerturbation { amplitude: 0.0 },
            _ => {
                return Err(Error::invalid(format!(
                    "unknown initial profile {s:?}; expected gaussian:S2, annulus:R0,WIDTH, steady_perturbation:A or steady"
                )))
            }
        };
        profile.validate()?;
        Ok(profile)
    }
}

impl InitialProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Gaussian { sigma2 } => sigma2.is_finite() && sigma2 > 0.0,
            Self::Annulus { r0, width } => {
                r0.is_finite() && r0 >= 0.0 && width.is_finite() && width > 0.0
            }
            Self::SteadyPerturbation { amplitude } => amplitude.abs() < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid initial profile parameters: {self}"
            )))
        }
    }

    pub fn needs_steady_state(&self) -> bool {
        matches!(self, Self::SteadyPerturbation { .. })
    }

    /// Density on `grid`, renormalised so its discrete mass is exactly `mass`.
    pub fn build(
        &self,
        mass: f64,
        grid: RadialGrid,
        steady: Option<&SteadyState>,
    ) -> Result<RadialField> {
        self.validate()?;
        let raw = match *self {
            Self::Gaussian { sigma2 } => {
                RadialField::from_fn(grid, |r| (-0.5 * r * r / sigma2).exp())
            }
            Self::Annulus { r0, width } => {
                RadialField::from_fn(grid, |r| (-0.5 * ((r - r0) / width).powi(2)).exp())
            }
            Self::SteadyPerturbation { amplitude } => {
                let s = steady.ok_or_else(|| {
                    Error::invalid("steady_perturbation needs a steady state reference")
                })?;
                grid.check_same(s.grid())?;
                let mut f = s.n_inf.clone();
                for (i, v) in f.values_mut().iter_mut().enumerate() {
                    let r = grid.center(i);
                    *v *= 1.0 + amplitude * (2.0 * (-0.5 * r * r).exp() - 1.0);
                }
                f
            }
        };
        let total = integrate(&raw);
        if !(total > 0.0) {
            return Err(Error::invalid(format!(
                "initial profile {self} has no mass on the grid"
            )));
        }
        Ok(raw.scaled(mass / total))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub mass: f64,
    pub initial: InitialProfile,
    /// `None` selects `min(1e-3, 0.5 dt_cfl)` from the initial state.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub grid: RadialGrid,
    pub coupling: Coupling,
}

impl EvolutionConfig {
    pub fn new(mass: f64, initial: InitialProfile, t_end: f64) -> Self {
        Self {
            mass,
            initial,
            dt: None,
            t_end,
            grid: RadialGrid::production(),
            coupling: Coupling::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.coupling {
            Coupling::Full => check_mass(self.mass)?,
            Coupling::Disabled => {
                if !(self.mass.is_finite() && self.mass > 0.0) {
                    return Err(Error::invalid(format!(
                        "mass must be positive, got {}",
                        self.mass
                    )));
                }
            }
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(format!("dt must be positive, got {dt}")));
            }
        }
        self.initial.validate()
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub tau: f64,
    pub n: RadialField,
}

/// `B(x) = x / (e^x - 1)`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

/// Time stepper with per-grid tables and scratch buffers.
#[derive(Clone, Debug)]
pub struct Evolver {
    grid: RadialGrid,
    coupling: Coupling,
    kernel: LogKernel,
    phi: Vec<f64>,
    c: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
}

impl Evolver {
    pub fn new(grid: RadialGrid, coupling: Coupling) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            coupling,
            kernel: LogKernel::new(grid),
            phi: vec![0.0; n],
            c: vec![0.0; n],
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    /// Fills `c` and `Phi = c - r^2/2` for density `n`.
    fn refresh_potential(&mut self, n: &[f64]) {
        match self.coupling {
            Coupling::Full => self.kernel.apply(n, &mut self.c),
            Coupling::Disabled => self.c.iter_mut().for_each(|v| *v = 0.0),
        }
        for (i, (p, c)) in self.phi.iter_mut().zip(&self.c).enumerate() {
            let r = self.grid.center(i);
            *p = c - 0.5 * r * r;
        }
    }

    /// `h / max_f |U_f|` with `U = d_r c - r` at the faces.
    pub fn dt_cfl(&self, n: &RadialField) -> f64 {
        let g = &self.grid;
        let mut m = 0.0;
        let mut u_max: f64 = 0.0;
        for f in 1..=g.n_cells() {
            m += g.weight(f - 1) * n.values()[f - 1];
            let rf = g.face(f);
            let dc = match self.coupling {
                Coupling::Full => -m / (2.0 * PI * rf),
                Coupling::Disabled => 0.0,
            };
            u_max = u_max.max((dc - rf).abs());
        }
        g.h() / u_max
    }

    pub fn default_dt(&self, n: &RadialField) -> f64 {
        (0.5 * self.dt_cfl(n)).min(1e-3)
    }

    /// Free energy `sum_i w_i [n log n + r^2 n / 2 - n c / 2]`, with `0 log 0 = 0`.
    pub fn free_energy(&mut self, n: &RadialField) -> f64 {
        self.refresh_potential(n.values());
        self.energy_with_current_potential(n.values())
    }

    fn energy_with_current_potential(&self, n: &[f64]) -> f64 {
        let g = &self.grid;
        n.iter()
            .enumerate()
            .map(|(i, &v)| {
                let r = g.center(i);
                let entropy = if v > 0.0 { v * v.ln() } else { 0.0 };
                g.weight(i) * (entropy + 0.5 * r * r * v - 0.5 * v * self.c[i])
            })
            .sum()
    }

    /// Advances one step; returns the new state and the free energy of the old one.
    fn advance(&mut self, state: &EvolutionState, dt: f64) -> Result<(EvolutionState, f64)> {
        let g = self.grid;
        state.n.grid().check_same(&g)?;
        let dt_cfl = self.dt_cfl(&state.n);
        if dt > dt_cfl * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, dt_cfl });
        }
        let n_old = state.n.values();
        self.refresh_potential(n_old);
        let energy = self.energy_with_current_potential(n_old);
        let len = g.n_cells();
        let h = g.h();
        for i in 0..len {
            self.diag[i] = g.weight(i) / dt;
            self.lower[i] = 0.0;
            self.upper[i] = 0.0;
            self.rhs[i] = g.weight(i) / dt * n_old[i];
        }
        // Interior face f separates cells f-1 and f; flux out of cell f-1 is
        // a_f [B(x) n_f - B(-x) n_{f-1}].
        for f in 1..len {
            let a = 2.0 * PI * g.face(f) / h;
            let x = self.phi[f] - self.phi[f - 1];
            let bp = a * bernoulli(x);
            let bm = a * bernoulli(-x);
            self.diag[f - 1] += bm;
            self.upper[f - 1] = -bp;
            self.diag[f] += bp;
            self.lower[f] = -bm;
        }
        let mut next = vec![0.0; len];
        solve_tridiagonal(
            &self.lower,
            &mut self.diag,
            &self.upper,
            &mut self.rhs,
            &mut next,
        );
        let tau = state.tau + dt;
        let floor = -1e-14 * integrate(&state.n) / (2.0 * PI);
        if let Some((i, &v)) = next
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < floor)
        {
            return Err(Error::SchemeFailure {
                tau,
                reason: format!("cell {i} has value {v:e}"),
            });
        }
        Ok((
            EvolutionState {
                tau,
                n: RadialField::new(g, next)?,
            },
            energy,
        ))
    }

    pub fn step(&mut self, state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
        self.advance(state, dt).map(|(s, _)| s)
    }
}

/// Thomas algorithm; `diag` and `rhs` are overwritten.
fn solve_tridiagonal(
    lower: &[f64],
    diag: &mut [f64],
    upper: &[f64],
    rhs: &mut [f64],
    out: &mut [f64],
) {
    let n = diag.len();
    for i in 1..n {
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = (rhs[i] - upper[i] * out[i + 1]) / diag[i];
    }
}

/// Original-variable view `u(x, t) = R^{-2} n(x / R, tau)`, `R = e^tau`.
#[derive(Clone, Debug)]
pub struct OriginalVariables {
    pub t: f64,
    pub r_scale: f64,
    /// On the stretched grid with centres `R r_i`.
    pub u: RadialField,
}

impl OriginalVariables {
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(&self.u, p)
    }
}

/// `t = (e^{2 tau} - 1) / 2`.
pub fn original_time(tau: f64) -> f64 {
    0.5 * (2.0 * tau).exp_m1()
}

pub fn to_original_variables(state: &EvolutionState) -> Result<OriginalVariables> {
    if !(state.tau >= 0.0) {
        return Err(Error::invalid(format!(
            "tau must be nonnegative, got {}",
            state.tau
        )));
    }
    let r_scale = state.tau.exp();
    let g = state.n.grid();
    let stretched = RadialGrid::new(g.r_max() * r_scale, g.n_cells())?;
    let inv = 1.0 / (r_scale * r_scale);
    let u = RadialField::new(
        stretched,
        state.n.values().iter().map(|v| v * inv).collect(),
    )?;
    Ok(OriginalVariables {
        t: original_time(state.tau),
        r_scale,
        u,
    })
}

/// Exact Fokker–Planck relaxation of a Gaussian: `sigma^2(tau) = 1 + (sigma0^2 - 1) e^{-2 tau}`.
pub fn ou_gaussian(mass: f64, sigma2_0: f64, tau: f64, grid: RadialGrid) -> RadialField {
    let s2 = 1.0 + (sigma2_0 - 1.0) * (-2.0 * tau).exp();
    RadialField::from_fn(grid, |r| mass * (-0.5 * r * r / s2).exp() / (2.0 * PI * s2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub tau: f64,
    pub t_original: f64,
    pub mass: f64,
    pub free_energy: f64,
    /// `int (n - n_inf)^2 / n_inf`; NaN without a reference.
    pub weighted_error: f64,
    pub linf_n: f64,
    pub l2_n: f64,
    pub l3_n: f64,
    pub grad_c_inf: f64,
    /// `t ||u(t)||_inf = t / (1 + 2t) ||n||_inf`.
    pub linf_u_times_t: f64,
}

impl Sample {
    /// `t^{1 - 1/p} ||u(t)||_p` from the rescaled norm.
    pub fn decay_weighted_u_norm(&self, p: f64, lp_n: f64) -> f64 {
        let inv = if p.is_infinite() { 0.0 } else { 1.0 / p };
        let ratio = if self.tau == 0.0 {
            0.0
        } else {
            self.t_original / (2.0 * self.t_original + 1.0)
        };
        ratio.powf(1.0 - inv) * lp_n
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: EvolutionConfig,
    /// Step actually used; divides `t_end` exactly.
    pub dt: f64,
    pub steps: usize,
    pub samples: Vec<Sample>,
    pub final_state: EvolutionState,
    /// `max_k |mass_k - M| / M` over every step.
    pub max_mass_drift: f64,
    /// `max_k (F_{k+1} - F_k)`, positive only if the energy ever rose.
    pub max_energy_increase: f64,
    pub min_value: f64,
}

impl RunRecord {
    pub const CSV_HEADER: [&'static str; 8] = [
        "tau",
        "t_original",
        "mass",
        "free_energy",
        "weighted_error",
        "linf_n",
        "l2_n",
        "linf_u_times_t",
    ];

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        csvio::write_header(&mut out, &Self::CSV_HEADER)?;
        for s in &self.samples {
            csvio::write_row(
                &mut out,
                &[
                    s.tau,
                    s.t_original,
                    s.mass,
                    s.free_energy,
                    s.weighted_error,
                    s.linf_n,
                    s.l2_n,
                    s.linf_u_times_t,
                ],
            )?;
        }
        Ok(())
    }
}

fn sample(
    evolver: &mut Evolver,
    state: &EvolutionState,
    reference: Option<&SteadyState>,
) -> Result<Sample> {
    let n = &state.n;
    let free_energy = evolver.free_energy(n);
    let weighted_error = match reference {
        Some(s) => weighted_l2_error(n, &s.n_inf, WeightKind::InvSteady(&s.n_inf))?,
        None => f64::NAN,
    };
    let mass = integrate(n);
    let grad_c_inf = match evolver.coupling {
        Coupling::Full => {
            let g = n.grid();
            let mut m = 0.0;
            let mut sup: f64 = 0.0;
            for (i, v) in n.values().iter().enumerate() {
                m += g.weight(i) * v;
                sup = sup.max(m / (2.0 * PI * g.face(i + 1)));
            }
            sup
        }
        Coupling::Disabled => 0.0,
    };
    let t = original_time(state.tau);
    let linf_n = n.max();
    Ok(Sample {
        tau: state.tau,
        t_original: t,
        mass,
        free_energy,
        weighted_error,
        linf_n,
        l2_n: lp_norm(n, 2.0)?,
        l3_n: lp_norm(n, 3.0)?,
        grad_c_inf,
        linf_u_times_t: t / (1.0 + 2.0 * t) * linf_n,
    })
}

pub fn initial_state(
    config: &EvolutionConfig,
    steady: Option<&SteadyState>,
) -> Result<EvolutionState> {
    config.validate()?;
    Ok(EvolutionState {
        tau: 0.0,
        n: config.initial.build(config.mass, config.grid, steady)?,
    })
}

/// Runs to `t_end`, sampling every `sample_every` steps and at the end.
/// `reference` supplies `n_inf` for the weighted error and for
/// steady-perturbation initial data.
pub fn run(
    config: &EvolutionConfig,
    sample_every: usize,
    reference: Option<&SteadyState>,
) -> Result<RunRecord> {
    if sample_every == 0 {
        return Err(Error::invalid("sample_every must be positive"));
    }
    let mut state = initial_state(config, reference)?;
    if let Some(s) = reference {
        config.grid.check_same(s.grid())?;
    }
    let mut evolver = Evolver::new(config.grid, config.coupling);
    let dt_req = match config.dt {
        Some(dt) => dt,
        None => evolver.default_dt(&state.n),
    };
    let steps = ((config.t_end / dt_req) - 1e-9).ceil().max(1.0) as usize;
    let dt = config.t_end / steps as f64;
    let mass0 = config.mass;
    let mut samples = vec![sample(&mut evolver, &state, reference)?];
    let mut max_mass_drift: f64 = 0.0;
    let mut max_energy_increase = f64::NEG_INFINITY;
    let mut min_value = state.n.min();
    let mut prev_energy: Option<f64> = None;
    for k in 1..=steps {
        let (mut next, energy) = evolver.advance(&state, dt).map_err(|e| match e {
            Error::SchemeFailure { .. } | Error::CflViolation { .. } => e,
            other => Error::SchemeFailure {
                tau: state.tau,
                reason: other.to_string(),
            },
        })?;
        next.tau = k as f64 * dt;
        if let Some(p) = prev_energy {
            max_energy_increase = max_energy_increase.max(energy - p);
        }
        prev_energy = Some(energy);
        max_mass_drift = max_mass_drift.max((integrate(&next.n) - mass0).abs() / mass0);
        min_value = min_value.min(next.n.min());
        state = next;
        if k % sample_every == 0 || k == steps {
            samples.push(sample(&mut evolver, &state, reference)?);
        }
    }
    let last_energy = samples.last().map(|s| s.free_energy).unwrap_or(f64::NAN);
    if let Some(p) = prev_energy {
        max_energy_increase = max_energy_increase.max(last_energy - p);
    }
    Ok(RunRecord {
        config: config.clone(),
        dt,
        steps,
        samples,
        final_state: state,
        max_mass_drift,
        max_energy_increase,
        min_value,
    })
}
