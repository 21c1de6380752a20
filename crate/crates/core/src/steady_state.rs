//! Stationary state of the rescaled system for subcritical mass.
//!
//! `n_inf = M e^{c_inf - r^2/2} / int e^{c_inf - r^2/2}` with `c_inf` the log
//! potential of `n_inf`, found by damped fixed-point iteration from the
//! small-mass Gaussian `M e^{-r^2/2} / 2pi`.

use std::f64::consts::PI;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::csvio::{self, Manifest};
use crate::error::{Error, Result};
use crate::potential::{solve_potential_with, LogKernel};
use crate::radial_field::{lp_norm, RadialField, RadialGrid};

/// Critical mass; the stationary state exists only below it.
pub const CRITICAL_MASS: f64 = 8.0 * PI;

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub mass: f64,
    pub n_inf: RadialField,
    pub c_inf: RadialField,
    pub n_inf_sup: f64,
    pub n_inf_l2: f64,
    pub grad_c_inf_sup: f64,
    /// Last sup-norm update of the iteration.
    pub residual: f64,
    pub iterations: usize,
}

impl SteadyState {
    pub fn grid(&self) -> &RadialGrid {
        self.n_inf.grid()
    }

    fn from_fields(
        mass: f64,
        n_inf: RadialField,
        residual: f64,
        iterations: usize,
    ) -> Result<Self> {
        let kernel = LogKernel::new(*n_inf.grid());
        let pot = solve_potential_with(&kernel, &n_inf)?;
        Ok(Self {
            mass,
            n_inf_sup: n_inf.max(),
            n_inf_l2: lp_norm(&n_inf, 2.0)?,
            grad_c_inf_sup: pot.grad_c_inf,
            c_inf: pot.c,
            n_inf,
            residual,
            iterations,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyOptions {
    pub omega: f64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            omega: 0.5,
            tol: 1e-10,
            max_iterations: 20_000,
        }
    }
}

pub fn check_mass(mass: f64) -> Result<()> {
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::invalid(format!("mass must be positive, got {mass}")));
    }
    if mass >= CRITICAL_MASS {
        return Err(Error::SupercriticalMass { mass });
    }
    Ok(())
}

/// One application of `G(n) = M e^{c[n] - r^2/2} / int e^{c[n] - r^2/2}`.
pub fn gibbs_map(kernel: &LogKernel, n: &[f64], mass: f64, out: &mut [f64]) {
    let g = *kernel.grid();
    kernel.apply(n, out);
    let mut shift = f64::NEG_INFINITY;
    for (i, v) in out.iter_mut().enumerate() {
        let r = g.center(i);
        *v -= 0.5 * r * r;
        shift = shift.max(*v);
    }
    let mut z = 0.0;
    for (i, v) in out.iter_mut().enumerate() {
        *v = (*v - shift).exp();
        z += g.weight(i) * *v;
    }
    let scale = mass / z;
    for v in out.iter_mut() {
        *v *= scale;
    }
}

pub fn solve_steady_state(
    mass: f64,
    grid: RadialGrid,
    omega: f64,
    tol: f64,
) -> Result<SteadyState> {
    solve_steady_state_with(
        mass,
        grid,
        &SteadyOptions {
            omega,
            tol,
            ..SteadyOptions::default()
        },
    )
}

pub fn solve_steady_state_with(
    mass: f64,
    grid: RadialGrid,
    opts: &SteadyOptions,
) -> Result<SteadyState> {
    check_mass(mass)?;
    if !(opts.omega > 0.0 && opts.omega <= 1.0) {
        return Err(Error::invalid(format!(
            "damping omega must lie in (0, 1], got {}",
            opts.omega
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    let kernel = LogKernel::new(grid);
    let scale = mass / (2.0 * PI);
    let threshold = opts.tol * scale;
    let mut n: Vec<f64> = (0..grid.n_cells())
        .map(|i| {
            let r = grid.center(i);
            scale * (-0.5 * r * r).exp()
        })
        .collect();
    let mut next = vec![0.0; n.len()];
    let mut trace = Vec::new();
    for it in 1..=opts.max_iterations {
        gibbs_map(&kernel, &n, mass, &mut next);
        let mut delta: f64 = 0.0;
        for (a, &b) in n.iter_mut().zip(&next) {
            let updated = (1.0 - opts.omega) * *a + opts.omega * b;
            delta = delta.max((updated - *a).abs());
            *a = updated;
        }
        if !delta.is_finite() {
            return Err(Error::NotConverged {
                iterations: it,
                residual: delta,
                trace,
            });
        }
        trace.push(delta / scale);
        if delta <= threshold {
            return SteadyState::from_fields(mass, RadialField::new(grid, n)?, delta, it);
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual: trace.last().copied().unwrap_or(f64::NAN) * scale,
        trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BifurcationPoint {
    pub mass: f64,
    pub n_inf_sup: f64,
    pub grad_c_inf_sup: f64,
    pub n_inf_l2: f64,
}

impl From<&SteadyState> for BifurcationPoint {
    fn from(s: &SteadyState) -> Self {
        Self {
            mass: s.mass,
            n_inf_sup: s.n_inf_sup,
            grad_c_inf_sup: s.grad_c_inf_sup,
            n_inf_l2: s.n_inf_l2,
        }
    }
}

/// One entry per mass, in input order; a failing mass does not abort the rest.
pub fn bifurcation_sweep(masses: &[f64], grid: RadialGrid) -> Vec<Result<BifurcationPoint>> {
    bifurcation_sweep_with(masses, grid, &SteadyOptions::default(), None)
}

pub fn bifurcation_sweep_with(
    masses: &[f64],
    grid: RadialGrid,
    opts: &SteadyOptions,
    cache: Option<&SteadyCache>,
) -> Vec<Result<BifurcationPoint>> {
    let solve = |&m: &f64| -> Result<BifurcationPoint> {
        let s = match cache {
            Some(c) => c.get_or_solve(m, grid, opts)?,
            None => solve_steady_state_with(m, grid, opts)?,
        };
        Ok(BifurcationPoint::from(&s))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        masses.par_iter().map(solve).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        masses.iter().map(solve).collect()
    }
}

/// On-disk store of converged steady states keyed by `(M, r_max, n_cells)`.
#[derive(Clone, Debug)]
pub struct SteadyCache {
    dir: PathBuf,
}

impl SteadyCache {
    pub const ENV_VAR: &'static str = "KS_LAB_CACHE_DIR";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(Self::ENV_VAR)
            .filter(|v| !v.is_empty())
            .map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn csv_path(&self, mass: f64, grid: &RadialGrid) -> PathBuf {
        self.dir.join(format!(
            "steady_M{mass}_R{}_N{}.csv",
            grid.r_max(),
            grid.n_cells()
        ))
    }

    pub fn meta_path(&self, mass: f64, grid: &RadialGrid) -> PathBuf {
        self.csv_path(mass, grid).with_extension("meta")
    }

    /// Stores the profile first and the manifest second, so a reader that
    /// finds a manifest also finds a complete profile.
    pub fn store(&self, s: &SteadyState) -> Result<()> {
        let g = *s.grid();
        let mut buf = Vec::new();
        csvio::write_header(&mut buf, &["r", "n_inf", "c_inf"])?;
        for (i, (&n, &c)) in s.n_inf.values().iter().zip(s.c_inf.values()).enumerate() {
            csvio::write_row(&mut buf, &[g.center(i), n, c])?;
        }
        csvio::write_atomic(&self.csv_path(s.mass, &g), &buf)?;
        let mut meta = Manifest::new();
        meta.set("mass", s.mass)
            .set("residual", csvio::fmt_f64(s.residual))
            .set("iterations", s.iterations);
        csvio::write_atomic(&self.meta_path(s.mass, &g), meta.to_text().as_bytes())
    }

    pub fn load(&self, mass: f64, grid: RadialGrid) -> Result<Option<SteadyState>> {
        let meta_path = self.meta_path(mass, &grid);
        let meta = match fs::read_to_string(&meta_path) {
            Ok(text) => Manifest::parse(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let field = |key: &str| -> Result<&str> {
            meta.get(key)
                .ok_or_else(|| Error::Parse(format!("{}: missing {key}=", meta_path.display())))
        };
        let parse_err =
            |e: &dyn std::fmt::Display| Error::Parse(format!("{}: {e}", meta_path.display()));
        let stored_mass: f64 = field("mass")?.parse().map_err(|e| parse_err(&e))?;
        let residual: f64 = field("residual")?.parse().map_err(|e| parse_err(&e))?;
        let iterations: usize = field("iterations")?.parse().map_err(|e| parse_err(&e))?;
        if stored_mass != mass {
            return Err(Error::Parse(format!(
                "{}: stored mass {stored_mass} differs from key {mass}",
                meta_path.display()
            )));
        }
        let file = fs::File::open(self.csv_path(mass, &grid))?;
        let cols = csvio::read_columns(BufReader::new(file), &["r", "n_inf", "c_inf"])?;
        let stored_grid = csvio::grid_from_centers(&cols[0])?;
        if stored_grid.n_cells() != grid.n_cells()
            || (stored_grid.r_max() - grid.r_max()).abs() > 1e-9 * grid.r_max()
        {
            return Err(Error::GridMismatch(format!(
                "cached profile has r_max={} n_cells={}",
                stored_grid.r_max(),
                stored_grid.n_cells()
            )));
        }
        let n_inf = RadialField::new(grid, cols[1].clone())?;
        SteadyState::from_fields(mass, n_inf, residual, iterations).map(Some)
    }

    /// Cached state if its residual already meets `opts.tol`, else solve and store.
    pub fn get_or_solve(
        &self,
        mass: f64,
        grid: RadialGrid,
        opts: &SteadyOptions,
    ) -> Result<SteadyState> {
        check_mass(mass)?;
        if let Some(s) = self.load(mass, grid)? {
            if s.residual <= opts.tol * mass / (2.0 * PI) {
                return Ok(s);
            }
        }
        let s = solve_steady_state_with(mass, grid, opts)?;
        self.store(&s)?;
        Ok(s)
    }
}

/// Solves through the environment-configured cache when one is set.
pub fn steady_state_cached(
    mass: f64,
    grid: RadialGrid,
    opts: &SteadyOptions,
) -> Result<SteadyState> {
    match SteadyCache::from_env() {
        Some(c) => c.get_or_solve(mass, grid, opts),
        None => solve_steady_state_with(mass, grid, opts),
    }
}
