//! A-priori constants feeding the exponential decay rate.
//!
//! `C1` bounds `||n(tau)||_p` for `t >= 1/2`, `C2` bounds `||grad c||_inf`,
//! `Lambda` is the spectral-gap lower bound maximised over the Gaussian
//! weight parameter `sigma`, `C*` the HLS coupling constant, and the rate is
//! `delta = Lambda (1 - gamma)` with `gamma = (C* + 2 C2) / sqrt(Lambda)`.

use std::f64::consts::PI;
use std::io::Write;

use crate::csvio;
use crate::error::{Error, Result};
use crate::radial_field::RadialGrid;
use crate::steady_state::{steady_state_cached, SteadyOptions, SteadyState};
use crate::trap_constants::{m1, z1};

/// Default Hölder exponent of the trap argument.
pub const DEFAULT_P_TRAP: f64 = 10.0;

/// Exponents over which the gradient bound is minimised.
pub const C2_P_GRID: [f64; 8] = [2.25, 2.5, 3.0, 4.0, 6.0, 10.0, 20.0, 40.0];

const SIGMA_OFFSET: f64 = 1e-6;
const M_STAR_RESOLUTION: f64 = 1e-4;

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// `4^{1-1/p} M^{1/p} z1^{1-1/p}`, valid for original time `t >= 1/2`.
pub fn c1_bound(mass: f64, p_norm: f64, p_trap: f64) -> Result<f64> {
    if p_norm.is_nan() || p_norm < 1.0 {
        return Err(Error::invalid(format!("p_norm must be >= 1, got {p_norm}")));
    }
    let z = z1(mass, p_trap)?;
    let a = 1.0 - inv(p_norm);
    Ok(4f64.powf(a) * mass.powf(inv(p_norm)) * z.powf(a))
}

/// `2 pi ||grad c||_inf <= M + (2 pi (p-1)/(p-2))^{p/(p-1)} ||n||_p`.
fn c2_term(mass: f64, p: f64, lp: f64) -> f64 {
    (mass + (2.0 * PI * (p - 1.0) / (p - 2.0)).powf(p / (p - 1.0)) * lp) / (2.0 * PI)
}

/// Minimum of the gradient bound over `p_grid`, with its minimiser.
pub fn c2_bound_on(mass: f64, p_trap: f64, p_grid: &[f64]) -> Result<(f64, f64)> {
    if p_grid.is_empty() || p_grid.iter().any(|&p| !(p > 2.0 && p.is_finite())) {
        return Err(Error::invalid(
            "gradient-bound exponents must be finite and exceed 2",
        ));
    }
    let mut best = (f64::INFINITY, f64::NAN);
    for &p in p_grid {
        let v = c2_term(mass, p, c1_bound(mass, p, p_trap)?);
        if v < best.0 {
            best = (v, p);
        }
    }
    Ok(best)
}

pub fn c2_bound(mass: f64, p_trap: f64) -> Result<f64> {
    c2_bound_on(mass, p_trap, &C2_P_GRID).map(|b| b.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaGap {
    pub lambda: f64,
    pub sigma_opt: f64,
}

/// `max_{sigma in (1,2)} 2/sigma - 1 - sigma^2 G^2 / (4 (sigma^2 - 1)) - N/2`.
pub fn lambda_from_norms(grad_c_sup: f64, n_sup: f64) -> LambdaGap {
    let g2 = grad_c_sup * grad_c_sup;
    let f = |s: f64| 2.0 / s - 1.0 - s * s * g2 / (4.0 * (s * s - 1.0)) - 0.5 * n_sup;
    let (mut a, mut b) = (1.0 + SIGMA_OFFSET, 2.0 - SIGMA_OFFSET);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-12 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        }
    }
    let mut sigma = 0.5 * (a + b);
    let mut val = f(sigma);
    for edge in [1.0 + SIGMA_OFFSET, 2.0 - SIGMA_OFFSET] {
        if f(edge) > val {
            sigma = edge;
            val = f(edge);
        }
    }
    LambdaGap {
        lambda: val,
        sigma_opt: sigma,
    }
}

pub fn lambda_gap(ss: &SteadyState) -> LambdaGap {
    lambda_from_norms(ss.grad_c_inf_sup, ss.n_inf_sup)
}

/// `(1/sqrt(pi)) M^{1/4} ||n_inf||_2^{1/2} ||n_inf||_inf^{1/4}`.
pub fn c_star_from_norms(mass: f64, l2: f64, sup: f64) -> f64 {
    mass.powf(0.25) * l2.sqrt() * sup.powf(0.25) / PI.sqrt()
}

pub fn c_star(ss: &SteadyState) -> f64 {
    c_star_from_norms(ss.mass, ss.n_inf_l2, ss.n_inf_sup)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub mass: f64,
    pub p_trap: f64,
    /// `C1` at the exponent `c1_p` that minimises `C2`.
    pub c1: f64,
    pub c1_p: f64,
    pub c2: f64,
    pub lambda: f64,
    pub sigma_opt: f64,
    pub c_star: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `Lambda > 0`.
    pub lambda_positive: bool,
    /// `M < M1`, `Lambda > 0` and `gamma < 1`.
    pub valid: bool,
    /// `C1` holds only for `t >= 1/2`; earlier times are not covered.
    pub c1_transient_excluded: bool,
    pub failure: Option<String>,
}

impl GapReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "M",
        "C1",
        "C2",
        "Lambda",
        "sigma_opt",
        "C_star",
        "gamma",
        "delta",
        "valid",
    ];

    pub fn csv_row(&self) -> String {
        let nums = [
            self.mass,
            self.c1,
            self.c2,
            self.lambda,
            self.sigma_opt,
            self.c_star,
            self.gamma,
            self.delta,
        ];
        let mut cells: Vec<String> = nums.iter().map(|&v| csvio::fmt_f64(v)).collect();
        cells.push(self.valid.to_string());
        cells.join(",")
    }

    fn failed(mass: f64, p_trap: f64, reason: String) -> Self {
        Self {
            mass,
            p_trap,
            c1: f64::NAN,
            c1_p: f64::NAN,
            c2: f64::NAN,
            lambda: f64::NAN,
            sigma_opt: f64::NAN,
            c_star: f64::NAN,
            gamma: f64::NAN,
            delta: f64::NAN,
            lambda_positive: false,
            valid: false,
            c1_transient_excluded: true,
            failure: Some(reason),
        }
    }
}

pub fn write_reports_csv<W: Write>(mut out: W, reports: &[GapReport]) -> Result<()> {
    csvio::write_header(&mut out, &GapReport::CSV_HEADER)?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Steady-state options used by the constant chain.
pub fn chain_steady_options() -> SteadyOptions {
    SteadyOptions {
        tol: 1e-12,
        ..SteadyOptions::default()
    }
}

/// Assembles the chain from an already computed steady state. Trap failures
/// are recorded in the report rather than returned.
pub fn gap_report_from(ss: &SteadyState, p_trap: f64) -> GapReport {
    let mass = ss.mass;
    let LambdaGap { lambda, sigma_opt } = lambda_gap(ss);
    let cs = c_star(ss);
    let (c2, c1_p) = match c2_bound_on(mass, p_trap, &C2_P_GRID) {
        Ok(v) => v,
        Err(e) => {
            let mut r = GapReport::failed(mass, p_trap, e.to_string());
            r.lambda = lambda;
            r.sigma_opt = sigma_opt;
            r.c_star = cs;
            r.lambda_positive = lambda > 0.0;
            return r;
        }
    };
    let c1 = c1_bound(mass, c1_p, p_trap).unwrap_or(f64::NAN);
    let gamma = (cs + 2.0 * c2) / lambda.sqrt();
    let delta = if lambda > 0.0 {
        lambda * (1.0 - gamma)
    } else {
        f64::NAN
    };
    let lambda_positive = lambda > 0.0;
    GapReport {
        mass,
        p_trap,
        c1,
        c1_p,
        c2,
        lambda,
        sigma_opt,
        c_star: cs,
        gamma,
        delta,
        lambda_positive,
        valid: mass < m1() && lambda_positive && gamma < 1.0,
        c1_transient_excluded: true,
        failure: None,
    }
}

/// Full chain at mass `M`: steady state, `Lambda`, `C*`, `C1`, `C2`, `gamma`, `delta`.
pub fn delta_rate(mass: f64, p_trap: f64, grid: RadialGrid) -> GapReport {
    match steady_state_cached(mass, grid, &chain_steady_options()) {
        Ok(ss) => gap_report_from(&ss, p_trap),
        Err(e) => GapReport::failed(mass, p_trap, e.to_string()),
    }
}

pub fn delta_sweep(masses: &[f64], p_trap: f64, grid: RadialGrid) -> Vec<GapReport> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        masses
            .par_iter()
            .map(|&m| delta_rate(m, p_trap, grid))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        masses
            .iter()
            .map(|&m| delta_rate(m, p_trap, grid))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MStar {
    pub m_star: f64,
    /// The rate stayed positive all the way up to `M1`.
    pub reached_m1: bool,
    pub evaluations: usize,
}

fn admissible(r: &GapReport) -> bool {
    r.valid && r.delta > 0.0
}

/// Largest `M <= M1` with a valid report and `delta > 0`, by bisection
/// starting from the lower bracket `m_lo` (which must itself be admissible).
pub fn m_star_from(p_trap: f64, grid: RadialGrid, m_lo: f64) -> Result<MStar> {
    let top = m1();
    let mut evaluations = 0;
    let mut eval = |m: f64| {
        evaluations += 1;
        admissible(&delta_rate(m, p_trap, grid))
    };
    if !(m_lo > 0.0 && m_lo < top) {
        return Err(Error::invalid(format!(
            "lower bracket must lie in (0, M1), got {m_lo}"
        )));
    }
    if !eval(m_lo) {
        return Err(Error::Bracketing(format!(
            "delta is not positive at the lower bracket M = {m_lo}"
        )));
    }
    let top_probe = top * (1.0 - 1e-9);
    if eval(top_probe) {
        return Ok(MStar {
            m_star: top,
            reached_m1: true,
            evaluations,
        });
    }
    let (mut lo, mut hi) = (m_lo, top_probe);
    while hi - lo > M_STAR_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if eval(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MStar {
        m_star: lo,
        reached_m1: false,
        evaluations,
    })
}

pub fn m_star(p_trap: f64, grid: RadialGrid) -> Result<MStar> {
    m_star_from(p_trap, grid, 0.01)
}
