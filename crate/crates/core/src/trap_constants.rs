//! Explicit constants of the trap argument for `t ||u(t)||_inf`.
//!
//! With Hölder exponent `p > 4`, the HLS pair `(r, q) = (4/3, 4)` and the
//! heat-kernel gradient exponent `sigma = 4p / (3p - 4)`, the quantity
//! `psi(t) = sup_s 2s ||u(2s)||_inf` satisfies `H(psi, M) <= 0` with
//! `H(z, M) = z - C0 z^theta - M / 2pi`. Whenever `H` has a positive maximum the
//! continuous `psi`, starting at zero, is trapped below the smaller root `z1`.
//!
//! `p = f64::INFINITY` is accepted everywhere and evaluates the limiting
//! exponents `sigma = 4/3`, `theta = 5/4`.

use std::f64::consts::PI;

use libm::tgamma as gamma;

use crate::error::{Error, Result};

/// Sharp HLS constant for the conjugate pair `(4/3, 4)`: `2 sqrt(pi)`.
pub fn c_hls() -> f64 {
    2.0 * PI.sqrt()
}

/// Lebesgue exponent of the Riesz-potential HLS input.
pub const R_HLS: f64 = 4.0 / 3.0;

const ROOT_TOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-8;

/// Exponent bookkeeping for a Hölder exponent `p` in `(4, inf]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrapExponents {
    pub p: f64,
    pub inv_p: f64,
    pub sigma: f64,
    pub theta: f64,
}

impl TrapExponents {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p <= 4.0 {
            return Err(Error::invalid(format!(
                "trap exponent p must exceed 4, got {p}"
            )));
        }
        let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
        Ok(Self {
            p,
            inv_p,
            sigma: 4.0 / (3.0 - 4.0 * inv_p),
            theta: 1.25 - inv_p,
        })
    }

    /// `1/p + 1/r`, the power of `M` in `C0`.
    pub fn mass_power(&self) -> f64 {
        self.inv_p + 1.0 / R_HLS
    }

    /// `sigma / (2 - sigma)`, the value of the Duhamel time integral.
    pub fn time_factor(&self) -> f64 {
        self.sigma / (2.0 - self.sigma)
    }
}

/// `kappa_sigma = || d_1 N(., 1) ||_sigma` for the 2D heat kernel `N`.
pub fn kappa(sigma: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&sigma) {
        return Err(Error::invalid(format!(
            "kappa needs sigma in [1, 2], got {sigma}"
        )));
    }
    let moment = 2f64.powf(sigma + 2.0)
        * PI.sqrt()
        * gamma(0.5 * (sigma + 1.0))
        * sigma.powf(-(0.5 * sigma + 1.0));
    Ok(((8.0 * PI).powf(-sigma) * moment).powf(1.0 / sigma))
}

/// `C0 = (2 kappa_sigma C_HLS / pi) M^{1/p + 1/r} sigma / (2 - sigma)`.
pub fn c0(mass: f64, p: f64) -> Result<f64> {
    check_mass(mass)?;
    let e = TrapExponents::new(p)?;
    Ok(c0_prefactor(&e)? * mass.powf(e.mass_power()))
}

fn c0_prefactor(e: &TrapExponents) -> Result<f64> {
    Ok(2.0 * kappa(e.sigma)? * c_hls() / PI * e.time_factor())
}

fn check_mass(mass: f64) -> Result<()> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::invalid(format!("mass must be positive, got {mass}")));
    }
    Ok(())
}

/// `H(z, M) = z - C0 z^theta - M / 2pi`.
pub fn trap_function(z: f64, mass: f64, p: f64) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return Err(Error::invalid(format!("z must be nonnegative, got {z}")));
    }
    let e = TrapExponents::new(p)?;
    let c0 = c0(mass, p)?;
    Ok(h_eval(z, c0, e.theta, mass))
}

fn h_eval(z: f64, c0: f64, theta: f64, mass: f64) -> f64 {
    z - c0 * z.powf(theta) - mass / (2.0 * PI)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrapRoots {
    /// Maximiser `(C0 theta)^{1/(1-theta)}`.
    pub z0: f64,
    /// `(theta-1)/theta (C0 theta)^{1/(1-theta)} - M/2pi`.
    pub h_at_z0: f64,
    /// Smaller root, present iff `H(z0) > 0`.
    pub z1: Option<f64>,
    pub z2: Option<f64>,
}

pub fn trap_roots(mass: f64, p: f64) -> Result<TrapRoots> {
    let e = TrapExponents::new(p)?;
    let c0 = c0(mass, p)?;
    let theta = e.theta;
    let z0 = (c0 * theta).powf(1.0 / (1.0 - theta));
    let h_at_z0 = (theta - 1.0) / theta * z0 - mass / (2.0 * PI);
    if !(h_at_z0 > 0.0) {
        return Ok(TrapRoots {
            z0,
            h_at_z0,
            z1: None,
            z2: None,
        });
    }
    let h = |z: f64| h_eval(z, c0, theta, mass);
    let dh = |z: f64| 1.0 - c0 * theta * z.powf(theta - 1.0);
    let z1 = polish(bisect(h, 0.0, z0), h, dh);
    let mut hi = 2.0 * z0;
    while h(hi) > 0.0 {
        hi *= 2.0;
    }
    let z2 = polish(bisect(h, z0, hi), h, dh);
    Ok(TrapRoots {
        z0,
        h_at_z0,
        z1: Some(z1),
        z2: Some(z2),
    })
}

/// Bisection on a sign change; `f(lo)` and `f(hi)` must have opposite signs.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo_negative = f(lo) < 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= ROOT_TOL * mid.abs().max(f64::MIN_POSITIVE) || mid == lo || mid == hi {
            break;
        }
        if (f(mid) < 0.0) == f_lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn polish(mut z: f64, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..4 {
        let d = df(z);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = z - f(z) / d;
        if !next.is_finite() || next <= 0.0 || f(next).abs() >= f(z).abs() {
            break;
        }
        z = next;
    }
    z
}

/// `M0(p)`: the mass at which `H(z0(M), M)` changes sign, found by bisection
/// after checking on a sample that the map is decreasing.
pub fn mass_threshold(p: f64) -> Result<f64> {
    let h_max = |m: f64| trap_roots(m, p).map(|r| r.h_at_z0);
    let samples: Vec<(f64, f64)> = (0..=24)
        .map(|k| {
            let m = 1e-3 * 2f64.powf(k as f64 * 0.5);
            h_max(m).map(|v| (m, v))
        })
        .collect::<Result<_>>()?;
    if samples.windows(2).any(|w| w[1].1 >= w[0].1) {
        return Err(Error::Bracketing(format!(
            "H(z0(M), M) is not decreasing on the sample {samples:?}"
        )));
    }
    let lo_idx = samples.iter().rposition(|s| s.1 > 0.0);
    let hi_idx = samples.iter().position(|s| s.1 <= 0.0);
    let (mut lo, mut hi) = match (lo_idx, hi_idx) {
        (Some(a), Some(b)) if a + 1 == b => (samples[a].0, samples[b].0),
        _ => {
            return Err(Error::Bracketing(format!(
                "no sign change of H(z0(M), M) on the sample {samples:?}"
            )))
        }
    };
    while hi - lo > MASS_TOL * 1e-2 {
        let mid = 0.5 * (lo + hi);
        if h_max(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Rearranged `H(z0(M), M) = 0`:
/// `M0 = (2 pi (theta - 1) / theta)^{theta - 1} / (A theta)` with `C0 = A M^{1/p + 3/4}`.
pub fn mass_threshold_closed_form(p: f64) -> Result<f64> {
    let e = TrapExponents::new(p)?;
    let a = c0_prefactor(&e)?;
    let t = e.theta;
    Ok((2.0 * PI * (t - 1.0) / t).powf(t - 1.0) / (a * t))
}

/// `M1 = lim_{p -> inf} M0(p)`.
pub fn m1() -> f64 {
    mass_threshold(f64::INFINITY).expect("limiting trap threshold is well posed")
}

/// Operative trap bound `z1`, or `TrapFailed` when the trap does not close.
pub fn z1(mass: f64, p: f64) -> Result<f64> {
    let r = trap_roots(mass, p)?;
    r.z1.ok_or(Error::TrapFailed {
        mass,
        p,
        h_at_z0: r.h_at_z0,
    })
}

/// `C(p, M) = M^{1/p} z1^{1 - 1/p}` so that `||u(t)||_p <= C t^{-(1 - 1/p)}`.
pub fn lp_decay_constant(p_norm: f64, mass: f64, p_trap: f64) -> Result<f64> {
    if p_norm.is_nan() || p_norm < 1.0 {
        return Err(Error::invalid(format!("p_norm must be >= 1, got {p_norm}")));
    }
    let z1 = z1(mass, p_trap)?;
    let inv = if p_norm.is_infinite() {
        0.0
    } else {
        1.0 / p_norm
    };
    Ok(mass.powf(inv) * z1.powf(1.0 - inv))
}

/// `t int_0^t (t-s)^{1/sigma - 3/2} (t+s)^{1/p + 1/r - 2} ds`, by quadrature.
pub fn duhamel_time_integral(t: f64, p: f64) -> Result<f64> {
    let e = TrapExponents::new(p)?;
    let a = 1.0 / e.sigma - 1.5;
    let b = e.mass_power() - 2.0;
    Ok(t * crate::quad::tanh_sinh(
        |s, _, dist_to_t| dist_to_t.powf(a) * (t + s).powf(b),
        0.0,
        t,
        1e-13,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrapReport {
    pub p: f64,
    pub sigma: f64,
    pub theta: f64,
    pub kappa_sigma: f64,
    pub c_hls: f64,
    pub m0: f64,
    pub mass: Option<f64>,
    pub c0: Option<f64>,
    pub roots: Option<TrapRoots>,
}

pub fn trap_report(p: f64, mass: Option<f64>) -> Result<TrapReport> {
    let e = TrapExponents::new(p)?;
    let (c0v, roots) = match mass {
        Some(m) => (Some(c0(m, p)?), Some(trap_roots(m, p)?)),
        None => (None, None),
    };
    Ok(TrapReport {
        p,
        sigma: e.sigma,
        theta: e.theta,
        kappa_sigma: kappa(e.sigma)?,
        c_hls: c_hls(),
        m0: mass_threshold(p)?,
        mass,
        c0: c0v,
        roots,
    })
}

/// `H(z, M)` sampled on `[0, z_hi]`, for plotting.
pub fn trap_profile(mass: f64, p: f64, z_hi: f64, samples: usize) -> Result<Vec<(f64, f64)>> {
    let e = TrapExponents::new(p)?;
    let c0 = c0(mass, p)?;
    let n = samples.max(2);
    Ok((0..n)
        .map(|k| {
            let z = z_hi * k as f64 / (n - 1) as f64;
            (z, h_eval(z, c0, e.theta, mass))
        })
        .collect())
}
