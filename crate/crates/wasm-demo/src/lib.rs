//! Browser bindings: steady profile, trap function, decay-rate chain.

use kslab::gap_constants::{gap_report_from, DEFAULT_P_TRAP};
use kslab::radial_field::RadialGrid;
use kslab::steady_state::{solve_steady_state_with, SteadyOptions};
use kslab::trap_constants::{mass_threshold, trap_profile, trap_roots};
use wasm_bindgen::prelude::*;

const R_MAX: f64 = 12.0;

#[wasm_bindgen]
pub struct Profile {
    r: Vec<f64>,
    density: Vec<f64>,
    potential: Vec<f64>,
    sup: f64,
    iterations: usize,
}

#[wasm_bindgen]
impl Profile {
    #[wasm_bindgen(getter)]
    pub fn r(&self) -> Vec<f64> {
        self.r.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn density(&self) -> Vec<f64> {
        self.density.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn potential(&self) -> Vec<f64> {
        self.potential.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn sup(&self) -> f64 {
        self.sup
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

pub fn compute_profile(mass: f64, cells: usize) -> kslab::Result<Profile> {
    let grid = RadialGrid::new(R_MAX, cells)?;
    let s = solve_steady_state_with(mass, grid, &SteadyOptions::default())?;
    Ok(Profile {
        r: grid.centers(),
        density: s.n_inf.values().to_vec(),
        potential: s.c_inf.values().to_vec(),
        sup: s.n_inf_sup,
        iterations: s.iterations,
    })
}

#[wasm_bindgen]
pub struct TrapCurve {
    z: Vec<f64>,
    h: Vec<f64>,
    z0: f64,
    z1: f64,
    m0: f64,
}

#[wasm_bindgen]
impl TrapCurve {
    #[wasm_bindgen(getter)]
    pub fn z(&self) -> Vec<f64> {
        self.z.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn h(&self) -> Vec<f64> {
        self.h.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// NaN when the trap does not close.
    #[wasm_bindgen(getter)]
    pub fn z1(&self) -> f64 {
        self.z1
    }

    #[wasm_bindgen(getter)]
    pub fn m0(&self) -> f64 {
        self.m0
    }
}

/// `H(z)` on `[0, 4 z1]`, or `[0, 2 z0]` when there is no root.
pub fn compute_trap_curve(mass: f64, p: f64, samples: usize) -> kslab::Result<TrapCurve> {
    let roots = trap_roots(mass, p)?;
    let z1 = roots.z1.unwrap_or(f64::NAN);
    let z_hi = if z1.is_finite() {
        4.0 * z1
    } else {
        2.0 * roots.z0
    };
    let (z, h) = trap_profile(mass, p, z_hi, samples)?.into_iter().unzip();
    Ok(TrapCurve {
        z,
        h,
        z0: roots.z0,
        z1,
        m0: mass_threshold(p)?,
    })
}

#[wasm_bindgen]
pub struct DecayChain {
    pub lambda: f64,
    pub c_star: f64,
    pub c2: f64,
    pub gamma: f64,
    pub delta: f64,
    pub valid: bool,
}

pub fn compute_decay_chain(mass: f64, cells: usize) -> kslab::Result<DecayChain> {
    let grid = RadialGrid::new(R_MAX, cells)?;
    let opts = SteadyOptions {
        tol: 1e-12,
        ..SteadyOptions::default()
    };
    let r = gap_report_from(&solve_steady_state_with(mass, grid, &opts)?, DEFAULT_P_TRAP);
    Ok(DecayChain {
        lambda: r.lambda,
        c_star: r.c_star,
        c2: r.c2,
        gamma: r.gamma,
        delta: r.delta,
        valid: r.valid,
    })
}

fn js_err(e: kslab::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn steady_profile(mass: f64, cells: usize) -> Result<Profile, JsError> {
    compute_profile(mass, cells).map_err(js_err)
}

#[wasm_bindgen]
pub fn trap_curve(mass: f64, p: f64, samples: usize) -> Result<TrapCurve, JsError> {
    compute_trap_curve(mass, p, samples).map_err(js_err)
}

#[wasm_bindgen]
pub fn decay_chain(mass: f64, cells: usize) -> Result<DecayChain, JsError> {
    compute_decay_chain(mass, cells).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_shapes() {
        let p = compute_profile(1.0, 300).unwrap();
        assert_eq!(p.r.len(), 300);
        assert_eq!(p.density.len(), 300);
        assert_eq!(p.sup, p.density.iter().cloned().fold(0.0, f64::max));
        assert!(compute_profile(30.0, 300).is_err());
    }

    #[test]
    fn trap_curve_brackets_root() {
        let c = compute_trap_curve(0.1, 10.0, 50).unwrap();
        assert_eq!(c.z.len(), c.h.len());
        assert!(c.z1 > 0.0 && c.z1 < c.z0);
        assert!(c.h[0] < 0.0);
        let above = compute_trap_curve(0.75, 10.0, 20).unwrap();
        assert!(above.z1.is_nan());
    }

    #[test]
    fn chain_small_mass() {
        let d = compute_decay_chain(0.05, 600).unwrap();
        assert!(d.valid && d.delta > 0.85 && d.delta < 1.0);
        assert!(!compute_decay_chain(0.5, 600).unwrap().valid);
    }
}
