//! Logarithmic Poisson coupling `c = -(1/2pi) log|.| * n` for radial densities.
//!
//! For radial `n` the angular average of `log|x - y|` is `log max(|x|, |y|)`,
//! so the convolution reduces to
//! `c(r) = -(1/2pi) [m(r) log r + 2pi int_r^inf n(s) s log s ds]`
//! and `d_r c = -m(r) / (2 pi r)`. Both are evaluated in O(n_cells).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::radial_field::{cumulative_faces_unchecked, mass_within, RadialField, RadialGrid};

#[derive(Clone, Debug)]
pub struct PotentialResult {
    /// Concentration at cell centres, gauge fixed by the convolution formula.
    pub c: RadialField,
    /// `d_r c` at the `n_cells + 1` faces; zero at `r = 0`.
    pub dc_dr: Vec<f64>,
    /// `max_f |d_r c|`.
    pub grad_c_inf: f64,
    /// Total mass of the source density.
    pub mass: f64,
}

/// Per-grid tables for the discrete log kernel.
///
/// Off-diagonal couplings use the midpoint rule, `K_ij = -(1/2pi) w_j log max(r_i, r_j)`;
/// the cell's own contribution integrates `log max(r_i, s)` exactly over the
/// annulus. This makes `W K` symmetric, which the free-energy bookkeeping and
/// the linearised spectrum rely on.
#[derive(Clone, Debug)]
pub struct LogKernel {
    grid: RadialGrid,
    log_r: Vec<f64>,
    self_term: Vec<f64>,
}

fn s_log_s_antiderivative(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        0.5 * s * s * s.ln() - 0.25 * s * s
    }
}

impl LogKernel {
    pub fn new(grid: RadialGrid) -> Self {
        let n = grid.n_cells();
        let mut log_r = Vec::with_capacity(n);
        let mut self_term = Vec::with_capacity(n);
        for i in 0..n {
            let (a, r, b) = (grid.face(i), grid.center(i), grid.face(i + 1));
            let lr = r.ln();
            log_r.push(lr);
            let inner = lr * PI * (r * r - a * a);
            let outer = 2.0 * PI * (s_log_s_antiderivative(b) - s_log_s_antiderivative(r));
            self_term.push(inner + outer);
        }
        Self {
            grid,
            log_r,
            self_term,
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Writes `c = K n` into `out`.
    pub fn apply(&self, n: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let len = n.len();
        debug_assert_eq!(len, g.n_cells());
        // Suffix sums of w_j n_j log r_j for j > i, built right to left.
        let mut tail = 0.0;
        for i in (0..len).rev() {
            out[i] = tail;
            tail += g.weight(i) * n[i] * self.log_r[i];
        }
        let mut inner_mass = 0.0;
        for i in 0..len {
            let total = inner_mass * self.log_r[i] + out[i] + self.self_term[i] * n[i];
            out[i] = -total / (2.0 * PI);
            inner_mass += g.weight(i) * n[i];
        }
    }

    /// Dense `K` (row `i` maps densities to `c_i`).
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let g = &self.grid;
        let n = g.n_cells();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            -self.self_term[i] / (2.0 * PI)
                        } else {
                            -g.weight(j) * self.log_r[i.max(j)] / (2.0 * PI)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Face gradient `-m_f / (2 pi r_f)` from cumulative face masses.
pub(crate) fn face_gradient(grid: &RadialGrid, cumulative: &[f64], out: &mut [f64]) {
    out[0] = 0.0;
    for f in 1..cumulative.len() {
        out[f] = -cumulative[f] / (2.0 * PI * grid.face(f));
    }
}

pub fn solve_potential(n: &RadialField) -> Result<PotentialResult> {
    solve_potential_with(&LogKernel::new(*n.grid()), n)
}

pub fn solve_potential_with(kernel: &LogKernel, n: &RadialField) -> Result<PotentialResult> {
    let g = *n.grid();
    if kernel.grid() != &g {
        return Err(Error::GridMismatch("kernel built for another grid".into()));
    }
    n.check_density()?;
    let mut c = vec![0.0; g.n_cells()];
    kernel.apply(n.values(), &mut c);
    let cumulative = cumulative_faces_unchecked(&g, n.values());
    let mut dc_dr = vec![0.0; g.n_cells() + 1];
    face_gradient(&g, &cumulative, &mut dc_dr);
    let grad_c_inf = dc_dr.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
    Ok(PotentialResult {
        c: RadialField::new(g, c)?,
        dc_dr,
        grad_c_inf,
        mass: cumulative[g.n_cells()],
    })
}

/// `||grad c||_inf` of the potential generated by `n`.
pub fn grad_c_inf_norm(n: &RadialField) -> Result<f64> {
    n.check_density()?;
    let g = n.grid();
    let cumulative = cumulative_faces_unchecked(g, n.values());
    Ok((1..=g.n_cells())
        .map(|f| cumulative[f] / (2.0 * PI * g.face(f)))
        .fold(0.0, f64::max))
}

/// `d_r c(r) = -m(r) / (2 pi r)` at an arbitrary radius.
pub fn grad_c_at(n: &RadialField, r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Ok(0.0);
    }
    Ok(-mass_within(n, r)? / (2.0 * PI * r))
}

/// The bound `(1/2pi) [M + (2pi (p-1)/(p-2))^{p/(p-1)} ||n||_p]` on `||grad c||_inf`.
pub fn grad_c_holder_bound(mass: f64, lp: f64, p: f64) -> f64 {
    debug_assert!(p > 2.0);
    (mass + (2.0 * PI * (p - 1.0) / (p - 2.0)).powf(p / (p - 1.0)) * lp) / (2.0 * PI)
}

/// `-Delta_h c` with the five-point radial stencil; the outer face uses the
/// exact boundary gradient `outer_grad`.
pub fn discrete_neg_laplacian(c: &RadialField, outer_grad: f64) -> RadialField {
    let g = c.grid();
    let v = c.values();
    let n = g.n_cells();
    let h = g.h();
    let flux = |f: usize| -> f64 {
        if f == 0 {
            0.0
        } else if f == n {
            g.face(f) * outer_grad
        } else {
            g.face(f) * (v[f] - v[f - 1]) / h
        }
    };
    let mut out = RadialField::zeros(*g);
    for (i, slot) in out.values_mut().iter_mut().enumerate() {
        *slot = -(flux(i + 1) - flux(i)) / (g.center(i) * h);
    }
    out
}

/// `sum_i w_i |(-Delta_h c)_i - n_i|`.
pub fn poisson_residual_l1(n: &RadialField, pot: &PotentialResult) -> f64 {
    let g = n.grid();
    let lap = discrete_neg_laplacian(&pot.c, pot.dc_dr[g.n_cells()]);
    lap.values()
        .iter()
        .zip(n.values())
        .enumerate()
        .map(|(i, (a, b))| g.weight(i) * (a - b).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_field::{integrate, lp_norm};

    fn gaussian_density(grid: RadialGrid, mass: f64) -> RadialField {
        RadialField::from_fn(grid, |r| mass * (-0.5 * r * r).exp() / (2.0 * PI))
    }

    #[test]
    fn zero_density_zero_potential() {
        let g = RadialGrid::new(12.0, 300).unwrap();
        let p = solve_potential(&RadialField::zeros(g)).unwrap();
        assert!(p.c.values().iter().all(|&v| v == 0.0));
        assert_eq!(p.grad_c_inf, 0.0);
    }

    #[test]
    fn gradient_at_one_closed_form() {
        let g = RadialGrid::new(10.0, 4000).unwrap();
        let n = gaussian_density(g, 2.0 * PI);
        let exact = -(1.0 - (-0.5f64).exp());
        let got = grad_c_at(&n, 1.0).unwrap();
        assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
    }

    #[test]
    fn grad_sup_closed_form() {
        // max_r (1 - e^{-r^2/2}) / r, found by golden section on the closed form.
        let f = |r: f64| (1.0 - (-0.5 * r * r).exp()) / r;
        let (mut a, mut b) = (0.5, 3.0);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = b - phi * (b - a);
            let x2 = a + phi * (b - a);
            if f(x1) > f(x2) {
                b = x2
            } else {
                a = x1
            }
        }
        let r_star = 0.5 * (a + b);
        assert!((r_star - 1.585).abs() < 1e-3);
        let g = RadialGrid::production();
        let n = gaussian_density(g, 2.0 * PI);
        let got = grad_c_inf_norm(&n).unwrap();
        assert!((got - f(r_star)).abs() < 1e-4, "{got} vs {}", f(r_star));
        assert!((got - 0.45126).abs() < 1e-4);
        assert_eq!(got, solve_potential(&n).unwrap().grad_c_inf);
    }

    #[test]
    fn holder_bound_dominates() {
        let g = RadialGrid::production();
        let n = gaussian_density(g, 2.0 * PI);
        let grad = grad_c_inf_norm(&n).unwrap();
        let m = integrate(&n);
        for p in [3.0, 4.0, 6.0] {
            let bound = grad_c_holder_bound(m, lp_norm(&n, p).unwrap(), p);
            assert!(grad < bound, "p = {p}: {grad} !< {bound}");
        }
    }

    #[test]
    fn poisson_residual_second_order() {
        let res = |cells: usize| {
            let g = RadialGrid::new(12.0, cells).unwrap();
            let n = gaussian_density(g, 1.0);
            let p = solve_potential(&n).unwrap();
            poisson_residual_l1(&n, &p)
        };
        let (a, b, c) = (res(250), res(500), res(1000));
        let o1 = (a / b).log2();
        let o2 = (b / c).log2();
        assert!(
            (o1 - 2.0).abs() < 0.2 && (o2 - 2.0).abs() < 0.2,
            "orders {o1} {o2}"
        );
    }

    #[test]
    fn potential_matches_closed_form() {
        // For n = M e^{-r^2/2} / 2pi, c(r) = -(M/2pi)[log r + E1(r^2/2)/2]
        // where E1 is the exponential integral; check differences c(r) - c(1),
        // which are (M/2pi) int_1^r (1 - e^{-s^2/2}) / s ds.
        let g = RadialGrid::new(12.0, 2000).unwrap();
        let n = gaussian_density(g, 1.0);
        let p = solve_potential(&n).unwrap();
        let i1 = g.cell_of(1.0);
        let i3 = g.cell_of(3.0);
        let (r1, r3) = (g.center(i1), g.center(i3));
        // Simpson on the smooth integrand.
        let k = 20000;
        let hs = (r3 - r1) / k as f64;
        let f = |s: f64| (1.0 - (-0.5 * s * s).exp()) / s;
        let mut acc = f(r1) + f(r3);
        for j in 1..k {
            acc += f(r1 + j as f64 * hs) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        let exact = -(acc * hs / 3.0) / (2.0 * PI);
        let got = p.c.values()[i3] - p.c.values()[i1];
        assert!((got - exact).abs() < 1e-5, "{got} vs {exact}");
    }

    #[test]
    fn dense_kernel_matches_apply_and_is_w_symmetric() {
        let g = RadialGrid::new(6.0, 40).unwrap();
        let k = LogKernel::new(g);
        let dense = k.dense();
        let n: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.37).cos().abs()).collect();
        let mut c = vec![0.0; 40];
        k.apply(&n, &mut c);
        for i in 0..40 {
            let row: f64 = (0..40).map(|j| dense[i][j] * n[j]).sum();
            assert!((row - c[i]).abs() < 1e-12);
            for j in 0..40 {
                let a = g.weight(i) * dense[i][j];
                let b = g.weight(j) * dense[j][i];
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn negative_density_rejected() {
        let g = RadialGrid::new(3.0, 10).unwrap();
        let mut n = RadialField::constant(g, 0.1);
        n.values_mut()[3] = -0.2;
        assert!(matches!(
            solve_potential(&n),
            Err(Error::NegativeDensity { index: 3, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn sign_and_linearity(values in prop::collection::vec(0.0f64..3.0, 2..120), lambda in 0.0f64..5.0) {
                let g = RadialGrid::new(5.0, values.len()).unwrap();
                let n = RadialField::new(g, values).unwrap();
                let p = solve_potential(&n).unwrap();
                prop_assert!(p.dc_dr.iter().all(|&d| d <= 0.0));
                let q = solve_potential(&n.scaled(lambda)).unwrap();
                let cmax = p.c.values().iter().fold(1e-300f64, |m, v| m.max(v.abs()));
                for (a, b) in p.c.values().iter().zip(q.c.values()) {
                    prop_assert!((lambda * a - b).abs() <= 1e-13 * lambda.max(1.0) * cmax);
                }
                let dmax = p.grad_c_inf.max(1e-300);
                for (a, b) in p.dc_dr.iter().zip(&q.dc_dr) {
                    prop_assert!((lambda * a - b).abs() <= 1e-13 * lambda.max(1.0) * dmax);
                }
                // Far field: at r_max the enclosed mass is the total mass.
                let r = g.r_max();
                let tail = (p.dc_dr[g.n_cells()] + p.mass / (2.0 * PI * r)).abs();
                prop_assert!(tail <= 1e-8 * p.mass.max(1e-300));
            }
        }
    }
}
