//! Radial grids, midpoint quadrature and weighted norms.
//!
//! A radial function on the plane is stored by its values at the cell
//! centres `r_i = (i + 1/2) h` of a uniform partition of `[0, r_max]`.
//! Cell `i` carries the area weight `w_i = 2 pi r_i h`, which is also the
//! exact area of the annulus between its two faces, so sums of
//! `w_i * value_i` telescope exactly into cumulative masses.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Uniform cell-centred partition of `[0, r_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialGrid {
    r_max: f64,
    n_cells: usize,
}

impl RadialGrid {
    pub const DEFAULT_R_MAX: f64 = 12.0;
    pub const DEFAULT_N_CELLS: usize = 2000;

    pub fn new(r_max: f64, n_cells: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::invalid(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        if n_cells == 0 {
            return Err(Error::invalid("n_cells must be positive"));
        }
        Ok(Self { r_max, n_cells })
    }

    /// `r_max = 12`, `n_cells = 2000`.
    pub fn production() -> Self {
        Self {
            r_max: Self::DEFAULT_R_MAX,
            n_cells: Self::DEFAULT_N_CELLS,
        }
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.r_max / self.n_cells as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    /// Face `i` sits at `i * h`; there are `n_cells + 1` faces.
    #[inline]
    pub fn face(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        2.0 * PI * self.center(i) * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn faces(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.face(i)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.weight(i)).collect()
    }

    /// Same domain with `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            r_max: self.r_max,
            n_cells: self.n_cells * factor.max(1),
        }
    }

    /// Index of the cell containing `r` (clamped to the grid).
    pub fn cell_of(&self, r: f64) -> usize {
        let idx = (r / self.h()).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.n_cells - 1)
        }
    }

    pub(crate) fn check_same(&self, other: &RadialGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "(r_max {}, {} cells) vs (r_max {}, {} cells)",
                self.r_max, self.n_cells, other.r_max, other.n_cells
            )));
        }
        Ok(())
    }
}

/// Values of a radial function at the cell centres of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialField {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {} in cell {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn constant(grid: RadialGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.n_cells()).map(|i| f(grid.center(i))).collect(),
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rejects negative entries, returning the first offending cell.
    pub fn check_density(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(index) => Err(Error::NegativeDensity {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    /// CSV with header `r,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.grid.center(i), v)?;
        }
        Ok(())
    }

    /// Reads the `r,value` CSV back, reconstructing the grid from the centres.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let columns = crate::csvio::read_columns(input, &["r", "value"])?;
        let (r, values) = (&columns[0], &columns[1]);
        let grid = crate::csvio::grid_from_centers(r)?;
        RadialField::new(grid, values.clone())
    }
}

/// Weight applied inside [`weighted_l2_error`].
#[derive(Clone, Copy, Debug)]
pub enum WeightKind<'a> {
    Unweighted,
    /// `K(x) = exp(|x|^2 / 2)`.
    GaussianK,
    /// `1 / n_inf` for a reference steady profile.
    InvSteady(&'a RadialField),
}

/// `int f dx = sum_i w_i f_i`.
pub fn integrate(field: &RadialField) -> f64 {
    let g = field.grid();
    field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| g.weight(i) * v)
        .sum()
}

/// `L^p(R^2)` norm; `p = f64::INFINITY` gives the grid maximum of `|f|`.
pub fn lp_norm(field: &RadialField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!(
            "L^p exponent must be >= 1, got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(field.values().iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let g = field.grid();
    let sum: f64 = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| g.weight(i) * v.abs().powf(p))
        .sum();
    Ok(if p == 1.0 { sum } else { sum.powf(1.0 / p) })
}

/// `int (n - n_ref)^2 * weight dx`.
pub fn weighted_l2_error(n: &RadialField, n_ref: &RadialField, w: WeightKind<'_>) -> Result<f64> {
    n.grid().check_same(n_ref.grid())?;
    let g = n.grid();
    let weight: Box<dyn Fn(usize) -> f64 + '_> = match w {
        WeightKind::Unweighted => Box::new(|_| 1.0),
        WeightKind::GaussianK => Box::new(move |i| (0.5 * g.center(i).powi(2)).exp()),
        WeightKind::InvSteady(steady) => {
            g.check_same(steady.grid())?;
            if let Some(i) = steady.values().iter().position(|&v| v <= 0.0) {
                return Err(Error::invalid(format!(
                    "inverse-steady weight needs n_inf > 0, cell {i} has {}",
                    steady.values()[i]
                )));
            }
            let s = steady.values();
            Box::new(move |i| 1.0 / s[i])
        }
    };
    Ok(n.values()
        .iter()
        .zip(n_ref.values())
        .enumerate()
        .map(|(i, (a, b))| g.weight(i) * (a - b).powi(2) * weight(i))
        .sum())
}

/// Cumulative mass at every face: `m_0 = 0`, `m_{k+1} = m_k + w_k n_k`.
pub fn cumulative_mass_faces(n: &RadialField) -> Result<Vec<f64>> {
    n.check_density()?;
    Ok(cumulative_faces_unchecked(n.grid(), n.values()))
}

pub(crate) fn cumulative_faces_unchecked(grid: &RadialGrid, values: &[f64]) -> Vec<f64> {
    let mut m = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    m.push(0.0);
    for (i, v) in values.iter().enumerate() {
        acc += grid.weight(i) * v;
        m.push(acc);
    }
    m
}

/// Mass inside the outer face of each cell, `m(r_{i+1/2})`; the last entry is
/// the total mass.
pub fn cumulative_mass(n: &RadialField) -> Result<RadialField> {
    let faces = cumulative_mass_faces(n)?;
    Ok(RadialField {
        grid: *n.grid(),
        values: faces[1..].to_vec(),
    })
}

/// Mass inside radius `r`, treating the density as constant on each cell.
pub fn mass_within(n: &RadialField, r: f64) -> Result<f64> {
    let faces = cumulative_mass_faces(n)?;
    let g = n.grid();
    if r >= g.r_max() {
        return Ok(faces[g.n_cells()]);
    }
    let r = r.max(0.0);
    let i = g.cell_of(r);
    let inner = g.face(i);
    Ok(faces[i] + n.values()[i] * PI * (r * r - inner * inner))
}

/// Face derivative `(f_i - f_{i-1}) / h` at interior faces and a one-sided
/// copy at the outer face; the `r = 0` face derivative is zero by symmetry.
pub fn face_derivative(field: &RadialField) -> Vec<f64> {
    let g = field.grid();
    let v = field.values();
    let n = g.n_cells();
    let h = g.h();
    let mut d = vec![0.0; n + 1];
    for f in 1..n {
        d[f] = (v[f] - v[f - 1]) / h;
    }
    if n >= 2 {
        d[n] = (v[n - 1] - v[n - 2]) / h;
    }
    d
}

/// `(int |d_r n|^2 K dx)^{1/2}` with `K = exp(r^2/2)` evaluated at faces.
pub fn h1k_seminorm(n: &RadialField) -> f64 {
    let g = n.grid();
    let d = face_derivative(n);
    let nc = g.n_cells();
    let h = g.h();
    let mut sum = 0.0;
    for (f, df) in d.iter().enumerate().skip(1) {
        let r = g.face(f);
        let half = if f == nc { 0.5 } else { 1.0 };
        sum += half * 2.0 * PI * r * h * df * df * (0.5 * r * r).exp();
    }
    sum.sqrt()
}
