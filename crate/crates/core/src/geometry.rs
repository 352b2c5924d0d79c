//! Periodic grids, flux-form finite-difference operators and Fourier multipliers.
//!
//! Every field lives on a uniform periodic lattice with `N` points per axis in
//! one or two dimensions. Two derivative backends coexist: second-order
//! centered stencils used by the time steppers, and FFT-based multipliers used
//! for Sobolev norms and Poisson solves.
//!
//! Storage is row-major with `x` (axis 0) contiguous: the site `(ix, iy)` sits
//! at `iy * N + ix`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic lattice on `[0, L)^d`.
#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    length: f64,
    points: usize,
    spacing: f64,
    wavenumbers: Arc<[f64]>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points && self.length == other.length
    }
}

/// Builds a grid, rejecting dimensions other than 1 and 2 and non power-of-two
/// point counts below 8.
pub fn make_grid(dim: usize, length: f64, points: usize) -> Result<Grid> {
    Grid::new(dim, length, points)
}

impl Grid {
    pub fn new(dim: usize, length: f64, points: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if points < 8 {
            return Err(Error::InvalidGrid(format!("need at least 8 points per axis, got {points}")));
        }
        if !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two, got {points}"
            )));
        }
        let wavenumbers: Vec<f64> = (0..points)
            .map(|m| 2.0 * PI * signed_frequency(m, points) as f64 / length)
            .collect();
        Ok(Grid {
            dim,
            length,
            points,
            spacing: length / points as f64,
            wavenumbers: wavenumbers.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of sites, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`, the quadrature weight of one site.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Per-axis wavenumber table in FFT ordering: `2π m / L` for
    /// `m = 0, 1, …, N/2 - 1, -N/2, …, -1`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Axis indices of a flat site index.
    pub fn axis_indices(&self, index: usize) -> [usize; 2] {
        let n = self.points;
        if self.dim == 1 {
            [index, 0]
        } else {
            [index % n, index / n]
        }
    }

    /// Physical coordinates of a site (second entry is 0 in 1-D).
    pub fn coords(&self, index: usize) -> [f64; 2] {
        let [ix, iy] = self.axis_indices(index);
        let y = if self.dim == 2 { iy as f64 * self.spacing } else { 0.0 };
        [ix as f64 * self.spacing, y]
    }

    /// Wave vector of the Fourier mode stored at `index`.
    pub fn wavevector(&self, index: usize) -> [f64; 2] {
        let [ix, iy] = self.axis_indices(index);
        let ky = if self.dim == 2 { self.wavenumbers[iy] } else { 0.0 };
        [self.wavenumbers[ix], ky]
    }

    pub fn wavenumber_sq(&self, index: usize) -> f64 {
        let [kx, ky] = self.wavevector(index);
        kx * kx + ky * ky
    }

    /// Shortest periodic distance between a site and a point.
    pub fn periodic_distance(&self, index: usize, point: [f64; 2]) -> f64 {
        let x = self.coords(index);
        let mut r2 = 0.0;
        for axis in 0..self.dim {
            let d = periodic_delta(x[axis], point[axis], self.length);
            r2 += d * d;
        }
        r2.sqrt()
    }

    /// Largest resolved wavenumber, `π / h`.
    pub fn nyquist(&self) -> f64 {
        PI / self.spacing
    }
}

fn signed_frequency(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Minimum-image displacement `x - x0` on a circle of circumference `length`.
pub fn periodic_delta(x: f64, x0: f64, length: f64) -> f64 {
    let mut d = (x - x0) % length;
    if d > 0.5 * length {
        d -= length;
    } else if d < -0.5 * length {
        d += length;
    }
    d
}

/// Real scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let field = ScalarField {
            grid: grid.clone(),
            values,
        };
        field.check_finite("scalar field")?;
        Ok(field)
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at every site coordinate.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub(crate) fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_same_grid(other)?;
        Ok(ScalarField::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> ScalarField {
        self.map(|v| v * factor)
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &ScalarField) {
        debug_assert!(self.grid == other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Volume-weighted inner product `Σ u_i w_i h^d`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert!(self.grid == other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Spatial mean `(1/V) ∫ f`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Translates the field by `cells` sites along `axis` with periodic wrap,
    /// so that `shifted[i + cells] = self[i]`.
    pub fn shift(&self, axis: usize, cells: isize) -> ScalarField {
        let n = self.grid.points as isize;
        let mut out = vec![0.0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            let mut idx = self.grid.axis_indices(i).map(|c| c as isize);
            idx[axis] = (idx[axis] + cells).rem_euclid(n);
            out[flat(&self.grid, idx[0] as usize, idx[1] as usize)] = v;
        }
        ScalarField::from_raw(&self.grid, out)
    }
}

fn flat(grid: &Grid, ix: usize, iy: usize) -> usize {
    iy * grid.points + ix
}

/// Vector field with one [`ScalarField`] component per grid axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let grid = components
            .first()
            .ok_or_else(|| Error::ShapeMismatch("vector field without components".into()))?
            .grid()
            .clone();
        if components.len() != grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} components on a {}-d grid",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components {
            c.check_same_grid(&components[0])?;
            c.check_finite("vector field component")?;
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn scale(&self, factor: f64) -> VectorField {
        VectorField {
            components: self.components.iter().map(|c| c.scale(factor)).collect(),
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &VectorField) {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.add_scaled(alpha, b);
        }
    }

    /// Multiplies every component pointwise by a scalar field.
    pub fn mul_pointwise(&self, weight: &ScalarField) -> VectorField {
        VectorField {
            components: self
                .components
                .iter()
                .map(|c| ScalarField::from_raw(c.grid(), mul(c.values(), weight.values())))
                .collect(),
        }
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Precomputed periodic neighbour offsets along one axis.
struct Neighbours {
    plus: Vec<usize>,
    minus: Vec<usize>,
}

fn neighbours(grid: &Grid, axis: usize) -> Neighbours {
    let n = grid.points();
    let len = grid.len();
    let mut plus = Vec::with_capacity(len);
    let mut minus = Vec::with_capacity(len);
    for i in 0..len {
        let [ix, iy] = grid.axis_indices(i);
        let (p, m) = if axis == 0 {
            (flat(grid, (ix + 1) % n, iy), flat(grid, (ix + n - 1) % n, iy))
        } else {
            (flat(grid, ix, (iy + 1) % n), flat(grid, ix, (iy + n - 1) % n))
        };
        plus.push(p);
        minus.push(m);
    }
    Neighbours { plus, minus }
}

/// Centered second-order gradient, `(u[i+e_j] - u[i-e_j]) / 2h` per axis.
pub fn gradient(u: &ScalarField) -> VectorField {
    let grid = u.grid();
    let inv = 0.5 / grid.spacing();
    let vals = u.values();
    let components = (0..grid.dim())
        .map(|axis| {
            let nb = neighbours(grid, axis);
            let out = (0..grid.len())
                .map(|i| (vals[nb.plus[i]] - vals[nb.minus[i]]) * inv)
                .collect();
            ScalarField::from_raw(grid, out)
        })
        .collect();
    VectorField { components }
}

/// Centered divergence. It is minus the adjoint of [`gradient`] in the
/// volume-weighted inner product.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let inv = 0.5 / grid.spacing();
    let mut out = vec![0.0; grid.len()];
    for (axis, comp) in v.components().iter().enumerate() {
        let nb = neighbours(grid, axis);
        let vals = comp.values();
        for (i, o) in out.iter_mut().enumerate() {
            *o += (vals[nb.plus[i]] - vals[nb.minus[i]]) * inv;
        }
    }
    ScalarField::from_raw(grid, out)
}

/// Conservative `∇·(b ∇u)` with face values of `b` taken as arithmetic means
/// of the two adjacent cells. Rejects any non-positive coefficient.
pub fn div_b_grad(u: &ScalarField, b_eff: &ScalarField) -> Result<ScalarField> {
    u.check_same_grid(b_eff)?;
    if let Some(bad) = b_eff.values().iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::NonPositive(format!("flux coefficient takes value {bad}")));
    }
    Ok(flux_divergence(u, b_eff))
}

/// Same stencil as [`div_b_grad`] without the positivity check, for masked
/// coefficients such as `b χ` that may vanish.
pub(crate) fn flux_divergence(u: &ScalarField, coef: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; u.grid().len()];
    flux_divergence_into(u, coef, &mut out);
    ScalarField::from_raw(u.grid(), out)
}

pub(crate) fn flux_divergence_into(u: &ScalarField, coef: &ScalarField, out: &mut [f64]) {
    let grid = u.grid();
    let n = grid.points();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let uv = u.values();
    let bv = coef.values();
    out.iter_mut().for_each(|o| *o = 0.0);
    let rows = if grid.dim() == 1 { 1 } else { n };
    // axis 0: contiguous rows
    for row in 0..rows {
        let base = row * n;
        for ix in 0..n {
            let i = base + ix;
            let ip = base + if ix + 1 == n { 0 } else { ix + 1 };
            let im = base + if ix == 0 { n - 1 } else { ix - 1 };
            let bp = 0.5 * (bv[i] + bv[ip]);
            let bm = 0.5 * (bv[i] + bv[im]);
            out[i] += (bp * (uv[ip] - uv[i]) - bm * (uv[i] - uv[im])) * inv_h2;
        }
    }
    if grid.dim() == 2 {
        for iy in 0..n {
            let yp = if iy + 1 == n { 0 } else { iy + 1 } * n;
            let ym = if iy == 0 { n - 1 } else { iy - 1 } * n;
            let y0 = iy * n;
            for ix in 0..n {
                let (i, ip, im) = (y0 + ix, yp + ix, ym + ix);
                let bp = 0.5 * (bv[i] + bv[ip]);
                let bm = 0.5 * (bv[i] + bv[im]);
                out[i] += (bp * (uv[ip] - uv[i]) - bm * (uv[i] - uv[im])) * inv_h2;
            }
        }
    }
}

/// Face quadrature `Σ_faces w_face (Δu/h)² h^d`, with `w_face` the mean of
/// the two adjacent cell weights. This is the quadratic form paired with the
/// [`div_b_grad`] stencil by discrete integration by parts.
pub fn face_gradient_energy(u: &ScalarField, weight: &ScalarField) -> f64 {
    let grid = u.grid();
    let h = grid.spacing();
    let uv = u.values();
    let wv = weight.values();
    let mut total = 0.0;
    for axis in 0..grid.dim() {
        let nb = neighbours(grid, axis);
        for i in 0..grid.len() {
            let ip = nb.plus[i];
            let du = (uv[ip] - uv[i]) / h;
            total += 0.5 * (wv[i] + wv[ip]) * du * du;
        }
    }
    total * grid.cell_volume()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn transform(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.points();
    let fft = plan(n, inverse);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    if grid.dim() == 2 {
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for ix in 0..n {
            for iy in 0..n {
                column[iy] = data[iy * n + ix];
            }
            fft.process(&mut column);
            for iy in 0..n {
                data[iy * n + ix] = column[iy];
            }
        }
    }
}

/// Unnormalized discrete Fourier coefficients of a real field,
/// `û_k = Σ_j u_j e^{-i k·x_j}`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.data
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn from_coefficients(grid: &Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch("spectrum length".into()));
        }
        Ok(Spectrum {
            grid: grid.clone(),
            data,
        })
    }

    /// Inverse transform; the imaginary residue must stay below `1e-10` of
    /// the field norm before it is dropped.
    pub fn to_real(&self) -> Result<ScalarField> {
        let mut data = self.data.clone();
        transform(&self.grid, &mut data, true);
        let scale = 1.0 / self.grid.len() as f64;
        let (mut re2, mut im2) = (0.0, 0.0);
        let values: Vec<f64> = data
            .iter()
            .map(|c| {
                re2 += c.re * c.re;
                im2 += c.im * c.im;
                c.re * scale
            })
            .collect();
        if im2.sqrt() > 1e-10 * re2.sqrt().max(f64::MIN_POSITIVE) && im2.sqrt() * scale > 1e-300 {
            return Err(Error::NonFinite(format!(
                "inverse transform is not real: imaginary residue {:e} vs norm {:e}",
                im2.sqrt(),
                re2.sqrt()
            )));
        }
        ScalarField::new(&self.grid, values)
    }

    /// Real part of the inverse transform, for symbols that are not even in k.
    pub fn to_real_part(&self) -> ScalarField {
        let mut data = self.data.clone();
        transform(&self.grid, &mut data, true);
        let scale = 1.0 / self.grid.len() as f64;
        ScalarField::from_raw(&self.grid, data.iter().map(|c| c.re * scale).collect())
    }

    /// `Σ_k m(|k|²) |û_k|²`, scaled so that `m ≡ 1` gives the squared
    /// volume-weighted L² norm.
    pub fn weighted_power(&self, m: impl Fn(f64) -> f64) -> f64 {
        let scale = self.grid.cell_volume() / self.grid.len() as f64;
        self.data
            .iter()
            .enumerate()
            .map(|(i, c)| m(self.grid.wavenumber_sq(i)) * c.norm_sqr())
            .sum::<f64>()
            * scale
    }
}

pub fn fft(u: &ScalarField) -> Spectrum {
    let mut data: Vec<Complex64> = u.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(u.grid(), &mut data, false);
    Spectrum {
        grid: u.grid().clone(),
        data,
    }
}

/// `IFFT(m(k) · FFT(u))` for a real symbol `m` of the wave vector.
///
/// The symbol is evaluated on every grid wave vector; a NaN there is an
/// error. When `m` is not even in `k` only the real part is kept.
pub fn fourier_multiplier(u: &ScalarField, m: impl Fn([f64; 2]) -> f64) -> Result<ScalarField> {
    let mut spec = fft(u);
    let grid = u.grid().clone();
    for (i, c) in spec.data.iter_mut().enumerate() {
        let factor = m(grid.wavevector(i));
        if factor.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "multiplier is NaN at wave vector {:?}",
                grid.wavevector(i)
            )));
        }
        *c *= factor;
    }
    Ok(spec.to_real_part())
}

/// Spectral gradient `IFFT(i k FFT(u))`; the Nyquist mode of each axis is
/// dropped so that the result stays real.
pub fn spectral_gradient(u: &ScalarField) -> VectorField {
    let grid = u.grid().clone();
    let spec = fft(u);
    let components = (0..grid.dim())
        .map(|axis| {
            let mut s = spec.clone();
            for (i, c) in s.data.iter_mut().enumerate() {
                *c *= Complex64::new(0.0, odd_symbol(&grid, i, axis));
            }
            s.to_real_part()
        })
        .collect();
    VectorField { components }
}

/// Spectral divergence, the exact negative adjoint of [`spectral_gradient`].
pub fn spectral_divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid().clone();
    let mut total = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (axis, comp) in v.components().iter().enumerate() {
        let s = fft(comp);
        for (i, (t, c)) in total.iter_mut().zip(&s.data).enumerate() {
            *t += c * Complex64::new(0.0, odd_symbol(&grid, i, axis));
        }
    }
    Spectrum { grid, data: total }.to_real_part()
}

fn odd_symbol(grid: &Grid, index: usize, axis: usize) -> f64 {
    let m = grid.axis_indices(index)[axis];
    if m == grid.points() / 2 {
        0.0
    } else {
        grid.wavenumbers()[m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_1d(n: usize, freq: f64) -> ScalarField {
        let g = make_grid(1, 2.0 * PI, n).unwrap();
        ScalarField::from_fn(&g, |x| (freq * x[0]).sin())
    }

    #[test]
    fn grid_wavenumbers_follow_fft_order() {
        let g = make_grid(1, 2.0 * PI, 16).unwrap();
        assert!((g.spacing() - 2.0 * PI / 16.0).abs() < 1e-15);
        let expect = [0., 1., 2., 3., 4., 5., 6., 7., -8., -7., -6., -5., -4., -3., -2., -1.];
        for (k, e) in g.wavenumbers().iter().zip(expect) {
            assert!((k - e).abs() < 1e-12);
        }
        for m in 1..16 {
            if m != 8 {
                assert!((g.wavenumbers()[m] + g.wavenumbers()[16 - m]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_2d_counts() {
        let g = make_grid(2, 1.0, 64).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.spacing(), 1.0 / 64.0);
        assert_eq!(g.spacing() * g.points() as f64, g.length());
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(matches!(make_grid(1, 2.0 * PI, 12), Err(Error::InvalidGrid(_))));
        assert!(make_grid(3, 1.0, 16).is_err());
        assert!(make_grid(1, 1.0, 4).is_err());
        assert!(make_grid(1, -1.0, 16).is_err());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = make_grid(2, 3.0, 16).unwrap();
        let u = ScalarField::constant(&g, 4.2);
        assert_eq!(gradient(&u).max_abs(), 0.0);
        let b = ScalarField::constant(&g, 1.0);
        assert_eq!(div_b_grad(&u, &b).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_sine_is_second_order() {
        // Centered difference of sin(kx): sin(kh)/h cos(kx); error ≈ k³h²/6.
        let u = sine_1d(256, 1.0);
        let h = u.grid().spacing();
        let g = gradient(&u);
        let err = g
            .component(0)
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (i as f64 * h).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 0.17 * h * h, "err = {err}");

        let e = |n| {
            let u = sine_1d(n, 8.0);
            let h = u.grid().spacing();
            gradient(&u)
                .component(0)
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v - 8.0 * (8.0 * i as f64 * h).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = e(128) / e(256);
        assert!((ratio - 4.0).abs() < 0.1, "ratio = {ratio}");
    }

    #[test]
    fn laplacian_of_sine() {
        let u = sine_1d(256, 1.0);
        let b = ScalarField::constant(u.grid(), 1.0);
        let lap = div_b_grad(&u, &b).unwrap();
        let h = u.grid().spacing();
        let err = lap
            .values()
            .iter()
            .zip(u.values())
            .map(|(l, s)| (l + s).abs())
            .fold(0.0, f64::max);
        assert!(err <= h * h / 12.0 * 1.01, "err = {err}");
    }

    #[test]
    fn div_b_grad_rejects_nonpositive() {
        let g = make_grid(1, 1.0, 8).unwrap();
        let u = ScalarField::zeros(&g);
        let mut bv = vec![1.0; 8];
        bv[3] = 0.0;
        let b = ScalarField::new(&g, bv).unwrap();
        assert!(matches!(div_b_grad(&u, &b), Err(Error::NonPositive(_))));
    }

    #[test]
    fn unit_coefficient_is_standard_laplacian_2d() {
        let g = make_grid(2, 2.0, 16).unwrap();
        let u = ScalarField::from_fn(&g, |x| (x[0] * 3.0).sin() * (x[1] * 1.7).cos() + x[0] * x[1]);
        let b = ScalarField::constant(&g, 1.0);
        let lap = div_b_grad(&u, &b).unwrap();
        let h2 = g.spacing() * g.spacing();
        let v = u.values();
        let n = 16;
        for iy in 0..n {
            for ix in 0..n {
                let i = iy * n + ix;
                let s = v[iy * n + (ix + 1) % n] + v[iy * n + (ix + n - 1) % n]
                    + v[((iy + 1) % n) * n + ix]
                    + v[((iy + n - 1) % n) * n + ix]
                    - 4.0 * v[i];
                assert!((lap.values()[i] - s / h2).abs() <= 1e-12 * (s / h2).abs().max(1.0));
            }
        }
    }

    #[test]
    fn translation_commutes_with_stencils() {
        let g = make_grid(2, 5.0, 16).unwrap();
        let u = ScalarField::from_fn(&g, |x| (x[0] * 1.3).sin() + (x[1] * 2.0).cos() * x[0]);
        let b = ScalarField::from_fn(&g, |x| 1.5 + (x[0] + 2.0 * x[1]).sin() * 0.3);
        for axis in 0..2 {
            let lhs = div_b_grad(&u.shift(axis, 1), &b.shift(axis, 1)).unwrap();
            let rhs = div_b_grad(&u, &b).unwrap().shift(axis, 1);
            assert_eq!(lhs, rhs);
            let gl = gradient(&u.shift(axis, 1));
            let gr = gradient(&u);
            for c in 0..2 {
                assert_eq!(gl.component(c), &gr.component(c).shift(axis, 1));
            }
        }
    }

    #[test]
    fn multiplier_identity_and_laplacian() {
        let u = sine_1d(64, 1.0);
        let same = fourier_multiplier(&u, |_| 1.0).unwrap();
        let d = same.sub(&u).unwrap().max_abs();
        assert!(d < 1e-14);
        let lap = fourier_multiplier(&u, |k| -(k[0] * k[0] + k[1] * k[1])).unwrap();
        let d = lap.zip_map(&u, |a, b| a + b).unwrap().max_abs();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn multiplier_rejects_nan() {
        let u = sine_1d(16, 1.0);
        assert!(fourier_multiplier(&u, |k| 1.0 / k[0] * 0.0).is_err());
    }

    #[test]
    fn multiplier_composition() {
        let g = make_grid(2, 4.0, 32).unwrap();
        let u = ScalarField::from_fn(&g, |x| (-(x[0] - 2.0).powi(2) - (x[1] - 1.5).powi(2)).exp());
        let half = |k: [f64; 2]| (1.0 + k[0] * k[0] + k[1] * k[1]).powf(-0.5);
        let twice = fourier_multiplier(&fourier_multiplier(&u, half).unwrap(), half).unwrap();
        let once = fourier_multiplier(&u, |k| 1.0 / (1.0 + k[0] * k[0] + k[1] * k[1])).unwrap();
        assert!(twice.sub(&once).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn spectrum_round_trip_checks_realness() {
        let u = sine_1d(32, 3.0);
        let back = fft(&u).to_real().unwrap();
        assert!(back.sub(&u).unwrap().max_abs() < 1e-14);
        let mut s = fft(&u);
        s.coefficients_mut()[1] = Complex64::new(0.0, 5.0);
        assert!(s.to_real().is_err());
    }
}
