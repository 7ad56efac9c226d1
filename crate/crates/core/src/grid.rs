//! Uniform rectangular grids, complex grid functions, stencils,
//! interpolation and the binary/CSV formats.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::EllipseDomain;

/// Cell-centered grid: node `(i, j)` sits at `origin + h (i + i j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub origin: C64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(origin: C64, h: f64, nx: usize, ny: usize) -> Self {
        assert!(h > 0.0 && nx > 0 && ny > 0);
        Grid { origin, h, nx, ny }
    }

    /// Grid with nodes on `h Z²` covering `[-hx, hx] × [-hy, hy]` plus
    /// `margin` extra nodes on each side. The real axis is a grid row.
    pub fn centered(hx: f64, hy: f64, h: f64, margin: usize) -> Self {
        let ix = (hx / h).ceil() as usize + margin;
        let iy = (hy / h).ceil() as usize + margin;
        Grid {
            origin: C64::new(-(ix as f64) * h, -(iy as f64) * h),
            h,
            nx: 2 * ix + 1,
            ny: 2 * iy + 1,
        }
    }

    /// Grid covering `Ω_ε` with a margin of `margin` nodes.
    pub fn for_ellipse(epsilon: f64, h: f64, margin: usize) -> Self {
        let d = EllipseDomain::new(epsilon);
        Self::centered(d.semi_major(), d.semi_minor(), h, margin)
    }

    /// Whether the spacing resolves the disk cover of `Ω_ε` (`h <= ε²/32`).
    pub fn resolves_cover(&self, epsilon: f64) -> bool {
        self.h <= epsilon * epsilon / 32.0
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> C64 {
        self.origin + C64::new(i as f64 * self.h, j as f64 * self.h)
    }

    /// Row index of the real axis, if it is a grid row.
    pub fn real_row(&self) -> Option<usize> {
        let j = (-self.origin.im / self.h).round();
        if j >= 0.0 && (j as usize) < self.ny && (self.origin.im + j * self.h).abs() < 1e-9 * self.h {
            Some(j as usize)
        } else {
            None
        }
    }

    /// Fractional grid coordinates of `z`.
    pub fn coords(&self, z: C64) -> (f64, f64) {
        ((z.re - self.origin.re) / self.h, (z.im - self.origin.im) / self.h)
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// Mask of nodes whose center lies in `Ω_ε`.
    pub fn ellipse_mask(&self, epsilon: f64) -> Vec<bool> {
        let d = EllipseDomain::new(epsilon);
        let mut m = vec![false; self.len()];
        for j in 0..self.ny {
            for i in 0..self.nx {
                m[self.idx(i, j)] = d.contains(self.point(i, j));
            }
        }
        m
    }

    /// Nodes where a stencil of half-width `w` fits inside the grid.
    #[inline]
    pub fn interior(&self, i: usize, j: usize, w: usize) -> bool {
        i >= w && j >= w && i + w < self.nx && j + w < self.ny
    }
}

/// Complex samples on a [`Grid`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub grid: Grid,
    pub data: Vec<C64>,
    /// Free-form description of the support (e.g. `"omega:0.5"`).
    pub tag: String,
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            data: vec![C64::new(0.0, 0.0); grid.len()],
            tag: String::new(),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(C64) -> C64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.point(i, j)));
            }
        }
        GridFunction { grid, data, tag: String::new() }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        GridFunction {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
            tag: self.tag.clone(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        GridFunction {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            tag: self.tag.clone(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|v| v * c)
    }

    /// Multiplies by an indicator mask.
    pub fn masked(&self, mask: &[bool]) -> Self {
        GridFunction {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(mask)
                .map(|(&v, &m)| if m { v } else { C64::new(0.0, 0.0) })
                .collect(),
            tag: self.tag.clone(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_norm_on(&self, mask: &[bool]) -> f64 {
        self.data
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Cell-area-weighted L² norm.
    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    /// Fourth-order central `∂/∂x` at an interior node.
    #[inline]
    pub fn dx(&self, i: usize, j: usize) -> C64 {
        let g = &self.grid;
        let f = |a: usize| self.data[g.idx(a, j)];
        (f(i - 2) - f(i - 1) * 8.0 + f(i + 1) * 8.0 - f(i + 2)) / (12.0 * g.h)
    }

    /// Fourth-order central `∂/∂y` at an interior node.
    #[inline]
    pub fn dy(&self, i: usize, j: usize) -> C64 {
        let g = &self.grid;
        let f = |b: usize| self.data[g.idx(i, b)];
        (f(j - 2) - f(j - 1) * 8.0 + f(j + 1) * 8.0 - f(j + 2)) / (12.0 * g.h)
    }

    /// Discrete `∂/∂z̄ = (∂x + i ∂y)/2` at an interior node.
    #[inline]
    pub fn dbar_at(&self, i: usize, j: usize) -> C64 {
        (self.dx(i, j) + C64::i() * self.dy(i, j)) * 0.5
    }

    /// Discrete `∂/∂z = (∂x - i ∂y)/2` at an interior node.
    #[inline]
    pub fn dz_at(&self, i: usize, j: usize) -> C64 {
        (self.dx(i, j) - C64::i() * self.dy(i, j)) * 0.5
    }

    /// Discrete `∂/∂z̄` on all nodes where the stencil fits (zero elsewhere).
    pub fn dbar(&self) -> GridFunction {
        self.apply_stencil(|s, i, j| s.dbar_at(i, j))
    }

    /// Discrete `∂/∂z` on all nodes where the stencil fits (zero elsewhere).
    pub fn dz(&self) -> GridFunction {
        self.apply_stencil(|s, i, j| s.dz_at(i, j))
    }

    fn apply_stencil(&self, op: impl Fn(&Self, usize, usize) -> C64) -> GridFunction {
        let g = self.grid;
        let mut out = GridFunction::zeros(g);
        for j in 2..g.ny.saturating_sub(2) {
            for i in 2..g.nx.saturating_sub(2) {
                out.data[g.idx(i, j)] = op(self, i, j);
            }
        }
        out
    }

    /// Holomorphy detector: `max |∂̄f| <= tol_rel * ||f||_∞` over masked
    /// nodes where the stencil fits. Returns `(accepted, residual, tolerance)`.
    pub fn is_holomorphic_on(&self, mask: &[bool], tol_rel: f64) -> (bool, f64, f64) {
        let g = self.grid;
        let scale = self.sup_norm_on(mask);
        let mut res = 0.0f64;
        for j in 2..g.ny.saturating_sub(2) {
            for i in 2..g.nx.saturating_sub(2) {
                if mask[g.idx(i, j)] {
                    res = res.max(self.dbar_at(i, j).norm());
                }
            }
        }
        let tol = tol_rel * scale;
        (res <= tol, res, tol)
    }

    /// Lagrange interpolation with `2p` points per axis (clamped at edges).
    pub fn interpolate(&self, z: C64, p: usize) -> C64 {
        let g = &self.grid;
        let (u, v) = g.coords(z);
        let (ix, wx) = lagrange_weights(u, g.nx, p);
        let (iy, wy) = lagrange_weights(v, g.ny, p);
        let mut acc = C64::new(0.0, 0.0);
        for (b, &wyb) in wy.iter().enumerate() {
            if wyb == 0.0 {
                continue;
            }
            let mut row = C64::new(0.0, 0.0);
            for (a, &wxa) in wx.iter().enumerate() {
                row += self.data[g.idx(ix + a, iy + b)] * wxa;
            }
            acc += row * wyb;
        }
        acc
    }

    /// Value on the real axis at `x` by 1-D interpolation along the axis row.
    pub fn interpolate_real_axis(&self, x: f64) -> Option<C64> {
        let g = &self.grid;
        let j = g.real_row()?;
        let u = (x - g.origin.re) / g.h;
        let (ix, wx) = lagrange_weights(u, g.nx, 3);
        Some(
            wx.iter()
                .enumerate()
                .map(|(a, &w)| self.data[g.idx(ix + a, j)] * w)
                .sum(),
        )
    }

    /// Binary format: little-endian `origin.re, origin.im, h` (f64),
    /// `nx, ny` (u64), then interleaved `re, im` doubles row by row.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        w.write_f64::<LittleEndian>(g.origin.re)?;
        w.write_f64::<LittleEndian>(g.origin.im)?;
        w.write_f64::<LittleEndian>(g.h)?;
        w.write_u64::<LittleEndian>(g.nx as u64)?;
        w.write_u64::<LittleEndian>(g.ny as u64)?;
        for v in &self.data {
            w.write_f64::<LittleEndian>(v.re)?;
            w.write_f64::<LittleEndian>(v.im)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        let h = r.read_f64::<LittleEndian>()?;
        let nx = r.read_u64::<LittleEndian>()? as usize;
        let ny = r.read_u64::<LittleEndian>()? as usize;
        if !(h > 0.0) || nx == 0 || ny == 0 || nx.saturating_mul(ny) > 1 << 32 {
            return Err(Error::Data("bad grid header".into()));
        }
        let grid = Grid::new(C64::new(re, im), h, nx, ny);
        let mut data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let a = r.read_f64::<LittleEndian>()?;
            let b = r.read_f64::<LittleEndian>()?;
            data.push(C64::new(a, b));
        }
        Ok(GridFunction { grid, data, tag: String::new() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + 16 * self.data.len());
        self.write_binary(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(f))
    }

    /// CSV with columns `x,y,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,re,im")?;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let z = self.grid.point(i, j);
                let v = self.at(i, j);
                writeln!(w, "{},{},{},{}", z.re, z.im, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Start index and weights of `2p`-point Lagrange interpolation at
/// fractional coordinate `u` on `0..n`.
fn lagrange_weights(u: f64, n: usize, p: usize) -> (usize, Vec<f64>) {
    let np = (2 * p).min(n);
    let base = u.floor() as i64 - (np as i64 / 2 - 1);
    let start = base.clamp(0, (n - np) as i64) as usize;
    let mut w = vec![1.0; np];
    for a in 0..np {
        let xa = (start + a) as f64;
        for b in 0..np {
            if a != b {
                let xb = (start + b) as f64;
                w[a] *= (u - xb) / (xa - xb);
            }
        }
    }
    (start, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn real_axis_is_a_row() {
        let g = Grid::for_ellipse(1.0, 1.0 / 64.0, 4);
        let j = g.real_row().unwrap();
        assert_eq!(g.point(0, j).im, 0.0);
    }

    #[test]
    fn holomorphic_detector() {
        let g = Grid::centered(1.0, 1.0, 1.0 / 32.0, 2);
        let mask = vec![true; g.len()];
        let z2 = GridFunction::from_fn(g, |z| z * z * z);
        assert!(z2.is_holomorphic_on(&mask, 1e-6).0);
        let zbar = GridFunction::from_fn(g, |z| z.conj());
        assert!(!zbar.is_holomorphic_on(&mask, 1e-6).0);
        let d = zbar.dbar();
        assert_relative_eq!(d.at(10, 10).re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_is_exact_on_cubics() {
        let g = Grid::centered(1.0, 1.0, 0.1, 2);
        let f = GridFunction::from_fn(g, |z| z * z * z - z * 2.0);
        let z = C64::new(0.3141, -0.271);
        let v = f.interpolate(z, 2);
        let e = z * z * z - z * 2.0;
        assert!((v - e).norm() < 1e-12);
        let x = 0.123;
        let v = f.interpolate_real_axis(x).unwrap();
        assert!((v.re - (x * x * x - 2.0 * x)).abs() < 1e-12);
    }

    #[test]
    fn binary_roundtrip() {
        let g = Grid::centered(0.5, 0.25, 0.125, 1);
        let f = GridFunction::from_fn(g, |z| z.exp());
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let back = GridFunction::read_binary(&buf[..]).unwrap();
        assert_eq!(back.grid, f.grid);
        assert_eq!(back.data, f.data);
    }
}
