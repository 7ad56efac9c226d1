//! Cauchy-kernel convolution, an exact inverse of the discrete `∂/∂z̄`
//! stencil, and the sup / level-set / three-lines estimates built on them.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::EllipseDomain;
use crate::grid::{Grid, GridFunction};
use crate::weights::WeightSequence;

/// Grids with at most this many nodes are convolved by direct summation.
pub const DIRECT_LIMIT: usize = 128 * 128;

/// Smallest even `m >= n` whose only prime factors are 2, 3 and 5.
pub fn fast_size(n: usize) -> usize {
    let mut m = n.max(2);
    loop {
        if m % 2 == 0 {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

/// Two-dimensional FFT on a `px × py` row-major array. The forward transform
/// leaves the spectrum in column-major (transposed) order; `inverse` undoes
/// that and normalizes.
struct Fft2 {
    px: usize,
    py: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(px: usize, py: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            px,
            py,
            fwd_x: planner.plan_fft_forward(px),
            fwd_y: planner.plan_fft_forward(py),
            inv_x: planner.plan_fft_inverse(px),
            inv_y: planner.plan_fft_inverse(py),
        }
    }

    fn forward(&self, data: &mut Vec<C64>) {
        self.fwd_x.process(data);
        let mut t = transpose(data, self.px, self.py);
        self.fwd_y.process(&mut t);
        *data = t;
    }

    fn inverse(&self, spec: &mut Vec<C64>) {
        self.inv_y.process(spec);
        let mut d = transpose(spec, self.py, self.px);
        self.inv_x.process(&mut d);
        let s = 1.0 / (self.px * self.py) as f64;
        for v in d.iter_mut() {
            *v *= s;
        }
        *spec = d;
    }
}

/// Transposes a row-major `rows × cols` array given as `cols` wide rows.
fn transpose(a: &[C64], width: usize, height: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len()];
    const B: usize = 32;
    for jb in (0..height).step_by(B) {
        for ib in (0..width).step_by(B) {
            for j in jb..(jb + B).min(height) {
                for i in ib..(ib + B).min(width) {
                    out[i * height + j] = a[j * width + i];
                }
            }
        }
    }
    out
}

#[inline]
fn kernel(h: f64, di: i64, dj: i64) -> C64 {
    if di == 0 && dj == 0 {
        // Cauchy transform of the equal-area disk at its own center.
        C64::new(0.0, 0.0)
    } else {
        C64::new(h / PI, 0.0) / C64::new(di as f64, dj as f64)
    }
}

fn zero_result(w: &GridFunction) -> GridFunction {
    GridFunction::zeros(w.grid).with_tag(w.tag.clone())
}

/// `v = K * w` with `K(z) = 1/(πz)`, midpoint quadrature and the disk-average
/// rule at the singular node. Direct summation on small grids, padded FFT
/// convolution otherwise.
pub fn cauchy_convolve(w: &GridFunction) -> GridFunction {
    if w.grid.len() <= DIRECT_LIMIT {
        cauchy_convolve_direct(w)
    } else {
        cauchy_convolve_fft(w)
    }
}

pub fn cauchy_convolve_direct(w: &GridFunction) -> GridFunction {
    let g = w.grid;
    let support: Vec<(i64, i64, C64)> = (0..g.ny)
        .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
        .filter_map(|(i, j)| {
            let v = w.at(i, j);
            (v != C64::new(0.0, 0.0)).then_some((i as i64, j as i64, v))
        })
        .collect();
    if support.is_empty() {
        return zero_result(w);
    }
    let mut out = GridFunction::zeros(g).with_tag(w.tag.clone());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut acc = C64::new(0.0, 0.0);
            for &(a, b, v) in &support {
                acc += kernel(g.h, i as i64 - a, j as i64 - b) * v;
            }
            out.data[g.idx(i, j)] = acc;
        }
    }
    out
}

pub fn cauchy_convolve_fft(w: &GridFunction) -> GridFunction {
    if w.data.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return zero_result(w);
    }
    let plan = ConvolutionPlan::new(w.grid);
    plan.convolve(w)
}

/// Cached transforms for repeated convolutions and solves on one grid.
pub struct ConvolutionPlan {
    grid: Grid,
    fft: Fft2,
    kernel_hat: Vec<C64>,
}

impl ConvolutionPlan {
    pub fn new(grid: Grid) -> Self {
        let px = fast_size(2 * grid.nx);
        let py = fast_size(2 * grid.ny);
        let fft = Fft2::new(px, py);
        let mut k = vec![C64::new(0.0, 0.0); px * py];
        let (nx, ny) = (grid.nx as i64, grid.ny as i64);
        for dj in -(ny - 1)..ny {
            let row = dj.rem_euclid(py as i64) as usize * px;
            for di in -(nx - 1)..nx {
                k[row + di.rem_euclid(px as i64) as usize] = kernel(grid.h, di, dj);
            }
        }
        fft.forward(&mut k);
        ConvolutionPlan { grid, fft, kernel_hat: k }
    }

    fn pad(&self, w: &GridFunction) -> Vec<C64> {
        let g = self.grid;
        let mut buf = vec![C64::new(0.0, 0.0); self.fft.px * self.fft.py];
        for j in 0..g.ny {
            buf[j * self.fft.px..j * self.fft.px + g.nx].copy_from_slice(&w.data[j * g.nx..(j + 1) * g.nx]);
        }
        buf
    }

    fn crop(&self, buf: &[C64], tag: &str) -> GridFunction {
        let g = self.grid;
        let mut out = GridFunction::zeros(g).with_tag(tag.to_string());
        for j in 0..g.ny {
            out.data[j * g.nx..(j + 1) * g.nx].copy_from_slice(&buf[j * self.fft.px..j * self.fft.px + g.nx]);
        }
        out
    }

    pub fn convolve(&self, w: &GridFunction) -> GridFunction {
        assert_eq!(w.grid, self.grid, "grid mismatch");
        let mut buf = self.pad(w);
        self.fft.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.fft.inverse(&mut buf);
        self.crop(&buf, &w.tag)
    }

    /// Solves `D v = w` exactly at every grid node, where `D` is the
    /// fourth-order central `∂/∂z̄` stencil extended periodically over the
    /// padded box. The four checkerboard null modes of `D` are cancelled by
    /// point sources placed in the padding, far from the grid.
    pub fn solve(&self, w: &GridFunction) -> GridFunction {
        assert_eq!(w.grid, self.grid, "grid mismatch");
        let (px, py) = (self.fft.px, self.fft.py);
        let g = self.grid;
        let mut buf = self.pad(w);
        let mut modes = [C64::new(0.0, 0.0); 4];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let v = w.at(i, j);
                for (s, m) in modes.iter_mut().enumerate() {
                    let sign = ((s & 1) * i + (s >> 1) * j) % 2;
                    *m += if sign == 0 { v } else { -v };
                }
            }
        }
        let p0 = (g.nx + (px - g.nx) / 2) & !1;
        let q0 = (g.ny + (py - g.ny) / 2) & !1;
        for ab in 0..4 {
            let (a, b) = (ab & 1, ab >> 1);
            let mut c = C64::new(0.0, 0.0);
            for (s, m) in modes.iter().enumerate() {
                let sign = ((s & 1) * a + (s >> 1) * b) % 2;
                c += if sign == 0 { *m } else { -*m };
            }
            buf[(q0 + b) * px + p0 + a] -= c * 0.25;
        }
        self.fft.forward(&mut buf);
        let h = g.h;
        let sym = |k: usize, n: usize| {
            let th = 2.0 * PI * k as f64 / n as f64;
            th.sin() * (4.0 - th.cos()) / (3.0 * h)
        };
        let sx: Vec<f64> = (0..px).map(|k| sym(k, px)).collect();
        let sy: Vec<f64> = (0..py).map(|k| sym(k, py)).collect();
        // spectrum is transposed: index kx * py + ky
        for kx in 0..px {
            for ky in 0..py {
                let idx = kx * py + ky;
                let null = (kx == 0 || 2 * kx == px) && (ky == 0 || 2 * ky == py);
                if null {
                    buf[idx] = C64::new(0.0, 0.0);
                } else {
                    let d = C64::new(-sy[ky], sx[kx]) * 0.5;
                    buf[idx] /= d;
                }
            }
        }
        self.fft.inverse(&mut buf);
        self.crop(&buf, &w.tag)
    }
}

/// Sup-norm constant of the Cauchy transform for densities supported on a
/// set of the given area: `||K*w||_∞ <= 2 sqrt(area/π) ||w||_∞`.
pub fn kernel_sup_constant(area: f64) -> f64 {
    2.0 * (area / PI).sqrt()
}

/// Area-fraction indicator of the disk `|z - c| < rho` (boundary cells
/// subsampled on a `sub × sub` lattice).
pub fn disk_indicator(grid: Grid, c: C64, rho: f64, sub: usize) -> GridFunction {
    let h = grid.h;
    let half = h * std::f64::consts::FRAC_1_SQRT_2;
    let mut out = GridFunction::zeros(grid).with_tag(format!("disk:{rho}"));
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let z = grid.point(i, j);
            let d = (z - c).norm();
            let v = if d + half <= rho {
                1.0
            } else if d - half >= rho {
                0.0
            } else {
                let mut n = 0usize;
                for b in 0..sub {
                    for a in 0..sub {
                        let p = z + C64::new(
                            ((a as f64 + 0.5) / sub as f64 - 0.5) * h,
                            ((b as f64 + 0.5) / sub as f64 - 0.5) * h,
                        );
                        if (p - c).norm() < rho {
                            n += 1;
                        }
                    }
                }
                n as f64 / (sub * sub) as f64
            };
            out.data[grid.idx(i, j)] = C64::new(v, 0.0);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SupBound {
    pub bound: f64,
    pub measured_sup: f64,
}

/// `bound = r||w||_∞ + sqrt|ln r| ||w||_2` and `measured_sup = ||K*w||_∞`
/// over the support of `w`.
pub fn refined_sup_bound(w: &GridFunction, r: f64) -> Result<SupBound> {
    if !(r > 0.0 && r <= 0.5) {
        return Err(Error::domain(format!("r must lie in (0, 1/2], got {r}")));
    }
    let bound = r * w.sup_norm() + r.ln().abs().sqrt() * w.l2_norm();
    let support: Vec<bool> = w.data.iter().map(|v| *v != C64::new(0.0, 0.0)).collect();
    let v = cauchy_convolve(w);
    Ok(SupBound {
        bound,
        measured_sup: v.sup_norm_on(&support),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevelSetEnergy {
    /// `∫_{Ω_{ε/2}} |g'|² 1_{|g|<r}`.
    pub energy: f64,
    /// `r²/ε³ ln(K²/r² + 1)`.
    pub scaled_bound: f64,
    /// `r² ∫_{Ω_{ε/2}} Δ ln(|g|² + r²)`, an upper bound for `energy`.
    pub green_bound: f64,
}

/// Level-set energy of a holomorphic grid function over `Ω_{ε/2}`.
///
/// Nodes within `2h` of `∂Ω_{ε/2}` are skipped. Cells meeting the level set
/// are integrated on a sub-lattice using the local quadratic Taylor model.
pub fn level_set_energy(g: &GridFunction, epsilon: f64, r: f64, k_bound: f64) -> Result<LevelSetEnergy> {
    if !(r > 0.0) || !(epsilon > 0.0) {
        return Err(Error::domain("level_set_energy needs r > 0 and epsilon > 0"));
    }
    let grid = g.grid;
    let outer = grid.ellipse_mask(epsilon);
    let sup = g.sup_norm_on(&outer);
    if sup > k_bound * (1.0 + 1e-12) {
        return Err(Error::precondition(format!("|g| reaches {sup:e} > K = {k_bound:e} on the grid")));
    }
    let (holo, res, tol) = g.is_holomorphic_on(&outer, 1e-6);
    if !holo {
        return Err(Error::precondition(format!("dbar residual {res:e} above {tol:e}")));
    }
    let inner = EllipseDomain::new(epsilon / 2.0);
    let h = grid.h;
    let area = h * h;
    let mut energy = 0.0;
    let mut green = 0.0;
    for j in 2..grid.ny - 2 {
        for i in 2..grid.nx - 2 {
            let z = grid.point(i, j);
            if inner.signed_depth(z) < 2.0 * h {
                continue;
            }
            let g0 = g.at(i, j);
            let g1 = g.dz_at(i, j);
            let g2 = d2x(g, i, j);
            let reach = g1.norm() * h + g2.norm() * h * h;
            let lo = g0.norm() - reach;
            let resolve = g1.norm() * h > 0.25 * (g0.norm() + r) || lo < 2.0 * r;
            if !resolve {
                green += area * 4.0 * r * r * g1.norm_sqr() / (g0.norm_sqr() + r * r).powi(2) * r * r;
                continue;
            }
            let n = ((8.0 * reach / r).ceil() as usize).clamp(4, 256);
            let (mut e, mut gr) = (0.0, 0.0);
            for b in 0..n {
                for a in 0..n {
                    let dz = C64::new(
                        ((a as f64 + 0.5) / n as f64 - 0.5) * h,
                        ((b as f64 + 0.5) / n as f64 - 0.5) * h,
                    );
                    let gv = g0 + g1 * dz + g2 * dz * dz * 0.5;
                    let gd = (g1 + g2 * dz).norm_sqr();
                    if gv.norm() < r {
                        e += gd;
                    }
                    gr += 4.0 * r * r * gd / (gv.norm_sqr() + r * r).powi(2);
                }
            }
            let sub = area / (n * n) as f64;
            energy += e * sub;
            green += gr * sub * r * r;
        }
    }
    let scaled_bound = r * r / epsilon.powi(3) * (k_bound * k_bound / (r * r) + 1.0).ln();
    Ok(LevelSetEnergy {
        energy,
        scaled_bound,
        green_bound: green,
    })
}

/// Fourth-order `∂²/∂x²` (equal to `g''` for holomorphic `g`).
fn d2x(g: &GridFunction, i: usize, j: usize) -> C64 {
    let f = |a: usize| g.at(a, j);
    (-f(i - 2) + f(i - 1) * 16.0 - f(i) * 30.0 + f(i + 1) * 16.0 - f(i + 2)) / (12.0 * g.grid.h * g.grid.h)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreeLines {
    pub a3: f64,
    pub a4: f64,
    pub kappa2: f64,
    pub verified: bool,
    /// Largest `|g| / (a3 h_M(a4 ε) + floor)` over `Ω_{ε/2}` nodes.
    pub worst_ratio: f64,
    pub samples: usize,
}

/// Transfers `|g| <= a1 h_M(a2 ε)` on `[-1, 1]` and `|g| <= L` on `Ω_ε` to
/// `|g| <= a3 h_M(a4 ε)` on `Ω_{ε/2}` with `a3 = sqrt(a1 max(a1, L))` and
/// `a4 = κ₂ a2`.
pub fn three_lines_propagate(
    g: &GridFunction,
    epsilon: f64,
    l_bound: f64,
    a1: f64,
    a2: f64,
    m: &WeightSequence,
) -> Result<ThreeLines> {
    three_lines_propagate_with_floor(g, epsilon, l_bound, a1, a2, m, 0.0)
}

/// As [`three_lines_propagate`], with an additive discretization floor on
/// every sampled inequality.
pub fn three_lines_propagate_with_floor(
    g: &GridFunction,
    epsilon: f64,
    l_bound: f64,
    a1: f64,
    a2: f64,
    m: &WeightSequence,
    floor: f64,
) -> Result<ThreeLines> {
    let grid = g.grid;
    let outer = grid.ellipse_mask(epsilon);
    for (k, &inside) in outer.iter().enumerate() {
        let v = g.data[k].norm();
        if inside && v > l_bound + floor {
            let (i, j) = (k % grid.nx, k / grid.nx);
            return Err(Error::precondition(format!(
                "|g| = {v:e} > L = {l_bound:e} at {}",
                grid.point(i, j)
            )));
        }
    }
    let on_interval = a1 * m.h_m(a2 * epsilon)? + floor;
    if let Some(j) = grid.real_row() {
        for i in 0..grid.nx {
            let z = grid.point(i, j);
            if z.re.abs() <= 1.0 {
                let v = g.at(i, j).norm();
                if v > on_interval {
                    return Err(Error::precondition(format!(
                        "|g| = {v:e} > a1 h_M(a2 eps) = {on_interval:e} at x = {}",
                        z.re
                    )));
                }
            }
        }
    }
    let kappa2 = m.kappa_for(2.0, &m.kappa_grid())?;
    let a3 = (a1 * a1.max(l_bound)).sqrt();
    let a4 = kappa2 * a2;
    let target = a3 * m.h_m(a4 * epsilon)? + floor;
    let inner = grid.ellipse_mask(epsilon / 2.0);
    let mut worst = 0.0f64;
    let mut samples = 0;
    for (k, &inside) in inner.iter().enumerate() {
        if inside {
            samples += 1;
            worst = worst.max(g.data[k].norm() / target);
        }
    }
    Ok(ThreeLines {
        a3,
        a4,
        kappa2,
        verified: worst <= 1.0,
        worst_ratio: worst,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_exact(z: C64) -> C64 {
        if z.norm() <= 1.0 {
            z.conj()
        } else {
            z.inv()
        }
    }

    #[test]
    fn zero_density() {
        let g = Grid::centered(1.0, 1.0, 0.1, 0);
        let w = GridFunction::zeros(g);
        assert_eq!(cauchy_convolve(&w).sup_norm(), 0.0);
        assert_eq!(cauchy_convolve_fft(&w).sup_norm(), 0.0);
    }

    #[test]
    fn fft_matches_direct() {
        let g = Grid::centered(1.2, 1.2, 1.0 / 16.0, 0);
        let w = disk_indicator(g, C64::new(0.1, -0.2), 0.7, 8);
        let a = cauchy_convolve_direct(&w);
        let b = cauchy_convolve_fft(&w);
        let err = a.sub(&b).sup_norm();
        assert!(err < 1e-12 * a.sup_norm(), "{err}");
    }

    #[test]
    fn disk_transform_coarse() {
        let g = Grid::centered(1.5, 1.5, 1.0 / 32.0, 0);
        let w = disk_indicator(g, C64::new(0.0, 0.0), 1.0, 16);
        let v = cauchy_convolve(&w);
        let mut err = 0.0f64;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let z = g.point(i, j);
                if (z.norm() - 1.0).abs() >= 2.0 * g.h {
                    err = err.max((v.at(i, j) - disk_exact(z)).norm());
                }
            }
        }
        assert!(err < 2.0 * g.h, "{err}");
    }

    #[test]
    fn solve_inverts_stencil() {
        let g = Grid::centered(1.0, 0.6, 1.0 / 32.0, 4);
        let w = GridFunction::from_fn(g, |z| {
            let r = z.norm();
            if r < 0.5 {
                C64::new(1.0 - r, z.re)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let plan = ConvolutionPlan::new(g);
        let v = plan.solve(&w);
        let d = v.dbar();
        let mut err = 0.0f64;
        for j in 2..g.ny - 2 {
            for i in 2..g.nx - 2 {
                err = err.max((d.at(i, j) - w.at(i, j)).norm());
            }
        }
        assert!(err < 1e-10, "{err}");
        assert!(v.sup_norm() < 2.0 * kernel_sup_constant(PI * 0.25) * w.sup_norm());
    }

    #[test]
    fn refined_bound_domain() {
        let g = Grid::centered(0.5, 0.5, 0.1, 0);
        let w = GridFunction::zeros(g);
        assert!(refined_sup_bound(&w, 0.75).is_err());
        let b = refined_sup_bound(&w, 0.25).unwrap();
        assert_eq!((b.bound, b.measured_sup), (0.0, 0.0));
    }

    #[test]
    fn level_set_of_identity_is_a_disk() {
        let g = Grid::for_ellipse(1.0, 1.0 / 128.0, 3);
        let z = GridFunction::from_fn(g, |z| z);
        let e = level_set_energy(&z, 1.0, 0.1, 1.0f64.cosh()).unwrap();
        assert!((e.energy / (PI * 0.01) - 1.0).abs() < 0.02, "{e:?}");
        assert!(e.energy <= e.green_bound * 1.001);
        let c = GridFunction::from_fn(g, |_| C64::new(2.0, 0.0));
        let e = level_set_energy(&c, 1.0, 0.1, 2.0).unwrap();
        assert_eq!(e.energy, 0.0);
    }

    #[test]
    fn three_lines_zero_and_constant() {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let g = Grid::for_ellipse(0.25, 1.0 / 64.0, 2);
        let zero = GridFunction::zeros(g);
        assert!(three_lines_propagate(&zero, 0.25, 1.0, 1.0, 1.0, &m).unwrap().verified);
        let (a1, a2, eps) = (0.5, 2.0, 0.25);
        let c = a1 * m.h_m(a2 * eps).unwrap();
        let cg = GridFunction::from_fn(g, |_| C64::new(c, 0.0));
        let t = three_lines_propagate(&cg, eps, c, a1, a2, &m).unwrap();
        assert!(t.verified, "{t:?}");
    }
}
