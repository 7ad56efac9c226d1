//! Reconstruction of `f` from `f^p` and `f^q`: reduction to consecutive
//! powers `f^m, f^(m+1)`, the regularized quotient `u_ε` and its `∂̄`
//! correction.
//!
//! The construction never reads `f`. Everything that compares against `f`
//! lives in [`verify_pipeline`], which takes the oracle as a separate
//! argument.
//!
//! Note on the consecutive-power residual: the bound on `Ω_ε` used for the
//! three-lines transfer is `|h_ε^m - g_ε^(m+1)| <= 2K^(m+1)`, i.e. the
//! residual is formed with `g_ε`, not with the quotient.

use num_complex::Complex64 as C64;
use num_integer::Integer;
use serde::Serialize;

use crate::dbar::{disk_indicator, refined_sup_bound, three_lines_propagate_with_floor, ConvolutionPlan, ThreeLines};
use crate::error::{Error, Result};
use crate::extension::{build_family_with, pm_verify, ApproximantFamily, ExtensionConfig, PmVerification, Rung, DEFAULT_H};
use crate::geometry::padded_cutoff;
use crate::grid::{Grid, GridFunction};
use crate::ledger::{ConstantLedger, Provenance};
use crate::model::SmoothFunctionModel;
use crate::weights::WeightSequence;

/// Least `m` such that every `j >= m` is `pk + ql` with `k, l >= 0`.
pub fn frobenius_threshold(p: u32, q: u32) -> Result<u32> {
    if p == 0 || q == 0 {
        return Err(Error::domain("p and q must be positive"));
    }
    if p.gcd(&q) != 1 {
        return Err(Error::domain(format!("gcd({p}, {q}) = {} is not 1", p.gcd(&q))));
    }
    Ok((p - 1) * (q - 1))
}

/// `(k, l)` with `pk + ql = j`, taking the smallest `l`.
pub fn power_decompose(j: u32, p: u32, q: u32) -> Result<(u32, u32)> {
    if p == 0 || q == 0 {
        return Err(Error::domain("p and q must be positive"));
    }
    let mut l = 0;
    while q * l <= j {
        if (j - q * l) % p == 0 {
            return Ok(((j - q * l) / p, l));
        }
        l += 1;
    }
    Err(Error::domain(format!("{j} is not of the form {p}k + {q}l")))
}

/// Brute-force representability of `j` as `pk + ql`.
pub fn representable(j: u32, p: u32, q: u32) -> bool {
    (0..=j / q.max(1)).any(|l| (j - q * l) % p == 0)
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub p: u32,
    pub q: u32,
    pub m: u32,
    pub eps0: f64,
    pub depth: usize,
    pub s: f64,
    pub sequence: WeightSequence,
    pub h: f64,
    pub margin: usize,
    pub j_max: usize,
}

impl PipelineConfig {
    /// Validated configuration with `s = 2m(m+1)` and the default grid.
    pub fn new(p: u32, q: u32, sequence: WeightSequence, eps0: f64, depth: usize) -> Result<Self> {
        let m = frobenius_threshold(p, q)?;
        let cfg = PipelineConfig {
            p,
            q,
            m,
            eps0,
            depth,
            s: (2 * m * (m + 1)).max(2) as f64,
            sequence,
            h: DEFAULT_H,
            margin: 4,
            j_max: crate::model::DEFAULT_J_MAX,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if frobenius_threshold(self.p, self.q)? != self.m {
            return Err(Error::domain("m must be the Frobenius threshold of (p, q)"));
        }
        if self.depth < 3 {
            return Err(Error::domain("depth must be at least 3"));
        }
        if !(self.s > (self.m * (self.m + 1)) as f64) {
            return Err(Error::domain(format!("s = {} must exceed m(m+1) = {}", self.s, self.m * (self.m + 1))));
        }
        if !(self.eps0 > 0.0 && self.eps0 <= 1.0) {
            return Err(Error::domain("eps0 must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn extension(&self) -> ExtensionConfig {
        ExtensionConfig {
            eps0: self.eps0,
            h: self.h,
            margin: self.margin,
            j_max: self.j_max,
        }
    }

    /// Power-approximant ladder `ε_k = eps0 2^-k`.
    pub fn ladder(&self) -> Vec<f64> {
        (0..self.depth).map(|k| self.eps0 * 0.5f64.powi(k as i32)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigSnapshot {
    pub p: u32,
    pub q: u32,
    pub m: u32,
    pub eps0: f64,
    pub depth: usize,
    pub s: f64,
    pub sequence: String,
    pub h: f64,
    pub margin: usize,
    pub j_max: usize,
}

impl From<&PipelineConfig> for ConfigSnapshot {
    fn from(c: &PipelineConfig) -> Self {
        ConfigSnapshot {
            p: c.p,
            q: c.q,
            m: c.m,
            eps0: c.eps0,
            depth: c.depth,
            s: c.s,
            sequence: c.sequence.name().to_string(),
            h: c.h,
            margin: c.margin,
            j_max: c.j_max,
        }
    }
}

/// `f^j` from the two given powers.
pub fn power_model(fp: &SmoothFunctionModel, fq: &SmoothFunctionModel, j: u32, p: u32, q: u32) -> Result<SmoothFunctionModel> {
    let (k, l) = power_decompose(j, p, q)?;
    let part = |f: &SmoothFunctionModel, e: u32| if e == 1 { f.clone() } else { f.powi(e) };
    Ok(match (k, l) {
        (0, 0) => SmoothFunctionModel::builtin("one")?,
        (k, 0) => part(fp, k),
        (0, l) => part(fq, l),
        (k, l) => part(fp, k).mul(&part(fq, l)),
    })
}

/// Consecutive-power residual `h^m - g^(m+1)` at one rung.
#[derive(Clone, Debug, Serialize)]
pub struct PowerGap {
    pub eps: f64,
    /// `max |h^m - g^(m+1)|` over `Ω_{ε/2}`.
    pub measured: f64,
    pub worst_point: (f64, f64),
    pub delta: f64,
    pub r: f64,
    /// `δ <= r <= 1`.
    pub small_eps: bool,
    /// `max |g - f^m|, |h - f^(m+1)|` at axis nodes of `[-1, 1]`.
    pub node_error: f64,
    pub three_lines: ThreeLines,
}

/// Families for `f^m` and `f^(m+1)` on a common grid with `δ_ε, r_ε`.
#[derive(Clone, Debug)]
pub struct PowerApproximants {
    pub m: u32,
    pub g: ApproximantFamily,
    pub h: ApproximantFamily,
    pub constants: ConstantLedger,
    pub gaps: Vec<PowerGap>,
    pub delta_floor: f64,
}

impl PowerApproximants {
    pub fn grid(&self) -> Grid {
        self.g.grid()
    }

    pub fn eps(&self, k: usize) -> f64 {
        self.g.rungs[k].eps
    }

    pub fn delta(&self, k: usize) -> f64 {
        self.gaps[k].delta
    }

    pub fn r(&self, k: usize) -> f64 {
        self.gaps[k].r
    }

    fn k_bound(&self) -> f64 {
        self.constants.get("K").unwrap_or(f64::INFINITY)
    }
}

fn axis_node_error(fam: &ApproximantFamily, k: usize, f: &SmoothFunctionModel) -> f64 {
    let grid = fam.grid();
    let Some(jr) = grid.real_row() else { return f64::INFINITY };
    let mut worst = 0.0f64;
    for i in 0..grid.nx {
        let x = grid.point(i, jr).re;
        if x.abs() <= 1.0 {
            worst = worst.max((fam.rungs[k].f.at(i, jr) - C64::new(f.eval(x), 0.0)).norm());
        }
    }
    worst
}

/// Builds families for `f^m` and `f^(m+1)`, transfers the interval bound on
/// `h^m - g^(m+1)` to `Ω_{ε/2}` and fixes `δ_ε = max(c4 h_M(c5 ε), floor)`
/// and `r_ε = δ_ε^(1/(m+1))`.
pub fn build_power_approximants(
    fm: &SmoothFunctionModel,
    fm1: &SmoothFunctionModel,
    cfg: &PipelineConfig,
) -> Result<PowerApproximants> {
    cfg.validate()?;
    if cfg.m == 0 {
        return Err(Error::domain("consecutive powers need m >= 1"));
    }
    let seq = &cfg.sequence;
    let ext = cfg.extension();
    let build = |f: &SmoothFunctionModel, what: &str| -> Result<ApproximantFamily> {
        let (fam, check) = build_family_with(f, seq, &ext, cfg.depth, None)?;
        match check.first_failure {
            Some(msg) => Err(Error::bound(format!("family for {what}"), msg)),
            None => Ok(fam),
        }
    };
    let g = build(fm, "f^m")?;
    let h = build(fm1, "f^(m+1)")?;

    let m = cfg.m as i32;
    let mf = cfg.m as f64;
    let mut led = ConstantLedger::new();
    led.absorb("g.", &g.constants);
    led.absorb("h.", &h.constants);
    let k = led.record("K", g.k().max(h.k()), Provenance::Derived, "max of the two family bounds");
    let c1 = led.record("c1", g.c1().max(h.c1()), Provenance::Derived, "max of the two families");
    let c2 = led.record("c2", g.c2().max(h.c2()), Provenance::Derived, "max of the two families");
    let lip = mf * k.powi(m - 1) + (mf + 1.0) * k.powi(m);
    let c3 = led.record("c3", lip * c1, Provenance::Formula, "(m K^(m-1) + (m+1) K^m) c1");
    let tau = g.constants.get("tau_disc").unwrap_or(0.0).max(h.constants.get("tau_disc").unwrap_or(0.0));
    let node_floor = tau + 1e-12 * (1.0 + k);
    let gap_floor = lip * node_floor;
    let delta_floor = led.record(
        "delta_floor",
        gap_floor.max(node_floor),
        Provenance::Derived,
        "(m K^(m-1) + (m+1) K^m) times the node floor of the families",
    );
    let l_bound = 2.0 * k.powi(m + 1);

    let grid = g.grid();
    let mut residuals = Vec::with_capacity(cfg.depth);
    let mut tls = Vec::with_capacity(cfg.depth);
    for kk in 0..cfg.depth {
        let eps = g.rungs[kk].eps;
        let gk = &g.rungs[kk].f;
        let hk = &h.rungs[kk].f;
        let p = hk.zip(gk, |a, b| a.powi(m) - b.powi(m + 1));
        let tl = three_lines_propagate_with_floor(&p, eps, l_bound, c3, c2, seq, gap_floor)
            .map_err(|e| Error::bound("consecutive powers", format!("eps = {eps}: {e}")))?;
        if !tl.verified {
            return Err(Error::bound(
                "consecutive powers",
                format!("eps = {eps}: three-lines transfer ratio {:e} > 1", tl.worst_ratio),
            ));
        }
        residuals.push(p);
        tls.push(tl);
    }
    let a3 = tls.iter().map(|t| t.a3).fold(0.0, f64::max);
    let a4 = tls.iter().map(|t| t.a4).fold(0.0, f64::max);
    led.record("a3", a3, Provenance::Formula, "sqrt(c3 max(c3, 2K^(m+1)))");
    led.record("a4", a4, Provenance::Formula, "kappa_2 c2");
    let c4 = led.record("c4", c1.max(a3), Provenance::Derived, "max(c1, a3)");
    let c5 = led.record("c5", c2.max(a4), Provenance::Derived, "max(c2, a4)");

    let mut gaps = Vec::with_capacity(cfg.depth);
    for (kk, (p, tl)) in residuals.iter().zip(tls).enumerate() {
        let eps = g.rungs[kk].eps;
        let delta = (c4 * seq.h_m(c5 * eps)?).max(delta_floor);
        let r = delta.powf(1.0 / (mf + 1.0));
        let inner = grid.ellipse_mask(eps / 2.0);
        let (mut measured, mut worst) = (0.0f64, C64::new(0.0, 0.0));
        for (idx, v) in p.data.iter().enumerate() {
            if inner[idx] && v.norm() > measured {
                measured = v.norm();
                worst = grid.point(idx % grid.nx, idx / grid.nx);
            }
        }
        if measured > delta {
            return Err(Error::bound(
                "consecutive powers",
                format!("eps = {eps}: |h^m - g^(m+1)| = {measured:e} > delta = {delta:e} at {worst}"),
            ));
        }
        let node_error = axis_node_error(&g, kk, fm).max(axis_node_error(&h, kk, fm1));
        if node_error > delta {
            return Err(Error::bound(
                "consecutive powers",
                format!("eps = {eps}: axis error {node_error:e} of the power families exceeds delta = {delta:e}"),
            ));
        }
        gaps.push(PowerGap {
            eps,
            measured,
            worst_point: (worst.re, worst.im),
            delta,
            r,
            small_eps: delta <= r && r <= 1.0,
            node_error,
            three_lines: tl,
        });
    }
    Ok(PowerApproximants {
        m: cfg.m,
        g,
        h,
        constants: led,
        gaps,
        delta_floor,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundCheck {
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(measured: f64, bound: f64) -> Self {
        BoundCheck {
            measured,
            bound,
            pass: measured <= bound,
        }
    }
}

fn is_constant(f: &GridFunction, mask: &[bool]) -> bool {
    let mut it = f.data.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v);
    let Some(first) = it.next() else { return true };
    let tol = 1e-13 * (1.0 + first.norm());
    it.all(|v| (v - first).norm() <= tol)
}

/// `u_ε = χ_ε conj(g_ε) h_ε / max(|g_ε|, r_ε)²` (with `χ_ε = 1` on `Ω_{ε/2}`
/// padded by the stencil reach) and the check
/// `|u_ε| <= (2K)^(1/m)` on `Ω_{ε/2}`.
pub fn build_u(pa: &PowerApproximants, k: usize) -> Result<(GridFunction, BoundCheck)> {
    let eps = pa.eps(k);
    let r = pa.r(k);
    let grid = pa.grid();
    let g = &pa.g.rungs[k].f;
    let h = &pa.h.rungs[k].f;
    // the plateau covers the difference stencil of every node of Ω_{ε/2}
    let pad = 3.0 * grid.h;
    let mut u = GridFunction::zeros(grid).with_tag(format!("quotient:{eps}"));
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let z = grid.point(i, j);
            let chi = padded_cutoff(eps, pad, z);
            if chi == 0.0 {
                continue;
            }
            let idx = grid.idx(i, j);
            let (gv, hv) = (g.data[idx], h.data[idx]);
            let den = gv.norm().max(r);
            u.data[idx] = gv.conj() * hv * (chi / (den * den));
        }
    }
    let bound = (2.0 * pa.k_bound()).powf(1.0 / pa.m as f64);
    let check = BoundCheck::new(u.sup_norm_on(&grid.ellipse_mask(eps / 2.0)), bound);
    if !check.pass {
        return Err(Error::bound(
            "quotient bound",
            format!("eps = {eps}: sup |u| = {:e} > (2K)^(1/m) = {bound:e}", check.measured),
        ));
    }
    Ok((u, check))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClosedFormAgreement {
    pub cells: usize,
    pub agreeing: usize,
    pub fraction: f64,
    pub tolerance: f64,
    /// Cells whose stencil may cross the level set `|g| = r` (excluded).
    pub band_cells: usize,
    pub constant_g: bool,
    pub pass: bool,
}

/// Node and its whole difference stencil lie in `mask`.
fn stencil_inside(grid: Grid, mask: &[bool], i: usize, j: usize) -> bool {
    grid.interior(i, j, 2)
        && (-2i64..=2).all(|d| {
            mask[grid.idx((i as i64 + d) as usize, j)] && mask[grid.idx(i, (j as i64 + d) as usize)]
        })
}

/// `w_ε = r^-2 conj(g') h 1_{|g| < r}` on `Ω_{ε/2}`, zero elsewhere, with
/// its agreement against the difference quotient of `u_ε`.
pub fn dbar_u_closed_form(pa: &PowerApproximants, k: usize, u: &GridFunction) -> Result<(GridFunction, ClosedFormAgreement)> {
    let eps = pa.eps(k);
    let r = pa.r(k);
    let grid = pa.grid();
    let g = &pa.g.rungs[k].f;
    let h = &pa.h.rungs[k].f;
    let inner = grid.ellipse_mask(eps / 2.0);
    let constant_g = is_constant(g, &grid.ellipse_mask(eps));
    let gp = if constant_g { GridFunction::zeros(grid) } else { g.dz() };
    let mut w = GridFunction::zeros(grid).with_tag(format!("dbar-quotient:{eps}"));
    let mut band = vec![false; grid.len()];
    for idx in 0..grid.len() {
        if !inner[idx] {
            continue;
        }
        let a = g.data[idx].norm();
        // stencil reach plus half a cell
        band[idx] = (a - r).abs() <= 2.5 * grid.h * gp.data[idx].norm();
        if a < r && !constant_g {
            w.data[idx] = gp.data[idx].conj() * h.data[idx] / (r * r);
        }
    }
    let tolerance = 10.0 * grid.h * w.sup_norm().max(1.0);
    let (mut cells, mut agreeing, mut band_cells) = (0, 0, 0);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            if !stencil_inside(grid, &inner, i, j) {
                continue;
            }
            if band[idx] {
                band_cells += 1;
                continue;
            }
            cells += 1;
            if (u.dbar_at(i, j) - w.data[idx]).norm() <= tolerance {
                agreeing += 1;
            }
        }
    }
    let fraction = if cells == 0 { 1.0 } else { agreeing as f64 / cells as f64 };
    let out = ClosedFormAgreement {
        cells,
        agreeing,
        fraction,
        tolerance,
        band_cells,
        constant_g,
        pass: fraction >= 0.99,
    };
    if !out.pass {
        return Err(Error::bound(
            "closed-form dbar",
            format!("eps = {eps}: only {:.2}% of {cells} cells agree", 100.0 * fraction),
        ));
    }
    Ok((w, out))
}

/// Sup bound constant `C` in `|K*w| <= C (ρ ||w||_∞ + sqrt|ln ρ| ||w||_2)`,
/// calibrated on disk densities (largest observed ratio, doubled).
pub fn kernel_constant() -> Result<f64> {
    let grid = Grid::centered(1.0, 1.0, 1.0 / 64.0, 2);
    let mut worst = 0.0f64;
    for &rad in &[0.05, 0.1, 0.2, 0.4, 0.8] {
        let w = disk_indicator(grid, C64::new(0.0, 0.0), rad, 8);
        for &rho in &[0.5, 0.1, 0.01] {
            let b = refined_sup_bound(&w, rho)?;
            worst = worst.max(b.measured_sup / b.bound);
        }
    }
    Ok(2.0 * worst)
}

/// Smallest `ρ ||w||_∞ + sqrt|ln ρ| ||w||_2` over `ρ = 2^-k`.
fn kernel_profile_bound(w: &GridFunction) -> f64 {
    let (a, b) = (w.sup_norm(), w.l2_norm());
    (1..60)
        .map(|k| {
            let rho = 0.5f64.powi(k);
            rho * a + rho.ln().abs().sqrt() * b
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectionCheck {
    pub measured: f64,
    /// `C (ρ ||w||_∞ + sqrt|ln ρ| ||w||_2)`.
    pub kernel_bound: f64,
    /// `c9 δ^(1/s)`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityNorms {
    pub sup: f64,
    pub l2: f64,
    /// `||w||_∞ ε² / r^(1/m - 1)`.
    pub c10_ratio: f64,
    /// `||w||_2 ε^(3/2) / (r^(1/m) sqrt(ln(K²/r² + 1)))`.
    pub c11_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssemblyRung {
    /// Output rung `ε`; built from the power rung `2ε`.
    pub eps: f64,
    pub quotient_bound: BoundCheck,
    pub closed_form: ClosedFormAgreement,
    pub correction: CorrectionCheck,
    pub density: DensityNorms,
    /// `max |K*w_closed - v|` over `Ω_ε`.
    pub closed_form_gap: f64,
    pub delta: f64,
    pub r: f64,
}

/// Output of [`correct_and_assemble`]: the family for `f` plus per-rung
/// diagnostics and the quotients used to build it.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub family: ApproximantFamily,
    pub rungs: Vec<AssemblyRung>,
    pub quotients: Vec<GridFunction>,
}

/// `f_ε = u_{2ε} - v_{2ε}` with `D v = 1_{Ω_ε} D u` (the stencil
/// derivative, so that `f_ε` is discretely holomorphic on `Ω_ε`).
pub fn correct_and_assemble(pa: &PowerApproximants, cfg: &PipelineConfig) -> Result<Assembly> {
    let grid = pa.grid();
    let plan = ConvolutionPlan::new(grid);
    let c_kernel = kernel_constant()?;
    let mf = pa.m as f64;
    let kb = pa.k_bound();
    let mut led = pa.constants.clone();
    led.record("C_kernel", c_kernel, Provenance::Fitted, "disk calibration, doubled");

    struct Parts {
        eps: f64,
        f: GridFunction,
        u: GridFunction,
        quotient_bound: BoundCheck,
        closed_form: ClosedFormAgreement,
        measured_v: f64,
        kernel_bound: f64,
        density: DensityNorms,
        gap: f64,
    }
    let mut parts = Vec::with_capacity(cfg.depth);
    for k in 0..cfg.depth {
        let eps2 = pa.eps(k);
        let eps = eps2 / 2.0;
        let r = pa.r(k);
        let (u, quotient_bound) = build_u(pa, k)?;
        let (w_closed, closed_form) = dbar_u_closed_form(pa, k, &u)?;
        let mask = grid.ellipse_mask(eps);
        let w = u.dbar().masked(&mask);
        let v = plan.solve(&w);
        let v_closed = plan.solve(&w_closed);
        let measured_v = v.sup_norm_on(&mask);
        let kernel_bound = c_kernel * kernel_profile_bound(&w);
        if measured_v > kernel_bound {
            return Err(Error::bound(
                "correction bound",
                format!("eps = {eps}: sup |v| = {measured_v:e} > kernel bound {kernel_bound:e}"),
            ));
        }
        let (sup, l2) = (w.sup_norm(), w.l2_norm());
        let density = DensityNorms {
            sup,
            l2,
            c10_ratio: sup * eps2 * eps2 / r.powf(1.0 / mf - 1.0),
            c11_ratio: l2 * eps2.powf(1.5) / (r.powf(1.0 / mf) * (kb * kb / (r * r) + 1.0).ln().sqrt()),
        };
        parts.push(Parts {
            eps,
            f: u.sub(&v).with_tag(format!("omega:{eps}")),
            gap: v_closed.sub(&v).sup_norm_on(&mask),
            u,
            quotient_bound,
            closed_form,
            measured_v,
            kernel_bound,
            density,
        });
    }

    let s = cfg.s;
    let c9 = parts
        .iter()
        .enumerate()
        .map(|(k, p)| p.kernel_bound / pa.delta(k).powf(1.0 / s))
        .fold(0.0, f64::max);
    let c9 = led.record("c9", c9, Provenance::Fitted, "max over rungs of kernel bound / delta^(1/s)");
    let c10 = parts.iter().map(|p| p.density.c10_ratio).fold(0.0, f64::max);
    let c11 = parts.iter().map(|p| p.density.c11_ratio).fold(0.0, f64::max);
    led.record("c10", c10, Provenance::Fitted, "||w||_inf eps^2 / r^(1/m - 1)");
    led.record("c11", c11, Provenance::Fitted, "||w||_2 eps^(3/2) / (r^(1/m) sqrt(ln(K^2/r^2 + 1)))");

    let c7 = led.record("c7", 2f64.powf(1.0 + 1.0 / mf), Provenance::Formula, "2^(1 + 1/m)");
    let c8 = led.record("c8", (kb + 1.0).powf(1.0 / mf) + 1.0, Provenance::Formula, "(K + 1)^(1/m) + 1");
    let delta0 = pa.delta(0);
    let lambda = delta0.powf(1.0 - 1.0 / s).max(1.0);
    let seq = &cfg.sequence;
    let kappa = seq.kappa_for(s, &seq.kappa_grid())?;
    led.record("kappa_s", kappa, Provenance::Fitted, "h_M(t) <= h_M(kappa t)^s on the kappa grid");
    let c4 = led.require("c4")?;
    let c5 = led.require("c5")?;
    let c13 = led.record("c13", c4.powf(1.0 / s), Provenance::Formula, "c4^(1/s)");
    let c14 = led.record("c14", 2.0 * kappa * c5, Provenance::Formula, "2 kappa_s c5");
    let sum = (c7 + c8 + c9) * lambda;
    let mut out = ConstantLedger::new();
    out.absorb("power.", &led);
    out.record(
        "K",
        (2.0 * kb).powf(1.0 / mf) + c9 * delta0.max(1.0).powf(1.0 / s),
        Provenance::Formula,
        "(2K)^(1/m) + c9 max(1, delta)^(1/s)",
    );
    out.record("c1", sum * c13, Provenance::Derived, "(c7 + c8 + c9) max(1, delta^(1 - 1/s)) c13");
    out.record("c2", c14, Provenance::Derived, "c14");
    out.record(
        "tau_disc",
        sum * pa.delta_floor.powf(1.0 / s),
        Provenance::Derived,
        "(c7 + c8 + c9) max(1, delta^(1 - 1/s)) delta_floor^(1/s)",
    );

    let mut rungs = Vec::with_capacity(cfg.depth);
    let mut fam_rungs = Vec::with_capacity(cfg.depth);
    let mut quotients = Vec::with_capacity(cfg.depth);
    for (k, p) in parts.into_iter().enumerate() {
        let bound = c9 * pa.delta(k).powf(1.0 / s);
        rungs.push(AssemblyRung {
            eps: p.eps,
            quotient_bound: p.quotient_bound,
            closed_form: p.closed_form,
            correction: CorrectionCheck {
                measured: p.measured_v,
                kernel_bound: p.kernel_bound,
                bound,
                pass: p.measured_v <= bound,
            },
            density: p.density,
            closed_form_gap: p.gap,
            delta: pa.delta(k),
            r: pa.r(k),
        });
        fam_rungs.push(Rung { eps: p.eps, f: p.f });
        quotients.push(p.u);
    }
    let family = ApproximantFamily {
        sequence: cfg.sequence.clone(),
        eps0: cfg.eps0 / 2.0,
        rungs: fam_rungs,
        constants: out,
        source: String::new(),
    };
    Ok(Assembly {
        family,
        rungs,
        quotients,
    })
}

/// Output of the construction, before any comparison with `f`.
#[derive(Clone, Debug)]
pub enum Construction {
    /// `m >= 1`: quotient construction.
    Quotient { powers: PowerApproximants, assembly: Assembly },
    /// `m = 0`: `f` is itself one of the given powers.
    Direct { family: ApproximantFamily },
}

impl Construction {
    pub fn family(&self) -> &ApproximantFamily {
        match self {
            Construction::Quotient { assembly, .. } => &assembly.family,
            Construction::Direct { family } => family,
        }
    }
}

/// Runs the construction from `f^p` and `f^q` alone.
pub fn construct(fp: &SmoothFunctionModel, fq: &SmoothFunctionModel, cfg: &PipelineConfig) -> Result<Construction> {
    cfg.validate()?;
    if cfg.m == 0 {
        let f1 = power_model(fp, fq, 1, cfg.p, cfg.q)?;
        let ext = ExtensionConfig {
            eps0: cfg.eps0 / 2.0,
            ..cfg.extension()
        };
        let (family, check) = build_family_with(&f1, &cfg.sequence, &ext, cfg.depth, None)?;
        if let Some(msg) = check.first_failure {
            return Err(Error::bound("family for f", msg));
        }
        return Ok(Construction::Direct { family });
    }
    let fm = power_model(fp, fq, cfg.m, cfg.p, cfg.q)?;
    let fm1 = power_model(fp, fq, cfg.m + 1, cfg.p, cfg.q)?;
    let powers = build_power_approximants(&fm, &fm1, cfg)?;
    let assembly = correct_and_assemble(&powers, cfg)?;
    Ok(Construction::Quotient { powers, assembly })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegionCheck {
    pub samples: usize,
    pub measured: f64,
    /// Largest ratio `|f - u| / bound` over the region.
    pub worst_ratio: f64,
    pub constant: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuotientSplit {
    /// `{|g| <= r}`: `|f - u| <= c7 r^(1/m)`.
    pub small: RegionCheck,
    /// `{|g| > r}`: `|f - u| <= c8 δ / r`.
    pub large: RegionCheck,
}

/// Compares `u_ε` with `f` at axis nodes of `[-1, 1]`, split by `|g_ε| <= r_ε`.
pub fn check_quotient_split(
    pa: &PowerApproximants,
    k: usize,
    u: &GridFunction,
    f_oracle: &SmoothFunctionModel,
    c7: f64,
    c8: f64,
) -> Result<QuotientSplit> {
    let grid = pa.grid();
    let jr = grid.real_row().ok_or_else(|| Error::Data("grid has no axis row".into()))?;
    let (r, delta) = (pa.r(k), pa.delta(k));
    let m = pa.m as f64;
    let small_bound = c7 * r.powf(1.0 / m);
    let large_bound = c8 * delta / r;
    let mut acc = [(0usize, 0.0f64, 0.0f64); 2];
    for i in 0..grid.nx {
        let x = grid.point(i, jr).re;
        if x.abs() > 1.0 {
            continue;
        }
        let fx = f_oracle.eval(x);
        let e = (C64::new(fx, 0.0) - u.at(i, jr)).norm();
        let slack = 1e-12 * (1.0 + fx.abs());
        let (slot, b) = if pa.g.rungs[k].f.at(i, jr).norm() <= r {
            (0, small_bound)
        } else {
            (1, large_bound)
        };
        acc[slot].0 += 1;
        acc[slot].1 = acc[slot].1.max(e);
        acc[slot].2 = acc[slot].2.max(e / (b + slack));
    }
    let mk = |a: (usize, f64, f64), c: f64| RegionCheck {
        samples: a.0,
        measured: a.1,
        worst_ratio: a.2,
        constant: c,
        pass: a.2 <= 1.0,
    };
    Ok(QuotientSplit {
        small: mk(acc[0], c7),
        large: mk(acc[1], c8),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RungReport {
    pub eps: f64,
    pub sup_err_interval: f64,
    pub quotient_bound: Option<BoundCheck>,
    pub split: Option<QuotientSplit>,
    pub closed_form: Option<ClosedFormAgreement>,
    pub correction: Option<CorrectionCheck>,
    pub delta: Option<f64>,
    pub r: Option<f64>,
    /// `δ` at its floor: the rung's error is governed by round-off.
    pub at_floor: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// Rungs used (those whose `δ` exceeds the floor).
    pub rungs_used: usize,
    /// Least-squares slope of `ln error` against `ln ε`.
    pub slope: Option<f64>,
    pub pass: bool,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    /// Every check passed and the interval error decays.
    pub pass: bool,
    /// Every check passed; the decay fit is judged separately.
    pub checks_pass: bool,
    pub failures: Vec<String>,
    pub decay: DecayFit,
    pub family: PmVerification,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub config: ConfigSnapshot,
    pub per_rung: Vec<RungReport>,
    pub constants: ConstantLedger,
    pub power_gaps: Vec<PowerGap>,
    pub verdict: Verdict,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Checks a construction against the oracle `f`: the quotient split, the
/// family invariants and the decay of the interval error.
pub fn verify_pipeline(construction: &Construction, f_oracle: &SmoothFunctionModel, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let mut family = construction.family().clone();
    family.source = f_oracle.name().to_string();
    let pm = pm_verify(&family, f_oracle, 0.5)?;
    let check = pm.family.clone();
    let mut failures: Vec<String> = pm.failures.iter().map(|m| format!("family: {m}")).collect();
    let mut per_rung = Vec::new();
    let constants;
    let power_gaps;
    match construction {
        Construction::Direct { family } => {
            constants = family.constants.clone();
            power_gaps = Vec::new();
            for rc in &check.rungs {
                per_rung.push(RungReport {
                    eps: rc.eps,
                    sup_err_interval: rc.interval_error,
                    quotient_bound: None,
                    split: None,
                    closed_form: None,
                    correction: None,
                    delta: None,
                    r: None,
                    at_floor: false,
                });
            }
        }
        Construction::Quotient { powers, assembly } => {
            constants = assembly.family.constants.clone();
            power_gaps = powers.gaps.clone();
            let c7 = constants.require("power.c7")?;
            let c8 = constants.require("power.c8")?;
            for (k, (ar, rc)) in assembly.rungs.iter().zip(&check.rungs).enumerate() {
                let split = check_quotient_split(powers, k, &assembly.quotients[k], f_oracle, c7, c8)?;
                if !split.small.pass {
                    failures.push(format!("quotient split |g| <= r, eps = {}: ratio {:e}", ar.eps, split.small.worst_ratio));
                }
                if !split.large.pass {
                    failures.push(format!("quotient split |g| > r, eps = {}: ratio {:e}", ar.eps, split.large.worst_ratio));
                }
                if !ar.correction.pass {
                    failures.push(format!("correction bound, eps = {}", ar.eps));
                }
                per_rung.push(RungReport {
                    eps: ar.eps,
                    sup_err_interval: rc.interval_error,
                    quotient_bound: Some(ar.quotient_bound),
                    split: Some(split),
                    closed_form: Some(ar.closed_form),
                    correction: Some(ar.correction.clone()),
                    delta: Some(ar.delta),
                    r: Some(ar.r),
                    at_floor: ar.delta <= powers.delta_floor,
                });
            }
        }
    }
    let decay = decay_fit(&per_rung);
    Ok(PipelineReport {
        config: cfg.into(),
        per_rung,
        constants,
        power_gaps,
        verdict: Verdict {
            checks_pass: failures.is_empty(),
            pass: failures.is_empty() && decay.pass,
            failures,
            decay,
            family: pm,
        },
    })
}

fn decay_fit(rungs: &[RungReport]) -> DecayFit {
    let max_err = rungs.iter().map(|r| r.sup_err_interval).fold(0.0, f64::max);
    if max_err == 0.0 {
        return DecayFit {
            rungs_used: 0,
            slope: None,
            pass: true,
            note: "interval error vanishes on every rung".into(),
        };
    }
    let pts: Vec<(f64, f64)> = rungs
        .iter()
        .filter(|r| !r.at_floor)
        .map(|r| (r.eps, r.sup_err_interval))
        .collect();
    if pts.len() < 2 {
        return DecayFit {
            rungs_used: pts.len(),
            slope: None,
            pass: true,
            note: format!("delta at its round-off floor on all but {} rungs; max error {max_err:e}", pts.len()),
        };
    }
    let slope = log_slope(&pts);
    let pass = slope.map_or(false, |s| s >= 1.0);
    DecayFit {
        rungs_used: pts.len(),
        slope,
        pass,
        note: format!("log-log slope {:.3} over {} rungs", slope.unwrap_or(f64::NAN), pts.len()),
    }
}

/// Construction followed by verification against `f_oracle`.
pub fn run_pipeline(
    fp: &SmoothFunctionModel,
    fq: &SmoothFunctionModel,
    f_oracle: &SmoothFunctionModel,
    cfg: &PipelineConfig,
) -> Result<(Construction, PipelineReport)> {
    let c = construct(fp, fq, cfg)?;
    let report = verify_pipeline(&c, f_oracle, cfg)?;
    Ok((c, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_threshold(2, 3).unwrap(), 2);
        assert_eq!(frobenius_threshold(3, 5).unwrap(), 8);
        assert_eq!(frobenius_threshold(1, 7).unwrap(), 0);
        assert!(frobenius_threshold(2, 4).is_err());
        assert!(!representable(7, 3, 5));
        assert!(!representable(1, 2, 3));
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(power_decompose(2, 2, 3).unwrap(), (1, 0));
        assert_eq!(power_decompose(7, 2, 3).unwrap(), (2, 1));
        assert_eq!(power_decompose(8, 3, 5).unwrap(), (1, 1));
        assert!(power_decompose(7, 3, 5).is_err());
    }

    #[test]
    fn config_rejects_bad_input() {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        assert!(PipelineConfig::new(2, 4, m.clone(), 1.0, 4).is_err());
        assert!(PipelineConfig::new(2, 3, m.clone(), 1.0, 2).is_err());
        let c = PipelineConfig::new(2, 3, m, 1.0, 4).unwrap();
        assert_eq!(c.s, 12.0);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (0..4).map(|k| (0.5f64.powi(k), 3.0 * 0.5f64.powi(2 * k))).collect();
        assert!((log_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
    }

    fn small(p: u32, q: u32) -> PipelineConfig {
        let mut c = PipelineConfig::new(p, q, WeightSequence::gevrey(1.0, 0.0).unwrap(), 1.0, 3).unwrap();
        c.h = 1.0 / 64.0;
        c
    }

    #[test]
    fn zero_is_reconstructed_exactly() {
        let cfg = small(2, 3);
        let f = SmoothFunctionModel::builtin("zero").unwrap();
        let (c, rep) = run_pipeline(&f, &f, &f, &cfg).unwrap();
        let Construction::Quotient { powers, .. } = &c else {
            panic!("expected the quotient construction");
        };
        let (u, check) = build_u(powers, 0).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
        assert!(check.pass, "{check:?}");
        assert!(rep.verdict.checks_pass, "{:?}", rep.verdict.failures);
        assert!(rep.per_rung.iter().all(|r| r.sup_err_interval == 0.0));
    }

    #[test]
    fn unit_power_takes_the_direct_path() {
        let cfg = small(1, 3);
        assert_eq!(cfg.m, 0);
        let f = SmoothFunctionModel::builtin("square").unwrap();
        let (c, rep) = run_pipeline(&f, &f.powi(3), &f, &cfg).unwrap();
        assert!(matches!(c, Construction::Direct { .. }));
        assert!(rep.verdict.checks_pass, "{:?}", rep.verdict.failures);
        assert!(rep.per_rung.iter().all(|r| r.sup_err_interval < 1e-10));
    }

    #[test]
    fn kernel_constant_is_moderate() {
        let c = kernel_constant().unwrap();
        assert!(c > 0.0 && c < 10.0, "{c}");
    }
}
