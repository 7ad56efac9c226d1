//! Golden-value battery and reduced-scale invariant checks behind the
//! `selftest` command.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dbar::{cauchy_convolve, disk_indicator, ConvolutionPlan};
use crate::error::{Error, Result};
use crate::extension::{build_family_with, ExtensionConfig};
use crate::gallery::{expansion_coeff_a, g_lambda};
use crate::geometry::{boundary_gap, build_cover};
use crate::grid::{Grid, GridFunction};
use crate::joris::{frobenius_threshold, representable, run_pipeline, PipelineConfig};
use crate::model::SmoothFunctionModel;
use crate::scalar::{with_precision, Ext, Real};
use crate::weights::WeightSequence;

/// Golden values shipped with the crate.
pub const DEFAULT_GOLDEN: &str = include_str!("../golden/selftest.json");

/// Check groups, usable as `--filter` values.
pub const GROUPS: [&str; 6] = ["dbar", "frobenius", "breakpoint", "gallery", "geometry", "pipeline"];

#[derive(Clone, Debug, Deserialize)]
pub struct Probe {
    pub z: [f64; 2],
    pub value: [f64; 2],
}

#[derive(Clone, Debug, Deserialize)]
pub struct DiskGolden {
    pub h: f64,
    pub probes: Vec<Probe>,
    pub tolerance_over_h: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct BreakpointGolden {
    pub sequence: String,
    pub j: usize,
    pub m: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Golden {
    pub disk_transform: DiskGolden,
    pub frobenius: Vec<(u32, u32, u32)>,
    pub breakpoints: Vec<BreakpointGolden>,
    pub expansion_a: Vec<(u32, u32, String)>,
}

impl Golden {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("golden file: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl Default for Golden {
    fn default() -> Self {
        Self::parse(DEFAULT_GOLDEN).expect("bundled golden file parses")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestCheck {
    pub group: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(group: &str, name: impl Into<String>, pass: bool, detail: impl Into<String>) -> SelftestCheck {
    SelftestCheck {
        group: group.into(),
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

/// `max_j |h_M(t_j) - t_j^j M_j| / (t_j^j M_j)` for `j <= j_max`, in extended precision.
pub fn breakpoint_identity_error(m: &WeightSequence, j_max: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in 0..=j_max {
        let t = m.t_ext(j);
        let want = t.powi(j as i32) * m.m_ext(j);
        let got = m.h_m_ext(&t)?;
        worst = worst.max(((got - want.clone()) / want).abs().to_f64());
    }
    Ok(worst)
}

fn dbar_checks(g: &Golden) -> Vec<SelftestCheck> {
    let d = &g.disk_transform;
    let grid = Grid::centered(1.6, 1.6, d.h, 0);
    let w = disk_indicator(grid, C64::new(0.0, 0.0), 1.0, 16);
    let v = cauchy_convolve(&w);
    let tol = d.tolerance_over_h * d.h;
    let mut out = Vec::new();
    for p in &d.probes {
        let z = C64::new(p.z[0], p.z[1]);
        let err = (v.interpolate(z, 4) - C64::new(p.value[0], p.value[1])).norm();
        out.push(check("dbar", format!("disk transform at {z}"), err <= tol, format!("error {err:.3e}, tolerance {tol:.3e}")));
    }
    let sg = Grid::centered(1.0, 0.6, 1.0 / 32.0, 4);
    let dens = GridFunction::from_fn(sg, |z| if z.norm() < 0.5 { C64::new(1.0 - z.norm(), z.re) } else { C64::new(0.0, 0.0) });
    let sol = ConvolutionPlan::new(sg).solve(&dens);
    let d2 = sol.dbar();
    let mut res = 0.0f64;
    for j in 2..sg.ny - 2 {
        for i in 2..sg.nx - 2 {
            res = res.max((d2.at(i, j) - dens.at(i, j)).norm());
        }
    }
    out.push(check("dbar", "solver inverts the stencil", res < 1e-10, format!("residual {res:.3e}")));
    out
}

fn frobenius_checks(g: &Golden) -> Vec<SelftestCheck> {
    let mut out = Vec::new();
    for &(p, q, want) in &g.frobenius {
        let got = frobenius_threshold(p, q);
        let pass = matches!(got, Ok(v) if v == want);
        out.push(check("frobenius", format!("threshold ({p}, {q})"), pass, format!("{got:?}, golden {want}")));
    }
    let mut bad = Vec::new();
    for q in 2..=12u32 {
        for p in 1..q {
            if num_integer::gcd(p, q) != 1 {
                continue;
            }
            let brute = (0..p * q).rev().find(|&j| !brute_representable(j, p, q)).map_or(0, |j| j + 1);
            if frobenius_threshold(p, q).ok() != Some(brute) || !(brute..brute + 2 * q).all(|j| representable(j, p, q)) {
                bad.push((p, q));
            }
        }
    }
    out.push(check("frobenius", "brute force, coprime p < q <= 12", bad.is_empty(), format!("mismatches {bad:?}")));
    out
}

/// Representability by exhaustive search.
pub fn brute_representable(j: u32, p: u32, q: u32) -> bool {
    (0..=j / p).any(|k| (j - k * p) % q == 0)
}

fn breakpoint_checks(g: &Golden) -> Result<Vec<SelftestCheck>> {
    let mut out = Vec::new();
    for b in &g.breakpoints {
        let m = WeightSequence::from_spec(&b.sequence)?;
        let t = m.t_ext(b.j);
        let got = (m.h_m_ext(&t)? / t.powi(b.j as i32)).to_f64();
        let rel = (got / b.m - 1.0).abs();
        out.push(check("breakpoint", format!("{} M_{}", b.sequence, b.j), rel <= 1e-12, format!("{got} vs {}", b.m)));
    }
    for spec in ["gevrey:1,0", "gevrey:2,0", "gevrey:1,1", "qgevrey:1"] {
        let m = WeightSequence::from_spec(spec)?;
        let e = breakpoint_identity_error(&m, 30)?;
        out.push(check("breakpoint", format!("{spec} identity, j <= 30"), e <= 1e-12, format!("max relative error {e:.3e}")));
    }
    Ok(out)
}

fn gallery_checks(g: &Golden) -> Result<Vec<SelftestCheck>> {
    let mut out = Vec::new();
    for (j, p, want) in &g.expansion_a {
        let got = expansion_coeff_a(*j, *p)?.to_string();
        out.push(check("gallery", format!("a_{j} for p = {p}"), &got == want, format!("{got}, golden {want}")));
    }
    let g1 = g_lambda(1.0)?;
    let v = with_precision(128, || g1.jet_ext(&Ext::new((-5.0f64).exp()), 0).value().ln().to_f64());
    out.push(check("gallery", "g_1(e^-5) = e^-25", (v + 25.0).abs() < 1e-12, format!("ln value {v}")));
    Ok(out)
}

fn geometry_checks() -> Vec<SelftestCheck> {
    let mut out = Vec::new();
    for k in 0..3 {
        let eps = 0.5f64.powi(k);
        let v = build_cover(eps).verify(2000);
        out.push(check(
            "geometry",
            format!("cover at eps = {eps}"),
            v.covering_ok && v.safety_ok,
            format!("{} disks, worst ratio {:.4}", v.count, v.worst_covering_ratio),
        ));
        let gap = boundary_gap(eps);
        out.push(check("geometry", format!("gap at eps = {eps}"), gap >= eps * eps / 4.0, format!("gap {gap:.4e}")));
    }
    out
}

fn pipeline_checks() -> Result<Vec<SelftestCheck>> {
    let mut out = Vec::new();
    let m = WeightSequence::gevrey(1.0, 0.0)?;
    let cfg = ExtensionConfig {
        eps0: 0.5,
        h: 1.0 / 64.0,
        margin: 4,
        j_max: 20,
    };
    for name in ["zero", "square", "sin"] {
        let f = SmoothFunctionModel::builtin(name)?;
        let (_, c) = build_family_with(&f, &m, &cfg, 3, None)?;
        out.push(check("pipeline", format!("family for {name}"), c.pass, c.first_failure.unwrap_or_default()));
    }
    let f = SmoothFunctionModel::builtin("identity")?;
    let mut pc = PipelineConfig::new(2, 3, m, 1.0, 3)?;
    pc.h = 1.0 / 64.0;
    let (_, rep) = run_pipeline(&f.powi(2), &f.powi(3), &f, &pc)?;
    out.push(check(
        "pipeline",
        "quotient construction for identity, (p, q) = (2, 3)",
        rep.verdict.checks_pass,
        rep.verdict.failures.join("; "),
    ));
    Ok(out)
}

/// Runs every group, or only `filter`.
pub fn run_selftest(golden: &Golden, filter: Option<&str>) -> Result<Vec<SelftestCheck>> {
    if let Some(f) = filter {
        if !GROUPS.contains(&f) {
            return Err(Error::domain(format!("unknown selftest group `{f}`; known: {}", GROUPS.join(", "))));
        }
    }
    let on = |g: &str| filter.map_or(true, |f| f == g);
    let mut out = Vec::new();
    if on("dbar") {
        out.extend(dbar_checks(golden));
    }
    if on("frobenius") {
        out.extend(frobenius_checks(golden));
    }
    if on("breakpoint") {
        out.extend(breakpoint_checks(golden)?);
    }
    if on("gallery") {
        out.extend(gallery_checks(golden)?);
    }
    if on("geometry") {
        out.extend(geometry_checks());
    }
    if on("pipeline") {
        out.extend(pipeline_checks()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_golden_parses() {
        let g = Golden::default();
        assert_eq!(g.frobenius[1], (2, 3, 2));
        assert!(matches!(Golden::parse("{ \"disk_transform\": 3 }"), Err(Error::Data(_))));
    }

    #[test]
    fn brute_force_examples() {
        assert!(brute_representable(7, 2, 3));
        assert!(!brute_representable(1, 2, 3));
        assert!(!brute_representable(7, 3, 5));
    }

    #[test]
    fn frobenius_group_passes() {
        let checks = run_selftest(&Golden::default(), Some("frobenius")).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        assert!(run_selftest(&Golden::default(), Some("nope")).is_err());
    }
}
