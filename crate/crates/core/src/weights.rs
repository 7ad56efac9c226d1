//! Weight sequences, their associated function `h_M` and the growth
//! conditions used throughout the crate.
//!
//! A sequence is stored twice: natural logarithms of the regularized values in
//! `f64` over a fixed window (cheap, used for searches and grids) and
//! multi-precision values computed on demand and cached per mantissa width.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{precision, Ext, Real};

/// Number of indices regularized eagerly for the built-in kinds.
pub const DEFAULT_WINDOW: usize = 4096;

/// Upper limit for the `kappa_for` search.
pub const KAPPA_CAP: f64 = 1e6;

/// Raw description of a sequence before regularization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SequenceKind {
    /// `(j!)^alpha (ln j)^(beta j)`, with `ln j` replaced by `ln max(j, 3)`.
    Gevrey { alpha: f64, beta: f64 },
    /// `exp(lambda j^2 / 4)`.
    Qgevrey { lambda: f64 },
    /// Explicit raw values; extended geometrically past the last entry.
    Table { values: Vec<f64> },
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceKind::Gevrey { alpha, beta } => write!(f, "gevrey:{alpha},{beta}"),
            SequenceKind::Qgevrey { lambda } => write!(f, "qgevrey:{lambda}"),
            SequenceKind::Table { values } => {
                let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
                write!(f, "table:{}", v.join(","))
            }
        }
    }
}

impl SequenceKind {
    /// Parses `gevrey:A[,B]`, `qgevrey:L` or `table:v0,v1,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, args) = spec
            .split_once(':')
            .ok_or_else(|| Error::domain(format!("sequence spec `{spec}` has no `:`")))?;
        let nums: Vec<f64> = args
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::domain(format!("bad number `{s}` in `{spec}`")))
            })
            .collect::<Result<_>>()?;
        match kind.trim() {
            "gevrey" => match nums.as_slice() {
                [a] => Ok(SequenceKind::Gevrey { alpha: *a, beta: 0.0 }),
                [a, b] => Ok(SequenceKind::Gevrey { alpha: *a, beta: *b }),
                _ => Err(Error::domain("gevrey takes alpha[,beta]")),
            },
            "qgevrey" => match nums.as_slice() {
                [l] => Ok(SequenceKind::Qgevrey { lambda: *l }),
                _ => Err(Error::domain("qgevrey takes lambda")),
            },
            "table" => Ok(SequenceKind::Table { values: nums }),
            other => Err(Error::domain(format!("unknown sequence kind `{other}`"))),
        }
    }
}

/// How the regularized value at an index is obtained from raw values.
#[derive(Clone, Copy, Debug)]
enum Source {
    Raw,
    Interp { a: usize, b: usize },
    Flat,
}

struct Inner {
    name: String,
    kind: SequenceKind,
    ln_m: Vec<f64>,
    sources: Vec<Source>,
    /// `ln` of the unnormalized value at the index used for normalization.
    ln_norm: f64,
    norm_index: usize,
    ext_cache: RwLock<HashMap<usize, Vec<Ext>>>,
}

/// A regularized weight sequence (`M_0 = 1`, nondecreasing, log-convex).
#[derive(Clone)]
pub struct WeightSequence(Arc<Inner>);

impl fmt::Debug for WeightSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightSequence")
            .field("name", &self.0.name)
            .field("kind", &self.0.kind)
            .finish()
    }
}

fn ln_factorial(j: usize) -> f64 {
    libm::lgamma(j as f64 + 1.0)
}

fn lnln3(j: usize) -> f64 {
    (j.max(3) as f64).ln().ln()
}

/// Lower convex hull of `(j, y_j)`, returned as vertex indices. Points on or
/// above a chord are dropped, so collinear runs become interpolated segments.
fn lower_hull(y: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(y.len());
    for b in 0..y.len() {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let line = y[o] + (y[b] - y[o]) * (a - o) as f64 / (b - o) as f64;
            let tol = 1e-12 * (1.0 + y[a].abs());
            if y[a] >= line - tol {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(b);
    }
    hull
}

impl WeightSequence {
    pub fn gevrey(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::domain(format!("gevrey needs alpha > 0, got {alpha}")));
        }
        Self::from_kind(
            format!("gevrey:{alpha},{beta}"),
            SequenceKind::Gevrey { alpha, beta },
        )
    }

    pub fn qgevrey(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("qgevrey needs lambda > 0, got {lambda}")));
        }
        Self::from_kind(format!("qgevrey:{lambda}"), SequenceKind::Qgevrey { lambda })
    }

    /// Largest log-convex nondecreasing minorant of `raw`, scaled to `M_0 = 1`.
    pub fn from_table(raw: &[f64]) -> Result<Self> {
        Self::from_kind("table".to_string(), SequenceKind::Table { values: raw.to_vec() })
    }

    pub fn from_spec(spec: &str) -> Result<Self> {
        let kind = SequenceKind::parse(spec)?;
        Self::from_kind(spec.to_string(), kind)
    }

    pub fn from_kind(name: String, kind: SequenceKind) -> Result<Self> {
        let raw_ln: Vec<f64> = match &kind {
            SequenceKind::Gevrey { alpha, beta } => {
                if !(*alpha > 0.0) {
                    return Err(Error::domain("gevrey needs alpha > 0"));
                }
                (0..DEFAULT_WINDOW)
                    .map(|j| alpha * ln_factorial(j) + beta * j as f64 * lnln3(j))
                    .collect()
            }
            SequenceKind::Qgevrey { lambda } => {
                if !(*lambda > 0.0) {
                    return Err(Error::domain("qgevrey needs lambda > 0"));
                }
                (0..DEFAULT_WINDOW)
                    .map(|j| lambda * (j * j) as f64 / 4.0)
                    .collect()
            }
            SequenceKind::Table { values } => {
                if values.is_empty() {
                    return Err(Error::domain("empty table"));
                }
                if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::domain("table values must be positive and finite"));
                }
                values.iter().map(|v| v.ln()).collect()
            }
        };

        let hull = lower_hull(&raw_ln);
        let n = raw_ln.len();
        let mut reg = vec![0.0; n];
        let mut sources = vec![Source::Raw; n];
        for w in hull.windows(2) {
            let (a, b) = (w[0], w[1]);
            reg[a] = raw_ln[a];
            for j in a + 1..b {
                let s = (j - a) as f64 / (b - a) as f64;
                reg[j] = (1.0 - s) * raw_ln[a] + s * raw_ln[b];
                sources[j] = Source::Interp { a, b };
            }
        }
        let last = *hull.last().unwrap();
        reg[last] = raw_ln[last];

        // flatten a decreasing start so the sequence is nondecreasing
        let mut v = 0;
        for k in 1..n {
            if reg[k] < reg[v] {
                v = k;
            }
        }
        // v is the first index attaining the minimum (convexity makes it unique up to ties)
        let ln_norm = reg[v];
        for j in 0..v {
            reg[j] = ln_norm;
            sources[j] = Source::Flat;
        }
        for r in reg.iter_mut() {
            *r -= ln_norm;
        }

        Ok(WeightSequence(Arc::new(Inner {
            name,
            kind,
            ln_m: reg,
            sources,
            ln_norm,
            norm_index: v,
            ext_cache: RwLock::new(HashMap::new()),
        })))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn kind(&self) -> &SequenceKind {
        &self.0.kind
    }

    /// Number of eagerly regularized indices.
    pub fn window(&self) -> usize {
        self.0.ln_m.len()
    }

    /// Whether the raw formula is available past the window.
    pub fn is_closed_form(&self) -> bool {
        !matches!(self.0.kind, SequenceKind::Table { .. })
    }

    /// `ln M_j` in double precision; valid for every `j`.
    pub fn ln_m(&self, j: usize) -> f64 {
        let n = self.0.ln_m.len();
        if j < n {
            return self.0.ln_m[j];
        }
        match &self.0.kind {
            SequenceKind::Gevrey { alpha, beta } => {
                alpha * ln_factorial(j) + beta * j as f64 * lnln3(j) - self.0.ln_norm
            }
            SequenceKind::Qgevrey { lambda } => lambda * (j as f64) * (j as f64) / 4.0 - self.0.ln_norm,
            SequenceKind::Table { .. } => {
                let slope = if n >= 2 {
                    self.0.ln_m[n - 1] - self.0.ln_m[n - 2]
                } else {
                    0.0
                };
                self.0.ln_m[n - 1] + slope * (j - (n - 1)) as f64
            }
        }
    }

    /// `M_j` in double precision (may overflow to infinity).
    pub fn m_f64(&self, j: usize) -> f64 {
        self.ln_m(j).exp()
    }

    /// `ln t_j = ln(M_j / M_{j+1})`.
    pub fn ln_t(&self, j: usize) -> f64 {
        self.ln_m(j) - self.ln_m(j + 1)
    }

    pub fn t_f64(&self, j: usize) -> f64 {
        self.ln_t(j).exp()
    }

    /// Unnormalized raw value at `j` in extended precision.
    fn raw_ext(&self, j: usize) -> Ext {
        match &self.0.kind {
            SequenceKind::Gevrey { alpha, beta } => {
                let fact = Ext::factorial(j as u64);
                let mut v = if *alpha == 1.0 {
                    fact
                } else if alpha.fract() == 0.0 && *alpha <= 64.0 {
                    fact.powi(*alpha as i32)
                } else {
                    (fact.ln() * Ext::new(*alpha)).exp()
                };
                if *beta != 0.0 {
                    let l = Ext::from_i64(j.max(3) as i64).ln().ln();
                    v = v * (l * Ext::new(*beta) * Ext::from_i64(j as i64)).exp();
                }
                v
            }
            SequenceKind::Qgevrey { lambda } => {
                let jj = Ext::from_i64((j * j) as i64);
                (Ext::new(*lambda) * jj / Ext::new(4.0)).exp()
            }
            SequenceKind::Table { values } => {
                if j < values.len() {
                    Ext::new(values[j])
                } else {
                    unreachable!("table values past the end are extrapolated")
                }
            }
        }
    }

    fn compute_ext(&self, j: usize, known: &[Ext]) -> Ext {
        let n = self.0.ln_m.len();
        let norm = || self.raw_ext(self.0.norm_index);
        if j >= n {
            if let SequenceKind::Table { .. } = self.0.kind {
                let last = &known[n - 1];
                if n >= 2 {
                    let q = last.clone() / known[n - 2].clone();
                    return last.clone() * q.powi((j - (n - 1)) as i32);
                }
                return last.clone();
            }
            return self.raw_ext(j) / norm();
        }
        match self.0.sources[j] {
            Source::Raw => self.raw_ext(j) / norm(),
            Source::Flat => Ext::one(),
            Source::Interp { a, b } => {
                let la = (self.raw_ext(a) / norm()).ln();
                let lb = (self.raw_ext(b) / norm()).ln();
                let wa = Ext::from_i64((b - j) as i64);
                let wb = Ext::from_i64((j - a) as i64);
                ((la * wa + lb * wb) / Ext::from_i64((b - a) as i64)).exp()
            }
        }
    }

    /// `M_j` at the current extended precision, cached per precision.
    pub fn m_ext(&self, j: usize) -> Ext {
        let p = precision();
        {
            let cache = self.0.ext_cache.read();
            if let Some(v) = cache.get(&p) {
                if j < v.len() {
                    return v[j].clone();
                }
            }
        }
        let mut cache = self.0.ext_cache.write();
        let v = cache.entry(p).or_default();
        while v.len() <= j {
            let k = v.len();
            let val = self.compute_ext(k, v);
            v.push(val);
        }
        v[j].clone()
    }

    /// `t_j = M_j / M_{j+1}` in extended precision.
    pub fn t_ext(&self, j: usize) -> Ext {
        self.m_ext(j) / self.m_ext(j + 1)
    }

    /// Index minimizing `t^j M_j` for `t > 0` given as `ln t`, or `None` when
    /// the infimum is not attained (then `h_M(t) = 0`).
    pub fn argmin_index(&self, ln_t: f64) -> Option<usize> {
        if ln_t >= self.ln_t(0) {
            return Some(0);
        }
        // smallest j >= 1 with ln t_j <= ln t
        let mut hi = 1usize;
        while self.ln_t(hi) > ln_t {
            if hi >= 1 << 50 {
                return None;
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        // invariant: ln_t(lo) > ln t (or lo == 0), ln_t(hi) <= ln t
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.ln_t(mid) <= ln_t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }

    /// `ln h_M(t)`; `-inf` at `t = 0`.
    pub fn ln_h_m(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::domain(format!("h_M needs t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let lt = t.ln();
        Ok(match self.argmin_index(lt) {
            Some(0) => 0.0,
            Some(j) => (j as f64 * lt + self.ln_m(j)).min(0.0),
            None => f64::NEG_INFINITY,
        })
    }

    /// `h_M(t) = inf_j t^j M_j` in double precision.
    pub fn h_m(&self, t: f64) -> Result<f64> {
        Ok(self.ln_h_m(t)?.exp())
    }

    /// `h_M(t)` in extended precision. The minimizing index is located from
    /// the double-precision breakpoints and confirmed by walking upward while
    /// `t^j M_j` decreases.
    pub fn h_m_ext(&self, t: &Ext) -> Result<Ext> {
        if t.is_negative() {
            return Err(Error::domain("h_M needs t >= 0"));
        }
        if t.is_zero() {
            return Ok(Ext::zero());
        }
        let lt = t.ln().to_f64();
        let guess = match self.argmin_index(lt) {
            Some(0) => return Ok(Ext::one()),
            Some(j) => j,
            None => return Ok(Ext::zero()),
        };
        let mut j = guess.saturating_sub(2);
        let term = |k: usize| t.powi(k as i32) * self.m_ext(k);
        let mut best = term(j);
        loop {
            let next = term(j + 1);
            if next < best {
                best = next;
                j += 1;
            } else {
                break;
            }
        }
        Ok(best.min(&Ext::one()))
    }

    /// Breakpoint table `t_0 >= t_1 >= ... >= t_{n-1}` in extended precision.
    pub fn breakpoints(&self, n: usize) -> HEvalTable {
        HEvalTable {
            sequence: self.name().to_string(),
            t: (0..n).map(|j| self.t_ext(j)).collect(),
        }
    }

    /// `sup_t t^{-j} h_M(t)` over `t_grid`.
    pub fn legendre_recover(&self, j: usize, t_grid: &[f64]) -> Result<LegendreRecovery> {
        let mut best = 0.0f64;
        let mut ln_best = f64::NEG_INFINITY;
        for &t in t_grid {
            if !(t > 0.0) {
                continue;
            }
            let v = self.ln_h_m(t)? - j as f64 * t.ln();
            if v > ln_best {
                ln_best = v;
            }
        }
        if ln_best.is_finite() {
            best = ln_best.exp();
        }
        // the supremum is attained on [t_j, t_{j-1}]
        let lo = self.t_f64(j);
        let hi = if j == 0 { f64::INFINITY } else { self.t_f64(j - 1) };
        let confident = t_grid
            .iter()
            .any(|&t| t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12));
        Ok(LegendreRecovery { j, value: best, ln_value: ln_best, confident })
    }

    /// Checks log-convexity and monotonicity on `0..=n` in extended precision,
    /// allowing a relative slack of a few units in the last place.
    pub fn check_log_convex(&self, n: usize) -> Option<usize> {
        let slack = Ext::one() - Ext::new(2f64.powi(-((precision() as i32) - 16)));
        if self.m_ext(0) != Ext::one() {
            return Some(0);
        }
        for j in 0..n {
            let a = self.m_ext(j);
            let b = self.m_ext(j + 1);
            if b.clone() < a.clone() * slack.clone() {
                return Some(j);
            }
            if j >= 1 {
                let c = self.m_ext(j - 1);
                // M_j^2 <= M_{j-1} M_{j+1}
                if a.clone() * a * slack.clone() > c * b {
                    return Some(j);
                }
            }
        }
        None
    }

    /// `M_j^{1/j}` is increasing beyond `j0` over `j0..=n`.
    pub fn check_root_growth(&self, j0: usize, n: usize) -> bool {
        let mut prev = f64::NEG_INFINITY;
        for j in j0.max(1)..=n {
            let r = self.ln_m(j) / j as f64;
            if r < prev - 1e-12 {
                return false;
            }
            prev = r;
        }
        true
    }

    pub fn check_growth(&self, condition: Condition, j_scan: usize) -> Result<GrowthReport> {
        if j_scan < 2 {
            return Err(Error::domain("growth checks need j_scan >= 2"));
        }
        Ok(match condition {
            Condition::ModerateGrowth => moderate_growth(self, j_scan),
            Condition::Snqa => snqa(self, j_scan),
            Condition::StabDer => stab_der(self, j_scan),
        })
    }

    /// `Σ M_j/((j+1) M_{j+1}) < ∞`, judged from the decay exponent of the
    /// terms over the last octave of an 8192-term partial sum.
    pub fn is_non_quasianalytic(&self) -> bool {
        snqa_tails(self, 1).map_or(false, |s| s[0].is_finite())
    }

    /// Smallest `kappa >= 1` with `h_M(t) <= h_M(kappa t)^s` on `t_grid`.
    pub fn kappa_for(&self, s: f64, t_grid: &[f64]) -> Result<f64> {
        if !(s >= 1.0) {
            return Err(Error::domain(format!("kappa_s needs s >= 1, got {s}")));
        }
        let ok = |k: f64| -> Result<bool> {
            for &t in t_grid {
                let lhs = self.ln_h_m(t)?;
                let rhs = s * self.ln_h_m(k * t)?;
                if lhs > rhs + 1e-12 * (1.0 + lhs.abs()) {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        if ok(1.0)? {
            return Ok(1.0);
        }
        let mut hi = 2.0;
        while !ok(hi)? {
            hi *= 2.0;
            if hi > KAPPA_CAP {
                return Err(Error::bound(
                    "kappa_s",
                    format!(
                        "no kappa below {KAPPA_CAP:e} for s = {s} on {}: moderate growth fails numerically",
                        self.name()
                    ),
                ));
            }
        }
        let mut lo = hi / 2.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo < 1.0 + 1e-10 {
                break;
            }
        }
        Ok(hi)
    }

    /// Default grid for `kappa_for`: 1000 log-spaced points from `t_200` to `1/M_1`.
    pub fn kappa_grid(&self) -> Vec<f64> {
        log_grid(self.t_f64(200), self.t_f64(0), 1000)
    }
}

/// `n` log-spaced points on `[a, b]`.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| {
            let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            (la + s * (lb - la)).exp()
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LegendreRecovery {
    pub j: usize,
    pub value: f64,
    pub ln_value: f64,
    /// Whether the grid met `[t_j, t_{j-1}]`, where the supremum is attained.
    pub confident: bool,
}

/// Breakpoints `t_j = M_j / M_{j+1}`.
#[derive(Clone, Debug)]
pub struct HEvalTable {
    pub sequence: String,
    pub t: Vec<Ext>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    ModerateGrowth,
    Snqa,
    StabDer,
}

impl Condition {
    pub fn all() -> [Condition; 3] {
        [Condition::ModerateGrowth, Condition::Snqa, Condition::StabDer]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub condition: Condition,
    pub holds: bool,
    pub witness_constant: f64,
    /// `(j, k)` for moderate growth, `(k, k)` for the one-index conditions.
    pub worst_pair: (usize, usize),
    pub scan_bound: usize,
    /// Witness constant over the scan windows `J/4`, `J/2`, `J`.
    pub profile: Vec<(usize, f64)>,
}

fn mg_constant(m: &WeightSequence, jmax: usize) -> (f64, (usize, usize)) {
    let mut best = 0.0f64;
    let mut pair = (1, 1);
    for j in 1..jmax {
        for k in j..=(jmax - j) {
            let v = (m.ln_m(j + k) - m.ln_m(j) - m.ln_m(k)) / (j + k) as f64;
            if v > best {
                best = v;
                pair = (j, k);
            }
        }
    }
    (best, pair)
}

/// `ln A(J)` must decelerate over `J/4 -> J/2 -> J`: bounded sequences give
/// shrinking increments, a linear drift doubles them.
fn moderate_growth(m: &WeightSequence, j_scan: usize) -> GrowthReport {
    let (la, pair) = mg_constant(m, j_scan);
    let windows = [j_scan / 4, j_scan / 2, j_scan];
    let profile: Vec<(usize, f64)> = windows
        .iter()
        .map(|&w| (w, if w >= 2 { mg_constant(m, w).0.exp() } else { 1.0 }))
        .collect();
    let holds = if j_scan >= 8 {
        let l: Vec<f64> = profile.iter().map(|p| p.1.ln()).collect();
        let d0 = l[1] - l[0];
        let d1 = l[2] - l[1];
        la.is_finite() && d1 <= d0.max(0.0) * (1.0 + 1e-6) + 1e-12
    } else {
        la.is_finite()
    };
    GrowthReport {
        condition: Condition::ModerateGrowth,
        holds,
        witness_constant: la.exp().max(1.0),
        worst_pair: pair,
        scan_bound: j_scan,
        profile,
    }
}

/// Tail sums `S_k = sum_{j>=k} t_j/(j+1)` with an explicit partial sum to
/// `n_sum` and a power-law estimate beyond.
fn snqa_tails(m: &WeightSequence, j_scan: usize) -> Option<Vec<f64>> {
    let n_sum = (64 * j_scan).max(8192);
    let terms: Vec<f64> = (0..n_sum).map(|j| m.t_f64(j) / (j + 1) as f64).collect();
    // fit t_j ~ j^{-p} on the last octave
    let a = n_sum / 2;
    let b = n_sum - 1;
    let p = -(m.ln_t(b) - m.ln_t(a)) / ((b as f64).ln() - (a as f64).ln());
    if !(p > 1e-3) {
        return None;
    }
    let tail = terms[b] * (b as f64 + 1.0) / p;
    let mut s = vec![0.0; j_scan + 1];
    let mut acc = tail;
    for j in (0..n_sum).rev() {
        acc += terms[j];
        if j <= j_scan {
            s[j] = acc;
        }
    }
    Some(s)
}

fn snqa(m: &WeightSequence, j_scan: usize) -> GrowthReport {
    let Some(s) = snqa_tails(m, j_scan) else {
        return GrowthReport {
            condition: Condition::Snqa,
            holds: false,
            witness_constant: f64::INFINITY,
            worst_pair: (0, 0),
            scan_bound: j_scan,
            profile: vec![],
        };
    };
    let ratios: Vec<f64> = (0..=j_scan).map(|k| s[k] / m.t_f64(k)).collect();
    let (mut worst, mut a) = (0usize, 0.0f64);
    for (k, &r) in ratios.iter().enumerate() {
        if r > a {
            a = r;
            worst = k;
        }
    }
    let first = ratios[..=j_scan / 2].iter().cloned().fold(0.0, f64::max);
    let second = ratios[j_scan / 2..].iter().cloned().fold(0.0, f64::max);
    GrowthReport {
        condition: Condition::Snqa,
        holds: a.is_finite() && second <= 1.05 * first,
        witness_constant: a,
        worst_pair: (worst, worst),
        scan_bound: j_scan,
        profile: vec![(j_scan / 2, first), (j_scan, second)],
    }
}

fn stab_der(m: &WeightSequence, j_scan: usize) -> GrowthReport {
    let r: Vec<f64> = (0..j_scan)
        .map(|j| (m.ln_m(j + 1) - m.ln_m(j)) / (j + 1) as f64)
        .collect();
    let (mut worst, mut a) = (0usize, f64::NEG_INFINITY);
    for (j, &v) in r.iter().enumerate() {
        if v > a {
            a = v;
            worst = j;
        }
    }
    let first = r[..j_scan / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let second = r[j_scan / 2..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    GrowthReport {
        condition: Condition::StabDer,
        holds: a.is_finite() && second <= first + 0.05f64.ln_1p(),
        witness_constant: a.exp().max(1.0),
        worst_pair: (worst, worst),
        scan_bound: j_scan,
        profile: vec![(j_scan / 2, first.exp()), (j_scan, second.exp())],
    }
}

/// Named sequence definitions loadable from TOML or JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: SequenceKind,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SequenceFile {
    #[serde(default, rename = "sequence")]
    pub sequences: Vec<SequenceDef>,
}

impl SequenceFile {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        if json {
            serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::Data(e.to_string()))
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let json = path.extension().map(|e| e == "json").unwrap_or(false);
        Self::parse(&text, json)
    }

    pub fn build(&self, name: &str) -> Result<WeightSequence> {
        let def = self
            .sequences
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::domain(format!("no sequence named `{name}`")))?;
        WeightSequence::from_kind(def.name.clone(), def.kind.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gevrey_one_is_factorial() {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let mut f = 1.0;
        for j in 0..20 {
            if j > 0 {
                f *= j as f64;
            }
            assert_relative_eq!(m.m_f64(j), f, max_relative = 1e-12);
            assert_relative_eq!(m.m_ext(j).to_f64(), f, max_relative = 1e-15);
        }
    }

    #[test]
    fn gevrey_two_third_term() {
        let m = WeightSequence::gevrey(2.0, 0.0).unwrap();
        assert_eq!(m.m_ext(3).to_f64(), 36.0);
    }

    #[test]
    fn domain_errors() {
        assert!(WeightSequence::gevrey(0.0, 1.0).is_err());
        assert!(WeightSequence::qgevrey(-1.0).is_err());
        assert!(WeightSequence::from_table(&[]).is_err());
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        assert!(m.h_m(-1.0).is_err());
    }

    #[test]
    fn qgevrey_values() {
        let m = WeightSequence::qgevrey(1.0).unwrap();
        assert_eq!(m.m_ext(0).to_f64(), 1.0);
        assert_relative_eq!(
            (m.m_ext(2) / m.m_ext(1)).to_f64(),
            0.75f64.exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn regularize_examples() {
        let m = WeightSequence::from_table(&[1.0, 2.0, 4.0, 8.0]).unwrap();
        for (j, v) in [1.0, 2.0, 4.0, 8.0].iter().enumerate() {
            assert_relative_eq!(m.m_ext(j).to_f64(), *v, max_relative = 1e-15);
        }
        let m = WeightSequence::from_table(&[1.0, 5.0, 6.0, 36.0]).unwrap();
        assert_relative_eq!(m.m_ext(1).to_f64(), 6f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(m.m_ext(2).to_f64(), 6.0, max_relative = 1e-15);
        let m = WeightSequence::from_table(&[2.0, 4.0, 8.0]).unwrap();
        assert_relative_eq!(m.m_ext(0).to_f64(), 1.0);
        assert_relative_eq!(m.m_ext(2).to_f64(), 4.0, max_relative = 1e-15);
    }

    #[test]
    fn h_m_examples() {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        assert_eq!(m.h_m(2.0).unwrap(), 1.0);
        assert_relative_eq!(m.h_m(0.5).unwrap(), 0.5, max_relative = 1e-14);
        assert_eq!(m.h_m(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            m.h_m_ext(&Ext::new(0.5)).unwrap().to_f64(),
            0.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn legendre_examples() {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let grid = log_grid(1e-3, 10.0, 2000);
        let r = m.legendre_recover(0, &grid).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-12);
        let r = m.legendre_recover(3, &[0.25]).unwrap();
        assert_relative_eq!(r.value, 6.0, max_relative = 1e-12);
        assert!(r.confident);
        let q = WeightSequence::qgevrey(1.0).unwrap();
        let r = q.legendre_recover(2, &[q.t_f64(2)]).unwrap();
        assert_relative_eq!(r.value, 1f64.exp(), max_relative = 1e-12);
    }

    #[test]
    fn growth_verdicts() {
        let g = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let r = g.check_growth(Condition::ModerateGrowth, 40).unwrap();
        assert!(r.holds && r.witness_constant <= 2.0, "{r:?}");
        let q = WeightSequence::qgevrey(1.0).unwrap();
        let r = q.check_growth(Condition::ModerateGrowth, 40).unwrap();
        assert!(!r.holds, "{r:?}");
        assert!(q.check_growth(Condition::Snqa, 40).unwrap().holds);
        assert!(g.check_growth(Condition::Snqa, 40).unwrap().holds);
        assert!(q.check_growth(Condition::StabDer, 40).unwrap().holds);
    }

    #[test]
    fn qgevrey_two_pair_ten_ten() {
        // M_20 / M_10^2 = exp(lambda * 100 / 2), so A = e^5 is required there
        let q = WeightSequence::qgevrey(2.0).unwrap();
        let need = (q.ln_m(20) - 2.0 * q.ln_m(10)) / 20.0;
        assert_relative_eq!(need, 5.0, max_relative = 1e-12);
        assert!(!q.check_growth(Condition::ModerateGrowth, 20).unwrap().holds);
    }

    #[test]
    fn kappa_examples() {
        let g = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let grid = g.kappa_grid();
        assert_eq!(g.kappa_for(1.0, &grid).unwrap(), 1.0);
        let k2 = g.kappa_for(2.0, &grid).unwrap();
        for &t in &grid {
            let lhs = g.ln_h_m(t).unwrap();
            let rhs = 2.0 * g.ln_h_m(k2 * t).unwrap();
            assert!(lhs <= rhs + 1e-9 * (1.0 + lhs.abs()));
        }
        let q = WeightSequence::qgevrey(1.0).unwrap();
        assert!(q.kappa_for(2.0, &q.kappa_grid()).is_err());
    }

    #[test]
    fn sequence_file_roundtrip() {
        let text = r#"
            [[sequence]]
            name = "g1"
            kind = "gevrey"
            alpha = 1.0
            beta = 0.0

            [[sequence]]
            name = "t"
            kind = "table"
            values = [1.0, 5.0, 6.0, 36.0]
        "#;
        let f = SequenceFile::parse(text, false).unwrap();
        let m = f.build("t").unwrap();
        assert_relative_eq!(m.m_ext(1).to_f64(), 6f64.sqrt(), max_relative = 1e-15);
        assert!(f.build("missing").is_err());
    }
}
