//! Real smooth functions on an interval with access to high-order
//! derivatives, plus the Carleman-norm scan and the regularity classifier.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::scalar::{Ext, Real};
use crate::weights::WeightSequence;

/// Largest derivative order served by the built-in models.
pub const DEFAULT_J_MAX: usize = 30;

/// How derivatives are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeTag {
    ClosedForm,
    Recurrence,
    Spectral,
    Grid,
}

/// Source of Taylor jets. Implementors must be safe to call concurrently.
pub trait ModelEval: Send + Sync {
    /// Normalized Taylor coefficients at `x` up to `order`.
    fn jet(&self, x: f64, order: usize) -> Jet<f64>;

    /// Extended-precision jet; defaults to promoting the `f64` jet.
    fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
        self.jet(x.to_f64(), order).to_ext()
    }
}

/// Expression tree evaluated with jet arithmetic over any [`Real`].
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    X,
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Scale(f64, Box<Expr>),
    Powi(Box<Expr>, u32),
    Recip(Box<Expr>),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    /// `exp(-1/u)` for `u > 0`, `0` otherwise.
    FlatExp(Box<Expr>),
    /// `exp(-(ln u)²/λ)` for `u > 0`, `0` otherwise.
    GLambda(f64, Box<Expr>),
}

impl Expr {
    pub fn jet<T: Real>(&self, x: &T, order: usize) -> Jet<T> {
        match self {
            Expr::X => Jet::variable(x.clone(), order),
            Expr::Const(c) => Jet::constant(T::from_f64(*c), order),
            Expr::Add(a, b) => a.jet(x, order).add(&b.jet(x, order)),
            Expr::Sub(a, b) => a.jet(x, order).sub(&b.jet(x, order)),
            Expr::Mul(a, b) => a.jet(x, order).mul(&b.jet(x, order)),
            Expr::Scale(c, a) => a.jet(x, order).scale(&T::from_f64(*c)),
            Expr::Powi(a, k) => a.jet(x, order).powi(*k),
            Expr::Recip(a) => a.jet(x, order).recip(),
            Expr::Exp(a) => a.jet(x, order).exp(),
            Expr::Sin(a) => a.jet(x, order).sin_cos().0,
            Expr::Cos(a) => a.jet(x, order).sin_cos().1,
            Expr::FlatExp(a) => {
                let u = a.jet(x, order);
                if *u.value() > T::zero() {
                    u.recip().scale(&-T::one()).exp()
                } else {
                    Jet::constant(T::zero(), order)
                }
            }
            Expr::GLambda(lambda, a) => {
                let u = a.jet(x, order);
                if *u.value() > T::zero() {
                    let l = u.ln();
                    l.mul(&l).scale(&(-T::one() / T::from_f64(*lambda))).exp()
                } else {
                    Jet::constant(T::zero(), order)
                }
            }
        }
    }

    /// Degree when the expression is a polynomial in `x`.
    pub fn poly_degree(&self) -> Option<usize> {
        use Expr::*;
        match self {
            X => Some(1),
            Const(_) => Some(0),
            Add(a, b) | Sub(a, b) => Some(a.poly_degree()?.max(b.poly_degree()?)),
            Mul(a, b) => Some(a.poly_degree()? + b.poly_degree()?),
            Scale(_, a) => a.poly_degree(),
            Powi(a, k) => Some(a.poly_degree()? * *k as usize),
            _ => None,
        }
    }

    fn tag(&self) -> DerivativeTag {
        match self {
            Expr::X | Expr::Const(_) => DerivativeTag::ClosedForm,
            _ => DerivativeTag::Recurrence,
        }
    }
}

impl ModelEval for Expr {
    fn jet(&self, x: f64, order: usize) -> Jet<f64> {
        Expr::jet(self, &x, order)
    }

    fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
        Expr::jet(self, x, order)
    }
}

struct Product(Arc<dyn ModelEval>, Arc<dyn ModelEval>);

impl ModelEval for Product {
    fn jet(&self, x: f64, order: usize) -> Jet<f64> {
        self.0.jet(x, order).mul(&self.1.jet(x, order))
    }
    fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
        self.0.jet_ext(x, order).mul(&self.1.jet_ext(x, order))
    }
}

struct Power(Arc<dyn ModelEval>, u32);

impl ModelEval for Power {
    fn jet(&self, x: f64, order: usize) -> Jet<f64> {
        self.0.jet(x, order).powi(self.1)
    }
    fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
        self.0.jet_ext(x, order).powi(self.1)
    }
}

/// Chebyshev interpolant on `[-1, 1]` with derivative coefficients
/// precomputed up to `j_max`.
struct Chebyshev {
    derivs: Vec<Vec<f64>>,
}

impl Chebyshev {
    fn new(f: &dyn Fn(f64) -> f64, n: usize, j_max: usize) -> Self {
        let nodes: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos())
            .collect();
        let vals: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        let mut c = vec![0.0; n];
        for (m, cm) in c.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, v) in vals.iter().enumerate() {
                s += v * (std::f64::consts::PI * m as f64 * (k as f64 + 0.5) / n as f64).cos();
            }
            *cm = 2.0 * s / n as f64;
        }
        c[0] *= 0.5;
        // chop the round-off plateau before differentiating
        let top = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let keep = c.iter().rposition(|v| v.abs() > 1e-14 * top).map_or(1, |k| k + 1);
        c.truncate(keep.max(1));
        let mut derivs = vec![c];
        for _ in 0..j_max {
            let prev = derivs.last().unwrap();
            let n = prev.len();
            let mut d = vec![0.0; n];
            if n == 1 {
                derivs.push(d);
                continue;
            }
            for k in (1..n).rev() {
                let above = if k + 1 < n { d[k + 1] } else { 0.0 };
                d[k - 1] = above + 2.0 * k as f64 * prev[k];
            }
            d[0] *= 0.5;
            derivs.push(d);
        }
        Chebyshev { derivs }
    }

    fn clenshaw(c: &[f64], x: f64) -> f64 {
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in c.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + ck;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + c[0]
    }
}

impl ModelEval for Chebyshev {
    fn jet(&self, x: f64, order: usize) -> Jet<f64> {
        let order = order.min(self.derivs.len() - 1);
        let mut fact = 1.0;
        let coeffs = (0..=order)
            .map(|k| {
                if k >= 2 {
                    fact *= k as f64;
                }
                Self::clenshaw(&self.derivs[k], x) / fact
            })
            .collect();
        Jet::from_coeffs(coeffs)
    }
}

/// A named smooth function with derivative access up to `j_max`.
#[derive(Clone)]
pub struct SmoothFunctionModel {
    name: String,
    tag: DerivativeTag,
    j_max: usize,
    expr: Option<Expr>,
    inner: Arc<dyn ModelEval>,
}

impl fmt::Debug for SmoothFunctionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothFunctionModel")
            .field("name", &self.name)
            .field("tag", &self.tag)
            .field("j_max", &self.j_max)
            .finish()
    }
}

impl SmoothFunctionModel {
    pub fn from_expr(name: impl Into<String>, expr: Expr) -> Self {
        SmoothFunctionModel {
            name: name.into(),
            tag: expr.tag(),
            j_max: DEFAULT_J_MAX,
            expr: Some(expr.clone()),
            inner: Arc::new(expr),
        }
    }

    pub fn from_eval(name: impl Into<String>, tag: DerivativeTag, j_max: usize, inner: Arc<dyn ModelEval>) -> Self {
        SmoothFunctionModel {
            name: name.into(),
            tag,
            j_max,
            expr: None,
            inner,
        }
    }

    /// Chebyshev interpolant of `f` on `[-1, 1]` at `n` points.
    pub fn chebyshev(name: impl Into<String>, f: impl Fn(f64) -> f64, n: usize, j_max: usize) -> Self {
        Self::from_eval(name, DerivativeTag::Spectral, j_max, Arc::new(Chebyshev::new(&f, n, j_max)))
    }

    /// Built-in models: `zero`, `one`, `identity`, `square`, `flat`
    /// (`exp(-1/x)` for `x > 0`), `sin`, `pole2` (`1/(1 - x/2)`) and
    /// `g:<lambda>` (`exp(-(ln x)²/λ)` for `x > 0`).
    pub fn builtin(name: &str) -> Result<Self> {
        use Expr::*;
        let x = || Box::new(X);
        let e = match name {
            "zero" => Const(0.0),
            "one" => Const(1.0),
            "identity" | "x" => X,
            "square" => Powi(x(), 2),
            "flat" | "exp-inv" => FlatExp(x()),
            "sin" => Sin(x()),
            "pole2" => Recip(Box::new(Sub(Box::new(Const(1.0)), Box::new(Scale(0.5, x()))))),
            _ => {
                if let Some(l) = name.strip_prefix("g:") {
                    let lambda: f64 = l
                        .parse()
                        .map_err(|_| Error::domain(format!("bad lambda in {name}")))?;
                    if !(lambda > 0.0) {
                        return Err(Error::domain("g_lambda needs lambda > 0"));
                    }
                    GLambda(lambda, x())
                } else {
                    return Err(Error::domain(format!("unknown model {name}")));
                }
            }
        };
        Ok(Self::from_expr(name, e))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tag(&self) -> DerivativeTag {
        self.tag
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }

    pub fn eval(&self, x: f64) -> f64 {
        *self.inner.jet(x, 0).value()
    }

    pub fn jet(&self, x: f64, order: usize) -> Jet<f64> {
        self.inner.jet(x, order.min(self.j_max))
    }

    pub fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
        self.inner.jet_ext(x, order.min(self.j_max))
    }

    /// `f^(j)(x)`.
    pub fn derivative(&self, x: f64, j: usize) -> f64 {
        self.jet(x, j).derivative(j)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let name = format!("({})*({})", self.name, other.name);
        match (&self.expr, &other.expr) {
            (Some(a), Some(b)) => {
                let mut m = Self::from_expr(name, Expr::Mul(Box::new(a.clone()), Box::new(b.clone())));
                m.j_max = self.j_max.min(other.j_max);
                m
            }
            _ => Self::from_eval(
                name,
                DerivativeTag::Recurrence,
                self.j_max.min(other.j_max),
                Arc::new(Product(self.inner.clone(), other.inner.clone())),
            ),
        }
    }

    pub fn powi(&self, k: u32) -> Self {
        let name = format!("({})^{k}", self.name);
        match &self.expr {
            Some(a) => {
                let mut m = Self::from_expr(name, Expr::Powi(Box::new(a.clone()), k));
                m.j_max = self.j_max;
                m
            }
            None => Self::from_eval(name, DerivativeTag::Recurrence, self.j_max, Arc::new(Power(self.inner.clone(), k))),
        }
    }

    /// Degree when the model is a polynomial expression.
    pub fn polynomial_degree(&self) -> Option<usize> {
        self.expr.as_ref().and_then(Expr::poly_degree)
    }

    pub fn is_identically_zero(&self) -> bool {
        matches!(self.expr, Some(Expr::Const(c)) if c == 0.0)
    }
}

/// Per-order suprema `sup_x |f^(j)(x)| / (σ^j j! M_j)` and their maximum.
#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub j_used: usize,
    pub norm_estimate: f64,
    pub profile: Vec<f64>,
}

impl NormReport {
    pub fn from_ln_profile(a: f64, b: f64, sigma: f64, ln_profile: &[f64]) -> Self {
        let profile: Vec<f64> = ln_profile.iter().map(|&l| l.exp()).collect();
        let norm_estimate = profile.iter().cloned().fold(0.0, f64::max);
        NormReport {
            a,
            b,
            sigma,
            j_used: ln_profile.len().saturating_sub(1),
            norm_estimate,
            profile,
        }
    }
}

/// `n` Chebyshev points of `[a, b]`, plus a geometric cluster toward `0`
/// when `0` lies inside (flat points sit there in every built-in model).
pub fn sample_points(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..n)
        .map(|k| {
            let t = (std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect();
    if a < 0.0 && b > 0.0 {
        let s = a.abs().min(b);
        for k in 1..=480 {
            let x = s * (-(k as f64) / 8.0).exp();
            xs.push(x);
            xs.push(-x);
        }
    }
    xs
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// `ln sup_x |f^(j)(x)|` for `j <= order` over `xs`, in `f64` or in
/// extended precision.
pub fn ln_derivative_sup(f: &SmoothFunctionModel, xs: &[f64], order: usize, ext: bool) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; order + 1];
    let lf = ln_factorials(order);
    for &x in xs {
        if ext {
            let jet = f.jet_ext(&Ext::new(x), order);
            for (j, c) in jet.coeffs().iter().enumerate() {
                if !c.is_zero() {
                    let l = c.abs().ln().to_f64() + lf[j];
                    if l > best[j] {
                        best[j] = l;
                    }
                }
            }
        } else {
            let jet = f.jet(x, order);
            for (j, c) in jet.coeffs().iter().enumerate() {
                if *c != 0.0 && c.is_finite() {
                    let l = c.abs().ln() + lf[j];
                    if l > best[j] {
                        best[j] = l;
                    }
                }
            }
        }
    }
    best
}

fn ln_profile(ln_sup: &[f64], sigma: f64, m: &WeightSequence) -> Vec<f64> {
    let lf = ln_factorials(ln_sup.len());
    ln_sup
        .iter()
        .enumerate()
        .map(|(j, &l)| l - j as f64 * sigma.ln() - lf[j] - m.ln_m(j))
        .collect()
}

/// Carleman-norm scan of `f` on `[a, b]` with `j <= J`.
pub fn carleman_norm(f: &SmoothFunctionModel, a: f64, b: f64, sigma: f64, j: usize, m: &WeightSequence) -> Result<NormReport> {
    if j > f.j_max() {
        return Err(Error::precondition(format!("J = {j} exceeds the model's J_max = {}", f.j_max())));
    }
    let xs = sample_points(a, b, 1001);
    let sup = ln_derivative_sup(f, &xs, j, false);
    Ok(NormReport::from_ln_profile(a, b, sigma, &ln_profile(&sup, sigma, m)))
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Regularity {
    Member { sigma: f64 },
    NonMember { evidence: String },
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub model: String,
    pub sequence: String,
    pub b: f64,
    pub j_used: usize,
    pub result: Regularity,
    /// `(σ, ln profile)` for every σ of the scan grid.
    pub profiles: Vec<(f64, Vec<f64>)>,
}

/// Geometric σ grid of the classifier.
pub fn sigma_grid() -> Vec<f64> {
    (-6..=10).map(|k| 2f64.powi(k)).collect()
}

/// Non-member if for every σ the log-profile increments beyond `j = 15` are
/// positive and increasing; otherwise member if some σ has its whole
/// profile maximum attained at `j <= J/2`; inconclusive otherwise. Derivatives are taken
/// in extended precision.
pub fn classify_regularity(f: &SmoothFunctionModel, m: &WeightSequence, b: f64) -> Result<RegularityReport> {
    let j = f.j_max().min(DEFAULT_J_MAX);
    if j < 20 {
        return Err(Error::precondition("classification needs J_max >= 20"));
    }
    let xs = sample_points(-b, b, 1001);
    let sup = ln_derivative_sup(f, &xs, j, true);
    let mut profiles = Vec::new();
    let mut member = None;
    let mut all_diverge = true;
    for sigma in sigma_grid() {
        let p = ln_profile(&sup, sigma, m);
        let head = p[..=j / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tail = p[j / 2 + 1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if member.is_none() && tail <= head {
            member = Some(sigma);
        }
        let inc: Vec<f64> = (15..j).map(|k| p[k + 1] - p[k]).collect();
        let diverges = inc.iter().all(|d| d.is_finite() && *d > 0.0) && inc.windows(2).all(|w| w[1] > w[0]);
        all_diverge &= diverges;
        profiles.push((sigma, p));
    }
    // increasing increments outlast any finite head, so divergence wins
    let result = if all_diverge {
        Regularity::NonMember {
            evidence: format!("log-profile increments increase and stay positive for 15 <= j < {j} at every sigma"),
        }
    } else if let Some(sigma) = member {
        Regularity::Member { sigma }
    } else {
        Regularity::Inconclusive
    };
    Ok(RegularityReport {
        model: f.name().to_string(),
        sequence: m.name().to_string(),
        b,
        j_used: j,
        result,
        profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtins_evaluate() {
        let f = SmoothFunctionModel::builtin("flat").unwrap();
        assert_eq!(f.eval(-0.5), 0.0);
        assert_relative_eq!(f.eval(0.5), (-2.0f64).exp());
        let g = SmoothFunctionModel::builtin("g:1").unwrap();
        assert_relative_eq!(g.eval(1.0), 1.0);
        assert_relative_eq!(g.eval((-5.0f64).exp()), (-25.0f64).exp(), max_relative = 1e-12);
        assert!(g.derivative(1.0, 1).abs() < 1e-15);
        assert!(SmoothFunctionModel::builtin("nope").is_err());
    }

    #[test]
    fn jet_zero_matches_eval() {
        for name in ["identity", "square", "flat", "sin", "pole2", "g:2"] {
            let f = SmoothFunctionModel::builtin(name).unwrap();
            for &x in &[-0.7, 0.01, 0.3, 0.9] {
                assert!((f.jet(x, 5).coeffs()[0] - f.eval(x)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn spectral_is_exact_on_polynomials() {
        let p = |x: f64| 3.0 * x.powi(5) - x.powi(2) + 0.5;
        let f = SmoothFunctionModel::chebyshev("p5", p, 64, 8);
        let x = 0.37;
        let exact = [p(x), 15.0 * x.powi(4) - 2.0 * x, 60.0 * x.powi(3) - 2.0, 180.0 * x * x, 360.0 * x, 360.0, 0.0];
        for (j, e) in exact.iter().enumerate() {
            assert!((f.derivative(x, j) - e).abs() < 1e-9 * (1.0 + e.abs()), "j={j}");
        }
    }

    #[test]
    fn pole_derivatives_match_closed_form() {
        let f = SmoothFunctionModel::builtin("pole2").unwrap();
        let x = -0.4;
        let mut fact = 1.0;
        for j in 0..15 {
            if j > 0 {
                fact *= j as f64;
            }
            // j! 2 / (2 - x)^(j+1)
            let exact = fact * 2.0 * (2.0 - x).powi(-(j as i32 + 1));
            assert_relative_eq!(f.derivative(x, j), exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn sin_norm_at_most_one() {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let f = SmoothFunctionModel::builtin("sin").unwrap();
        let r = carleman_norm(&f, -1.0, 1.0, 1.0, 20, &m).unwrap();
        assert!(r.norm_estimate <= 1.0 + 1e-12);
        let zero = SmoothFunctionModel::builtin("zero").unwrap();
        assert_eq!(carleman_norm(&zero, -1.0, 1.0, 1.0, 20, &m).unwrap().norm_estimate, 0.0);
    }

    #[test]
    fn polynomial_is_member() {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let f = SmoothFunctionModel::builtin("square").unwrap();
        let r = classify_regularity(&f, &m, 0.5).unwrap();
        assert!(matches!(r.result, Regularity::Member { .. }), "{:?}", r.result);
    }
}
