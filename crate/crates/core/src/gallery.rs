//! Counter-example machinery: the functions `g_λ` and their sharp classes,
//! flat majorants `η`, the two-variable function
//! `F(x, y) = (x² + y^2m) (1 + x² η(y) / (x² + y^2m))^(1/p)` with its
//! expansion coefficients, and the derivative blowup certificate for `F`.
//!
//! Everything with factorial growth is evaluated in [`Ext`].

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use parking_lot::Mutex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::{classify_regularity, DerivativeTag, ModelEval, Regularity, RegularityReport, SmoothFunctionModel};
use crate::scalar::{with_precision, Ext, Real};
use crate::weights::{log_grid, Condition, SequenceKind, WeightSequence};

/// Mantissa width used by the certificates.
pub const GALLERY_PRECISION: usize = 512;

/// Highest derivative order served by the gallery models.
pub const GALLERY_J_MAX: usize = 30;

fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::domain(format!("{x} is not finite")))
}

fn bigint_to_ext(n: &BigInt) -> Ext {
    let two64 = Ext::new(18446744073709551616.0);
    let mut acc = Ext::zero();
    for d in n.magnitude().to_u64_digits().iter().rev() {
        acc = acc * two64.clone() + Ext::from_u64(*d);
    }
    if n.is_negative() {
        -acc
    } else {
        acc
    }
}

/// Exact rational to [`Ext`] at the current working precision.
pub fn rational_to_ext(q: &BigRational) -> Ext {
    bigint_to_ext(q.numer()) / bigint_to_ext(q.denom())
}

fn rational_to_f64(q: &BigRational) -> f64 {
    rational_to_ext(q).to_f64()
}

/// `g^(j)(x) = g(x) P_j(ln x, 1/x)` for `g = g_λ`. Every `P_j` has the form
/// `v^j Q_j(u)`; `coeffs` holds `Q_j` in increasing powers of `u`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogPolyDerivative {
    pub tag: String,
    pub order: usize,
    #[serde(serialize_with = "ser_rationals")]
    pub coeffs: Vec<BigRational>,
}

fn ser_rationals<S: serde::Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|q| q.to_string()))
}

impl LogPolyDerivative {
    pub fn base(tag: impl Into<String>) -> Self {
        LogPolyDerivative {
            tag: tag.into(),
            order: 0,
            coeffs: vec![BigRational::one()],
        }
    }

    /// `Q_{j+1} = Q_j' - (2u/λ + j) Q_j`.
    pub fn next(&self, two_over_lambda: &BigRational) -> Self {
        let q = &self.coeffs;
        let j = BigRational::from_integer(BigInt::from(self.order));
        let mut out = vec![BigRational::zero(); q.len() + 1];
        for (k, c) in q.iter().enumerate() {
            if k >= 1 {
                out[k - 1] += c * BigRational::from_integer(BigInt::from(k));
            }
            out[k] -= c * &j;
            out[k + 1] -= c * two_over_lambda;
        }
        while out.len() > 1 && out.last().map_or(false, Zero::is_zero) {
            out.pop();
        }
        LogPolyDerivative {
            tag: self.tag.clone(),
            order: self.order + 1,
            coeffs: out,
        }
    }

    /// `Q_j(u)`.
    pub fn eval<T: Real>(coeffs: &[T], u: &T) -> T {
        coeffs.iter().rev().fold(T::zero(), |acc, c| acc * u.clone() + c.clone())
    }
}

/// `P_0, ..., P_{j_max}` for `g_λ`.
pub fn log_poly_series(lambda: f64, j_max: usize) -> Result<Vec<LogPolyDerivative>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("g_lambda needs lambda > 0, got {lambda}")));
    }
    let k = BigRational::from_integer(BigInt::from(2)) / rational(lambda)?;
    let mut out = vec![LogPolyDerivative::base(format!("g:{lambda}"))];
    for _ in 0..j_max {
        let n = out.last().unwrap().next(&k);
        out.push(n);
    }
    Ok(out)
}

struct GLambdaEval {
    lambda: f64,
    exact: Vec<Vec<BigRational>>,
    q64: Vec<Vec<f64>>,
    cache: Mutex<Option<(usize, Arc<Vec<Vec<Ext>>>)>>,
}

impl GLambdaEval {
    fn ext_coeffs(&self) -> Arc<Vec<Vec<Ext>>> {
        let p = crate::scalar::precision();
        let mut c = self.cache.lock();
        match &*c {
            Some((bits, v)) if *bits == p => v.clone(),
            _ => {
                let v: Arc<Vec<Vec<Ext>>> =
                    Arc::new(self.exact.iter().map(|q| q.iter().map(rational_to_ext).collect()).collect());
                *c = Some((p, v.clone()));
                v
            }
        }
    }
}

fn g_lambda_coeffs<T: Real>(x: &T, lambda: f64, q: &[Vec<T>], order: usize) -> Vec<T> {
    let mut out = vec![T::zero(); order + 1];
    if !(*x > T::zero()) {
        return out;
    }
    let u = x.ln();
    let g = (-(u.clone() * u.clone()) / T::from_f64(lambda)).exp();
    let xinv = T::one() / x.clone();
    let mut scale = g;
    for (j, c) in out.iter_mut().enumerate() {
        if j > 0 {
            scale = scale * xinv.clone() / T::from_i64(j as i64);
        }
        *c = scale.clone() * LogPolyDerivative::eval(&q[j], &u);
    }
    out
}

impl ModelEval for GLambdaEval {
    fn jet(&self, x: f64, order: usize) -> Jet<f64> {
        Jet::from_coeffs(g_lambda_coeffs(&x, self.lambda, &self.q64, order))
    }

    fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
        let q = self.ext_coeffs();
        Jet::from_coeffs(g_lambda_coeffs(x, self.lambda, &q, order))
    }
}

/// `g_λ(x) = exp(-(ln x)²/λ)` for `x > 0`, `0` otherwise, with derivatives
/// from the exact log-polynomial recurrence.
pub fn g_lambda(lambda: f64) -> Result<SmoothFunctionModel> {
    let series = log_poly_series(lambda, GALLERY_J_MAX)?;
    let exact: Vec<Vec<BigRational>> = series.into_iter().map(|p| p.coeffs).collect();
    let q64 = exact.iter().map(|q| q.iter().map(rational_to_f64).collect()).collect();
    Ok(SmoothFunctionModel::from_eval(
        format!("g:{lambda}"),
        DerivativeTag::Recurrence,
        GALLERY_J_MAX,
        Arc::new(GLambdaEval {
            lambda,
            exact,
            q64,
            cache: Mutex::new(None),
        }),
    ))
}

/// Closed form of a flat majorant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum EtaForm {
    /// `exp(-|t|^(-1/α))`.
    Gevrey { alpha: f64 },
    /// `exp(-(ln |t|)²/λ)`.
    Qgevrey { lambda: f64 },
}

struct EtaEval(EtaForm);

fn eta_jet<T: Real>(form: EtaForm, x: &T, order: usize) -> Jet<T> {
    if x.is_zero() {
        return Jet::constant(T::zero(), order);
    }
    let mut t = Jet::variable(x.clone(), order);
    if *x < T::zero() {
        t = t.scale(&-T::one());
    }
    let l = t.ln();
    match form {
        EtaForm::Gevrey { alpha } => l.scale(&T::from_f64(-1.0 / alpha)).exp().scale(&-T::one()).exp(),
        EtaForm::Qgevrey { lambda } => l.mul(&l).scale(&(-T::one() / T::from_f64(lambda))).exp(),
    }
}

impl ModelEval for EtaEval {
    fn jet(&self, x: f64, order: usize) -> Jet<f64> {
        eta_jet(self.0, &x, order)
    }

    fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
        eta_jet(self.0, x, order)
    }
}

/// Flat majorant with its fitted constant and checks.
#[derive(Clone, Debug, Serialize)]
pub struct FlatMajorant {
    pub sequence: String,
    pub form: EtaForm,
    pub b0: f64,
    /// Largest `b <= b0` with `η(t) >= h_M(b t)` on the check grid.
    pub b: f64,
    pub grid: (f64, f64, usize),
    /// Largest `t` of the form `10^-3k` with `η(t)/t^k <= 1e-8`, `k = 1..10`.
    pub flatness_scale: Option<f64>,
    pub classification: RegularityReport,
    #[serde(skip)]
    pub model: SmoothFunctionModel,
}

fn eta_form(m: &WeightSequence) -> Result<EtaForm> {
    match m.kind() {
        SequenceKind::Gevrey { alpha, beta } if *beta == 0.0 => Ok(EtaForm::Gevrey { alpha: *alpha }),
        SequenceKind::Qgevrey { lambda } => Ok(EtaForm::Qgevrey { lambda: *lambda }),
        other => Err(Error::domain(format!("no flat majorant available for {other}"))),
    }
}

/// Fits the largest `b` in `(0, b0]` with `ln η(t) >= ln h_M(b t)` on `ts`.
fn fit_b(eta: &SmoothFunctionModel, m: &WeightSequence, b0: f64, ts: &[f64]) -> Result<f64> {
    let ln_eta: Vec<f64> = ts
        .iter()
        .map(|&t| eta.jet_ext(&Ext::new(t), 0).value().ln().to_f64())
        .collect();
    let ok = |b: f64| -> Result<bool> {
        for (t, le) in ts.iter().zip(&ln_eta) {
            if *le < m.ln_h_m(b * t)? {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if ok(b0)? {
        return Ok(b0);
    }
    let (mut lo, mut hi) = (0.0, b0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::bound("flat majorant", "no b > 0 with eta(t) >= h_M(b t) on the grid"));
    }
    Ok(lo)
}

fn flatness_scale(eta: &SmoothFunctionModel) -> Option<f64> {
    (1..=6).map(|k| 10f64.powi(-3 * k)).find(|&t| {
        let v = eta.jet_ext(&Ext::new(t), 0).value().clone();
        (1..=10).all(|k| (v.clone() / Ext::new(t).powi(k)).to_f64() <= 1e-8)
    })
}

/// A flat `C_M` function `η` with `η(t) >= h_M(b|t|)`, from the closed form
/// matching the sequence family (Gevrey with `β = 0`, or q-Gevrey).
pub fn flat_majorant_eta(m: &WeightSequence) -> Result<(SmoothFunctionModel, f64)> {
    let r = flat_majorant_report(m)?;
    Ok((r.model, r.b))
}

pub fn flat_majorant_report(m: &WeightSequence) -> Result<FlatMajorant> {
    if !m.is_non_quasianalytic() {
        return Err(Error::domain(format!(
            "{} is quasianalytic: no nonzero flat function exists in its class",
            m.name()
        )));
    }
    let form = eta_form(m)?;
    let model = SmoothFunctionModel::from_eval(format!("eta[{}]", m.name()), DerivativeTag::ClosedForm, GALLERY_J_MAX, Arc::new(EtaEval(form)));
    let b0 = 1.0;
    let grid = (1e-6, 1.0, 400);
    with_precision(GALLERY_PRECISION, || {
        let ts = log_grid(grid.0, grid.1, grid.2);
        let b = fit_b(&model, m, b0, &ts)?;
        let classification = classify_regularity(&model, m, 1.0)?;
        if !matches!(classification.result, Regularity::Member { .. }) {
            return Err(Error::bound("flat majorant", format!("eta not certified in {}", m.name())));
        }
        Ok(FlatMajorant {
            sequence: m.name().to_string(),
            form,
            b0,
            b,
            grid,
            flatness_scale: flatness_scale(&model),
            classification,
            model,
        })
    })
}

/// `a_j = (p-1)(2p-1)...(jp-1) / (p^(j+1) (j+1)!)`.
pub fn expansion_coeff_a(j: u32, p: u32) -> Result<BigRational> {
    if j < 1 || p < 2 {
        return Err(Error::domain("expansion coefficients need j >= 1 and p >= 2"));
    }
    let mut num = BigInt::one();
    for i in 1..=j {
        num *= BigInt::from(i * p - 1);
    }
    let mut den = BigInt::from(p).pow(j + 1);
    for i in 2..=(j + 1) {
        den *= BigInt::from(i);
    }
    Ok(BigRational::new(num, den))
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// `c_l(y) = y^(-2ml) Σ_{j=1..l} a_j C(l-1, j-1) η(y)^(j+1)`.
pub fn c_l(l: u32, y: &Ext, p: u32, eta: &SmoothFunctionModel, m: u32) -> Result<Ext> {
    if l < 1 || !(*y > Ext::zero()) {
        return Err(Error::domain("c_l needs l >= 1 and y > 0"));
    }
    let e = eta.jet_ext(y, 0).value().clone();
    let mut sum = Ext::zero();
    for j in 1..=l {
        let a = rational_to_ext(&expansion_coeff_a(j, p)?);
        sum = sum + a * bigint_to_ext(&binomial(l - 1, j - 1)) * e.powi(j as i32 + 1);
    }
    Ok(sum * y.powi(-2 * (m * l) as i32))
}

/// `F(x, y)` evaluated directly.
pub fn f_two_var(x: &Ext, y: &Ext, p: u32, m: u32, eta: &SmoothFunctionModel) -> Ext {
    let s = x.clone() * x.clone() + y.powi(2 * m as i32);
    if s.is_zero() {
        return Ext::zero();
    }
    let e = eta.jet_ext(y, 0).value().clone();
    let inner = Ext::one() + x.clone() * x.clone() * e / s.clone();
    s * inner.powf(&(Ext::one() / Ext::from_u64(p as u64)))
}

/// `G(x, y) + Σ_{l=1..terms} (-1)^l c_l(y) x^(2l+2)`, valid for `0 <= x < y^m`.
pub fn f_expansion(x: &Ext, y: &Ext, p: u32, m: u32, eta: &SmoothFunctionModel, terms: u32) -> Result<Ext> {
    let e = eta.jet_ext(y, 0).value().clone();
    let x2 = x.clone() * x.clone();
    let mut acc = x2.clone() * (Ext::one() + e / Ext::from_u64(p as u64)) + y.powi(2 * m as i32);
    for l in 1..=terms {
        let t = c_l(l, y, p, eta, m)? * x.powi(2 * l as i32 + 2);
        acc = if l % 2 == 0 { acc + t } else { acc - t };
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupWitness {
    pub l: u32,
    pub y: f64,
    /// `|∂_x^(2l+2) F(0, y_l)| = (2l+2)! c_l(y_l)`, decimal.
    pub measured: String,
    /// `C^(l+1) (2l+2)! M_(2l+2)^m` with the derived `C`, decimal.
    pub required: String,
    /// `ln(measured / ((2l+2)! M_(2l+2)^m)) / (l+1)`.
    pub ln_root: f64,
    /// `c_l(y_l) >= a_1 b^(2ml) M_(ml)²`.
    pub intermediate_ok: bool,
    /// `M_(ml)² >= A^(-2ml) M_(2ml) >= A^(-2ml) M_(2l)^m >= A^(-4ml-2m) M_2^(-m) M_(2l+2)^m`.
    pub chain_ok: bool,
    pub pass: bool,
}

/// Lower bound on `|∂_x^(2l+2) F(0, y_l)|` along `y_l -> 0`.
#[derive(Clone, Debug, Serialize)]
pub struct BlowupCertificate {
    pub sequence: String,
    pub p: u32,
    pub m: u32,
    pub precision_bits: usize,
    /// Moderate-growth constant `A` measured on the scan window.
    pub a_growth: f64,
    /// Fitted majorant constant `b`.
    pub b: f64,
    /// `C` derived from `a_1`, `b`, `A` and `M_2`, shared by all witnesses.
    pub c: f64,
    /// Largest `C` the witnesses allow.
    pub c_fitted: f64,
    pub witnesses: Vec<BlowupWitness>,
    pub pass: bool,
}

/// Certificate that `F` is not in `C_M` for a strongly regular `M`.
///
/// `y_l = t_(ml)/b` from the breakpoint table, so `h_M(b y_l) = (b y_l)^(ml) M_(ml)`.
pub fn verify_blowup(m_seq: &WeightSequence, p: u32, m: u32, l_range: std::ops::RangeInclusive<u32>) -> Result<BlowupCertificate> {
    if p < 2 || m < 2 || *l_range.start() < 1 || l_range.is_empty() {
        return Err(Error::domain("blowup needs p >= 2, m >= 2 and l >= 1"));
    }
    let scan = 64;
    let mg = m_seq.check_growth(Condition::ModerateGrowth, scan)?;
    let sn = m_seq.check_growth(Condition::Snqa, scan)?;
    if !mg.holds || !sn.holds {
        return Err(Error::domain(format!(
            "{} is not strongly regular on the scan window (moderate growth {}, snqa {})",
            m_seq.name(),
            mg.holds,
            sn.holds
        )));
    }
    let l_max = *l_range.end();
    if 2 * m * l_max + 2 > scan as u32 {
        return Err(Error::domain("l range exceeds the growth scan window"));
    }
    let (eta, b) = flat_majorant_eta(m_seq)?;
    with_precision(GALLERY_PRECISION, || {
        let a = mg.witness_constant;
        let a_ext = Ext::new(a);
        let b_ext = Ext::new(b);
        let a1 = rational_to_ext(&expansion_coeff_a(1, p)?);
        let mm = m as i32;
        let ln_m2 = m_seq.m_ext(2).ln().to_f64();
        // a_1 b^(2ml) A^(-4ml-2m) M_2^(-m) >= C^(l+1) for all l >= 1
        let ln_c = l_range
            .clone()
            .map(|l| {
                let lf = l as f64;
                (a1.ln().to_f64() + 2.0 * mm as f64 * lf * b.ln() - (4.0 * mm as f64 * lf + 2.0 * mm as f64) * a.ln() - mm as f64 * ln_m2)
                    / (lf + 1.0)
            })
            .fold(f64::INFINITY, f64::min);
        let c_ext = Ext::new(ln_c).exp();
        let mut witnesses = Vec::new();
        for l in l_range.clone() {
            let ml = (m * l) as usize;
            let y = m_seq.t_ext(ml) / b_ext.clone();
            let fact = Ext::factorial(2 * l as u64 + 2);
            let cl = c_l(l, &y, p, &eta, m)?;
            let measured = fact.clone() * cl.clone();
            let m_top = m_seq.m_ext(2 * l as usize + 2).powi(mm);
            let required = c_ext.powi(l as i32 + 1) * fact.clone() * m_top.clone();
            let mml = m_seq.m_ext(ml);
            let intermediate_ok = cl >= a1.clone() * b_ext.powi(2 * ml as i32) * mml.clone() * mml.clone();
            let a_pow = |k: i32| a_ext.powi(k);
            let s0 = mml.clone() * mml.clone();
            let s1 = a_pow(-2 * ml as i32) * m_seq.m_ext(2 * ml);
            let s2 = a_pow(-2 * ml as i32) * m_seq.m_ext(2 * l as usize).powi(mm);
            let s3 = a_pow(-4 * ml as i32 - 2 * mm) * m_seq.m_ext(2).powi(-mm) * m_top.clone();
            let tol = Ext::one() + Ext::new(1e-12);
            let chain_ok = s0.clone() * tol.clone() >= s1 && s1.clone() * tol.clone() >= s2 && s2 * tol >= s3;
            let ln_root = (measured.clone() / (fact * m_top)).ln().to_f64() / (l as f64 + 1.0);
            let pass = measured >= required && intermediate_ok && chain_ok;
            witnesses.push(BlowupWitness {
                l,
                y: y.to_f64(),
                measured: measured.to_decimal(),
                required: required.to_decimal(),
                ln_root,
                intermediate_ok,
                chain_ok,
                pass,
            });
        }
        let c_fitted = witnesses.iter().map(|w| w.ln_root).fold(f64::INFINITY, f64::min).exp();
        Ok(BlowupCertificate {
            sequence: m_seq.name().to_string(),
            p,
            m,
            precision_bits: GALLERY_PRECISION,
            a_growth: a,
            b,
            c: ln_c.exp(),
            c_fitted,
            pass: witnesses.iter().all(|w| w.pass),
            witnesses,
        })
    })
}

/// Derivative-ratio evidence for one function against one class.
#[derive(Clone, Debug, Serialize)]
pub struct RatioEvidence {
    pub function: String,
    pub verdict: Regularity,
    /// `ln sup |f^(j)| - ln(j! M_j)` for `j = 0..=j_max`.
    pub ln_ratio: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SharpClassReport {
    pub lambda: f64,
    pub p: u32,
    pub sequence: String,
    pub j_max: usize,
    pub precision_bits: usize,
    /// `g_(pλ)^p = g_λ`.
    pub power: RatioEvidence,
    /// `g_(pλ)` itself.
    pub root: RatioEvidence,
    /// `max |g_(pλ)(x)^p - g_λ(x)|` over 1000 points of `(0, 2]`.
    pub identity_gap: f64,
    pub pass: bool,
}

/// Models truncated to order `j_max` for the classifier.
fn truncated(f: &SmoothFunctionModel, j_max: usize) -> SmoothFunctionModel {
    struct Trunc(SmoothFunctionModel);
    impl ModelEval for Trunc {
        fn jet(&self, x: f64, order: usize) -> Jet<f64> {
            self.0.jet(x, order)
        }
        fn jet_ext(&self, x: &Ext, order: usize) -> Jet<Ext> {
            self.0.jet_ext(x, order)
        }
    }
    SmoothFunctionModel::from_eval(f.name(), f.tag(), j_max, Arc::new(Trunc(f.clone())))
}

fn evidence(f: &SmoothFunctionModel, m: &WeightSequence, j_max: usize) -> Result<RatioEvidence> {
    let f = truncated(f, j_max);
    let report = classify_regularity(&f, m, 1.0)?;
    let sigma_one = report
        .profiles
        .iter()
        .find(|(s, _)| *s == 1.0)
        .map(|(_, p)| p.clone())
        .unwrap_or_default();
    Ok(RatioEvidence {
        function: f.name().to_string(),
        verdict: report.result,
        ln_ratio: sigma_one,
    })
}

/// `g_(pλ)^p = g_λ` lies in `C_(M^λ)` while `g_(pλ)` does not.
pub fn sharp_class_demo(lambda: f64, p: u32) -> Result<SharpClassReport> {
    if !(lambda > 0.0) || p < 2 {
        return Err(Error::domain("sharp class demo needs lambda > 0 and p >= 2"));
    }
    let j_max = 25;
    let m = WeightSequence::qgevrey(lambda)?;
    let root = g_lambda(p as f64 * lambda)?;
    let power = root.powi(p);
    let direct = g_lambda(lambda)?;
    let identity_gap = (1..=1000)
        .map(|i| {
            let x = 2.0 * i as f64 / 1000.0;
            (power.eval(x) - direct.eval(x)).abs()
        })
        .fold(0.0, f64::max);
    with_precision(GALLERY_PRECISION, || {
        let power_ev = evidence(&power, &m, j_max)?;
        let root_ev = evidence(&root, &m, j_max)?;
        let pass = matches!(power_ev.verdict, Regularity::Member { .. })
            && matches!(root_ev.verdict, Regularity::NonMember { .. })
            && identity_gap <= 1e-14;
        Ok(SharpClassReport {
            lambda,
            p,
            sequence: m.name().to_string(),
            j_max,
            precision_bits: GALLERY_PRECISION,
            power: power_ev,
            root: root_ev,
            identity_gap,
            pass,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn a_examples() {
        let q = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        assert_eq!(expansion_coeff_a(1, 2).unwrap(), q(1, 8));
        assert_eq!(expansion_coeff_a(2, 2).unwrap(), q(1, 16));
        assert_eq!(expansion_coeff_a(1, 3).unwrap(), q(1, 9));
        assert!(expansion_coeff_a(0, 2).is_err());
    }

    #[test]
    fn a_matches_binomial_series() {
        // |binom(1/p, j+1)| = a_j
        for p in 2..6u32 {
            let mut b = 1.0 / p as f64;
            for j in 1..8u32 {
                b *= (1.0 / p as f64 - j as f64) / (j + 1) as f64;
                let a = rational_to_f64(&expansion_coeff_a(j, p).unwrap());
                assert_relative_eq!(a, b.abs(), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn g_lambda_examples() {
        let g = g_lambda(1.0).unwrap();
        assert_eq!(g.eval(1.0), 1.0);
        assert_eq!(g.eval(-0.3), 0.0);
        assert_relative_eq!(g.eval((-5.0f64).exp()), (-25.0f64).exp(), max_relative = 1e-12);
        assert_eq!(g.derivative(1.0, 1), 0.0);
        let d = (g.eval(1.0 + 1e-6) - g.eval(1.0 - 1e-6)) / 2e-6;
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn recurrence_matches_jet_arithmetic() {
        let g = g_lambda(0.7).unwrap();
        let e = SmoothFunctionModel::builtin("g:0.7").unwrap();
        for &x in &[0.05, 0.4, 1.3] {
            let (a, b) = (g.jet(x, 12), e.jet(x, 12));
            for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
                assert!(f64::abs(u - v) <= 1e-9 * (1.0 + f64::abs(*v)), "{x}: {u} {v}");
            }
        }
    }

    #[test]
    fn c_l_two_terms() {
        with_precision(256, || {
            let eta = SmoothFunctionModel::builtin("flat").unwrap();
            let y = Ext::new(0.5);
            let e = (-2.0f64).exp();
            let want = (e * e / 8.0 + e * e * e / 16.0) * 0.5f64.powi(-8);
            assert_relative_eq!(c_l(2, &y, 2, &eta, 2).unwrap().to_f64(), want, max_relative = 1e-13);
            assert_relative_eq!(c_l(1, &y, 2, &eta, 2).unwrap().to_f64(), e * e / 8.0 * 0.5f64.powi(-4), max_relative = 1e-13);
        });
    }

    #[test]
    fn quasianalytic_has_no_majorant() {
        let m = WeightSequence::from_table(&[1.0; 8]).unwrap();
        assert!(matches!(flat_majorant_eta(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn qgevrey_is_not_strongly_regular() {
        let m = WeightSequence::qgevrey(1.0).unwrap();
        assert!(matches!(verify_blowup(&m, 2, 2, 1..=3), Err(Error::Domain(_))));
    }
}
