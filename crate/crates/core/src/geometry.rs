//! Confocal ellipses with foci `±1`, the disk cover of the half-size ellipse
//! and smooth cutoffs.
//!
//! `Ω_ε` is the open ellipse with semi-axes `cosh ε` and `sinh ε`; it is the
//! image of the strip `|Im z| < 1` under `z -> sin(εz)`.

use num_complex::Complex64 as C64;
use serde::Serialize;

/// `sin(εz)`.
pub fn phi_eps(epsilon: f64, z: C64) -> C64 {
    (z * epsilon).sin()
}

/// Elliptic radius: the `s >= 0` with `z` on the boundary of `Ω_s`.
pub fn s_parameter(z: C64) -> f64 {
    let d = ((z + 1.0).norm() + (z - 1.0).norm()) * 0.5;
    if d <= 1.0 {
        0.0
    } else {
        d.acosh()
    }
}

/// Unsigned distance from `p` to the ellipse curve `x²/a² + y²/b² = 1`, `a >= b > 0`.
pub fn distance_to_ellipse_curve(p: C64, a: f64, b: f64) -> f64 {
    let (x0, y0) = (p.re.abs(), p.im.abs());
    let closest = if y0 > 0.0 {
        if x0 > 0.0 {
            // root of F(t) = (a x0/(t+a²))² + (b y0/(t+b²))² - 1 on t > -b²
            let f = |t: f64| {
                let u = a * x0 / (t + a * a);
                let v = b * y0 / (t + b * b);
                u * u + v * v - 1.0
            };
            let mut lo = -b * b;
            let mut hi = (x0 * x0 + y0 * y0).sqrt() * a.max(b) + 1.0;
            while f(hi) > 0.0 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            (a * a * x0 / (t + a * a), b * b * y0 / (t + b * b))
        } else {
            (0.0, b)
        }
    } else {
        let c = (a * a - b * b) / a;
        if x0 < c {
            let x = a * a * x0 / (a * a - b * b);
            (x, b * (1.0 - (x / a) * (x / a)).max(0.0).sqrt())
        } else {
            (a, 0.0)
        }
    };
    ((x0 - closest.0).powi(2) + (y0 - closest.1).powi(2)).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EllipseDomain {
    pub epsilon: f64,
}

impl EllipseDomain {
    pub fn new(epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "ellipse parameter must be positive");
        EllipseDomain { epsilon }
    }

    pub fn semi_major(&self) -> f64 {
        self.epsilon.cosh()
    }

    pub fn semi_minor(&self) -> f64 {
        self.epsilon.sinh()
    }

    pub fn contains(&self, z: C64) -> bool {
        s_parameter(z) < self.epsilon
    }

    pub fn boundary_point(&self, theta: f64) -> C64 {
        C64::new(self.semi_major() * theta.cos(), self.semi_minor() * theta.sin())
    }

    /// Distance from an interior point to the boundary, or from an exterior
    /// point to the closed ellipse (then negated).
    pub fn signed_depth(&self, z: C64) -> f64 {
        let d = distance_to_ellipse_curve(z, self.semi_major(), self.semi_minor());
        if self.contains(z) {
            d
        } else {
            -d
        }
    }

    /// Distance from `z` to the closed ellipse (0 inside).
    pub fn distance_outside(&self, z: C64) -> f64 {
        (-self.signed_depth(z)).max(0.0)
    }
}

/// Sampled minimum distance between `∂Ω_{ε/2}` and `∂Ω_ε`.
pub fn boundary_gap(epsilon: f64) -> f64 {
    let inner = EllipseDomain::new(epsilon / 2.0);
    let outer = EllipseDomain::new(epsilon);
    let n = 4096;
    (0..n)
        .map(|i| {
            let th = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
            let p = inner.boundary_point(th);
            distance_to_ellipse_curve(p, outer.semi_major(), outer.semi_minor())
        })
        .fold(f64::INFINITY, f64::min)
}

/// One lattice row of a cover: centers `(i * spacing, k * spacing)` for `i0 <= i <= i1`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverRow {
    pub k: i64,
    pub i0: i64,
    pub i1: i64,
}

/// Disks `D(c, η)` with `η = ε²/16` centered on a square lattice of spacing
/// `η√2`, covering `Ω_{ε/2}`.
#[derive(Clone, Debug, Serialize)]
pub struct DiskCover {
    pub epsilon: f64,
    pub radius: f64,
    pub spacing: f64,
    pub rows: Vec<CoverRow>,
}

pub fn build_cover(epsilon: f64) -> DiskCover {
    let eta = epsilon * epsilon / 16.0;
    let sp = eta * std::f64::consts::SQRT_2;
    let inner = EllipseDomain::new(epsilon / 2.0);
    let kmax = ((inner.semi_minor() + eta) / sp).ceil() as i64;
    let mut rows = Vec::new();
    for k in -kmax..=kmax {
        let y = k as f64 * sp;
        let near = |x: f64| inner.distance_outside(C64::new(x, y)) <= eta;
        if !near(0.0) {
            continue;
        }
        // the eta-neighbourhood of a convex set meets the row in an interval
        let (mut lo, mut hi) = (0.0, inner.semi_major() + eta + sp);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if near(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let i1 = (lo / sp).floor() as i64;
        rows.push(CoverRow { k, i0: -i1, i1 });
    }
    DiskCover {
        epsilon,
        radius: eta,
        spacing: sp,
        rows,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverCheck {
    pub covering_ok: bool,
    pub safety_ok: bool,
    pub samples: usize,
    pub worst_covering_ratio: f64,
    pub min_safety_margin: f64,
    pub count: usize,
    pub scaled_count: f64,
}

impl DiskCover {
    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| (r.i1 - r.i0 + 1) as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn centers(&self) -> impl Iterator<Item = C64> + '_ {
        let sp = self.spacing;
        self.rows.iter().flat_map(move |r| {
            (r.i0..=r.i1).map(move |i| C64::new(i as f64 * sp, r.k as f64 * sp))
        })
    }

    /// `|centers| ε³`, the quantity bounded by the covering constant.
    pub fn scaled_count(&self) -> f64 {
        self.len() as f64 * self.epsilon.powi(3)
    }

    fn nearest_center(&self, z: C64) -> Option<C64> {
        let k = (z.im / self.spacing).round() as i64;
        let i = (z.re / self.spacing).round() as i64;
        let k0 = self.rows.first()?.k;
        let row = self.rows.get((k - k0) as usize)?;
        if row.k != k || i < row.i0 || i > row.i1 {
            return None;
        }
        Some(C64::new(i as f64 * self.spacing, k as f64 * self.spacing))
    }

    /// Covering and safety checks on `n` samples of each kind.
    ///
    /// Covering: deterministic samples of `Ω_{ε/2}` (interior and boundary)
    /// must lie in a disk of the cover. Safety: every closed `D(c, 2η)` lies
    /// in `Ω_ε`. The inner distance to `∂Ω_ε` is concave, so along each row
    /// it is minimal at an end; those ends are checked exactly and `n`
    /// further centers are checked on 64-point circles.
    pub fn verify(&self, n: usize) -> CoverCheck {
        let eps = self.epsilon;
        let inner = EllipseDomain::new(eps / 2.0);
        let outer = EllipseDomain::new(eps);
        let mut covering_ok = true;
        let mut worst = 0.0f64;
        let golden = 0.618_033_988_749_894_9;
        for i in 0..n {
            let z = if i % 2 == 0 {
                inner.boundary_point(std::f64::consts::TAU * i as f64 / n as f64) * (1.0 - 1e-12)
            } else {
                // elliptic coordinates on a low-discrepancy sequence
                let u = (i as f64 * golden).fract();
                let s = (eps / 2.0) * ((i as f64 + 0.5) / n as f64).sqrt();
                C64::new(s.cosh() * (std::f64::consts::TAU * u).cos(), s.sinh() * (std::f64::consts::TAU * u).sin())
            };
            match self.nearest_center(z) {
                Some(c) => {
                    let r = (z - c).norm() / self.radius;
                    worst = worst.max(r);
                    if r > 1.0 + 1e-9 {
                        covering_ok = false;
                    }
                }
                None => covering_ok = false,
            }
        }
        let two_eta = 2.0 * self.radius;
        let mut margin = f64::INFINITY;
        let mut safety_ok = true;
        for r in &self.rows {
            for i in [r.i0, r.i1] {
                let c = C64::new(i as f64 * self.spacing, r.k as f64 * self.spacing);
                let d = outer.signed_depth(c);
                margin = margin.min(d - two_eta);
                if d <= two_eta {
                    safety_ok = false;
                }
            }
        }
        let total = self.len();
        if total > 0 {
            let stride = (total / n.max(1)).max(1);
            for c in self.centers().step_by(stride).take(n) {
                for q in 0..64 {
                    let th = std::f64::consts::TAU * q as f64 / 64.0;
                    let p = c + C64::from_polar(two_eta, th);
                    if !outer.contains(p) {
                        safety_ok = false;
                    }
                }
            }
        }
        CoverCheck {
            covering_ok,
            safety_ok,
            samples: n,
            worst_covering_ratio: worst,
            min_safety_margin: margin,
            count: total,
            scaled_count: self.scaled_count(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let centers: Vec<[f64; 2]> = self.centers().map(|c| [c.re, c.im]).collect();
        serde_json::json!({
            "epsilon": self.epsilon,
            "radius": self.radius,
            "centers": centers,
        })
    }
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    let a = bump(t);
    let b = bump(1.0 - t);
    if a + b == 0.0 {
        if t <= 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        a / (a + b)
    }
}

/// Derivative of [`smooth_step`].
pub fn smooth_step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let a = bump(t);
    let b = bump(1.0 - t);
    if a + b == 0.0 {
        return 0.0;
    }
    a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b))
}

/// Cutoff equal to 1 on `s <= ε/2` and 0 on `s >= 3ε/4`.
pub fn cutoff_chi(epsilon: f64, z: C64) -> f64 {
    let s = s_parameter(z);
    1.0 - smooth_step((s - 0.5 * epsilon) / (0.25 * epsilon))
}

/// Cutoff equal to 1 within Euclidean distance `pad` of `Ω_{ε/2}`, falling
/// to 0 over the width `sinh(3ε/4) - sinh(ε/2)`.
pub fn padded_cutoff(epsilon: f64, pad: f64, z: C64) -> f64 {
    let inner = EllipseDomain::new(epsilon / 2.0);
    if inner.contains(z) {
        return 1.0;
    }
    let width = (0.75 * epsilon).sinh() - (0.5 * epsilon).sinh();
    1.0 - smooth_step((inner.distance_outside(z) - pad) / width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn step_derivative_matches_difference() {
        for &t in &[0.1, 0.35, 0.5, 0.8] {
            let d = (smooth_step(t + 1e-6) - smooth_step(t - 1e-6)) / 2e-6;
            assert_relative_eq!(smooth_step_derivative(t), d, max_relative = 1e-6);
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_eps(1.0, C64::new(0.0, 0.0)), C64::new(0.0, 0.0));
        let v = phi_eps(1.0, C64::new(0.0, 1.0));
        assert_relative_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.im, 1f64.sinh(), max_relative = 1e-15);
        assert_relative_eq!(phi_eps(0.5, C64::new(std::f64::consts::PI, 0.0)).re, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn s_parameter_examples() {
        assert_eq!(s_parameter(C64::new(0.5, 0.0)), 0.0);
        assert_relative_eq!(s_parameter(C64::new(0.0, 0.3f64.sinh())), 0.3, max_relative = 1e-12);
        assert_relative_eq!(s_parameter(C64::new(0.2f64.cosh(), 0.0)), 0.2, max_relative = 1e-7);
    }

    #[test]
    fn strip_boundary_maps_to_ellipse() {
        for &eps in &[1.0, 0.3, 0.05] {
            for i in 0..50 {
                let x = -3.0 + 0.12 * i as f64;
                for sgn in [1.0, -1.0] {
                    let s = s_parameter(phi_eps(eps, C64::new(x, sgn)));
                    assert!((s - eps).abs() <= 1e-8, "{eps} {x} {s}");
                }
            }
        }
    }

    #[test]
    fn distance_to_circle() {
        // a = b: distance is | |p| - a |
        let d = distance_to_ellipse_curve(C64::new(3.0, 4.0), 2.0, 2.0 - 1e-12);
        assert_relative_eq!(d, 3.0, max_relative = 1e-9);
        let d = distance_to_ellipse_curve(C64::new(0.0, 0.0), 2.0, 1.0);
        assert_relative_eq!(d, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn gap_examples() {
        assert!(boundary_gap(1.0) >= 0.25);
        assert!(boundary_gap(0.5) >= 0.0625);
        let g = boundary_gap(0.1);
        assert!(g >= 0.0025 && g <= 0.1f64.sinh() - 0.05f64.sinh() + 1e-15);
    }

    #[test]
    fn cover_small_ladder() {
        let c1 = build_cover(1.0);
        let c2 = build_cover(0.5);
        for c in [&c1, &c2] {
            let v = c.verify(2000);
            assert!(v.covering_ok && v.safety_ok, "{v:?}");
        }
        assert!((c2.len() as f64) / (c1.len() as f64) <= 9.0);
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_chi(1.0, C64::new(0.0, 0.0)), 1.0);
        assert_eq!(cutoff_chi(1.0, C64::new(2.0, 0.0)), 0.0);
        let z = C64::new(0.0, 0.6f64.sinh());
        let v = cutoff_chi(1.0, z);
        assert!(v > 0.0 && v < 1.0);
    }
}
