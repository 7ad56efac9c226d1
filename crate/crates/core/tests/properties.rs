use num_complex::Complex64 as C64;
use proptest::prelude::*;

use dcjoris::gallery::{f_expansion, f_two_var, g_lambda};
use dcjoris::geometry::{build_cover, cutoff_chi, EllipseDomain};
use dcjoris::grid::{Grid, GridFunction};
use dcjoris::joris::{frobenius_threshold, power_decompose};
use dcjoris::model::{carleman_norm, SmoothFunctionModel};
use dcjoris::scalar::{with_precision, Ext, Real};
use dcjoris::selftest::brute_representable;
use dcjoris::{Jet, WeightSequence};

fn gevrey() -> impl Strategy<Value = WeightSequence> {
    (0.5f64..3.0, 0.0f64..1.0).prop_map(|(a, b)| WeightSequence::gevrey(a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn h_m_is_monotone_and_capped(m in gevrey(), t0 in 1e-4f64..1.0, r in 1.0f64..4.0) {
        let a = m.h_m(t0).unwrap();
        let b = m.h_m(t0 * r).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
        prop_assert!(b <= 1.0);
    }

    #[test]
    fn breakpoints_nonincreasing(m in gevrey(), j in 0usize..60) {
        prop_assert!(m.t_f64(j + 1) <= m.t_f64(j) * (1.0 + 1e-12));
    }

    #[test]
    fn h_m_below_every_term(m in gevrey(), t in 1e-3f64..1.0, j in 0usize..20) {
        let term = (j as f64 * t.ln() + m.ln_m(j)).exp();
        prop_assert!(m.h_m(t).unwrap() <= term * (1.0 + 1e-12));
    }

    #[test]
    fn decomposition_reconstructs(p in 1u32..12, q in 2u32..13, extra in 0u32..40) {
        prop_assume!(p < q && num_integer::gcd(p, q) == 1);
        let j = frobenius_threshold(p, q).unwrap() + extra;
        let (k, l) = power_decompose(j, p, q).unwrap();
        prop_assert_eq!(p * k + q * l, j);
    }

    #[test]
    fn threshold_matches_brute_force(p in 1u32..25, q in 2u32..26) {
        prop_assume!(p < q && num_integer::gcd(p, q) == 1);
        let m = frobenius_threshold(p, q).unwrap();
        prop_assert!(m == 0 || !brute_representable(m - 1, p, q));
        prop_assert!((m..m + p).all(|j| brute_representable(j, p, q)));
    }

    #[test]
    fn jet_exp_ln_round_trip(x in 0.1f64..5.0) {
        let v = Jet::variable(x, 6);
        let w = v.ln().exp();
        for (a, b) in w.coeffs().iter().zip(v.coeffs()) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn jet_product_commutes(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let x = Jet::variable(a, 5).sin_cos().0;
        let y = Jet::variable(b, 5).exp();
        let (u, v) = (x.mul(&y), y.mul(&x));
        for (p, q) in u.coeffs().iter().zip(v.coeffs()) {
            prop_assert!((p - q).abs() <= 1e-14 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn cutoff_constant_on_confocal_ellipses(eps in 0.05f64..1.0, c in 0.3f64..1.2, t1 in 0.0f64..6.28, t2 in 0.0f64..6.28) {
        let e = EllipseDomain::new(c * eps);
        let (a, b) = (cutoff_chi(eps, e.boundary_point(t1)), cutoff_chi(eps, e.boundary_point(t2)));
        prop_assert!((a - b).abs() < 1e-9, "{} {}", a, b);
    }

    #[test]
    fn grid_binary_round_trip(h in 0.05f64..0.5, s in -3.0f64..3.0) {
        let g = Grid::centered(1.0, 0.5, h, 1);
        let f = GridFunction::from_fn(g, |z| C64::new(s * z.re, z.im * z.re));
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let back = GridFunction::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back.grid, g);
        prop_assert_eq!(back.sub(&f).sup_norm(), 0.0);
    }

    #[test]
    fn f32_and_f64_agree(x in 0.1f64..3.0) {
        let a = <f64 as Real>::ln(&x);
        let b = <f32 as Real>::ln(&(x as f32));
        prop_assert!((a - b as f64).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn covers_pass_their_checks(eps in 0.1f64..1.0) {
        let c = build_cover(eps).verify(500);
        prop_assert!(c.covering_ok && c.safety_ok);
    }

    #[test]
    fn carleman_norm_nonincreasing_in_sigma(s in 1.0f64..8.0, r in 1.1f64..4.0) {
        let m = WeightSequence::gevrey(1.0, 0.0).unwrap();
        let f = SmoothFunctionModel::builtin("pole2").unwrap();
        let a = carleman_norm(&f, -1.0, 1.0, s, 12, &m).unwrap().norm_estimate;
        let b = carleman_norm(&f, -1.0, 1.0, s * r, 12, &m).unwrap().norm_estimate;
        prop_assert!(b <= a * (1.0 + 1e-12));
    }

    #[test]
    fn g_power_identity(lambda in 0.5f64..2.0, p in 2u32..4, x in 0.05f64..2.0) {
        let root = g_lambda(lambda * p as f64).unwrap();
        let g = g_lambda(lambda).unwrap();
        let lhs = root.eval(x).powi(p as i32);
        let rhs = g.eval(x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300), "{} {}", lhs, rhs);
    }

    #[test]
    fn expansion_converges(y in 0.3f64..0.9, frac in 0.1f64..0.6) {
        let eta = SmoothFunctionModel::builtin("flat").unwrap();
        with_precision(256, || {
            let (p, m) = (2, 2);
            let ye = Ext::new(y);
            let x = Ext::new(frac * y.powi(m as i32));
            let exact = f_two_var(&x, &ye, p, m, &eta);
            let err = |n| (f_expansion(&x, &ye, p, m, &eta, n).unwrap() - exact.clone()).abs().to_f64();
            let (e4, e24) = (err(4), err(24));
            prop_assert!(e24 <= e4 * 1.0001 + 1e-60, "{} {}", e4, e24);
            prop_assert!(e24 < 1e-6 * exact.to_f64());
            Ok(())
        })?;
    }
}
