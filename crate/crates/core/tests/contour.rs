use std::f64::consts::PI;

use fracprop::contour::{integrand_norm_profile, loglog_slope};
use fracprop::mittag_leffler::ml_real;
use fracprop::*;
use proptest::prelude::*;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn diag() -> Diagonal {
    Diagonal::from_real(&[1.0, 10.0, 100.0]).unwrap()
}

fn prop(op: &dyn SectorialOperator, alpha: f64, beta: f64, t: f64, m: Option<usize>, x: &StateVector) -> StateVector {
    let req = PropagatorRequest::new(alpha, beta, t).corrected(m);
    propagator(op, &req, x, &ContourOptions::default()).unwrap().value
}

fn prop_n(op: &dyn SectorialOperator, alpha: f64, beta: f64, t: f64, n: usize, x: &StateVector) -> StateVector {
    let req = PropagatorRequest::new(alpha, beta, t);
    propagator(op, &req, x, &ContourOptions::with_nodes(n)).unwrap().value
}

#[test]
fn scalar_against_mittag_leffler() {
    for (alpha, beta, m) in [(0.5, 1.0, None), (1.5, 2.0, None), (0.5, 0.5, Some(0)), (0.3, 0.3, Some(2))] {
        for lambda in [0.5, 1.0, 10.0] {
            let op = Diagonal::scalar(lambda).unwrap();
            for t in [0.05, 0.3, 1.0, 2.0] {
                let got = prop(&op, alpha, beta, t, m, &StateVector::from_real(&[1.0]))[0];
                let want = t.powf(beta - 1.0) * ml_real(alpha, beta, -lambda * t.powf(alpha)).unwrap();
                assert!(
                    (got - c(want)).norm() <= 1e-10 * want.abs().max(1e-3),
                    "alpha={alpha} beta={beta} lambda={lambda} t={t}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn integer_order_is_exponential() {
    let op = Diagonal::scalar(1.0).unwrap();
    let v = prop(&op, 1.0, 1.0, 1.0, None, &StateVector::from_real(&[1.0]));
    assert!((v[0] - c((-1.0f64).exp())).norm() < 1e-12);
}

#[test]
fn exact_values_at_zero() {
    let op = diag();
    let x = StateVector::from_real(&[1.0, -2.0, 3.0]);
    for alpha in [0.3, 1.0, 1.7] {
        assert_eq!(prop(&op, alpha, 1.0, 0.0, None, &x), x);
        assert_eq!(prop(&op, alpha, 2.0, 0.0, None, &x), StateVector::zeros(3));
        assert_eq!(prop(&op, alpha, 1.0 + alpha, 0.0, None, &x), StateVector::zeros(3));
    }
    let req = PropagatorRequest::new(0.5, 0.5, 0.0);
    assert!(matches!(propagator(&op, &req, &x, &ContourOptions::default()), Err(Error::Refused(_))));
}

#[test]
fn shifted_identity() {
    // S_α(t)x = x − S_{α,1+α}(t)Ax
    let op = Laplacian1D::new(31).unwrap();
    let x = op.mode(1).add(&op.mode(3).scaled(c(0.5)));
    let ax = op.apply(&x).unwrap();
    for alpha in [0.4, 0.9, 1.6] {
        for t in [0.01, 0.2, 1.0] {
            let lhs = prop(&op, alpha, 1.0, t, None, &x);
            let rhs = x.sub(&prop(&op, alpha, 1.0 + alpha, t, None, &ax));
            assert!(lhs.dist(&rhs) <= 1e-9 * x.norm(), "alpha={alpha} t={t}: {}", lhs.dist(&rhs));
        }
    }
}

#[test]
fn commutes_with_operator() {
    let fixtures: Vec<(Box<dyn SectorialOperator>, StateVector)> = vec![
        (Box::new(diag()), StateVector::from_real(&[1.0, 1.0, 1.0])),
        (Box::new(Laplacian1D::new(64).unwrap()), manufacture_data(&Laplacian1D::new(64).unwrap(), 1.0, 3).unwrap().0),
    ];
    for (op, x) in &fixtures {
        let ax = op.apply(x).unwrap();
        for alpha in [0.5, 1.5] {
            for t in [0.0, 0.1, 0.4, 0.7, 1.0] {
                let lhs = op.apply(&prop(op.as_ref(), alpha, 1.0, t, None, x)).unwrap();
                let rhs = prop(op.as_ref(), alpha, 1.0, t, None, &ax);
                assert!(lhs.dist(&rhs) <= 1e-8 * ax.norm(), "{} alpha={alpha} t={t}", op.name());
            }
        }
    }
}

#[test]
fn node_doubling_converges() {
    let op = diag();
    let x = StateVector::from_real(&[1.0, 1.0, 1.0]);
    for alpha in [0.5, 1.5] {
        for t in [0.1, 0.5, 1.0] {
            let errs: Vec<(f64, f64)> = [8, 16, 32, 64, 128, 256]
                .iter()
                .map(|&n| {
                    let v = prop_n(&op, alpha, 1.0, t, n, &x);
                    let r = prop_n(&op, alpha, 1.0, t, 4 * n, &x);
                    (n as f64, v.dist(&r).max(1e-17))
                })
                .collect();
            let n = errs.len() as f64;
            let mx = errs.iter().map(|e| e.0).sum::<f64>() / n;
            let my = errs.iter().map(|e| e.1.ln()).sum::<f64>() / n;
            let slope = errs.iter().map(|e| (e.0 - mx) * (e.1.ln() - my)).sum::<f64>()
                / errs.iter().map(|e| (e.0 - mx).powi(2)).sum::<f64>();
            assert!(slope < 0.0, "alpha={alpha} t={t}: {errs:?}");
            assert!(errs.last().unwrap().1 <= 1e-8, "alpha={alpha} t={t}: {errs:?}");
        }
    }
}

#[test]
fn bounded_in_time_and_stable_under_refinement() {
    let op = diag();
    let x = StateVector::from_real(&[1.0, 1.0, 1.0]);
    for (alpha, beta) in [(0.5, 1.0), (1.5, 1.0), (1.5, 2.0), (0.7, 1.7)] {
        let sup = |n: usize| {
            (1..=40)
                .map(|i| prop_n(&op, alpha, beta, i as f64 / 40.0, n, &x).norm() / x.norm())
                .fold(0.0, f64::max)
        };
        let (a, b) = (sup(128), sup(256));
        assert!(a.is_finite() && a < 10.0);
        assert!((a - b).abs() <= 1e-8 * b, "alpha={alpha} beta={beta}: {a} vs {b}");
    }
}

#[test]
fn principal_branch_stays_off_the_cut() {
    let sector = SpectralSector::new(0.5, 0.1, 1.0).unwrap();
    for alpha in [0.2, 0.7, 1.0, 1.4, 1.9] {
        for t in [1e-3, 0.5, 5.0] {
            let spec = fracprop::contour::auto_contour(alpha, &sector, t, 1.0, 1.0, &ContourOptions::default()).unwrap();
            spec.check_admissible(alpha, &sector).unwrap();
            for z in build_contour(spec).unwrap().nodes {
                assert!(z.arg() > -PI && z.arg() <= PI);
                let w = z.powf(alpha);
                assert!(w.arg().abs() < PI - sector.phi_s, "alpha={alpha} z={z} z^a={w}");
            }
        }
    }
}

#[test]
fn grid_geometry() {
    let spec = ContourSpec::RaysArc { arc_radius: 2.0, ray_angle: 2.0, r_max: 50.0, nodes: 1 };
    let g = build_contour(spec).unwrap();
    assert_eq!(g.len(), 3);
    assert!(g.nodes.iter().any(|z| (z - c(2.0)).norm() < 1e-14));
    assert!(g.weights.iter().all(|&w| w > 0.0));

    let spec = ContourSpec::RaysArc { arc_radius: 1.0, ray_angle: 2.2, r_max: 40.0, nodes: 64 };
    for z in build_contour(spec).unwrap().nodes {
        if z.norm() > 1.0 + 1e-12 {
            assert!(((-z).arg().abs() - (PI - 2.2)).abs() < 1e-12);
        }
    }
    assert!(build_contour(ContourSpec::RaysArc { arc_radius: 5.0, ray_angle: 2.0, r_max: 4.0, nodes: 8 }).is_err());
}

#[test]
fn closure_encircles_origin_once() {
    // ∮ dz/(2πi z) = 1; the truncated rays contribute ∫ e^{zt}/z with t large
    // enough that the tail is negligible. The trapezoid on the uniform variant
    // only converges algebraically.
    for (spec, tol) in [
        (ContourSpec::RaysArc { arc_radius: 1.0, ray_angle: 2.0, r_max: 200.0, nodes: 256 }, 1e-12),
        (ContourSpec::RaysArcUniform { arc_radius: 1.0, ray_angle: 2.0, r_max: 200.0, nodes: 4096 }, 1e-4),
    ] {
        let g = build_contour(spec).unwrap();
        let t = 1.0;
        let v = g.integrate(|z| (z * t).exp() / z) / Complex64::new(0.0, 2.0 * PI);
        assert!((v - c(1.0)).norm() < tol, "{spec:?}: {v}");
    }
}

#[test]
fn family_and_sum_agree_with_direct() {
    let op = diag();
    let x = StateVector::from_real(&[1.0, -1.0, 2.0]);
    for (alpha, beta, m) in [(0.6, 1.0, None), (0.6, 0.6, Some(0)), (1.5, 2.0, None), (1.5, 2.5, None)] {
        let fam = PropagatorFamily::new(&op, alpha, beta, m, &x, 0.05, 1.0, &ContourOptions::default()).unwrap();
        for t in [0.05, 0.2, 0.77, 1.0] {
            let d = prop(&op, alpha, beta, t, m, &x);
            assert!(fam.eval(t).unwrap().dist(&d) <= 1e-10 * d.norm().max(1.0));
        }
        assert!(fam.eval(1.5).is_err());

        let xs = [x.clone(), StateVector::from_real(&[0.0, 3.0, 1.0]), StateVector::from_real(&[2.0, 0.5, -1.0])];
        let taus = [0.03, 0.4, 0.9];
        let ws = [0.5, -1.5, 2.0];
        let terms: Vec<WeightedTerm> = (0..3).map(|i| WeightedTerm { tau: taus[i], weight: ws[i], x: &xs[i] }).collect();
        let s = propagator_sum(&op, alpha, beta, m, &terms, &ContourOptions::default()).unwrap().value;
        let mut want = StateVector::zeros(3);
        for i in 0..3 {
            want.axpy(c(ws[i]), &prop(&op, alpha, beta, taus[i], m, &xs[i]));
        }
        assert!(s.dist(&want) <= 1e-10 * want.norm(), "alpha={alpha} beta={beta}");
    }
}

#[test]
fn alternative_shapes_reach_the_same_value() {
    let op = diag();
    let x = StateVector::from_real(&[1.0, 1.0, 1.0]);
    let d = prop(&op, 0.8, 1.0, 0.5, None, &x);
    for shape in [ContourShape::Hyperbola, ContourShape::RaysArcUniform] {
        let opts = ContourOptions { shape, ..ContourOptions::default() };
        let v = propagator(&op, &PropagatorRequest::new(0.8, 1.0, 0.5), &x, &opts).unwrap().value;
        let tol = if shape == ContourShape::Hyperbola { 1e-10 } else { 1e-5 };
        assert!(v.dist(&d) <= tol * d.norm(), "{shape:?}: {}", v.dist(&d));
    }
}

#[test]
fn homogeneous_integrand_slopes() {
    let op = diag();
    let x = StateVector::from_real(&[1.0, 1.0, 1.0]);
    let radii: Vec<f64> = (0..12).map(|i| 1e6 * 2f64.powi(i)).collect();
    for alpha in [0.3, 0.8, 1.5] {
        for (beta, want) in [(1.0, -1.0), (2.0, -2.0), (alpha, -alpha)] {
            let prof = integrand_norm_profile(&op, alpha, beta, 0.0, &x, None, &radii, None).unwrap();
            let s = loglog_slope(&prof).unwrap();
            assert!((s - want).abs() <= 0.1, "alpha={alpha} beta={beta}: {s}");
        }
    }
}

#[test]
fn corrected_integrand_slopes() {
    // k = 0..=m subtracted: the remainder decays like |z|^{−(β + (m+1)α)},
    // which dominates the bound |z|^{−(mα+β)}(1+|z|^α)^{−γ} for γ ≤ 1.
    let op = Diagonal::log_spaced(1.0, 1e3, 16).unwrap();
    let (x, reg) = manufacture_data(&op, 1.0, 11).unwrap();
    let radii: Vec<f64> = (0..12).map(|i| 1e8 * 2f64.powi(i)).collect();
    for alpha in [0.4, 0.7, 1.3] {
        for beta in [1.0, alpha] {
            for m in 0..2usize {
                let prof = integrand_norm_profile(&op, alpha, beta, 0.0, &x, Some(m), &radii, None).unwrap();
                let s = loglog_slope(&prof).unwrap();
                let exact = -(beta + (m + 1) as f64 * alpha);
                assert!((s - exact).abs() <= 0.1, "alpha={alpha} beta={beta} m={m}: {s}");
                assert!(s <= -(m as f64 * alpha + beta + alpha * reg.gamma) + 0.1);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_in_data(
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        x in prop::collection::vec(-1.0f64..1.0, 3),
        y in prop::collection::vec(-1.0f64..1.0, 3),
        alpha in 0.2f64..1.9, t in 0.01f64..2.0,
    ) {
        let op = diag();
        let (x, y) = (StateVector::from_real(&x), StateVector::from_real(&y));
        let mut comb = x.scaled(c(a));
        comb.axpy(c(b), &y);
        let lhs = prop(&op, alpha, 1.0, t, None, &comb);
        let mut rhs = prop(&op, alpha, 1.0, t, None, &x).scaled(c(a));
        rhs.axpy(c(b), &prop(&op, alpha, 1.0, t, None, &y));
        let scale = a.abs() * x.norm() + b.abs() * y.norm();
        prop_assert!(lhs.dist(&rhs) <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn matches_scalar_oracle(alpha in 0.2f64..1.95, lambda in 0.1f64..200.0, t in 0.01f64..3.0) {
        let op = Diagonal::scalar(lambda).unwrap();
        let got = prop(&op, alpha, 1.0, t, None, &StateVector::from_real(&[1.0]))[0];
        let want = ml_real(alpha, 1.0, -lambda * t.powf(alpha)).unwrap();
        prop_assert!((got.re - want).abs() <= 1e-8 * want.abs().max(1e-2), "{} vs {}", got, want);
    }
}
