use fracprop::fracint::{caputo_derivative, inversion_identity_check, rl_integral, rl_integral_graded};
use fracprop::mittag_leffler::ml_real;
use fracprop::*;
use proptest::prelude::*;
use libm::tgamma as gamma;

fn scalar(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ClosureFunction {
    ClosureFunction::new(1, move |s| StateVector::from_real(&[f(s)]))
}

/// J_α v(t) by double-exponential quadrature after w = (t − s)^α / α, which
/// removes the endpoint singularity.
fn brute_rl(alpha: f64, v: impl Fn(f64) -> f64, t: f64) -> f64 {
    let top = t.powf(alpha) / alpha;
    let g = |w: f64| v((t - (alpha * w).powf(1.0 / alpha)).max(0.0));
    quadrature::double_exponential::integrate(g, 0.0, top, 1e-14).integral / gamma(alpha)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

#[test]
fn rl_examples() {
    let one = scalar(|_| 1.0);
    for alpha in [0.3, 1.0, 1.7] {
        let v = rl_integral(alpha, &one, 0.8, 16).unwrap()[0].re;
        assert!(close(v, 0.8f64.powf(alpha) / gamma(alpha + 1.0), 1e-13));
    }
    let cosine = scalar(f64::cos);
    assert!(close(rl_integral(1.0, &cosine, 1.3, 20).unwrap()[0].re, 1.3f64.sin(), 1e-14));

    let lin = scalar(|s| s);
    let v = rl_integral(0.5, &lin, 1.0, 16).unwrap()[0].re;
    let want = gamma(2.0) / gamma(2.5);
    assert!(close(v, want, 1e-13));
    assert!(close(brute_rl(0.5, |s| s, 1.0), want, 1e-12));
    assert_eq!(rl_integral(0.5, &lin, 0.0, 16).unwrap()[0].re, 0.0);
}

#[test]
fn rl_against_brute_force() {
    type Case = (fn(f64) -> f64, &'static str);
    let funcs: [Case; 3] =
        [(|s| (-s).exp(), "exp"), (|s| (3.0 * s).cos(), "cos"), (|s| 1.0 / (1.0 + s * s), "rational")];
    for (f, name) in funcs {
        for alpha in [0.2, 0.5, 0.9, 1.4, 1.9] {
            for t in [0.3, 1.0, 2.5] {
                let got = rl_integral(alpha, &scalar(f), t, 32).unwrap()[0].re;
                let want = brute_rl(alpha, f, t);
                assert!(close(got, want, 1e-10), "{name} alpha={alpha} t={t}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn node_doubling_is_stable() {
    let f = scalar(|s| (2.0 * s).sin() + s.exp());
    for alpha in [0.25, 0.75, 1.5] {
        let a = rl_integral(alpha, &f, 1.0, 24).unwrap()[0].re;
        let b = rl_integral(alpha, &f, 1.0, 48).unwrap()[0].re;
        assert!((a - b).abs() < 1e-12 * b.abs(), "alpha={alpha}");
    }
}

#[test]
fn caputo_examples() {
    let rule = GradedRule::default();
    let lin = scalar(|s| s).with_derivative(|_| StateVector::from_real(&[1.0]));
    for alpha in [0.3, 0.7] {
        let v = caputo_derivative(alpha, &lin, 0.9, &rule).unwrap();
        assert!(close(v.value[0].re, 0.9f64.powf(1.0 - alpha) / gamma(2.0 - alpha), 1e-10));
        assert!(!v.reduced_accuracy);
    }
    let konst = Polynomial::constant(StateVector::from_real(&[4.0]));
    assert_eq!(caputo_derivative(0.6, &konst, 0.5, &rule).unwrap().value[0].re, 0.0);

    // second derivative of s² through finite differences of the closure's first derivative
    let sq = scalar(|s| s * s).with_derivative(|s| StateVector::from_real(&[2.0 * s]));
    let v = caputo_derivative(1.5, &sq, 1.0, &rule).unwrap();
    let want = 2.0 / gamma(1.5);
    assert!(close(v.value[0].re, want, 1e-8), "{}", v.value[0].re);
    assert!(v.reduced_accuracy);
    let poly = Polynomial::new(vec![StateVector::zeros(1), StateVector::zeros(1), StateVector::from_real(&[1.0])]).unwrap();
    assert!(close(caputo_derivative(1.5, &poly, 1.0, &rule).unwrap().value[0].re, want, 1e-14));
    // brute force: J_{1/2} of u'' ≡ 2
    assert!(close(brute_rl(0.5, |_| 2.0, 1.0), want, 1e-12));
}

#[test]
fn caputo_of_mittag_leffler_relaxation() {
    // u = E_α(−s^α) solves ∂^α u = −u. Since u' ~ s^{α−1}, the grading toward 0
    // has to go much deeper than the default.
    let rule = GradedRule { levels: 34, ratio: 0.3, per_panel: 10 };
    for alpha in [0.4, 0.8] {
        let u = scalar(move |s| ml_real(alpha, 1.0, -s.powf(alpha)).unwrap()).with_derivative(move |s| {
            StateVector::from_real(&[-s.powf(alpha - 1.0) * ml_real(alpha, alpha, -s.powf(alpha)).unwrap()])
        });
        for t in [0.2, 1.0] {
            let d = caputo_derivative(alpha, &u, t, &rule).unwrap().value[0].re;
            let want = -ml_real(alpha, 1.0, -t.powf(alpha)).unwrap();
            assert!(close(d, want, 1e-7), "alpha={alpha} t={t}: {d} vs {want}");
        }
        let r = inversion_identity_check(alpha, &u, 1.0, &rule).unwrap();
        assert!(r <= 1e-7, "alpha={alpha}: {r}");
    }
}

#[test]
fn inversion_identity_on_polynomials() {
    let rule = GradedRule::default();
    let affine = scalar(|s| 1.0 + s).with_derivative(|_| StateVector::from_real(&[1.0]));
    assert!(inversion_identity_check(0.6, &affine, 0.7, &rule).unwrap() < 1e-10);
    let sq = scalar(|s| s * s).with_derivative(|s| StateVector::from_real(&[2.0 * s]));
    assert!(inversion_identity_check(0.5, &sq, 1.0, &rule).unwrap() <= 1e-9);
    let cubic =
        Polynomial::new(vec![StateVector::from_real(&[1.0]), StateVector::from_real(&[-1.0]), StateVector::zeros(1), StateVector::from_real(&[2.0])])
            .unwrap();
    assert!(inversion_identity_check(1.3, &cubic, 0.9, &rule).unwrap() <= 1e-9);
}

#[test]
fn graded_rule_handles_endpoint_singularity() {
    // v(s) = s^{-1/2}: J_α v(t) = Γ(1/2)/Γ(α+1/2) t^{α−1/2}
    let v = scalar(|s| s.powf(-0.5));
    for alpha in [0.3, 0.8] {
        let got = rl_integral_graded(alpha, &v, 1.0, &GradedRule { levels: 30, ratio: 0.3, per_panel: 12 }).unwrap()[0].re;
        let want = gamma(0.5) / gamma(alpha + 0.5);
        assert!(close(got, want, 1e-6), "alpha={alpha}: {got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn semigroup_on_polynomials(a in 0.05f64..1.0, b in 0.05f64..1.0, t in 0.1f64..2.0,
                                c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        // J_a (J_b v) with J_b v as a closure, versus J_{a+b} v
        let v = move |s: f64| c0 + c1 * s + c2 * s * s;
        let inner = scalar(move |s| if s == 0.0 { 0.0 } else {
            rl_integral(b, &scalar(v), s, 12).unwrap()[0].re
        });
        let lhs = rl_integral_graded(a, &inner, t, &GradedRule::default()).unwrap()[0].re;
        let rhs = rl_integral(a + b, &scalar(v), t, 12).unwrap()[0].re;
        let scale = (c0.abs() + c1.abs() + c2.abs()) * (1.0 + t * t);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn positivity(alpha in 0.05f64..1.95, t in 0.01f64..3.0, k in 0.1f64..5.0) {
        let v = scalar(move |s| (k * s).sin().powi(2) + 1e-3);
        prop_assert!(rl_integral(alpha, &v, t, 24).unwrap()[0].re >= 0.0);
    }

    #[test]
    fn linear(alpha in 0.1f64..1.9, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = |s: f64| s.exp();
        let g = |s: f64| (2.0 * s).cos();
        let comb = scalar(move |s| a * f(s) + b * g(s));
        let lhs = rl_integral(alpha, &comb, 1.0, 24).unwrap()[0].re;
        let rhs = a * rl_integral(alpha, &scalar(f), 1.0, 24).unwrap()[0].re
            + b * rl_integral(alpha, &scalar(g), 1.0, 24).unwrap()[0].re;
        prop_assert!((lhs - rhs).abs() <= 1e-13 * (a.abs() + b.abs()) * 3.0);
    }
}
