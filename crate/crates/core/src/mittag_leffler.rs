//! Two-parameter Mittag-Leffler function E_{α,β}(z) = Σ_k z^k / Γ(αk + β).
//!
//! Used as the reference for every diagonalizable test problem, so it shares no
//! code with the contour quadrature. Two evaluation routes:
//!
//! * the power series with compensated summation, for |z|^{1/α} ≤ [`SERIES_RADIUS`]
//!   (any argument of z);
//! * on the negative real axis z = −x, the real branch-cut integral
//!
//!   E_{α,β}(−x) = (1/π) ∫_0^∞ e^{−r} r^{α−β} (r^α sin πβ − x sin π(α−β))
//!   / (r^{2α} + 2x r^α cos πα + x²) dr
//!
//!   valid for 0 < α < 2, β < 1 + α, plus the residue (2/α) Re[e^s s^{1−β}],
//!   s = x^{1/α} e^{iπ/α}, when α > 1. Larger β are reduced with
//!   E_{α,β}(z) = (E_{α,β−α}(z) − 1/Γ(β−α)) / z.
//!
//! Beyond |z| = [`ASYMPTOTIC_ARGUMENT`] on the negative axis the algebraic
//! expansion Σ_{k≥1} (−1)^{k+1} x^{−k} / Γ(β − αk) is used; the exponential
//! part present for α > 1 has underflowed there. Anything else is outside the
//! validated domain and returns an error rather than a degraded value.

use std::f64::consts::PI;

use num_complex::Complex64;
use libm::{lgamma, tgamma};

use crate::error::{invalid, Error, Result};
use crate::rules::adaptive_legendre;

/// Series is used while |z|^{1/α} stays below this; the largest term is then
/// at most about e^3/α times the sum, which keeps ~13 correct digits.
pub const SERIES_RADIUS: f64 = 3.0;

/// Switch to the algebraic asymptotic expansion on the negative axis.
pub const ASYMPTOTIC_ARGUMENT: f64 = 1e15;

const TARGET_REL: f64 = 1e-14;

/// 1/Γ(x), zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x > 170.0 {
        return (-lgamma(x)).exp();
    }
    1.0 / tgamma(x)
}

/// E_{α,β}(z) on the validated domain.
pub fn ml(alpha: f64, beta: f64, z: Complex64) -> Result<Complex64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    if !beta.is_finite() {
        return invalid(format!("beta must be finite, got {beta}"));
    }
    if z.norm() == 0.0 {
        return Ok(Complex64::new(rgamma(beta), 0.0));
    }
    if z.norm().powf(1.0 / alpha) <= SERIES_RADIUS {
        return ml_series(alpha, beta, z);
    }
    if z.im == 0.0 && z.re < 0.0 {
        return ml_negative_real(alpha, beta, -z.re).map(|v| Complex64::new(v, 0.0));
    }
    Err(Error::AccuracyDomain(format!(
        "E_{{{alpha},{beta}}}({z}): only the disk |z|^(1/alpha) <= {SERIES_RADIUS} and the negative real axis are supported"
    )))
}

/// Real-argument convenience wrapper: E_{α,β}(x).
pub fn ml_real(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    ml(alpha, beta, Complex64::new(x, 0.0)).map(|v| v.re)
}

/// Power series with Neumaier summation. Errors if it has not converged after
/// `max_terms` terms.
pub fn ml_series(alpha: f64, beta: f64, z: Complex64) -> Result<Complex64> {
    let max_terms = 10_000;
    let (ln_r, arg) = (z.norm().ln(), z.arg());
    let mut sum = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    let mut small_run = 0;
    for k in 0..max_terms {
        let kf = k as f64;
        let g = alpha * kf + beta;
        let term = if k == 0 {
            Complex64::new(rgamma(beta), 0.0)
        } else if g <= 0.0 && g == g.floor() {
            Complex64::new(0.0, 0.0)
        } else if g < 170.0 && kf * ln_r < 700.0 {
            z.powu(k as u32) * rgamma(g)
        } else {
            // |Γ(g)| via its log; the sign of Γ only matters for g < 0
            let sign = if g < 0.0 && (g.floor() as i64) % 2 != 0 { -1.0 } else { 1.0 };
            Complex64::from_polar((kf * ln_r - lgamma(g.abs().max(f64::MIN_POSITIVE))).exp(), kf * arg)
                * sign
        };
        neumaier(&mut sum, &mut comp, term);
        let s = (sum + comp).norm();
        if k > 2 && term.norm() <= 1e-17 * s.max(f64::MIN_POSITIVE) {
            small_run += 1;
            if small_run >= 3 {
                return Ok(sum + comp);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::Numerical(format!("series for E_{{{alpha},{beta}}}({z}) did not converge")))
}

/// The first `terms` terms of the series, without a stopping rule.
pub fn ml_series_partial(alpha: f64, beta: f64, z: Complex64, terms: usize) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    let mut p = Complex64::new(1.0, 0.0);
    for k in 0..terms {
        neumaier(&mut sum, &mut comp, p * rgamma(alpha * k as f64 + beta));
        p *= z;
    }
    sum + comp
}

fn neumaier(sum: &mut Complex64, comp: &mut Complex64, x: Complex64) {
    let two_sum = |s: f64, c: &mut f64, v: f64| {
        let t = s + v;
        if s.abs() >= v.abs() {
            *c += (s - t) + v;
        } else {
            *c += (v - t) + s;
        }
        t
    };
    sum.re = two_sum(sum.re, &mut comp.re, x.re);
    sum.im = two_sum(sum.im, &mut comp.im, x.im);
}

/// E_{α,β}(−x) for x > 0.
fn ml_negative_real(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    if alpha >= 2.0 {
        return Err(Error::AccuracyDomain(format!("alpha = {alpha} >= 2 off the series disk")));
    }
    if x > ASYMPTOTIC_ARGUMENT {
        // four terms leave a relative remainder below x^{-4} when the leading
        // coefficient is nonzero
        return Ok((1..=5)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * x.powi(-k) * rgamma(beta - alpha * k as f64)
            })
            .rev()
            .sum());
    }
    if x.powf(1.0 / alpha) <= SERIES_RADIUS {
        return ml_series(alpha, beta, Complex64::new(-x, 0.0)).map(|v| v.re);
    }
    // keep the endpoint singularity r^{α−β} mild
    if beta >= alpha + 0.75 {
        let lower = ml_negative_real(alpha, beta - alpha, x)?;
        return Ok((lower - rgamma(beta - alpha)) / (-x));
    }
    if beta <= 0.0 {
        return Err(Error::AccuracyDomain(format!("beta = {beta} <= 0 off the series disk")));
    }
    if (alpha - 1.0).abs() < 1e-9 {
        return ml_alpha_one(beta, x);
    }
    let integral = branch_cut_integral(alpha, beta, x)?;
    let residue = if alpha > 1.0 {
        let s = Complex64::from_polar(x.powf(1.0 / alpha), PI / alpha);
        2.0 / alpha * (s.exp() * s.powf(1.0 - beta)).re
    } else {
        0.0
    };
    Ok(integral + residue)
}

/// α = 1: closed forms for the integer β reachable from E_{1,1}(z) = e^z.
fn ml_alpha_one(beta: f64, x: f64) -> Result<f64> {
    if beta == 1.0 {
        return Ok((-x).exp());
    }
    if beta == 2.0 {
        return Ok(-(-x).exp_m1() / x);
    }
    Err(Error::AccuracyDomain(format!("alpha = 1 with beta = {beta} off the series disk")))
}

fn branch_cut_integral(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    let (sb, sab, ca) = ((PI * beta).sin(), (PI * (alpha - beta)).sin(), (PI * alpha).cos());
    let kernel = move |r: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let ra = r.powf(alpha);
        let num = ra * sb - x * sab;
        // r^{2α} + 2x r^α cos πα + x² = (r^α + x cos πα)² + x² sin² πα, no cancellation
        let d1 = ra + x * ca;
        let den = d1 * d1 + x * x * (1.0 - ca * ca);
        (-r).exp() * r.powf(alpha - beta) * num / den
    };
    // breakpoints: the smooth peak near r_p = x^{1/α} (sharp when α is near 1)
    // and the e^{−r} scale; beyond r = 60 the integrand is below 1e-26
    let rp = x.powf(1.0 / alpha);
    let width = (PI * alpha).sin().abs().max(1e-6) / alpha;
    let end = 60.0;
    let mut pts = vec![0.0, 1e-3, 0.1, 1.0, 5.0, 15.0, 30.0, end];
    for f in [-4.0, -1.0, -0.25, 0.0, 0.25, 1.0, 4.0] {
        let p = rp * (1.0 + f * width);
        if p > 0.0 && p < end {
            pts.push(p);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));

    // on the first piece r = s^k: r^{α−β}(a_0 + a_1 r^α + ...) dr becomes a
    // sum of powers s^{kc−1+kαj}, c = 1 + α − β, smooth enough for Gauss
    // panels once kc and kα are at least 4
    let c = 1.0 + alpha - beta;
    let k = (4.0 / c.min(alpha)).max(1.0);
    let first = move |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let r = s.powf(k);
        kernel(r) * k * r / s
    };
    let pieces = |tol: f64| -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut err = 0.0;
        for (i, w) in pts.windows(2).enumerate() {
            let (v, e) = if i == 0 {
                adaptive_legendre(first, 0.0, w[1].powf(1.0 / k), tol, 10)?
            } else {
                adaptive_legendre(kernel, w[0], w[1], tol, 10)?
            };
            total += v;
            err += e;
        }
        Ok((total, err))
    };
    let (rough, _) = pieces(1e-8)?;
    let scale = rough.abs().max(1e-300);
    let (value, err) = pieces(TARGET_REL * scale * 0.1)?;
    if !(value.is_finite()) || err > 1e-11 * value.abs().max(1e-300) + 1e-300 {
        return Err(Error::Numerical(format!(
            "branch-cut quadrature for E_{{{alpha},{beta}}}(-{x}) did not reach tolerance (err {err:e}, value {value:e})"
        )));
    }
    Ok(value / PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn exponential_and_cosine() {
        assert!(rel(ml_real(1.0, 1.0, -1.0).unwrap(), (-1.0f64).exp()) < 1e-14);
        // E_{2,1}(−x²) = cos x
        assert!(rel(ml_series(2.0, 1.0, Complex64::new(-1.0, 0.0)).unwrap().re, 1f64.cos()) < 1e-14);
    }

    #[test]
    fn at_zero() {
        for b in [0.5, 1.0, 2.0, 3.7] {
            assert_eq!(ml_real(0.7, b, 0.0).unwrap(), rgamma(b));
        }
    }

    #[test]
    fn invalid_alpha() {
        assert!(ml_real(0.0, 1.0, -1.0).is_err());
        assert!(ml_real(-1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn outside_domain_is_an_error() {
        assert!(matches!(
            ml(0.5, 1.0, Complex64::new(10.0, 10.0)),
            Err(Error::AccuracyDomain(_))
        ));
        assert!(matches!(ml_real(0.5, 1.0, 100.0), Err(Error::AccuracyDomain(_))));
        assert!(matches!(ml_real(1.0, 1.5, -50.0), Err(Error::AccuracyDomain(_))));
    }

    #[test]
    fn asymptotic_tail() {
        // E_{1/2,1}(−x) = e^{x²} erfc(x) ~ 1/(x√π)
        let x = 1e16;
        let v = ml_real(0.5, 1.0, -x).unwrap();
        assert!(rel(v, 1.0 / (x * PI.sqrt())) < 1e-14);
        // continuity across the switch
        let a = ml_real(0.7, 1.0, -ASYMPTOTIC_ARGUMENT * 0.999).unwrap();
        let b = ml_real(0.7, 1.0, -ASYMPTOTIC_ARGUMENT * 1.001).unwrap();
        assert!(rel(a * 0.999, b * 1.001) < 1e-10);
    }
}
