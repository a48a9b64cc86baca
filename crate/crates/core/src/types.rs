use std::f64::consts::FRAC_PI_2;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Order α ∈ (0, 2) of the Caputo derivative together with n = ⌈α⌉.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder {
    alpha: f64,
    n: usize,
}

impl FractionalOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return invalid(format!("alpha must lie in (0, 2), got {alpha}"));
        }
        let n = if alpha <= 1.0 { 1 } else { 2 };
        Ok(Self { alpha, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of initial conditions, ⌈α⌉.
    pub fn n(&self) -> usize {
        self.n
    }
}

/// Sector Σ(ρ_s, φ_s) = {z : |arg(z − ρ_s)| ≤ φ_s} containing the spectrum of A,
/// with the resolvent constant M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSector {
    pub rho_s: f64,
    pub phi_s: f64,
    pub m: f64,
}

impl SpectralSector {
    pub fn new(rho_s: f64, phi_s: f64, m: f64) -> Result<Self> {
        if !(rho_s > 0.0) {
            return invalid(format!("sector vertex must be positive, got {rho_s}"));
        }
        if !(phi_s > 0.0 && phi_s < FRAC_PI_2) {
            return invalid(format!("sector half-angle must lie in (0, pi/2), got {phi_s}"));
        }
        if !(m > 0.0) {
            return invalid(format!("resolvent constant must be positive, got {m}"));
        }
        Ok(Self { rho_s, phi_s, m })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let w = z - self.rho_s;
        w.norm() == 0.0 || w.arg().abs() <= self.phi_s
    }
}

/// Complex state vector with the Euclidean norm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateVector(pub Vec<Complex64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_real(v: &[f64]) -> Self {
        Self(v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        // scaled to avoid overflow for large entries
        let scale = self.0.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return scale;
        }
        let s: f64 = self.0.iter().map(|z| (z / scale).norm_sqr()).sum();
        scale * s.sqrt()
    }

    /// Norm weighted by positive per-component weights, e.g. a mesh size.
    pub fn weighted_norm(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self(self.0.iter().map(|z| z * a).collect())
    }

    /// self += a * x
    pub fn axpy(&mut self, a: Complex64, x: &StateVector) {
        for (y, v) in self.0.iter_mut().zip(&x.0) {
            *y += a * v;
        }
    }

    pub fn add(&self, other: &StateVector) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &StateVector) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn dist(&self, other: &StateVector) -> f64 {
        self.sub(other).norm()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).collect()
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.len() });
        }
        Ok(())
    }
}

impl Index<usize> for StateVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for StateVector {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

impl From<Vec<Complex64>> for StateVector {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

/// Sum of vectors in a fixed pairwise order, so results do not depend on
/// how the terms were produced.
pub fn pairwise_sum(terms: &[StateVector], dim: usize) -> StateVector {
    match terms.len() {
        0 => StateVector::zeros(dim),
        1 => terms[0].clone(),
        n => {
            let (a, b) = terms.split_at(n / 2);
            pairwise_sum(a, dim).add(&pairwise_sum(b, dim))
        }
    }
}

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}
