//! The abstract operator interface every propagator evaluation goes through.

use std::fmt::Debug;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::types::{c, SpectralSector, StateVector};

/// Orthonormal eigenbasis of a diagonalizable fixture.
pub trait EigenBasis: Send + Sync {
    fn eigenvalues(&self) -> &[Complex64];
    /// Coefficients of `x` in the eigenbasis.
    fn to_modes(&self, x: &StateVector) -> Vec<Complex64>;
    #[allow(clippy::wrong_self_convention)]
    fn from_modes(&self, coeffs: &[Complex64]) -> StateVector;
}

/// A strongly positive operator A: spectrum inside Σ(ρ_s, φ_s) and
/// ‖(zI − A)⁻¹‖ ≤ M / (1 + |z|) outside the sector.
pub trait SectorialOperator: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn sector(&self) -> SpectralSector;
    fn apply(&self, x: &StateVector) -> Result<StateVector>;
    /// Solves (wI + A) y = x.
    fn resolvent_solve(&self, w: Complex64, x: &StateVector) -> Result<StateVector>;

    fn eigen(&self) -> Option<&dyn EigenBasis> {
        None
    }

    /// Upper bound for |λ| over the spectrum, when known.
    fn spectral_radius(&self) -> Option<f64> {
        None
    }

    fn name(&self) -> String;
}

/// A^k x by repeated application.
pub fn apply_power(op: &dyn SectorialOperator, k: usize, x: &StateVector) -> Result<StateVector> {
    let mut y = x.clone();
    for _ in 0..k {
        y = op.apply(&y)?;
    }
    Ok(y)
}

/// A^γ x through the eigenbasis.
pub fn fractional_power_apply(
    op: &dyn SectorialOperator,
    gamma: f64,
    x: &StateVector,
) -> Result<StateVector> {
    if !(gamma >= 0.0) {
        return invalid(format!("fractional power must be nonnegative, got {gamma}"));
    }
    x.check_dim(op.dim())?;
    if gamma == 0.0 {
        return Ok(x.clone());
    }
    let eig = op
        .eigen()
        .ok_or_else(|| Error::Unsupported(format!("{} has no eigendecomposition", op.name())))?;
    let modes = eig.to_modes(x);
    let scaled: Vec<Complex64> = modes
        .iter()
        .zip(eig.eigenvalues())
        .map(|(m, l)| m * l.powf(gamma))
        .collect();
    Ok(eig.from_modes(&scaled))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorReport {
    /// max over samples of (1 + |z|) ‖R(z, A)‖ as seen by the probe vectors
    pub max_ratio: f64,
    pub worst_z: Complex64,
    pub declared_m: f64,
    pub violated: bool,
}

/// Probes the resolvent bound at the given points. R(z, A) = (zI − A)⁻¹, so
/// R(z, A) x = −(−zI + A)⁻¹ x.
pub fn check_sector_bound(op: &dyn SectorialOperator, z_samples: &[Complex64]) -> Result<SectorReport> {
    let sector = op.sector();
    let n = op.dim();
    let probes: Vec<StateVector> = match op.eigen() {
        // for an orthonormal eigenbasis the eigenvectors realize the operator norm
        Some(e) => (0..n)
            .map(|k| {
                let mut m = vec![c(0.0); n];
                m[k] = c(1.0);
                e.from_modes(&m)
            })
            .collect(),
        None => {
            let mut v: Vec<StateVector> = (0..n.min(16))
                .map(|k| {
                    let mut x = StateVector::zeros(n);
                    x[k] = c(1.0);
                    x
                })
                .collect();
            v.push(StateVector::from_real(&vec![1.0; n]));
            v
        }
    };
    let mut max_ratio = 0.0f64;
    let mut worst_z = Complex64::new(0.0, 0.0);
    for &z in z_samples {
        if sector.contains(z) {
            return invalid(format!("sample {z} lies inside the spectral sector"));
        }
        for x in &probes {
            let y = op.resolvent_solve(-z, x)?;
            let r = (1.0 + z.norm()) * y.norm() / x.norm();
            if r > max_ratio {
                max_ratio = r;
                worst_z = z;
            }
        }
    }
    Ok(SectorReport { max_ratio, worst_z, declared_m: sector.m, violated: max_ratio > sector.m })
}

/// Points on the two boundary rays ρ_s + s e^{±i(φ_s + margin)}, log-spaced in s,
/// plus the segment [−big, 0] of the negative axis.
pub fn sector_boundary_samples(sector: &SpectralSector, margin: f64, count: usize) -> Vec<Complex64> {
    let phi = sector.phi_s + margin;
    let mut out = Vec::with_capacity(3 * count);
    for k in 0..count {
        let s = 10f64.powf(-6.0 + 14.0 * k as f64 / (count.max(2) - 1) as f64);
        out.push(sector.rho_s + Complex64::from_polar(s, phi));
        out.push(sector.rho_s + Complex64::from_polar(s, -phi));
        out.push(c(-s + 1e-6));
    }
    out
}
