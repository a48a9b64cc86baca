//! Concrete operators with known spectra: diagonal matrices, the 1D Dirichlet
//! Laplacian, and regularity-controlled data manufactured from their eigenbases.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::operator::{sector_boundary_samples, EigenBasis, SectorialOperator};
use crate::types::{c, SpectralSector, StateVector};

/// Half-angle declared for real spectra. The sector must be open, so any small
/// positive value works; the contour window shrinks with it for α near 2.
pub const REAL_SPECTRUM_HALF_ANGLE: f64 = 1e-3;

/// Sector with vertex at half the smallest real part and the measured resolvent constant.
fn infer_sector(eigs: &[Complex64]) -> Result<SpectralSector> {
    let min_re = eigs.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    if !(min_re > 0.0) {
        return invalid("eigenvalues must have positive real part");
    }
    let rho_s = 0.5 * min_re;
    let mut phi_s = REAL_SPECTRUM_HALF_ANGLE;
    for l in eigs {
        let a = (l - rho_s).arg().abs();
        if a > phi_s {
            phi_s = a * 1.01 + 1e-3;
        }
    }
    if phi_s >= PI / 2.0 {
        return invalid("eigenvalues do not fit in a sector with half-angle below pi/2");
    }
    let provisional = SpectralSector::new(rho_s, phi_s, 1.0)?;
    let mut samples = sector_boundary_samples(&provisional, 1e-9, 200);
    // the resolvent peaks near the foot of the perpendicular from each eigenvalue
    for l in eigs {
        for sign in [1.0, -1.0] {
            let dir = Complex64::from_polar(1.0, sign * (phi_s + 1e-9));
            let foot = ((l - rho_s) * dir.conj()).re.max(0.0);
            for j in -5..=5 {
                samples.push(rho_s + dir * (foot * (1.0 + 0.01 * j as f64)));
            }
        }
    }
    let mut m = 1.0f64;
    for z in samples {
        let worst = eigs.iter().map(|l| 1.0 / (z - l).norm()).fold(0.0, f64::max);
        m = m.max((1.0 + z.norm()) * worst);
    }
    SpectralSector::new(rho_s, phi_s, m * 1.05)
}

/// A = diag(λ_1, …, λ_n) in the standard basis.
#[derive(Debug, Clone)]
pub struct Diagonal {
    eigs: Vec<Complex64>,
    sector: SpectralSector,
}

impl Diagonal {
    pub fn new(eigs: Vec<Complex64>) -> Result<Self> {
        if eigs.is_empty() {
            return invalid("diagonal operator needs at least one eigenvalue");
        }
        let sector = infer_sector(&eigs)?;
        Ok(Self { eigs, sector })
    }

    pub fn from_real(eigs: &[f64]) -> Result<Self> {
        Self::new(eigs.iter().map(|&l| c(l)).collect())
    }

    pub fn scalar(lambda: f64) -> Result<Self> {
        Self::from_real(&[lambda])
    }

    /// Eigenvalues log-spaced between `lo` and `hi`.
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo) || n == 0 {
            return invalid("log-spaced spectrum needs 0 < lo <= hi and n >= 1");
        }
        let eigs: Vec<f64> = (0..n)
            .map(|k| if n == 1 { lo } else { lo * (hi / lo).powf(k as f64 / (n - 1) as f64) })
            .collect();
        Self::from_real(&eigs)
    }

    /// Replaces the inferred sector, e.g. with hand-derived metadata.
    pub fn with_sector(mut self, sector: SpectralSector) -> Result<Self> {
        if let Some(l) = self.eigs.iter().find(|l| !sector.contains(**l)) {
            return invalid(format!("eigenvalue {l} lies outside the declared sector"));
        }
        self.sector = sector;
        Ok(self)
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigs
    }
}

impl EigenBasis for Diagonal {
    fn eigenvalues(&self) -> &[Complex64] {
        &self.eigs
    }
    fn to_modes(&self, x: &StateVector) -> Vec<Complex64> {
        x.0.clone()
    }
    fn from_modes(&self, coeffs: &[Complex64]) -> StateVector {
        StateVector(coeffs.to_vec())
    }
}

impl SectorialOperator for Diagonal {
    fn dim(&self) -> usize {
        self.eigs.len()
    }

    fn sector(&self) -> SpectralSector {
        self.sector
    }

    fn apply(&self, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.dim())?;
        Ok(StateVector(x.iter().zip(&self.eigs).map(|(v, l)| v * l).collect()))
    }

    fn resolvent_solve(&self, w: Complex64, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.dim())?;
        let mut y = Vec::with_capacity(x.len());
        for (v, l) in x.iter().zip(&self.eigs) {
            let d = w + l;
            if d.norm() <= f64::EPSILON * (w.norm() + l.norm()) {
                return Err(Error::Singular { re: w.re, im: w.im });
            }
            y.push(v / d);
        }
        Ok(StateVector(y))
    }

    fn eigen(&self) -> Option<&dyn EigenBasis> {
        Some(self)
    }

    fn spectral_radius(&self) -> Option<f64> {
        Some(self.eigs.iter().map(|l| l.norm()).fold(0.0, f64::max))
    }

    fn name(&self) -> String {
        format!("diagonal(n={})", self.eigs.len())
    }
}

/// −d²/dx² on (0, 1) with Dirichlet ends, second-order finite differences on
/// n interior points, h = 1/(n+1).
#[derive(Debug, Clone)]
pub struct Laplacian1D {
    n: usize,
    h: f64,
    eigs: Vec<Complex64>,
    // sine modes, row k holds mode k+1
    modes: Vec<f64>,
    sector: SpectralSector,
}

impl Laplacian1D {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("laplacian needs at least one interior point");
        }
        let h = 1.0 / (n as f64 + 1.0);
        let eigs: Vec<Complex64> = (1..=n).map(|k| c(Self::eigenvalue(n, k))).collect();
        let norm = (2.0 * h).sqrt();
        let mut modes = vec![0.0; n * n];
        for k in 0..n {
            for j in 0..n {
                modes[k * n + j] = norm * ((j + 1) as f64 * (k + 1) as f64 * PI * h).sin();
            }
        }
        let sector = infer_sector(&eigs)?;
        Ok(Self { n, h, eigs, modes, sector })
    }

    /// λ_k = (4/h²) sin²(kπh/2), k = 1..n.
    pub fn eigenvalue(n: usize, k: usize) -> f64 {
        let h = 1.0 / (n as f64 + 1.0);
        let s = (k as f64 * PI * h / 2.0).sin();
        4.0 / (h * h) * s * s
    }

    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    /// The k-th sine mode (k = 1..n), normalized in the Euclidean norm.
    pub fn mode(&self, k: usize) -> StateVector {
        StateVector::from_real(&self.modes[(k - 1) * self.n..k * self.n])
    }
}

impl EigenBasis for Laplacian1D {
    fn eigenvalues(&self) -> &[Complex64] {
        &self.eigs
    }

    fn to_modes(&self, x: &StateVector) -> Vec<Complex64> {
        (0..self.n)
            .map(|k| {
                let row = &self.modes[k * self.n..(k + 1) * self.n];
                row.iter().zip(x.iter()).map(|(m, v)| v * m).sum()
            })
            .collect()
    }

    fn from_modes(&self, coeffs: &[Complex64]) -> StateVector {
        let mut y = StateVector::zeros(self.n);
        for (k, ck) in coeffs.iter().enumerate() {
            let row = &self.modes[k * self.n..(k + 1) * self.n];
            for (yj, m) in y.0.iter_mut().zip(row) {
                *yj += ck * m;
            }
        }
        y
    }
}

impl SectorialOperator for Laplacian1D {
    fn dim(&self) -> usize {
        self.n
    }

    fn sector(&self) -> SpectralSector {
        self.sector
    }

    fn apply(&self, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.n)?;
        let s = 1.0 / (self.h * self.h);
        let n = self.n;
        let mut y = StateVector::zeros(n);
        for j in 0..n {
            let mut v = 2.0 * x[j];
            if j > 0 {
                v -= x[j - 1];
            }
            if j + 1 < n {
                v -= x[j + 1];
            }
            y[j] = v * s;
        }
        Ok(y)
    }

    fn resolvent_solve(&self, w: Complex64, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.n)?;
        let s = 1.0 / (self.h * self.h);
        let diag = vec![w + 2.0 * s; self.n];
        let off = vec![c(-s); self.n.saturating_sub(1)];
        tridiagonal_solve(&off, &diag, &off, x)
    }

    fn eigen(&self) -> Option<&dyn EigenBasis> {
        Some(self)
    }

    fn spectral_radius(&self) -> Option<f64> {
        Some(4.0 / (self.h * self.h))
    }

    fn name(&self) -> String {
        format!("laplacian1d(n={})", self.n)
    }
}

/// Gaussian elimination with partial pivoting for a tridiagonal system
/// (sub, diag, sup), the same scheme as LAPACK's gtsv.
pub fn tridiagonal_solve(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &StateVector,
) -> Result<StateVector> {
    let n = diag.len();
    rhs.check_dim(n)?;
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut dl = sub.to_vec();
    let mut du2 = vec![c(0.0); n.saturating_sub(2)];
    let mut b = rhs.0.clone();
    let zero = c(0.0);
    for i in 0..n.saturating_sub(1) {
        if d[i].norm() >= dl[i].norm() {
            if d[i] == zero {
                return Err(Error::Singular { re: diag[i].re, im: diag[i].im });
            }
            let f = dl[i] / d[i];
            dl[i] = f;
            d[i + 1] -= f * du[i];
            b[i + 1] = b[i + 1] - f * b[i];
            if i + 2 < n {
                du2[i] = zero;
            }
        } else {
            // swap rows i and i+1
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            du[i] = tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -f * du[i + 1];
            }
            let tb = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tb - f * b[i + 1];
            dl[i] = f;
        }
    }
    if d[n - 1] == zero {
        return Err(Error::Singular { re: diag[n - 1].re, im: diag[n - 1].im });
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
    Ok(StateVector(b))
}

/// Regularity class of manufactured data: x ∈ D(A^gamma), x ∉ D(A^{gamma + 2ε}).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub gamma: f64,
    pub epsilon: f64,
}

pub const MANUFACTURE_EPSILON: f64 = 0.05;

/// Unit vector with eigen-coefficients |c_i| ∝ λ_i^{−γ−1/2−ε} and seeded random signs.
/// `gamma = ∞` puts unit weight on the lowest four modes only.
pub fn manufacture_data(
    op: &dyn SectorialOperator,
    gamma: f64,
    seed: u64,
) -> Result<(StateVector, Regularity)> {
    let eig = op
        .eigen()
        .ok_or_else(|| Error::Unsupported(format!("{} has no eigendecomposition", op.name())))?;
    if gamma.is_nan() || gamma < -0.5 {
        return invalid(format!("regularity must be at least -1/2, got {gamma}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas = eig.eigenvalues();
    // order modes by |λ| so "low modes" is meaningful for any fixture
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].norm().total_cmp(&lambdas[b].norm()));
    let mut coeffs = vec![c(0.0); lambdas.len()];
    for (rank, &i) in order.iter().enumerate() {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mag = if gamma.is_infinite() {
            if rank < 4 {
                1.0
            } else {
                0.0
            }
        } else {
            lambdas[i].norm().powf(-gamma - 0.5 - MANUFACTURE_EPSILON)
        };
        coeffs[i] = c(sign * mag);
    }
    let x = eig.from_modes(&coeffs);
    let nrm = x.norm();
    Ok((x.scaled(c(1.0 / nrm)), Regularity { gamma, epsilon: MANUFACTURE_EPSILON }))
}
