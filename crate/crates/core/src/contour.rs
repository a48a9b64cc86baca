//! Contour quadrature for the operator family
//!
//!   S_{α,β}(t)x = (1/2πi) ∫_Γ e^{zt} z^{α−β} (z^α I + A)^{-1} x dz,
//!
//! which equals t^{β−1} E_{α,β}(−A t^α) x. The default contour is two rays
//! ρe^{±iθ}, ρ ≥ r, joined by the arc r e^{is}, |s| ≤ θ; it encloses the origin.
//! Each branch is discretized by Gauss–Legendre, the rays in the variable
//! v = ln(ρ/r). A hyperbola with the trapezoid rule is available as an
//! alternative.
//!
//! With a correction of order m the integrand is replaced by the remainder
//!
//!   z^{α−β}(z^α+A)^{-1}x − Σ_{k=0}^{m} (−1)^k z^{−β−αk} A^k x
//!     = (−1)^{m+1} z^{α−β−α(m+1)} (z^α+A)^{-1} A^{m+1} x,
//!
//! and the subtracted terms come back through their exact inverse Laplace
//! transforms (−1)^k t^{αk+β−1}/Γ(αk+β) A^k x.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::mittag_leffler::rgamma;
use crate::operator::SectorialOperator;
use crate::rules::gauss_legendre;
use crate::types::{pairwise_sum, SpectralSector, StateVector};

/// Default target for the truncation and quadrature error, relative to ‖x‖.
pub const DEFAULT_TOL: f64 = 1e-14;
pub const MIN_AUTO_NODES: usize = 64;
pub const MAX_AUTO_NODES: usize = 4096;

const CHUNK: usize = 32;

/// e^x is below 1e-300 here; such terms are skipped.
const UNDERFLOW: f64 = -690.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContourShape {
    #[default]
    RaysArc,
    /// Rays and arc with the trapezoid rule, uniform in arclength.
    RaysArcUniform,
    Hyperbola,
}

/// A discretizable contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContourSpec {
    /// Rays ρe^{±i ray_angle} for ρ ∈ [arc_radius, r_max] and the arc of radius
    /// `arc_radius` between them; `nodes` Gauss points on each of the three branches.
    RaysArc { arc_radius: f64, ray_angle: f64, r_max: f64, nodes: usize },
    /// Same geometry, trapezoid rule with `nodes` equispaced points (ends
    /// included) on each branch.
    RaysArcUniform { arc_radius: f64, ray_angle: f64, r_max: f64, nodes: usize },
    /// z(u) = μ(1 + sin(iu − φ)), u ∈ [−u_max, u_max], trapezoid with 2·nodes + 1
    /// points. Asymptotes at arg z = ±(π/2 + φ).
    Hyperbola { mu: f64, phi: f64, u_max: f64, nodes: usize },
}

impl ContourSpec {
    pub fn nodes_per_branch(&self) -> usize {
        match *self {
            ContourSpec::RaysArc { nodes, .. }
            | ContourSpec::RaysArcUniform { nodes, .. }
            | ContourSpec::Hyperbola { nodes, .. } => nodes,
        }
    }

    /// Largest |arg z| reached by the contour.
    pub fn opening(&self) -> f64 {
        match *self {
            ContourSpec::RaysArc { ray_angle, .. } | ContourSpec::RaysArcUniform { ray_angle, .. } => ray_angle,
            ContourSpec::Hyperbola { phi, .. } => FRAC_PI_2 + phi,
        }
    }

    /// Checks that (z^α + A) is invertible on and outside the contour for any A
    /// with spectrum in `sector`, i.e. the opening stays below (π − φ_s)/α.
    pub fn check_admissible(&self, alpha: f64, sector: &SpectralSector) -> Result<()> {
        let limit = ((PI - sector.phi_s) / alpha).min(PI);
        let open = self.opening();
        if open >= limit && !(open == PI && limit == PI) {
            return invalid(format!(
                "contour opening {open} reaches the mapped sector boundary {limit}"
            ));
        }
        Ok(())
    }
}

/// Nodes, tangents and positive weights: ∫_Γ g dz ≈ Σ w_j g(z_j) z'_j.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<Complex64>,
    pub tangents: Vec<Complex64>,
    pub weights: Vec<f64>,
    pub spec: ContourSpec,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_j g(z_j) z'_j.
    pub fn integrate<F: Fn(Complex64) -> Complex64>(&self, g: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.tangents)
            .zip(&self.weights)
            .map(|((z, dz), w)| g(*z) * dz * w)
            .sum()
    }
}

pub fn build_contour(spec: ContourSpec) -> Result<QuadratureGrid> {
    match spec {
        ContourSpec::RaysArc { arc_radius: r, ray_angle: theta, r_max, nodes } => {
            check_rays_arc(r, theta, r_max, nodes)?;
            let rule = gauss_legendre(nodes)?;
            let v_len = (r_max / r).ln();
            let mut g = QuadratureGrid {
                nodes: Vec::with_capacity(3 * nodes),
                tangents: Vec::with_capacity(3 * nodes),
                weights: Vec::with_capacity(3 * nodes),
                spec,
            };
            let ray = |x: f64| r * ((x + 1.0) * 0.5 * v_len).exp();
            // lower ray, traversed from r_max towards the arc
            for (x, w) in rule.nodes.iter().zip(&rule.weights).rev() {
                let z = Complex64::from_polar(ray(*x), -theta);
                g.nodes.push(z);
                g.tangents.push(-z);
                g.weights.push(w * 0.5 * v_len);
            }
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let z = Complex64::from_polar(r, theta * x);
                g.nodes.push(z);
                g.tangents.push(Complex64::i() * z);
                g.weights.push(w * theta);
            }
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let z = Complex64::from_polar(ray(*x), theta);
                g.nodes.push(z);
                g.tangents.push(z);
                g.weights.push(w * 0.5 * v_len);
            }
            Ok(g)
        }
        ContourSpec::RaysArcUniform { arc_radius: r, ray_angle: theta, r_max, nodes } => {
            check_rays_arc(r, theta, r_max, nodes)?;
            if nodes < 2 {
                return invalid("the trapezoid rule needs two nodes per branch");
            }
            let mut g = QuadratureGrid {
                nodes: Vec::with_capacity(3 * nodes),
                tangents: Vec::with_capacity(3 * nodes),
                weights: Vec::with_capacity(3 * nodes),
                spec,
            };
            let trap = |len: f64, k: usize| {
                let h = len / (nodes - 1) as f64;
                if k == 0 || k == nodes - 1 {
                    0.5 * h
                } else {
                    h
                }
            };
            let rho = |k: usize| r + (r_max - r) * k as f64 / (nodes - 1) as f64;
            for k in (0..nodes).rev() {
                let z = Complex64::from_polar(rho(k), -theta);
                g.nodes.push(z);
                g.tangents.push(-z / z.norm());
                g.weights.push(trap(r_max - r, k));
            }
            for k in 0..nodes {
                let s = -theta + 2.0 * theta * k as f64 / (nodes - 1) as f64;
                let z = Complex64::from_polar(r, s);
                g.nodes.push(z);
                g.tangents.push(Complex64::i() * z);
                g.weights.push(trap(2.0 * theta, k));
            }
            for k in 0..nodes {
                let z = Complex64::from_polar(rho(k), theta);
                g.nodes.push(z);
                g.tangents.push(z / z.norm());
                g.weights.push(trap(r_max - r, k));
            }
            Ok(g)
        }
        ContourSpec::Hyperbola { mu, phi, u_max, nodes } => {
            if !(mu > 0.0) || !mu.is_finite() {
                return invalid(format!("hyperbola scale must be positive, got {mu}"));
            }
            if !(phi > 0.0 && phi < FRAC_PI_2) {
                return invalid(format!("hyperbola angle must lie in (0, pi/2), got {phi}"));
            }
            if !(u_max > 0.0) || nodes == 0 {
                return invalid("hyperbola needs u_max > 0 and at least one node");
            }
            let h = u_max / nodes as f64;
            let n = nodes as i64;
            let mut g = QuadratureGrid {
                nodes: Vec::with_capacity(2 * nodes + 1),
                tangents: Vec::with_capacity(2 * nodes + 1),
                weights: Vec::with_capacity(2 * nodes + 1),
                spec,
            };
            for k in -n..=n {
                let w = Complex64::new(-phi, k as f64 * h);
                g.nodes.push(mu * (1.0 + w.sin()));
                g.tangents.push(Complex64::i() * mu * w.cos());
                g.weights.push(h);
            }
            Ok(g)
        }
    }
}

fn check_rays_arc(r: f64, theta: f64, r_max: f64, nodes: usize) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return invalid(format!("arc radius must be positive, got {r}"));
    }
    if !(r_max > r) || !r_max.is_finite() {
        return invalid(format!("truncation radius {r_max} must exceed arc radius {r}"));
    }
    if !(theta > FRAC_PI_2 && theta <= PI) {
        return invalid(format!("ray angle must lie in (pi/2, pi], got {theta}"));
    }
    if nodes == 0 {
        return invalid("at least one node per branch is required");
    }
    Ok(())
}

/// Half-width ω of the admissible opening beyond π/2: the contour may open up
/// to π/2 + ω without meeting the poles of (z^α + A)^{-1}.
pub fn opening_window(alpha: f64, sector: &SpectralSector) -> Result<f64> {
    let w = ((PI - sector.phi_s) / alpha).min(PI) - FRAC_PI_2;
    if !(w > 1e-6) {
        return Err(Error::Unsupported(format!(
            "alpha = {alpha} with sector half-angle {} leaves no admissible contour",
            sector.phi_s
        )));
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourOptions {
    pub shape: ContourShape,
    /// Fixed number of nodes per branch; chosen from `tol` when absent.
    pub nodes: Option<usize>,
    pub tol: f64,
    /// Arc radius is max(1, 1/horizon); defaults to the evaluation time.
    pub horizon: Option<f64>,
    /// Ray angle as π/2 + fraction·ω.
    pub angle_fraction: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self { shape: ContourShape::RaysArc, nodes: None, tol: DEFAULT_TOL, horizon: None, angle_fraction: 0.5 }
    }
}

impl ContourOptions {
    pub fn with_nodes(nodes: usize) -> Self {
        Self { nodes: Some(nodes), ..Self::default() }
    }
}

/// Contour for evaluating at time t > 0 an integrand decaying like
/// `scale`·|z|^{−power} along the rays.
pub fn auto_contour(
    alpha: f64,
    sector: &SpectralSector,
    t: f64,
    power: f64,
    scale: f64,
    opts: &ContourOptions,
) -> Result<ContourSpec> {
    auto_contour_range(alpha, sector, t, t, power, scale, opts)
}

/// One contour serving every t in [t_min, t_max]: the arc radius follows
/// t_max, the truncation radius t_min. The uniform and hyperbolic shapes only
/// serve a single time.
pub fn auto_contour_range(
    alpha: f64,
    sector: &SpectralSector,
    t_min: f64,
    t_max: f64,
    power: f64,
    scale: f64,
    opts: &ContourOptions,
) -> Result<ContourSpec> {
    if !(t_min > 0.0) || !t_max.is_finite() || t_max < t_min {
        return invalid(format!("contour quadrature needs 0 < t_min <= t_max, got [{t_min}, {t_max}]"));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return invalid(format!("tolerance must lie in (0, 1), got {}", opts.tol));
    }
    if !(opts.angle_fraction > 0.0 && opts.angle_fraction < 1.0) {
        return invalid(format!("angle fraction must lie in (0, 1), got {}", opts.angle_fraction));
    }
    let omega = opening_window(alpha, sector)?;
    match opts.shape {
        ContourShape::RaysArc | ContourShape::RaysArcUniform => {
            let theta = FRAC_PI_2 + opts.angle_fraction * omega;
            let horizon = opts.horizon.unwrap_or(t_max).max(t_max);
            let r = (1.0 / horizon).max(1.0);
            // resolvent constant for |z^α + λ| along a ray at angular distance
            // (1 − fraction)ω from the poles
            let k = sector.m.max(1.0) / ((1.0 - opts.angle_fraction) * omega * alpha).min(FRAC_PI_2).sin();
            let r_max = truncation_radius(t_min, theta, power, r, 0.1 * opts.tol / (k * scale.max(1.0)))?;
            if opts.shape == ContourShape::RaysArcUniform {
                if t_max > t_min * (1.0 + 1e-12) {
                    return Err(Error::Unsupported("a uniform contour serves a single evaluation time".into()));
                }
                let nodes = opts.nodes.unwrap_or(MAX_AUTO_NODES);
                return Ok(ContourSpec::RaysArcUniform { arc_radius: r, ray_angle: theta, r_max, nodes });
            }
            let v_len = (r_max / r).ln();
            let nodes = opts.nodes.unwrap_or_else(|| {
                let n = 0.5 * (1.0 / opts.tol).ln() * v_len / (opts.angle_fraction.min(1.0 - opts.angle_fraction) * 2.0 * omega);
                (n.ceil() as usize).clamp(MIN_AUTO_NODES, MAX_AUTO_NODES)
            });
            Ok(ContourSpec::RaysArc { arc_radius: r, ray_angle: theta, r_max, nodes })
        }
        ContourShape::Hyperbola => {
            if t_max > t_min * (1.0 + 1e-12) {
                return Err(Error::Unsupported("a hyperbola serves a single evaluation time".into()));
            }
            let t = t_min;
            let phi = opts.angle_fraction * omega;
            let d = phi.min(omega - phi) * 0.9;
            let log_tol = opts.tol.ln();
            let mut nodes = opts.nodes.unwrap_or(8);
            loop {
                let (mu_t, h, err) = hyperbola_parameters(phi, d, nodes);
                if opts.nodes.is_some() || err <= log_tol || nodes >= MAX_AUTO_NODES {
                    return Ok(ContourSpec::Hyperbola { mu: mu_t / t, phi, u_max: h * nodes as f64, nodes });
                }
                nodes = (nodes * 5 / 4).max(nodes + 4);
            }
        }
    }
}

/// Smallest R ≥ r with ∫_R^∞ e^{−aρ} ρ^{−p} dρ ≤ tol, a = t|cos θ|.
fn truncation_radius(t: f64, theta: f64, p: f64, r: f64, tol: f64) -> Result<f64> {
    let a = t * theta.cos().abs();
    let tail = |rr: f64| -> f64 {
        let mut b = f64::INFINITY;
        if p > 1.0 {
            b = b.min(rr.powf(1.0 - p) / (p - 1.0));
        }
        if a > 0.0 {
            b = b.min(rr.powf(-p) / a);
        }
        (-a * rr).exp() * b
    };
    let mut rr = r * 1.5;
    while tail(rr) > tol {
        rr *= 1.05;
        if rr > 1e300 {
            return Err(Error::Numerical(format!(
                "no finite truncation radius for t = {t}, decay power {p}"
            )));
        }
    }
    Ok(rr)
}

/// Chooses μt and h for the hyperbola by minimizing the model error
/// max(μt(1 − sin(φ − d)) − 2πd/h, μt(1 − sin φ cosh(Nh))) on a log grid.
/// Returns (μt, h, log error).
fn hyperbola_parameters(phi: f64, d: f64, n: usize) -> (f64, f64, f64) {
    let nf = n as f64;
    let mut best = (1.0, 1.0 / nf, f64::INFINITY);
    for i in 0..160 {
        let mu_t = 10f64.powf(-1.0 + 5.0 * i as f64 / 159.0);
        for j in 0..160 {
            let h = 10f64.powf(-3.0 + 3.5 * j as f64 / 159.0);
            let disc = mu_t * (1.0 - (phi - d).sin()) - 2.0 * PI * d / h;
            let x = nf * h;
            let trunc = if x > 700.0 { f64::NEG_INFINITY } else { mu_t * (1.0 - phi.sin() * x.cosh()) };
            let e = disc.max(trunc);
            if e < best.2 {
                best = (mu_t, h, e);
            }
        }
    }
    best
}

/// Which member of the family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorRequest {
    pub alpha: f64,
    pub beta: f64,
    pub t: f64,
    /// Some(m) subtracts the terms k = 0..=m of the resolvent expansion and adds
    /// them back in closed form.
    pub correction: Option<usize>,
    /// Claimed regularity γ of x (x ∈ D(A^γ)); informational.
    pub gamma_hint: f64,
}

impl PropagatorRequest {
    pub fn new(alpha: f64, beta: f64, t: f64) -> Self {
        Self { alpha, beta, t, correction: None, gamma_hint: 0.0 }
    }

    pub fn corrected(mut self, m: Option<usize>) -> Self {
        self.correction = m;
        self
    }

    /// Decay exponent of the integrand along the rays.
    pub fn decay_power(&self) -> f64 {
        match self.correction {
            None => self.beta,
            Some(m) => self.beta + self.alpha * (m + 1) as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return invalid(format!("alpha must lie in (0, 2), got {}", self.alpha));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return invalid(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return invalid(format!("t must be finite and nonnegative, got {}", self.t));
        }
        Ok(())
    }
}

/// Correction order making the β = α integrand decay faster than |z|^{-1} for
/// data in D(A^γ): the least m with α(m + 2) > 1, capped at ⌊γ⌋. Returns
/// `None` when no correction is needed (α ≥ 1 or β ≥ 1).
pub fn default_correction(alpha: f64, beta: f64, gamma: f64) -> Option<usize> {
    if beta >= 1.0 || alpha >= 1.0 {
        return None;
    }
    let mut m = 0usize;
    while alpha * (m as f64 + 2.0) <= 1.0 + 1e-12 {
        m += 1;
    }
    let cap = if gamma.is_finite() { gamma.max(0.0).floor() as usize } else { usize::MAX };
    Some(m.min(cap))
}

/// Whether S_{α,β}(τ)x stays bounded as τ → 0 for x ∈ D(A^γ): β ≥ 1, or
/// α(1 + γ) > 1 when β = α < 1.
pub fn strongly_convergent(alpha: f64, beta: f64, gamma: f64) -> bool {
    beta >= 1.0 || alpha * (1.0 + gamma) > 1.0
}

/// Exact values at t = 0 when they exist.
fn at_zero(req: &PropagatorRequest, x: &StateVector) -> Result<StateVector> {
    if req.beta == 1.0 {
        Ok(x.clone())
    } else if req.beta > 1.0 {
        Ok(StateVector::zeros(x.len()))
    } else {
        Err(Error::Refused(format!(
            "S_(alpha,beta)(0) with beta = {} < 1 is unbounded",
            req.beta
        )))
    }
}

/// S_{α,β}(t)x on a given grid. At t = 0 the exact limits are returned without
/// quadrature.
pub fn propagator_apply(
    op: &dyn SectorialOperator,
    req: &PropagatorRequest,
    x: &StateVector,
    grid: &QuadratureGrid,
) -> Result<StateVector> {
    req.validate()?;
    x.check_dim(op.dim())?;
    if req.t == 0.0 {
        return at_zero(req, x);
    }
    let (powers, rhs) = correction_powers(op, req, x)?;
    let mut out = contour_sum(op, req, &rhs, grid)?;
    add_back(req, &powers, &mut out);
    Ok(out)
}

/// A^k x for k = 0..=m and the right-hand side A^{m+1}x of the remainder.
fn correction_powers(
    op: &dyn SectorialOperator,
    req: &PropagatorRequest,
    x: &StateVector,
) -> Result<(Vec<StateVector>, StateVector)> {
    match req.correction {
        None => Ok((Vec::new(), x.clone())),
        Some(m) => {
            let mut p = vec![x.clone()];
            for _ in 0..=m {
                let next = op.apply(p.last().expect("nonempty"))?;
                p.push(next);
            }
            let rhs = p.pop().expect("m + 2 entries");
            Ok((p, rhs))
        }
    }
}

fn add_back(req: &PropagatorRequest, powers: &[StateVector], out: &mut StateVector) {
    for (k, ak) in powers.iter().enumerate() {
        let g = req.alpha * k as f64 + req.beta;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let coeff = sign * req.t.powf(g - 1.0) * rgamma(g);
        out.axpy(Complex64::new(coeff, 0.0), ak);
    }
}

/// (1/2πi) Σ_j w_j z'_j e^{z_j t} σ z_j^e (z_j^α + A)^{-1} y with the remainder
/// sign σ and exponent e.
fn contour_sum(
    op: &dyn SectorialOperator,
    req: &PropagatorRequest,
    y: &StateVector,
    grid: &QuadratureGrid,
) -> Result<StateVector> {
    let (sign, expo) = remainder_factors(req);
    let n = y.len();
    let idx: Vec<usize> = (0..grid.len()).collect();
    let partial: Vec<StateVector> = idx
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<StateVector> {
            let mut acc = StateVector::zeros(n);
            for &j in chunk {
                let z = grid.nodes[j];
                let coeff = grid.weights[j] * grid.tangents[j] * (z * req.t).exp() * z.powf(expo) * sign
                    / Complex64::new(0.0, 2.0 * PI);
                if coeff.norm() == 0.0 {
                    continue;
                }
                let v = op.resolvent_solve(z.powf(req.alpha), y)?;
                acc.axpy(coeff, &v);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = pairwise_sum(&partial, n);
    if !out.is_finite() {
        return Err(Error::Numerical("non-finite contour sum".into()));
    }
    Ok(out)
}

fn remainder_factors(req: &PropagatorRequest) -> (f64, f64) {
    match req.correction {
        None => (1.0, req.alpha - req.beta),
        Some(m) => {
            let sign = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
            (sign, req.alpha - req.beta - req.alpha * (m + 1) as f64)
        }
    }
}

/// Result of [`propagator`] with the contour that was used.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorOutput {
    pub value: StateVector,
    pub spec: Option<ContourSpec>,
    pub node_count: usize,
}

/// S_{α,β}(t)x with an automatically chosen contour.
pub fn propagator(
    op: &dyn SectorialOperator,
    req: &PropagatorRequest,
    x: &StateVector,
    opts: &ContourOptions,
) -> Result<PropagatorOutput> {
    req.validate()?;
    x.check_dim(op.dim())?;
    if req.t == 0.0 {
        return Ok(PropagatorOutput { value: at_zero(req, x)?, spec: None, node_count: 0 });
    }
    let (powers, rhs) = correction_powers(op, req, x)?;
    let xn = x.norm();
    let scale = if xn > 0.0 { rhs.norm() / xn } else { 1.0 };
    let sector = op.sector();
    let spec = auto_contour(req.alpha, &sector, req.t, req.decay_power(), scale, opts)?;
    spec.check_admissible(req.alpha, &sector)?;
    let grid = build_contour(spec)?;
    let mut value = contour_sum(op, req, &rhs, &grid)?;
    add_back(req, &powers, &mut value);
    Ok(PropagatorOutput { value, spec: Some(spec), node_count: grid.len() })
}

/// S_{α,β}(t)x for many t in [t_min, t_max] on one shared contour. The solves
/// (z_j^α + A)^{-1}x are done once; each evaluation only reweights them.
#[derive(Debug, Clone)]
pub struct PropagatorFamily {
    req: PropagatorRequest,
    x: StateVector,
    powers: Vec<StateVector>,
    grid: QuadratureGrid,
    coeffs: Vec<Complex64>,
    solves: Vec<StateVector>,
    t_min: f64,
    t_max: f64,
}

impl PropagatorFamily {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        op: &dyn SectorialOperator,
        alpha: f64,
        beta: f64,
        correction: Option<usize>,
        x: &StateVector,
        t_min: f64,
        t_max: f64,
        opts: &ContourOptions,
    ) -> Result<Self> {
        let req = PropagatorRequest { alpha, beta, t: t_min, correction, gamma_hint: 0.0 };
        req.validate()?;
        x.check_dim(op.dim())?;
        let (powers, rhs) = correction_powers(op, &req, x)?;
        let xn = x.norm();
        let scale = if xn > 0.0 { rhs.norm() / xn } else { 1.0 };
        let sector = op.sector();
        let spec = auto_contour_range(alpha, &sector, t_min, t_max, req.decay_power(), scale, opts)?;
        spec.check_admissible(alpha, &sector)?;
        let grid = build_contour(spec)?;
        let (sign, expo) = remainder_factors(&req);
        let coeffs: Vec<Complex64> = (0..grid.len())
            .map(|j| {
                grid.weights[j] * grid.tangents[j] * grid.nodes[j].powf(expo) * sign / Complex64::new(0.0, 2.0 * PI)
            })
            .collect();
        let solves = grid
            .nodes
            .par_iter()
            .map(|z| op.resolvent_solve(z.powf(alpha), &rhs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { req, x: x.clone(), powers, grid, coeffs, solves, t_min, t_max })
    }

    pub fn node_count(&self) -> usize {
        self.grid.len()
    }

    pub fn spec(&self) -> ContourSpec {
        self.grid.spec
    }

    pub fn eval(&self, t: f64) -> Result<StateVector> {
        let req = PropagatorRequest { t, ..self.req };
        if t == 0.0 {
            return at_zero(&req, &self.x);
        }
        if t < self.t_min * (1.0 - 1e-12) || t > self.t_max * (1.0 + 1e-12) {
            return invalid(format!("t = {t} outside the family range [{}, {}]", self.t_min, self.t_max));
        }
        let n = self.x.len();
        let partial: Vec<StateVector> = self
            .solves
            .chunks(CHUNK)
            .zip(self.coeffs.chunks(CHUNK).zip(self.grid.nodes.chunks(CHUNK)))
            .map(|(sv, (cs, zs))| {
                let mut acc = StateVector::zeros(n);
                for ((v, cf), z) in sv.iter().zip(cs).zip(zs) {
                    if z.re * t >= UNDERFLOW {
                        acc.axpy(cf * (z * t).exp(), v);
                    }
                }
                acc
            })
            .collect();
        let mut out = pairwise_sum(&partial, n);
        if !out.is_finite() {
            return Err(Error::Numerical("non-finite contour sum".into()));
        }
        add_back(&req, &self.powers, &mut out);
        Ok(out)
    }
}

/// One term w·S_{α,β}(τ)x of a [`propagator_sum`].
#[derive(Debug, Clone, Copy)]
pub struct WeightedTerm<'a> {
    pub tau: f64,
    pub weight: f64,
    pub x: &'a StateVector,
}

/// Σ_i w_i S_{α,β}(τ_i)x_i. With the rays-and-arc contour every term shares
/// one contour fitted to the range of τ, so each node costs a single solve
/// (z_j^α + A)^{-1} Σ_i w_i e^{z_j τ_i} x_i. The other shapes use one contour
/// per term.
pub fn propagator_sum(
    op: &dyn SectorialOperator,
    alpha: f64,
    beta: f64,
    correction: Option<usize>,
    terms: &[WeightedTerm<'_>],
    opts: &ContourOptions,
) -> Result<PropagatorOutput> {
    let n = op.dim();
    let mut out = StateVector::zeros(n);
    let mut live: Vec<WeightedTerm<'_>> = Vec::with_capacity(terms.len());
    for term in terms {
        term.x.check_dim(n)?;
        let req = PropagatorRequest { alpha, beta, t: term.tau, correction, gamma_hint: 0.0 };
        req.validate()?;
        if term.weight == 0.0 || term.x.is_zero() {
            continue;
        }
        if term.tau == 0.0 {
            out.axpy(Complex64::new(term.weight, 0.0), &at_zero(&req, term.x)?);
        } else {
            live.push(*term);
        }
    }
    if live.is_empty() {
        return Ok(PropagatorOutput { value: out, spec: None, node_count: 0 });
    }
    if opts.shape != ContourShape::RaysArc {
        let mut count = 0;
        let mut parts = Vec::with_capacity(live.len());
        for term in &live {
            let req = PropagatorRequest { alpha, beta, t: term.tau, correction, gamma_hint: 0.0 };
            let p = propagator(op, &req, term.x, opts)?;
            count = count.max(p.node_count);
            parts.push(p.value.scaled(Complex64::new(term.weight, 0.0)));
        }
        parts.push(out);
        return Ok(PropagatorOutput { value: pairwise_sum(&parts, n), spec: None, node_count: count });
    }
    let t_min = live.iter().map(|w| w.tau).fold(f64::INFINITY, f64::min);
    let t_max = live.iter().map(|w| w.tau).fold(0.0, f64::max);
    let base = PropagatorRequest { alpha, beta, t: t_min, correction, gamma_hint: 0.0 };
    let mut rhs = Vec::with_capacity(live.len());
    let (mut data_norm, mut rhs_norm) = (0.0, 0.0);
    for term in &live {
        let (powers, r) = correction_powers(op, &base, term.x)?;
        let req = PropagatorRequest { t: term.tau, ..base };
        let mut back = StateVector::zeros(n);
        add_back(&req, &powers, &mut back);
        out.axpy(Complex64::new(term.weight, 0.0), &back);
        data_norm += term.weight.abs() * term.x.norm();
        rhs_norm += term.weight.abs() * r.norm();
        rhs.push(r);
    }
    let scale = if data_norm > 0.0 { rhs_norm / data_norm } else { 1.0 };
    let sector = op.sector();
    let spec = auto_contour_range(alpha, &sector, t_min, t_max, base.decay_power(), scale, opts)?;
    spec.check_admissible(alpha, &sector)?;
    let grid = build_contour(spec)?;
    let (sign, expo) = remainder_factors(&base);
    let idx: Vec<usize> = (0..grid.len()).collect();
    let partial: Vec<StateVector> = idx
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<StateVector> {
            let mut acc = StateVector::zeros(n);
            for &j in chunk {
                let z = grid.nodes[j];
                let mut y = StateVector::zeros(n);
                for (term, r) in live.iter().zip(&rhs) {
                    if z.re * term.tau < UNDERFLOW {
                        continue;
                    }
                    y.axpy((z * term.tau).exp() * term.weight, r);
                }
                if y.is_zero() {
                    continue;
                }
                let coeff = grid.weights[j] * grid.tangents[j] * z.powf(expo) * sign / Complex64::new(0.0, 2.0 * PI);
                acc.axpy(coeff, &op.resolvent_solve(z.powf(alpha), &y)?);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = pairwise_sum(&partial, n);
    if !sum.is_finite() {
        return Err(Error::Numerical("non-finite contour sum".into()));
    }
    Ok(PropagatorOutput { value: sum.add(&out), spec: Some(spec), node_count: grid.len() })
}

/// ‖e^{zt} z^{α−β}(z^α+A)^{-1}x − correction(z)‖ at z = radius·e^{iθ} on the
/// upper ray, θ = π/2 + ω/2 unless given.
#[allow(clippy::too_many_arguments)]
pub fn integrand_norm_profile(
    op: &dyn SectorialOperator,
    alpha: f64,
    beta: f64,
    t: f64,
    x: &StateVector,
    m: Option<usize>,
    radii: &[f64],
    ray_angle: Option<f64>,
) -> Result<Vec<(f64, f64)>> {
    let req = PropagatorRequest { alpha, beta, t, correction: m, gamma_hint: 0.0 };
    req.validate()?;
    x.check_dim(op.dim())?;
    let theta = match ray_angle {
        Some(a) => a,
        None => FRAC_PI_2 + 0.5 * opening_window(alpha, &op.sector())?,
    };
    let (_, rhs) = correction_powers(op, &req, x)?;
    let (sign, expo) = remainder_factors(&req);
    radii
        .iter()
        .map(|&rad| {
            if !(rad > 0.0) {
                return invalid(format!("radius must be positive, got {rad}"));
            }
            let z = Complex64::from_polar(rad, theta);
            let v = op.resolvent_solve(z.powf(alpha), &rhs)?;
            let f = (z * t).exp() * z.powf(expo) * sign;
            Ok((rad, v.norm() * f.norm()))
        })
        .collect()
}

/// Least-squares slope of log(norm) against log(radius).
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(r, v)| *r > 0.0 && *v > 0.0)
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return invalid("slope fit needs two positive samples");
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("slope fit needs distinct radii");
    }
    Ok(sxy / sxx)
}
