//! Mild solutions of ∂_t^α u + Au = f on a time grid, by four representations:
//!
//! * `New`: u(t) = S_α(t)u_0 + S_{α,2}(t)u_1 + S_{α,1+α}(t)f(0) +
//!   ∫_0^t S_α(t−s) J_α f'(s) ds. Only propagators with β ≥ 1 appear, so
//!   every integrand is bounded.
//! * `Classic`: u(t) = S_α(t)u_0 + S_{α,2}(t)u_1 + ∫_0^t S_{α,α}(t−s) f(s) ds,
//!   whose kernel behaves like (t−s)^{α−1} and whose contour integrand decays
//!   only like |z|^{−α}.
//! * `Li` (1 < α < 2): u(t) = S_α(t)u_0 + S_{α,2}(t)u_1 + J_{α−1}(S_α * f)(t).
//! * `MlOracle`: eigenmode-wise Mittag-Leffler evaluation, the reference.
//!
//! Here S_{α,β}(t) = t^{β−1}E_{α,β}(−At^α) and J_α S_α(t) = S_{α,1+α}(t).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::contour::{
    default_correction, propagator, propagator_sum, strongly_convergent, ContourOptions, ContourShape,
    PropagatorFamily, PropagatorRequest, WeightedTerm,
};
use crate::error::{invalid, Error, Result};
use crate::fracint::{GradedRule, RlDerivativeCache, SampledFunction, TimeFunction, TimeGrid};
use crate::mittag_leffler::{ml, rgamma};
use crate::operator::SectorialOperator;
use crate::problem::ProblemData;
use crate::types::{c, pairwise_sum, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formula {
    New,
    Classic,
    Li,
    MlOracle,
}

impl Formula {
    pub const ALL: [Formula; 4] = [Formula::New, Formula::Classic, Formula::Li, Formula::MlOracle];

    pub fn tag(&self) -> &'static str {
        match self {
            Formula::New => "new",
            Formula::Classic => "classic",
            Formula::Li => "li",
            Formula::MlOracle => "ml_oracle",
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new" => Ok(Formula::New),
            "classic" => Ok(Formula::Classic),
            "li" => Ok(Formula::Li),
            "ml_oracle" | "oracle" => Ok(Formula::MlOracle),
            _ => invalid(format!("unknown formula '{s}'")),
        }
    }
}

/// How the classic formula picks the correction order for S_{α,α}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionPolicy {
    /// Least m making the integrand decay faster than |z|^{-1}, capped by the
    /// claimed regularity of f.
    #[default]
    Auto,
    Off,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub contour: ContourOptions,
    /// Convolution rule of the new and classic formulas, and of J_α f'.
    pub rule: GradedRule,
    /// Outer and inner rules of the nested Li convolution.
    pub li_rule: GradedRule,
    /// Convolution rule of the oracle for non-polynomial f.
    pub oracle_rule: GradedRule,
    pub correction: CorrectionPolicy,
    /// Refuse classic evaluations that are not strongly convergent instead of
    /// warning.
    pub strict: bool,
    /// Allow finite differences when f' is not given.
    pub allow_fd: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            contour: ContourOptions::default(),
            rule: GradedRule::default(),
            li_rule: GradedRule { levels: 2, ratio: 0.2, per_panel: 10 },
            oracle_rule: GradedRule { levels: 24, ratio: 0.3, per_panel: 16 },
            correction: CorrectionPolicy::Auto,
            strict: false,
            allow_fd: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointDiagnostics {
    /// Largest number of contour nodes used for this point.
    pub node_count: usize,
    pub correction_order: Option<usize>,
    pub residual: Option<f64>,
    pub warnings: Vec<String>,
}

impl PointDiagnostics {
    fn nodes(&mut self, n: usize) {
        self.node_count = self.node_count.max(n);
    }

    fn warn(&mut self, w: &str) {
        if !self.warnings.iter().any(|x| x == w) {
            self.warnings.push(w.to_string());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRecord {
    pub grid: TimeGrid,
    pub u_values: Vec<StateVector>,
    pub formula: Formula,
    pub diagnostics: Vec<PointDiagnostics>,
}

impl SolutionRecord {
    /// The value at a grid point, matched exactly.
    pub fn value_at(&self, t: f64) -> Option<&StateVector> {
        self.grid.points().iter().position(|&s| s == t).map(|i| &self.u_values[i])
    }

    /// Warnings of all points, deduplicated, in order of first appearance.
    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for d in &self.diagnostics {
            for w in &d.warnings {
                if !out.contains(w) {
                    out.push(w.clone());
                }
            }
        }
        out
    }
}

/// E_{α,α}(−λτ^α) − 1/Γ(α) ~ τ^α against the weight τ^{α−1}: the graded
/// rules of the classic and oracle convolutions are deepened to this level.
const KERNEL_TOL: f64 = 1e-13;

pub const WARN_FD: &str = "f' by finite differences: reduced accuracy";
pub const WARN_NOT_CONVERGENT: &str =
    "S_(alpha,alpha) integrand not strongly convergent for the claimed regularity of f";
pub const WARN_UNKNOWN_REGULARITY: &str = "regularity of f unknown; convergence of the classic kernel near s = t not checked";

pub fn solve(formula: Formula, p: &ProblemData, grid: &TimeGrid, cfg: &SolverConfig) -> Result<SolutionRecord> {
    match formula {
        Formula::New => solve_new(p, grid, cfg),
        Formula::Classic => solve_classic(p, grid, cfg),
        Formula::Li => solve_li(p, grid, cfg),
        Formula::MlOracle => solve_ml_oracle(p, grid, cfg),
    }
}

/// S_{α,β}(t)x for the grid times: one shared contour with cached solves for
/// the rays-and-arc shape, one contour per time otherwise.
enum Family<'a> {
    Zero(usize),
    Shared(PropagatorFamily),
    PerTime { op: &'a dyn SectorialOperator, alpha: f64, beta: f64, x: StateVector, opts: ContourOptions },
}

impl<'a> Family<'a> {
    fn new(
        op: &'a dyn SectorialOperator,
        alpha: f64,
        beta: f64,
        x: &StateVector,
        grid: &TimeGrid,
        opts: &ContourOptions,
    ) -> Result<Self> {
        let positive: Vec<f64> = grid.points().iter().copied().filter(|&t| t > 0.0).collect();
        if x.is_zero() || positive.is_empty() {
            return Ok(Family::Zero(x.len()));
        }
        if opts.shape != ContourShape::RaysArc {
            return Ok(Family::PerTime { op, alpha, beta, x: x.clone(), opts: *opts });
        }
        let (lo, hi) = (positive[0], positive[positive.len() - 1]);
        Ok(Family::Shared(PropagatorFamily::new(op, alpha, beta, None, x, lo, hi, opts)?))
    }

    fn eval(&self, t: f64, d: &mut PointDiagnostics) -> Result<StateVector> {
        match self {
            Family::Zero(n) => Ok(StateVector::zeros(*n)),
            Family::Shared(f) => {
                d.nodes(f.node_count());
                f.eval(t)
            }
            Family::PerTime { op, alpha, beta, x, opts } => {
                let out = propagator(*op, &PropagatorRequest::new(*alpha, *beta, t), x, opts)?;
                d.nodes(out.node_count);
                Ok(out.value)
            }
        }
    }
}

/// S_α(t)u_0 + S_{α,2}(t)u_1.
struct Homogeneous<'a> {
    u0: Family<'a>,
    u1: Family<'a>,
}

impl<'a> Homogeneous<'a> {
    fn new(p: &'a ProblemData, grid: &TimeGrid, cfg: &SolverConfig) -> Result<Self> {
        let op = p.operator.as_ref();
        Ok(Self {
            u0: Family::new(op, p.alpha(), 1.0, &p.u0, grid, &cfg.contour)?,
            u1: Family::new(op, p.alpha(), 2.0, &p.u1, grid, &cfg.contour)?,
        })
    }

    fn eval(&self, t: f64, d: &mut PointDiagnostics) -> Result<StateVector> {
        Ok(self.u0.eval(t, d)?.add(&self.u1.eval(t, d)?))
    }
}

fn check_grid(p: &ProblemData, grid: &TimeGrid) -> Result<()> {
    p.validate()?;
    if grid.end() > p.horizon * (1.0 + 1e-12) {
        return invalid(format!("grid ends at {} beyond the horizon {}", grid.end(), p.horizon));
    }
    Ok(())
}

/// Evaluates `point` at every grid time in parallel; t = 0 returns u_0.
fn map_grid<F>(p: &ProblemData, grid: &TimeGrid, formula: Formula, point: F) -> Result<SolutionRecord>
where
    F: Fn(f64, &mut PointDiagnostics) -> Result<StateVector> + Sync,
{
    let out: Vec<(StateVector, PointDiagnostics)> = grid
        .points()
        .par_iter()
        .map(|&t| {
            let mut d = PointDiagnostics::default();
            if t == 0.0 {
                return Ok((p.u0.clone(), d));
            }
            let u = point(t, &mut d)?;
            if !u.is_finite() {
                return Err(Error::Numerical(format!("non-finite solution at t = {t}")));
            }
            Ok((u, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let (u_values, diagnostics) = out.into_iter().unzip();
    Ok(SolutionRecord { grid: grid.clone(), u_values, formula, diagnostics })
}

pub fn solve_new(p: &ProblemData, grid: &TimeGrid, cfg: &SolverConfig) -> Result<SolutionRecord> {
    check_grid(p, grid)?;
    let alpha = p.alpha();
    let op = p.operator.as_ref();
    let f = p.forcing();
    let hom = Homogeneous::new(p, grid, cfg)?;
    let forced = !f.is_zero();
    let f0 = if forced { f.eval(0.0)? } else { StateVector::zeros(p.dim()) };
    let f0_term = Family::new(op, alpha, 1.0 + alpha, &f0, grid, &cfg.contour)?;
    if forced && !cfg.allow_fd && f.derivative(1, 0.0).is_none() && f.rl_of_derivative(alpha, 1, grid.end()).is_none() {
        return invalid("f' is not available and finite differences are disabled");
    }
    let jf = RlDerivativeCache::new(alpha, f.as_ref(), cfg.rule);
    map_grid(p, grid, Formula::New, |t, d| {
        let mut u = hom.eval(t, d)?;
        if !forced {
            return Ok(u);
        }
        u = u.add(&f0_term.eval(t, d)?);
        let rule = cfg.rule.rule(t, 0.0)?;
        let mut vals = Vec::with_capacity(rule.len());
        for &s in &rule.nodes {
            let a = jf.get(s)?;
            if a.reduced_accuracy {
                d.warn(WARN_FD);
            }
            vals.push(a);
        }
        let terms: Vec<WeightedTerm<'_>> = rule
            .gaps
            .iter()
            .zip(&rule.weights)
            .zip(&vals)
            .map(|((&tau, &w), v)| WeightedTerm { tau, weight: w, x: &v.value })
            .collect();
        let conv = propagator_sum(op, alpha, 1.0, None, &terms, &cfg.contour)?;
        d.nodes(conv.node_count);
        Ok(u.add(&conv.value))
    })
}

/// Correction order for S_{α,α} and the warning, if any, for the classic
/// formula; errors in strict mode when the kernel is not strongly convergent.
pub fn classic_correction(p: &ProblemData, cfg: &SolverConfig) -> Result<(Option<usize>, Option<&'static str>)> {
    let alpha = p.alpha();
    let delta = p.rhs_regularity;
    let mut warning = None;
    if alpha < 1.0 && !p.forcing().is_zero() {
        match delta {
            Some(dl) if !strongly_convergent(alpha, alpha, dl) => {
                if cfg.strict {
                    return Err(Error::Refused(format!(
                        "the classic kernel S_(alpha,alpha)(t-s)f(s) needs f(s) in D(A^delta) with \
                         delta > (1-alpha)/alpha = {:.6}, but only delta = {dl} is claimed; \
                         without it the contour integral is not strongly convergent as s -> t",
                        (1.0 - alpha) / alpha
                    )));
                }
                warning = Some(WARN_NOT_CONVERGENT);
            }
            None => warning = Some(WARN_UNKNOWN_REGULARITY),
            _ => {}
        }
    }
    let m = match cfg.correction {
        CorrectionPolicy::Off => None,
        CorrectionPolicy::Fixed(m) => Some(m),
        CorrectionPolicy::Auto => default_correction(alpha, alpha, delta.unwrap_or(f64::INFINITY)),
    };
    Ok((m, warning))
}

pub fn solve_classic(p: &ProblemData, grid: &TimeGrid, cfg: &SolverConfig) -> Result<SolutionRecord> {
    check_grid(p, grid)?;
    let alpha = p.alpha();
    let op = p.operator.as_ref();
    let f = p.forcing();
    let (m, warning) = classic_correction(p, cfg)?;
    let hom = Homogeneous::new(p, grid, cfg)?;
    let forced = !f.is_zero();
    map_grid(p, grid, Formula::Classic, |t, d| {
        let mut u = hom.eval(t, d)?;
        if !forced {
            return Ok(u);
        }
        d.correction_order = m;
        if let Some(w) = warning {
            d.warn(w);
        }
        // the rule carries (t−s)^{α−1}; the integrand is (t−s)^{1−α}S_{α,α}(t−s)f(s)
        let rule = cfg.rule.deepened(2.0 * alpha, KERNEL_TOL).rule(t, alpha - 1.0)?;
        let vals = rule.nodes.iter().map(|&s| f.eval(s)).collect::<Result<Vec<_>>>()?;
        let terms: Vec<WeightedTerm<'_>> = rule
            .gaps
            .iter()
            .zip(&rule.weights)
            .zip(&vals)
            .map(|((&tau, &w), x)| WeightedTerm { tau, weight: w * tau.powf(1.0 - alpha), x })
            .collect();
        let conv = propagator_sum(op, alpha, alpha, m, &terms, &cfg.contour)?;
        d.nodes(conv.node_count);
        u = u.add(&conv.value);
        Ok(u)
    })
}

pub fn solve_li(p: &ProblemData, grid: &TimeGrid, cfg: &SolverConfig) -> Result<SolutionRecord> {
    check_grid(p, grid)?;
    let alpha = p.alpha();
    if !(alpha > 1.0 && alpha < 2.0) {
        return invalid(format!("the Li representation needs 1 < alpha < 2, got {alpha}"));
    }
    let op = p.operator.as_ref();
    let f = p.forcing();
    let hom = Homogeneous::new(p, grid, cfg)?;
    let forced = !f.is_zero();
    let n = p.dim();
    map_grid(p, grid, Formula::Li, |t, d| {
        let u = hom.eval(t, d)?;
        if !forced {
            return Ok(u);
        }
        // J_{α−1} w(t) with w = S_α * f evaluated at each outer node
        let outer = cfg.li_rule.rule(t, alpha - 2.0)?;
        let inner: Vec<(StateVector, usize)> = outer
            .nodes
            .par_iter()
            .map(|&s| -> Result<(StateVector, usize)> {
                let rule = cfg.li_rule.rule(s, 0.0)?;
                let vals = rule.nodes.iter().map(|&r| f.eval(r)).collect::<Result<Vec<_>>>()?;
                let terms: Vec<WeightedTerm<'_>> = rule
                    .gaps
                    .iter()
                    .zip(&rule.weights)
                    .zip(&vals)
                    .map(|((&tau, &w), x)| WeightedTerm { tau, weight: w, x })
                    .collect();
                let w = propagator_sum(op, alpha, 1.0, None, &terms, &cfg.contour)?;
                Ok((w.value, w.node_count))
            })
            .collect::<Result<Vec<_>>>()?;
        let scaled: Vec<StateVector> = inner
            .iter()
            .zip(&outer.weights)
            .map(|((w, nodes), &wt)| {
                d.nodes(*nodes);
                w.scaled(c(wt * rgamma(alpha - 1.0)))
            })
            .collect();
        Ok(u.add(&pairwise_sum(&scaled, n)))
    })
}

/// Eigenmode-wise reference solution
///
///   u_i(t) = E_{α,1}(−λ_i t^α)u_{0,i} + t E_{α,2}(−λ_i t^α)u_{1,i}
///            + ∫_0^t (t−s)^{α−1} E_{α,α}(−λ_i (t−s)^α) f_i(s) ds.
///
/// For polynomial f = Σ g_k t^k the forcing term is
/// Σ_k k! t^{α+k} E_{α,α+k+1}(−λ_i t^α) g_{k,i}; otherwise the convolution
/// uses `cfg.oracle_rule`.
pub fn solve_ml_oracle(p: &ProblemData, grid: &TimeGrid, cfg: &SolverConfig) -> Result<SolutionRecord> {
    check_grid(p, grid)?;
    let alpha = p.alpha();
    let op = p.operator.as_ref();
    let eig = op
        .eigen()
        .ok_or_else(|| Error::Unsupported(format!("{} has no eigendecomposition", op.name())))?;
    let lambdas: Vec<f64> = eig
        .eigenvalues()
        .iter()
        .map(|l| {
            if l.im != 0.0 || !(l.re > 0.0) {
                Err(Error::Unsupported(format!("oracle needs positive real eigenvalues, got {l}")))
            } else {
                Ok(l.re)
            }
        })
        .collect::<Result<_>>()?;
    let f = p.forcing();
    let forced = !f.is_zero();
    let poly: Option<Vec<Vec<Complex64>>> =
        f.polynomial_coeffs().map(|cs| cs.iter().map(|g| eig.to_modes(g)).collect());
    let m0 = eig.to_modes(&p.u0);
    let m1 = eig.to_modes(&p.u1);
    let e = |beta: f64, x: f64| -> Result<f64> { Ok(ml(alpha, beta, c(-x))?.re) };
    map_grid(p, grid, Formula::MlOracle, |t, _d| {
        let ta = t.powf(alpha);
        let mut modes = Vec::with_capacity(lambdas.len());
        for (i, &l) in lambdas.iter().enumerate() {
            let mut v = m0[i] * e(1.0, l * ta)?;
            if m1[i].norm() != 0.0 {
                v += m1[i] * t * e(2.0, l * ta)?;
            }
            if let (true, Some(g)) = (forced, &poly) {
                for (k, gk) in g.iter().enumerate() {
                    if gk[i].norm() != 0.0 {
                        let kf = k as f64;
                        let fact = rgamma(kf + 1.0).recip();
                        v += gk[i] * fact * t.powf(alpha + kf) * e(alpha + kf + 1.0, l * ta)?;
                    }
                }
            }
            modes.push(v);
        }
        if forced && poly.is_none() {
            let rule = cfg.oracle_rule.deepened(2.0 * alpha, KERNEL_TOL).rule(t, alpha - 1.0)?;
            let fs = rule.nodes.iter().map(|&s| Ok(eig.to_modes(&f.eval(s)?))).collect::<Result<Vec<_>>>()?;
            for (i, &l) in lambdas.iter().enumerate() {
                let terms: Vec<Complex64> = rule
                    .gaps
                    .iter()
                    .zip(&rule.weights)
                    .zip(&fs)
                    .map(|((&tau, &w), fm)| Ok(fm[i] * w * e(alpha, l * tau.powf(alpha))?))
                    .collect::<Result<_>>()?;
                modes[i] += terms.iter().sum::<Complex64>();
            }
        }
        Ok(eig.from_modes(&modes))
    })
}

/// Time grid containing 0, t and the nodes of the residual quadrature at t, so
/// that [`mild_residual`] reads every value it needs from the record.
pub fn residual_grid(alpha: f64, t: f64, rule: &GradedRule) -> Result<TimeGrid> {
    if t == 0.0 {
        return TimeGrid::new(vec![0.0]);
    }
    let mut pts = vec![0.0];
    pts.extend(rule.rule(t, alpha - 1.0)?.nodes);
    pts.push(t);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    TimeGrid::new(pts)
}

/// Relative residual of the Volterra equation
///
///   ‖u(t) − u_0 − t u_1 + J_α(Au − f)(t)‖ / max(1, ‖u(t)‖).
///
/// Values at the quadrature nodes are read from `sol` when present, otherwise
/// interpolated from it; a grid from [`residual_grid`] avoids interpolation.
pub fn mild_residual(p: &ProblemData, sol: &SolutionRecord, t: f64, rule: &GradedRule) -> Result<f64> {
    let pts = sol.grid.points();
    if pts.first() != Some(&0.0) || sol.grid.end() < t || !(t >= 0.0) {
        return invalid(format!("solution grid does not cover [0, {t}]"));
    }
    let ut = match sol.value_at(t) {
        Some(v) => v.clone(),
        None => return invalid(format!("t = {t} is not a grid point")),
    };
    let mut r = ut.sub(&p.u0).sub(&p.u1.scaled(c(t)));
    if t > 0.0 {
        let alpha = p.alpha();
        let q = rule.rule(t, alpha - 1.0)?;
        let interp = if q.nodes.iter().all(|&s| sol.value_at(s).is_some()) {
            None
        } else {
            if pts.len() < 4 {
                return invalid("at least four grid points are needed to interpolate the solution");
            }
            Some(SampledFunction::new(sol.grid.clone(), sol.u_values.clone())?)
        };
        let f = p.forcing();
        let vals = q
            .nodes
            .iter()
            .map(|&s| {
                let u = match sol.value_at(s) {
                    Some(v) => v.clone(),
                    None => interp.as_ref().expect("built above").eval(s)?,
                };
                Ok(p.operator.apply(&u)?.sub(&f.eval(s)?))
            })
            .collect::<Result<Vec<_>>>()?;
        r = r.add(&q.apply(&vals, p.dim()).scaled(c(rgamma(alpha))));
    }
    Ok(r.norm() / ut.norm().max(1.0))
}

/// Solves on [`residual_grid`] and returns (u(t), residual at t).
pub fn solve_with_residual(
    formula: Formula,
    p: &ProblemData,
    t: f64,
    cfg: &SolverConfig,
    rule: &GradedRule,
) -> Result<(StateVector, f64)> {
    let grid = residual_grid(p.alpha(), t, rule)?;
    let sol = solve(formula, p, &grid, cfg)?;
    let r = mild_residual(p, &sol, t, rule)?;
    Ok((sol.value_at(t).expect("t is on the grid").clone(), r))
}
