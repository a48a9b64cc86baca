//! Experiment configuration: TOML schema, validation and construction of the
//! core problem and solver objects.

use std::str::FromStr;
use std::sync::Arc;

use fracprop::contour::DEFAULT_TOL;
use fracprop::{
    manufacture_data, ClosureFunction, ContourOptions, ContourShape, CorrectionPolicy, Diagonal, Formula,
    FractionalOrder, GradedRule, Laplacian1D, Polynomial, ProblemData, SectorialOperator, SolverConfig, StateVector,
    TimeFunction, TimeGrid,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of the manufactured data; u0, u1 and f use seed, seed + 1, seed + 2.
    #[serde(default)]
    pub seed: u64,
    pub problem: Option<ProblemBlock>,
    #[serde(default)]
    pub contour: ContourBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    pub converge: Option<ConvergeBlock>,
    pub decay: Option<DecayBlock>,
    pub mlval: Option<MlvalBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub alpha: f64,
    /// Final time T.
    pub horizon: f64,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub u0: DataSpec,
    #[serde(default)]
    pub u1: DataSpec,
    #[serde(default)]
    pub rhs: RhsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Scalar { lambda: f64 },
    Diagonal { eigenvalues: Vec<f64> },
    LogSpaced { min: f64, max: f64, n: usize },
    /// Dirichlet Laplacian on (0, 1), second-order differences, n interior points.
    Laplacian { n: usize },
}

/// A vector given by its entries, or manufactured with x ∈ D(A^γ).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub values: Option<Vec<f64>>,
    /// Regularity γ of manufactured data (unit norm, seeded signs).
    pub manufactured: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhsSpec {
    #[default]
    Zero,
    /// f(t) = Σ_k c_k t^k with one vector per power.
    Polynomial { coefficients: Vec<Vec<f64>>, regularity: Option<f64> },
    /// f(t) = p(t)·x with x manufactured in D(A^gamma) and p given by its
    /// coefficients; the claimed regularity defaults to gamma.
    Manufactured {
        gamma: f64,
        #[serde(default = "unit_profile")]
        profile: Vec<f64>,
        regularity: Option<f64>,
    },
    /// f(t) = sin(ωt + φ)·a.
    Harmonic {
        amplitude: Vec<f64>,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        regularity: Option<f64>,
    },
}

fn unit_profile() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeTag {
    #[default]
    RaysArc,
    RaysArcUniform,
    Hyperbola,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourBlock {
    pub shape: ShapeTag,
    /// Nodes per branch; chosen from `tol` when absent.
    pub nodes: Option<usize>,
    /// Truncation tolerance, sets the outer radius and automatic node count.
    pub tol: f64,
    /// Arc radius max(1, 1/arc_horizon); the evaluation time when absent.
    pub arc_horizon: Option<f64>,
    /// Ray angle π/2 + angle_fraction·ω inside the admissible window ω.
    pub angle_fraction: f64,
}

impl Default for ContourBlock {
    fn default() -> Self {
        Self { shape: ShapeTag::RaysArc, nodes: None, tol: DEFAULT_TOL, arc_horizon: None, angle_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub levels: usize,
    pub ratio: f64,
    pub per_panel: usize,
}

impl From<RuleSpec> for GradedRule {
    fn from(r: RuleSpec) -> Self {
        GradedRule { levels: r.levels, ratio: r.ratio, per_panel: r.per_panel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrectionSpec {
    /// "auto" or "off"
    Named(String),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub formula: String,
    pub correction: CorrectionSpec,
    pub strict: bool,
    pub allow_fd: bool,
    /// Adds the mild-form residual of every output time to `solve`.
    pub residual: bool,
    pub rule: Option<RuleSpec>,
    pub li_rule: Option<RuleSpec>,
    pub oracle_rule: Option<RuleSpec>,
    pub residual_rule: Option<RuleSpec>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            formula: "new".into(),
            correction: CorrectionSpec::Named("auto".into()),
            strict: false,
            allow_fd: true,
            residual: false,
            rule: None,
            li_rule: None,
            oracle_rule: None,
            residual_rule: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuesMode {
    /// Real parts for up to 16 components, the norm otherwise.
    #[default]
    Auto,
    Real,
    Complex,
    Norm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// CSV path; standard output when absent. Not part of the config hash.
    pub path: Option<String>,
    pub times: Option<Vec<f64>>,
    /// Uniform grid of this many points on [0, T] when `times` is absent (default 11).
    pub points: Option<usize>,
    pub values: ValuesMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeBlock {
    pub node_counts: Vec<usize>,
    #[serde(default = "default_formulas")]
    pub formulas: Vec<String>,
    /// The reference uses this multiple of the largest node count.
    #[serde(default = "default_reference_factor")]
    pub reference_factor: usize,
}

fn default_formulas() -> Vec<String> {
    vec!["new".into()]
}

fn default_reference_factor() -> usize {
    4
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayBlock {
    /// Radii along the upper ray; 1e6·2^i, i < 12 when absent.
    pub radii: Option<Vec<f64>>,
    pub t: f64,
    /// Correction order of the corrected family; the automatic order when absent.
    pub correction: Option<usize>,
    /// Regularity of u0 used for the expected slope; from the u0 spec when absent.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlvalBlock {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
    pub z_im: Option<Vec<f64>>,
}

/// A problem ready for the solvers, with what the config says about u0.
pub struct Built {
    pub data: ProblemData,
    pub u0_gamma: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the resolved config without the output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.path = None;
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if let Some(p) = &self.problem {
            FractionalOrder::new(p.alpha).map_err(|e| config_err(e.to_string()))?;
            if !(p.horizon > 0.0 && p.horizon.is_finite()) {
                return Err(config_err(format!("problem.horizon must be positive, got {}", p.horizon)));
            }
            for (name, d) in [("u0", &p.u0), ("u1", &p.u1)] {
                if d.values.is_some() && d.manufactured.is_some() {
                    return Err(config_err(format!("problem.{name}: give either values or manufactured")));
                }
            }
        }
        if self.output.times.is_some() && self.output.points.is_some() {
            return Err(config_err("output: give either times or points"));
        }
        if self.output.points == Some(0) {
            return Err(config_err("output.points must be positive"));
        }
        Formula::from_str(&self.solver.formula).map_err(|e| config_err(e.to_string()))?;
        self.correction()?;
        if let Some(c) = &self.converge {
            if c.node_counts.is_empty() || c.node_counts.contains(&0) {
                return Err(config_err("converge.node_counts must be nonempty and positive"));
            }
            if c.reference_factor < 2 {
                return Err(config_err("converge.reference_factor must be at least 2"));
            }
            for f in &c.formulas {
                Formula::from_str(f).map_err(|e| config_err(e.to_string()))?;
            }
        }
        if let Some(m) = &self.mlval {
            if let Some(im) = &m.z_im {
                if im.len() != m.z.len() {
                    return Err(config_err("mlval.z_im must have the length of mlval.z"));
                }
            }
        }
        Ok(())
    }

    pub fn problem_block(&self) -> Result<&ProblemBlock, Failure> {
        self.problem.as_ref().ok_or_else(|| config_err("missing [problem] table"))
    }

    pub fn formula(&self) -> Formula {
        Formula::from_str(&self.solver.formula).expect("validated")
    }

    fn correction(&self) -> Result<CorrectionPolicy, Failure> {
        match &self.solver.correction {
            CorrectionSpec::Named(s) if s == "auto" => Ok(CorrectionPolicy::Auto),
            CorrectionSpec::Named(s) if s == "off" => Ok(CorrectionPolicy::Off),
            CorrectionSpec::Fixed(m) => Ok(CorrectionPolicy::Fixed(*m)),
            CorrectionSpec::Named(s) => {
                Err(config_err(format!("solver.correction must be \"auto\", \"off\" or an order, got \"{s}\"")))
            }
        }
    }

    pub fn contour_options(&self) -> ContourOptions {
        let c = &self.contour;
        ContourOptions {
            shape: match c.shape {
                ShapeTag::RaysArc => ContourShape::RaysArc,
                ShapeTag::RaysArcUniform => ContourShape::RaysArcUniform,
                ShapeTag::Hyperbola => ContourShape::Hyperbola,
            },
            nodes: c.nodes,
            tol: c.tol,
            horizon: c.arc_horizon,
            angle_fraction: c.angle_fraction,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        let s = &self.solver;
        SolverConfig {
            contour: self.contour_options(),
            rule: s.rule.map_or(d.rule, Into::into),
            li_rule: s.li_rule.map_or(d.li_rule, Into::into),
            oracle_rule: s.oracle_rule.map_or(d.oracle_rule, Into::into),
            correction: self.correction().expect("validated"),
            strict: s.strict,
            allow_fd: s.allow_fd,
        }
    }

    pub fn residual_rule(&self) -> GradedRule {
        self.solver.residual_rule.map_or_else(GradedRule::default, Into::into)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, Failure> {
        let p = self.problem_block()?;
        let grid = match &self.output.times {
            Some(t) => TimeGrid::new(t.clone()),
            None => match self.output.points.unwrap_or(11) {
                1 => TimeGrid::new(vec![0.0]),
                n => TimeGrid::uniform(p.horizon, n - 1),
            },
        };
        let grid = grid.map_err(|e| config_err(format!("output time grid: {e}")))?;
        if grid.end() > p.horizon {
            return Err(config_err(format!("output times exceed the horizon {}", p.horizon)));
        }
        Ok(grid)
    }

    pub fn build(&self) -> Result<Built, Failure> {
        let p = self.problem_block()?;
        let op = operator(&p.operator)?;
        let n = op.dim();
        let u0 = vector(&p.u0, op.as_ref(), self.seed, "u0")?;
        let u1 = vector(&p.u1, op.as_ref(), self.seed.wrapping_add(1), "u1")?;
        let (rhs, deriv, regularity) = forcing(&p.rhs, op.as_ref(), self.seed.wrapping_add(2))?;
        let order = FractionalOrder::new(p.alpha).map_err(Failure::Core)?;
        let mut data = ProblemData::new(order, op.clone(), u0, u1, rhs, p.horizon).map_err(Failure::Core)?;
        if let Some(d) = deriv {
            data = data.with_rhs_derivative(d).map_err(Failure::Core)?;
        }
        if let Some(r) = regularity {
            data = data.with_rhs_regularity(r).map_err(Failure::Core)?;
        }
        if data.rhs.dim() != n {
            return Err(config_err("rhs dimension does not match the operator"));
        }
        let u0_gamma = p.u0.manufactured;
        Ok(Built { data, u0_gamma })
    }
}

fn operator(spec: &OperatorSpec) -> Result<Arc<dyn SectorialOperator>, Failure> {
    let op: Arc<dyn SectorialOperator> = match spec {
        OperatorSpec::Scalar { lambda } => Arc::new(Diagonal::scalar(*lambda).map_err(Failure::Core)?),
        OperatorSpec::Diagonal { eigenvalues } => Arc::new(Diagonal::from_real(eigenvalues).map_err(Failure::Core)?),
        OperatorSpec::LogSpaced { min, max, n } => {
            Arc::new(Diagonal::log_spaced(*min, *max, *n).map_err(Failure::Core)?)
        }
        OperatorSpec::Laplacian { n } => Arc::new(Laplacian1D::new(*n).map_err(Failure::Core)?),
    };
    Ok(op)
}

fn vector(spec: &DataSpec, op: &dyn SectorialOperator, seed: u64, name: &str) -> Result<StateVector, Failure> {
    let scale = spec.scale.unwrap_or(1.0);
    let v = match (&spec.values, spec.manufactured) {
        (Some(v), None) => {
            if v.len() != op.dim() {
                return Err(config_err(format!("problem.{name} has {} entries, operator dimension {}", v.len(), op.dim())));
            }
            StateVector::from_real(v)
        }
        (None, Some(gamma)) => manufacture_data(op, gamma, seed).map_err(Failure::Core)?.0,
        (None, None) => StateVector::zeros(op.dim()),
        (Some(_), Some(_)) => unreachable!("rejected by validate"),
    };
    Ok(v.scaled(fracprop::Complex64::new(scale, 0.0)))
}

type Forcing = (Arc<dyn TimeFunction>, Option<Arc<dyn TimeFunction>>, Option<f64>);

fn forcing(spec: &RhsSpec, op: &dyn SectorialOperator, seed: u64) -> Result<Forcing, Failure> {
    let n = op.dim();
    let check = |v: &[f64], what: &str| {
        if v.len() == n {
            Ok(())
        } else {
            Err(config_err(format!("problem.rhs.{what} has {} entries, operator dimension {n}", v.len())))
        }
    };
    match spec {
        RhsSpec::Zero => Ok((Arc::new(Polynomial::zero(n)), None, Some(f64::INFINITY))),
        RhsSpec::Polynomial { coefficients, regularity } => {
            for c in coefficients {
                check(c, "coefficients")?;
            }
            let coeffs = coefficients.iter().map(|c| StateVector::from_real(c)).collect();
            let p = Polynomial::new(coeffs).map_err(Failure::Core)?;
            Ok((Arc::new(p), None, *regularity))
        }
        RhsSpec::Manufactured { gamma, profile, regularity } => {
            let (x, _) = manufacture_data(op, *gamma, seed).map_err(Failure::Core)?;
            let coeffs = profile.iter().map(|&a| x.scaled(fracprop::Complex64::new(a, 0.0))).collect();
            let p = Polynomial::new(coeffs).map_err(Failure::Core)?;
            Ok((Arc::new(p), None, Some(regularity.unwrap_or(*gamma))))
        }
        RhsSpec::Harmonic { amplitude, frequency, phase, regularity } => {
            check(amplitude, "amplitude")?;
            let (w, ph) = (*frequency, *phase);
            let a = StateVector::from_real(amplitude);
            let (a1, a2, a3) = (a.clone(), a.clone(), a.clone());
            let f = ClosureFunction::new(n, move |t| a1.scaled((w * t + ph).sin().into()))
                .with_derivative(move |t| a2.scaled((w * (w * t + ph).cos()).into()))
                .with_derivative(move |t| a3.scaled((-w * w * (w * t + ph).sin()).into()));
            Ok((Arc::new(f), None, *regularity))
        }
    }
}
