//! Data of the Cauchy problem ∂_t^α u + Au = f, u(0) = u_0, u'(0) = u_1.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::fracint::{Polynomial, TimeFunction};
use crate::operator::SectorialOperator;
use crate::types::{FractionalOrder, StateVector};

#[derive(Clone)]
pub struct ProblemData {
    pub order: FractionalOrder,
    pub operator: Arc<dyn SectorialOperator>,
    pub u0: StateVector,
    /// Required to vanish when α ≤ 1.
    pub u1: StateVector,
    pub rhs: Arc<dyn TimeFunction>,
    /// f' when `rhs` does not provide it.
    pub rhs_derivative: Option<Arc<dyn TimeFunction>>,
    pub horizon: f64,
    /// Claimed δ with f(s) ∈ D(A^δ); `None` when unknown.
    pub rhs_regularity: Option<f64>,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("alpha", &self.order.alpha())
            .field("operator", &self.operator.name())
            .field("horizon", &self.horizon)
            .field("rhs_regularity", &self.rhs_regularity)
            .finish_non_exhaustive()
    }
}

impl ProblemData {
    /// Homogeneous problem (f ≡ 0, u_1 = 0).
    pub fn homogeneous(
        alpha: f64,
        operator: Arc<dyn SectorialOperator>,
        u0: StateVector,
        horizon: f64,
    ) -> Result<Self> {
        let n = operator.dim();
        Self::new(
            FractionalOrder::new(alpha)?,
            operator,
            u0,
            StateVector::zeros(n),
            Arc::new(Polynomial::zero(n)),
            horizon,
        )
    }

    pub fn new(
        order: FractionalOrder,
        operator: Arc<dyn SectorialOperator>,
        u0: StateVector,
        u1: StateVector,
        rhs: Arc<dyn TimeFunction>,
        horizon: f64,
    ) -> Result<Self> {
        let p = Self {
            order,
            operator,
            u0,
            u1,
            rhs,
            rhs_derivative: None,
            horizon,
            rhs_regularity: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_rhs_derivative(mut self, d: Arc<dyn TimeFunction>) -> Result<Self> {
        self.rhs_derivative = Some(d);
        self.validate()?;
        Ok(self)
    }

    pub fn with_rhs_regularity(mut self, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return invalid(format!("regularity must be nonnegative, got {delta}"));
        }
        self.rhs_regularity = Some(delta);
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.order.alpha()
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        self.u0.check_dim(n)?;
        self.u1.check_dim(n)?;
        if self.rhs.dim() != n {
            return invalid(format!("rhs has dimension {}, operator {n}", self.rhs.dim()));
        }
        if let Some(d) = &self.rhs_derivative {
            if d.dim() != n {
                return invalid(format!("rhs derivative has dimension {}, operator {n}", d.dim()));
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return invalid(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.order.n() == 1 && !self.u1.is_zero() {
            return invalid("u1 must vanish when alpha <= 1");
        }
        if !self.u0.is_finite() || !self.u1.is_finite() {
            return invalid("initial data must be finite");
        }
        Ok(())
    }

    /// The right-hand side with the separate derivative handle folded in.
    pub fn forcing(&self) -> Arc<dyn TimeFunction> {
        match &self.rhs_derivative {
            None => self.rhs.clone(),
            Some(d) => Arc::new(WithDerivative { f: self.rhs.clone(), d: d.clone() }),
        }
    }
}

struct WithDerivative {
    f: Arc<dyn TimeFunction>,
    d: Arc<dyn TimeFunction>,
}

impl TimeFunction for WithDerivative {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn eval(&self, t: f64) -> Result<StateVector> {
        self.f.eval(t)
    }

    fn derivative(&self, k: usize, t: f64) -> Option<Result<StateVector>> {
        match k {
            0 => Some(self.f.eval(t)),
            1 => Some(self.d.eval(t)),
            _ => self.d.derivative(k - 1, t),
        }
    }

    fn is_zero(&self) -> bool {
        self.f.is_zero()
    }

    fn polynomial_coeffs(&self) -> Option<&[StateVector]> {
        self.f.polynomial_coeffs()
    }
}
