use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::pod::{ReducedJacobianMode, ReducedState, ReducedSystem};

/// What the trainer needs from a reduced solver at one row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEval {
    /// `X(a, b)`.
    pub x: Vec<f64>,
    /// `R_red2 = P a`; empty without a constraint.
    pub constraint: Vec<f64>,
}

/// Jacobians at one row with respect to `Q = [a | b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedJacobian {
    pub dx: DenseMatrix,
    /// `[P | 0]`, absent without a constraint.
    pub dconstraint: Option<DenseMatrix>,
}

/// Source of reduced right-hand sides and Jacobians. Implemented in-process
/// by [`ReducedSystemSet`] and remotely by the daemon client.
pub trait ReducedSolver {
    fn evaluate(&mut self, states: &[ReducedState]) -> Result<Vec<ReducedEval>>;
    fn jacobians(&mut self, states: &[ReducedState], fd_eps: f64) -> Result<Vec<ReducedJacobian>>;
}

impl<T: ReducedSolver + ?Sized> ReducedSolver for &mut T {
    fn evaluate(&mut self, states: &[ReducedState]) -> Result<Vec<ReducedEval>> {
        (**self).evaluate(states)
    }

    fn jacobians(&mut self, states: &[ReducedState], fd_eps: f64) -> Result<Vec<ReducedJacobian>> {
        (**self).jacobians(states, fd_eps)
    }
}

/// Reduced systems sharing one basis, one per viscosity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystemSet {
    pub systems: Vec<ReducedSystem>,
}

impl ReducedSystemSet {
    pub fn new(systems: Vec<ReducedSystem>) -> Result<Self> {
        let first = systems.first().ok_or_else(|| Error::invalid("need at least one reduced system"))?;
        if systems.iter().any(|s| s.n_u() != first.n_u() || s.n_p() != first.n_p()) {
            return Err(Error::invalid("reduced systems differ in size"));
        }
        Ok(ReducedSystemSet { systems })
    }

    /// The system whose viscosity matches `nu`.
    pub fn for_nu(&self, nu: f64) -> Result<&ReducedSystem> {
        self.systems
            .iter()
            .find(|s| (s.nu - nu).abs() <= 1e-12 * s.nu.abs().max(1e-300))
            .ok_or_else(|| Error::invalid(format!("no reduced system for nu = {nu}")))
    }

    pub fn n_u(&self) -> usize {
        self.systems[0].n_u()
    }

    pub fn n_p(&self) -> usize {
        self.systems[0].n_p()
    }
}

impl ReducedSolver for ReducedSystemSet {
    fn evaluate(&mut self, states: &[ReducedState]) -> Result<Vec<ReducedEval>> {
        states.iter().map(|s| eval_one(self.for_nu(s.nu)?, s)).collect()
    }

    fn jacobians(&mut self, states: &[ReducedState], fd_eps: f64) -> Result<Vec<ReducedJacobian>> {
        states.iter().map(|s| jacobian_one(self.for_nu(s.nu)?, s, fd_eps)).collect()
    }
}

fn eval_one(sys: &ReducedSystem, s: &ReducedState) -> Result<ReducedEval> {
    let x = sys.rhs(s)?;
    let constraint = match &sys.p {
        Some(p) => p.matvec(&s.a)?,
        None => Vec::new(),
    };
    Ok(ReducedEval { x, constraint })
}

fn jacobian_one(sys: &ReducedSystem, s: &ReducedState, fd_eps: f64) -> Result<ReducedJacobian> {
    let dx = sys.rhs_jacobian(s, ReducedJacobianMode::Fd(fd_eps))?;
    let dconstraint = sys.p.as_ref().map(|p| {
        let (np, nu) = (p.rows(), p.cols());
        let mut m = DenseMatrix::zeros(np, nu + sys.n_p());
        for i in 0..np {
            m.row_mut(i)[..nu].copy_from_slice(p.row(i));
        }
        m
    });
    Ok(ReducedJacobian { dx, dconstraint })
}
