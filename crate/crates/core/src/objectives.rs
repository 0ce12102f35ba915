//! Private local objectives `fᵢ`, the gradient sector transform
//! `ψ(x) = x − ∇f(x)/ℓ`, and the network-wide optimizer.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_sorted, Mat, Vector};

/// A strongly convex, continuously differentiable local objective with a
/// globally Lipschitz gradient.
pub trait LocalObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;

    /// Closed-form access for quadratics; `None` for general objectives.
    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        None
    }
}

/// `f(x) = ½ (x − c)ᵀ Q (x − c)` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    curvature: Mat,
    center: Vector,
}

impl QuadraticObjective {
    pub fn new(curvature: Mat, center: Vector) -> Result<Self> {
        let n = center.len();
        if curvature.nrows() != n || curvature.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "curvature is {}x{}, center has length {n}",
                curvature.nrows(),
                curvature.ncols()
            )));
        }
        if curvature
            .iter()
            .chain(center.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("quadratic objective"));
        }
        if (&curvature - curvature.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidConstants("curvature is not symmetric".into()));
        }
        let (eig, _) = sym_eigen_sorted(&curvature);
        if eig[0] <= 0.0 {
            return Err(Error::InvalidConstants(format!(
                "curvature is not positive definite (smallest eigenvalue {:.3e})",
                eig[0]
            )));
        }
        Ok(Self { curvature, center })
    }

    /// `(s/2)‖x − c‖²`.
    pub fn isotropic(scale: f64, center: Vector) -> Result<Self> {
        let n = center.len();
        Self::new(Mat::identity(n, n) * scale, center)
    }

    pub fn curvature(&self) -> &Mat {
        &self.curvature
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    /// Smallest and largest eigenvalues of the curvature.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        let (eig, _) = sym_eigen_sorted(&self.curvature);
        (eig[0], *eig.last().unwrap())
    }
}

impl LocalObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.center;
        0.5 * d.dot(&(&self.curvature * &d))
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.curvature * (x - &self.center)
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        Some(self)
    }
}

/// Objective built from closures, for non-quadratic experiments.
pub struct CustomObjective {
    dim: usize,
    value: Box<dyn Fn(&Vector) -> f64 + Send + Sync>,
    gradient: Box<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

impl CustomObjective {
    pub fn new(
        dim: usize,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl LocalObjective for CustomObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
}

/// The `N` local objectives together with the shared strong-convexity
/// modulus `μ` and gradient Lipschitz constant `ℓ`.
#[derive(Clone)]
pub struct ObjectiveSet {
    locals: Vec<Arc<dyn LocalObjective>>,
    mu: f64,
    ell: f64,
}

impl fmt::Debug for ObjectiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectiveSet")
            .field("agents", &self.locals.len())
            .field("mu", &self.mu)
            .field("ell", &self.ell)
            .finish()
    }
}

/// Iteration budget for the gradient-descent optimizer of general objectives.
const DESCENT_MAX_ITERS: usize = 1_000_000;
pub const OPTIMALITY_TOL: f64 = 1e-10;

impl ObjectiveSet {
    /// All-quadratic set. `μ` and `ℓ` default to the extreme curvature
    /// eigenvalues; declared values must bracket them.
    pub fn quadratic(
        locals: Vec<QuadraticObjective>,
        mu: Option<f64>,
        ell: Option<f64>,
    ) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::InvalidConstants("no objectives".into()));
        }
        let (lo, hi) = locals
            .iter()
            .map(QuadraticObjective::eigen_bounds)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            });
        let mu = mu.unwrap_or(lo);
        let ell = ell.unwrap_or(hi);
        if mu > lo * (1.0 + 1e-12) {
            return Err(Error::InvalidConstants(format!(
                "declared mu = {mu} exceeds the smallest curvature eigenvalue {lo}"
            )));
        }
        if ell < hi * (1.0 - 1e-12) {
            return Err(Error::InvalidConstants(format!(
                "declared ell = {ell} is below the largest curvature eigenvalue {hi}"
            )));
        }
        let locals = locals
            .into_iter()
            .map(|q| Arc::new(q) as Arc<dyn LocalObjective>)
            .collect();
        Self::general(locals, mu, ell)
    }

    /// General objectives with user-declared constants (`0 < μ ≤ ℓ`).
    pub fn general(locals: Vec<Arc<dyn LocalObjective>>, mu: f64, ell: f64) -> Result<Self> {
        if !(mu.is_finite() && ell.is_finite() && mu > 0.0 && mu <= ell) {
            return Err(Error::InvalidConstants(format!(
                "need 0 < mu <= ell, got mu = {mu}, ell = {ell}"
            )));
        }
        Self::unchecked(locals, mu, ell)
    }

    /// Skips the `μ ≤ ℓ` and curvature checks. Meant for falsification
    /// experiments with deliberately wrong constants.
    pub fn unchecked(locals: Vec<Arc<dyn LocalObjective>>, mu: f64, ell: f64) -> Result<Self> {
        let n = locals.first().map(|f| f.dim()).unwrap_or(0);
        if locals.iter().any(|f| f.dim() != n) {
            return Err(Error::DimensionMismatch(
                "local objectives disagree on the state dimension".into(),
            ));
        }
        Ok(Self { locals, mu, ell })
    }

    pub fn num_agents(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.locals[0].dim()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Sector bound of ψ, `μ′ = (ℓ − μ)/ℓ`.
    pub fn mu_prime(&self) -> f64 {
        (self.ell - self.mu) / self.ell
    }

    pub fn local(&self, i: usize) -> &dyn LocalObjective {
        self.locals[i].as_ref()
    }

    /// `∇fᵢ(x)` for agent `i`.
    pub fn gradient(&self, i: usize, x: &Vector) -> Result<Vector> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient input"));
        }
        Ok(self.locals[i].gradient(x))
    }

    /// Stacked `∇f(x) = [∇f₁(x₁); …; ∇f_N(x_N)]`.
    pub fn stacked_gradient(&self, x: &Vector) -> Result<Vector> {
        let n = self.dim();
        self.check_stacked(x)?;
        let mut out = Vector::zeros(x.len());
        for (i, f) in self.locals.iter().enumerate() {
            let xi = x.rows(i * n, n).into_owned();
            out.rows_mut(i * n, n).copy_from(&f.gradient(&xi));
        }
        Ok(out)
    }

    /// `ψ(x) = x − ∇f(x)/ℓ`, stacked agent-wise.
    pub fn psi_transform(&self, x: &Vector) -> Result<Vector> {
        Ok(x - self.stacked_gradient(x)? / self.ell)
    }

    /// `Σᵢ fᵢ(xᵢ)` for a stacked state.
    pub fn total_value(&self, x: &Vector) -> f64 {
        let n = self.dim();
        self.locals
            .iter()
            .enumerate()
            .map(|(i, f)| f.value(&x.rows(i * n, n).into_owned()))
            .sum()
    }

    /// `f(z) = Σᵢ fᵢ(z)` at a common point.
    pub fn global_value(&self, z: &Vector) -> f64 {
        self.locals.iter().map(|f| f.value(z)).sum()
    }

    /// `Σᵢ ∇fᵢ(z)` at a common point.
    pub fn global_gradient(&self, z: &Vector) -> Vector {
        self.locals
            .iter()
            .fold(Vector::zeros(z.len()), |acc, f| acc + f.gradient(z))
    }

    /// Unique minimiser of `Σᵢ fᵢ(z)`.
    pub fn solve_global_optimizer(&self) -> Result<Vector> {
        let quadratics: Option<Vec<&QuadraticObjective>> =
            self.locals.iter().map(|f| f.as_quadratic()).collect();
        let n = self.dim();
        if let Some(qs) = quadratics {
            let mut h = Mat::zeros(n, n);
            let mut rhs = Vector::zeros(n);
            for q in qs {
                h += q.curvature();
                rhs += q.curvature() * q.center();
            }
            let chol = h
                .cholesky()
                .ok_or_else(|| Error::NumericalFailure("summed curvature not PD".into()))?;
            let z = chol.solve(&rhs);
            // One Newton refinement pass tightens the first-order residual.
            let refined = &z - chol.solve(&self.global_gradient(&z));
            return Ok(refined);
        }

        // Σ∇fᵢ is (Nμ)-strongly monotone and (Nℓ)-Lipschitz.
        let step = 1.0 / (self.num_agents() as f64 * self.ell);
        let mut z = Vector::zeros(n);
        let mut residual = f64::INFINITY;
        for _ in 0..DESCENT_MAX_ITERS {
            let g = self.global_gradient(&z);
            residual = g.norm();
            if residual <= OPTIMALITY_TOL {
                return Ok(z);
            }
            z -= g * step;
        }
        Err(Error::NoConvergence {
            iterations: DESCENT_MAX_ITERS,
            residual,
        })
    }

    /// Evaluates the incremental sector inequality of ψ on sample pairs
    /// `(x, x′)` of stacked states and reports the worst violation.
    pub fn verify_psi_sector(&self, samples: &[(Vector, Vector)]) -> Result<PsiSectorReport> {
        let mu_prime = self.mu_prime();
        let mut max_violation = f64::NEG_INFINITY;
        for (x, x2) in samples {
            let dpsi = self.psi_transform(x2)? - self.psi_transform(x)?;
            let dx = x2 - x;
            let lhs = dpsi.dot(&(&dpsi - &dx * mu_prime));
            max_violation = max_violation.max(lhs);
        }
        Ok(PsiSectorReport {
            samples: samples.len(),
            mu_prime,
            max_violation: max_violation.max(0.0),
        })
    }

    fn check_stacked(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() * self.num_agents() {
            return Err(Error::DimensionMismatch(format!(
                "stacked state has length {}, expected {}",
                x.len(),
                self.dim() * self.num_agents()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stacked state"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSectorReport {
    pub samples: usize,
    pub mu_prime: f64,
    /// `max(0, max LHS)` over the samples.
    pub max_violation: f64,
}

/// The five isotropic quadratics of the reference scenario, centred on the
/// segment from `(−1, 0)` to `(0, 1)`.
pub fn reference_quadratics() -> Vec<QuadraticObjective> {
    [
        (-1.0, 0.0),
        (-0.75, 0.25),
        (-0.5, 0.5),
        (-0.25, 0.75),
        (0.0, 1.0),
    ]
    .into_iter()
    .map(|(a, b)| QuadraticObjective::isotropic(1.1, Vector::from_vec(vec![a, b])).unwrap())
    .collect()
}
