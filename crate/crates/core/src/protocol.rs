//! The dynamic coordination protocol
//!
//! ```text
//! uᵢ = K₁xᵢ + K₂vᵢ + K₃ζᵢ + K₄ηᵢ
//! v̇ᵢ = Σⱼ aᵢⱼ(xⱼ − xᵢ)
//! ζ̇ᵢ = Σⱼ aᵢⱼ(xⱼ − xᵢ) + vᵢ − ∇fᵢ(xᵢ)
//! η̇ᵢ = xᵢ − ζᵢ
//! ```
//!
//! driving agents `ẋᵢ = Axᵢ + B₀φᵢ(uᵢ, t)`, together with the steady-state
//! reference point and the Laplacian-diagonalised block form of the shifted
//! closed loop.

use crate::error::{Error, Result};
use crate::graph::{LaplacianSpectrum, NetworkGraph};
use crate::linalg::{
    block_matrix, is_stabilizable, kron_apply, kron_apply_transpose, min_norm_solve, rank, Mat,
    Vector,
};
use crate::nonlinearity::{AgentNonlinearities, SectorBounds};
use crate::objectives::ObjectiveSet;

/// Tolerance for the rank and stabilizability tests on `(A, B₀)`.
pub const MODEL_TOL: f64 = 1e-8;
/// Acceptable residual of each steady-state equation.
pub const REFERENCE_TOL: f64 = 1e-8;

/// Homogeneous agent dynamics `ẋ = Ax + B₀φ(u, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    a: Mat,
    b0: Mat,
}

impl AgentModel {
    /// Requires `(A, B₀)` stabilizable and `B₀` of full row rank.
    pub fn new(a: Mat, b0: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b0.nrows() != n || n == 0 || b0.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B0 is {}x{}",
                a.nrows(),
                a.ncols(),
                b0.nrows(),
                b0.ncols()
            )));
        }
        if a.iter().chain(b0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("agent model"));
        }
        if rank(&b0, MODEL_TOL) < n {
            return Err(Error::InvalidModel("B0 must have full row rank".into()));
        }
        if !is_stabilizable(&a, &b0, MODEL_TOL) {
            return Err(Error::InvalidModel("(A, B0) is not stabilizable".into()));
        }
        Ok(Self { a, b0 })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b0(&self) -> &Mat {
        &self.b0
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b0.ncols()
    }

    /// Scaled input matrix `B = βB₀`.
    pub fn input_matrix(&self, bounds: &SectorBounds) -> Mat {
        &self.b0 * bounds.beta()
    }
}

/// Protocol gains `K₁ … K₄`, each `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k1: Mat,
    pub k2: Mat,
    pub k3: Mat,
    pub k4: Mat,
}

impl GainSet {
    pub fn new(k1: Mat, k2: Mat, k3: Mat, k4: Mat) -> Result<Self> {
        let shape = k1.shape();
        if [&k2, &k3, &k4].iter().any(|k| k.shape() != shape) {
            return Err(Error::DimensionMismatch(
                "K1..K4 must share one shape".into(),
            ));
        }
        if [&k1, &k2, &k3, &k4]
            .iter()
            .any(|k| k.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("gains"));
        }
        Ok(Self { k1, k2, k3, k4 })
    }

    /// Splits `K = [K₁ K₂ K₃ K₄]` (`m × 4n`).
    pub fn from_stacked(k: &Mat) -> Result<Self> {
        if !k.ncols().is_multiple_of(4) || k.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "stacked gain has {} columns, expected a multiple of 4",
                k.ncols()
            )));
        }
        let n = k.ncols() / 4;
        let part = |i: usize| k.columns(i * n, n).into_owned();
        Self::new(part(0), part(1), part(2), part(3))
    }

    pub fn state_dim(&self) -> usize {
        self.k1.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.k1.nrows()
    }

    /// `K = [K₁ K₂ K₃ K₄]`.
    pub fn stacked(&self) -> Mat {
        block_matrix(&[vec![
            self.k1.clone(),
            self.k2.clone(),
            self.k3.clone(),
            self.k4.clone(),
        ]])
    }

    /// `Ǩ = [K₁ K₃ K₄]`, acting on the consensus block where `v` is absent.
    pub fn consensus_block(&self) -> Mat {
        block_matrix(&[vec![self.k1.clone(), self.k3.clone(), self.k4.clone()]])
    }

    pub fn check_model(&self, model: &AgentModel) -> Result<()> {
        if self.state_dim() != model.state_dim() || self.input_dim() != model.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "gains are {}x{}, model needs {}x{}",
                self.input_dim(),
                self.state_dim(),
                model.input_dim(),
                model.state_dim()
            )));
        }
        Ok(())
    }
}

/// Agent-stacked plant and controller states.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub x: Vector,
    pub v: Vector,
    pub zeta: Vector,
    pub eta: Vector,
}

impl ClosedLoopState {
    /// Plant state `x` with zero controller states.
    pub fn from_plant(x: Vector) -> Self {
        let len = x.len();
        Self {
            x,
            v: Vector::zeros(len),
            zeta: Vector::zeros(len),
            eta: Vector::zeros(len),
        }
    }

    /// `[x; v; ζ; η]`.
    pub fn to_vector(&self) -> Vector {
        let len = self.x.len();
        let mut out = Vector::zeros(4 * len);
        for (k, part) in [&self.x, &self.v, &self.zeta, &self.eta]
            .into_iter()
            .enumerate()
        {
            out.rows_mut(k * len, len).copy_from(part);
        }
        out
    }

    pub fn from_vector(s: &Vector) -> Self {
        let len = s.len() / 4;
        let part = |k: usize| s.rows(k * len, len).into_owned();
        Self {
            x: part(0),
            v: part(1),
            zeta: part(2),
            eta: part(3),
        }
    }

    /// `Σᵢ vᵢ`, conserved by the protocol.
    pub fn v_sum(&self, n: usize) -> Vector {
        let agents = self.v.len() / n;
        (0..agents).fold(Vector::zeros(n), |acc, i| acc + self.v.rows(i * n, n))
    }
}

fn agent<'v>(x: &'v Vector, i: usize, n: usize) -> nalgebra::DVectorView<'v, f64> {
    x.rows(i * n, n)
}

/// Stacked control input; agent `i` reads only its own controller and plant state.
pub fn control_input(gains: &GainSet, state: &ClosedLoopState) -> Result<Vector> {
    let n = gains.state_dim();
    let m = gains.input_dim();
    let len = state.x.len();
    if !len.is_multiple_of(n)
        || [&state.v, &state.zeta, &state.eta]
            .iter()
            .any(|p| p.len() != len)
    {
        return Err(Error::DimensionMismatch(format!(
            "state blocks do not match gain state dimension {n}"
        )));
    }
    let agents = len / n;
    let mut u = Vector::zeros(agents * m);
    for i in 0..agents {
        let ui = &gains.k1 * agent(&state.x, i, n)
            + &gains.k2 * agent(&state.v, i, n)
            + &gains.k3 * agent(&state.zeta, i, n)
            + &gains.k4 * agent(&state.eta, i, n);
        u.rows_mut(i * m, m).copy_from(&ui);
    }
    Ok(u)
}

/// Controller dynamics `(v̇, ζ̇, η̇)`. Agent `i` reads its own state, its
/// neighbours' plant states, and only its own objective.
pub fn controller_derivatives(
    graph: &NetworkGraph,
    objectives: &ObjectiveSet,
    state: &ClosedLoopState,
) -> Result<(Vector, Vector, Vector)> {
    let agents = graph.num_agents();
    let len = state.x.len();
    if agents != objectives.num_agents() || len != agents * objectives.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{agents} graph agents, {} objectives of dimension {}, state length {len}",
            objectives.num_agents(),
            objectives.dim()
        )));
    }
    let n = objectives.dim();
    let mut v_dot = Vector::zeros(len);
    let mut zeta_dot = Vector::zeros(len);
    let mut eta_dot = Vector::zeros(len);
    for i in 0..agents {
        let xi = agent(&state.x, i, n).into_owned();
        let mut diffusion = Vector::zeros(n);
        for &(j, a_ij) in graph.neighbors(i) {
            diffusion += (agent(&state.x, j, n) - &xi) * a_ij;
        }
        let grad = objectives.gradient(i, &xi)?;
        zeta_dot
            .rows_mut(i * n, n)
            .copy_from(&(&diffusion + agent(&state.v, i, n) - grad));
        v_dot.rows_mut(i * n, n).copy_from(&diffusion);
        eta_dot
            .rows_mut(i * n, n)
            .copy_from(&(&xi - agent(&state.zeta, i, n)));
    }
    Ok((v_dot, zeta_dot, eta_dot))
}

/// Everything needed to evaluate the networked closed loop.
#[derive(Debug, Clone, Copy)]
pub struct CoordinationSystem<'a> {
    pub model: &'a AgentModel,
    pub nonlinearities: &'a AgentNonlinearities,
    pub graph: &'a NetworkGraph,
    pub objectives: &'a ObjectiveSet,
    pub gains: &'a GainSet,
}

impl<'a> CoordinationSystem<'a> {
    pub fn new(
        model: &'a AgentModel,
        nonlinearities: &'a AgentNonlinearities,
        graph: &'a NetworkGraph,
        objectives: &'a ObjectiveSet,
        gains: &'a GainSet,
    ) -> Result<Self> {
        gains.check_model(model)?;
        let agents = graph.num_agents();
        if nonlinearities.num_agents() != agents || objectives.num_agents() != agents {
            return Err(Error::DimensionMismatch(format!(
                "graph has {agents} agents, {} nonlinearities, {} objectives",
                nonlinearities.num_agents(),
                objectives.num_agents()
            )));
        }
        if objectives.dim() != model.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "objectives act on dimension {}, agents have {}",
                objectives.dim(),
                model.state_dim()
            )));
        }
        Ok(Self {
            model,
            nonlinearities,
            graph,
            objectives,
            gains,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.graph.num_agents()
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn bounds(&self) -> SectorBounds {
        self.nonlinearities.bounds()
    }

    /// Length of the full closed-loop state `[x; v; ζ; η]`.
    pub fn closed_loop_dim(&self) -> usize {
        4 * self.num_agents() * self.state_dim()
    }

    /// Time derivative of the closed loop, returned together with the input `u`.
    pub fn derivative_with_input(&self, t: f64, s: &Vector) -> Result<(Vector, Vector)> {
        let state = ClosedLoopState::from_vector(s);
        let u = control_input(self.gains, &state)?;
        let (v_dot, zeta_dot, eta_dot) =
            controller_derivatives(self.graph, self.objectives, &state)?;
        let n = self.state_dim();
        let m = self.input_dim();
        let mut x_dot = Vector::zeros(state.x.len());
        for i in 0..self.num_agents() {
            let ui = u.rows(i * m, m).into_owned();
            let actuated = self.nonlinearities.agent(i).apply_unchecked(&ui, t);
            let xi = self.model.a() * agent(&state.x, i, n) + self.model.b0() * actuated;
            x_dot.rows_mut(i * n, n).copy_from(&xi);
        }
        let ds = ClosedLoopState {
            x: x_dot,
            v: v_dot,
            zeta: zeta_dot,
            eta: eta_dot,
        };
        Ok((ds.to_vector(), u))
    }

    pub fn derivative(&self, t: f64, s: &Vector) -> Result<Vector> {
        Ok(self.derivative_with_input(t, s)?.0)
    }
}

/// Constant solution `(x̄, v̄, ζ̄, η̄, ū)` of the steady-state equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub optimizer: Vector,
    pub x_bar: Vector,
    pub v_bar: Vector,
    pub zeta_bar: Vector,
    pub eta_bar: Vector,
    pub u_bar: Vector,
}

/// Norms of the five steady-state residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceResiduals {
    pub plant: f64,
    pub consensus: f64,
    pub gradient: f64,
    pub integrator: f64,
    pub input: f64,
}

impl ReferenceResiduals {
    pub fn max(&self) -> f64 {
        [
            self.plant,
            self.consensus,
            self.gradient,
            self.integrator,
            self.input,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl ReferencePoint {
    pub fn as_state(&self) -> ClosedLoopState {
        ClosedLoopState {
            x: self.x_bar.clone(),
            v: self.v_bar.clone(),
            zeta: self.zeta_bar.clone(),
            eta: self.eta_bar.clone(),
        }
    }

    pub fn residuals(
        &self,
        model: &AgentModel,
        bounds: &SectorBounds,
        laplacian: &Mat,
        objectives: &ObjectiveSet,
        gains: &GainSet,
    ) -> Result<ReferenceResiduals> {
        let n = model.state_dim();
        let m = model.input_dim();
        let agents = laplacian.nrows();
        let b = model.input_matrix(bounds);
        let mut plant: f64 = 0.0;
        for i in 0..agents {
            let r = model.a() * agent(&self.x_bar, i, n) + &b * self.u_bar.rows(i * m, m);
            plant = plant.hypot(r.norm());
        }
        let lx = kron_apply(laplacian, &self.x_bar, n);
        let grad = objectives.stacked_gradient(&self.x_bar)?;
        let u = control_input(gains, &self.as_state())?;
        Ok(ReferenceResiduals {
            plant,
            consensus: lx.norm(),
            gradient: (-&lx + &self.v_bar - grad).norm(),
            integrator: (&self.x_bar - &self.zeta_bar).norm(),
            input: (&self.u_bar - u).norm(),
        })
    }
}

pub fn solve_reference_point(
    model: &AgentModel,
    bounds: &SectorBounds,
    objectives: &ObjectiveSet,
    gains: &GainSet,
) -> Result<ReferencePoint> {
    gains.check_model(model)?;
    let n = model.state_dim();
    let m = model.input_dim();
    let agents = objectives.num_agents();
    let x_star = objectives.solve_global_optimizer()?;

    let b = model.input_matrix(bounds);
    let (u_i, res) = min_norm_solve(&b, &(-(model.a() * &x_star)));
    if res > REFERENCE_TOL {
        return Err(Error::SingularReference(format!(
            "B u = -A x* is inconsistent (residual {res:.3e})"
        )));
    }

    let mut x_bar = Vector::zeros(agents * n);
    let mut v_bar = Vector::zeros(agents * n);
    let mut eta_bar = Vector::zeros(agents * n);
    let mut u_bar = Vector::zeros(agents * m);
    for i in 0..agents {
        x_bar.rows_mut(i * n, n).copy_from(&x_star);
        let vi = objectives.gradient(i, &x_star)?;
        let rhs = &u_i - &gains.k1 * &x_star - &gains.k2 * &vi - &gains.k3 * &x_star;
        let (eta_i, res) = min_norm_solve(&gains.k4, &rhs);
        if res > REFERENCE_TOL {
            return Err(Error::SingularReference(format!(
                "K4 eta = u - K1 x* - K2 v - K3 x* has no solution for agent {} (residual {res:.3e})",
                i + 1
            )));
        }
        v_bar.rows_mut(i * n, n).copy_from(&vi);
        eta_bar.rows_mut(i * n, n).copy_from(&eta_i);
        u_bar.rows_mut(i * m, m).copy_from(&u_i);
    }
    Ok(ReferencePoint {
        optimizer: x_star,
        zeta_bar: x_bar.clone(),
        x_bar,
        v_bar,
        eta_bar,
        u_bar,
    })
}

/// Coefficients `(𝒜, ℬ, ℒ)` of one diagonalised block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub a: Mat,
    pub b: Mat,
    pub l: Mat,
}

/// Consensus block on `(x, ζ, η)`; its `v` component vanishes identically.
pub fn consensus_block_system(a: &Mat, b: &Mat, ell: f64) -> BlockSystem {
    let n = a.nrows();
    let m = b.ncols();
    let i = Mat::identity(n, n);
    let z = Mat::zeros(n, n);
    BlockSystem {
        a: block_matrix(&[
            vec![a.clone(), z.clone(), z.clone()],
            vec![&i * -ell, z.clone(), z.clone()],
            vec![i.clone(), -&i, z.clone()],
        ]),
        b: block_matrix(&[
            vec![b.clone()],
            vec![Mat::zeros(n, m)],
            vec![Mat::zeros(n, m)],
        ]),
        l: block_matrix(&[vec![z.clone()], vec![&i * -ell], vec![z]]),
    }
}

/// Disagreement block on `(x, v, ζ, η)` for Laplacian eigenvalue `λ`.
pub fn disagreement_block_system(a: &Mat, b: &Mat, ell: f64, lambda: f64) -> BlockSystem {
    let n = a.nrows();
    let m = b.ncols();
    let i = Mat::identity(n, n);
    let z = Mat::zeros(n, n);
    let zb = Mat::zeros(n, m);
    BlockSystem {
        a: block_matrix(&[
            vec![a.clone(), z.clone(), z.clone(), z.clone()],
            vec![&i * -lambda, z.clone(), z.clone(), z.clone()],
            vec![&i * -(lambda + ell), i.clone(), z.clone(), z.clone()],
            vec![i.clone(), z.clone(), -&i, z.clone()],
        ]),
        b: block_matrix(&[
            vec![b.clone()],
            vec![zb.clone()],
            vec![zb.clone()],
            vec![zb],
        ]),
        l: block_matrix(&[vec![z.clone()], vec![z.clone()], vec![&i * -ell], vec![z]]),
    }
}

/// The consensus block and one disagreement block per eigenvalue `λ₂ … λ_N`.
#[derive(Debug, Clone)]
pub struct TransformedBlocks {
    pub first: BlockSystem,
    pub others: Vec<(f64, BlockSystem)>,
}

pub fn assemble_transformed_blocks(
    model: &AgentModel,
    bounds: &SectorBounds,
    spectrum: &LaplacianSpectrum,
    objectives: &ObjectiveSet,
) -> Result<TransformedBlocks> {
    if objectives.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch(
            "objective and model state dimensions differ".into(),
        ));
    }
    if spectrum.lambda2() <= 0.0 {
        return Err(Error::DisconnectedGraph {
            lambda2: spectrum.lambda2(),
        });
    }
    let b = model.input_matrix(bounds);
    let ell = objectives.ell();
    Ok(TransformedBlocks {
        first: consensus_block_system(model.a(), &b, ell),
        others: spectrum
            .nonzero_eigenvalues()
            .iter()
            .map(|&lambda| {
                (
                    lambda,
                    disagreement_block_system(model.a(), &b, ell, lambda),
                )
            })
            .collect(),
    })
}

/// Shifted closed loop in Laplacian eigen-coordinates,
/// `ξ = (ξ₁, ξ₂, …, ξ_N)` with `ξ₁ ∈ ℝ³ⁿ` and `ξᵢ ∈ ℝ⁴ⁿ`.
#[derive(Debug, Clone)]
pub struct TransformedSystem<'a> {
    system: CoordinationSystem<'a>,
    spectrum: &'a LaplacianSpectrum,
    reference: &'a ReferencePoint,
    blocks: TransformedBlocks,
    first_closed: Mat,
    others_closed: Vec<Mat>,
}

impl<'a> TransformedSystem<'a> {
    pub fn new(
        system: CoordinationSystem<'a>,
        spectrum: &'a LaplacianSpectrum,
        reference: &'a ReferencePoint,
    ) -> Result<Self> {
        if spectrum.num_agents() != system.num_agents() {
            return Err(Error::DimensionMismatch(
                "spectrum and system disagree on the number of agents".into(),
            ));
        }
        let bounds = system.bounds();
        let blocks =
            assemble_transformed_blocks(system.model, &bounds, spectrum, system.objectives)?;
        let first_closed = &blocks.first.a + &blocks.first.b * system.gains.consensus_block();
        let k = system.gains.stacked();
        let others_closed = blocks
            .others
            .iter()
            .map(|(_, blk)| &blk.a + &blk.b * &k)
            .collect();
        Ok(Self {
            system,
            spectrum,
            reference,
            blocks,
            first_closed,
            others_closed,
        })
    }

    pub fn blocks(&self) -> &TransformedBlocks {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        let n = self.system.state_dim();
        3 * n + 4 * n * (self.system.num_agents() - 1)
    }

    /// Transformed components `(x, v, ζ, η)` in eigen-coordinates, `v₁ ≡ 0`.
    fn unpack(&self, xi: &Vector) -> [Vector; 4] {
        let n = self.system.state_dim();
        let agents = self.system.num_agents();
        let mut parts = [
            Vector::zeros(agents * n),
            Vector::zeros(agents * n),
            Vector::zeros(agents * n),
            Vector::zeros(agents * n),
        ];
        parts[0].rows_mut(0, n).copy_from(&xi.rows(0, n));
        parts[2].rows_mut(0, n).copy_from(&xi.rows(n, n));
        parts[3].rows_mut(0, n).copy_from(&xi.rows(2 * n, n));
        for i in 1..agents {
            let off = 3 * n + 4 * n * (i - 1);
            for (k, part) in parts.iter_mut().enumerate() {
                part.rows_mut(i * n, n).copy_from(&xi.rows(off + k * n, n));
            }
        }
        parts
    }

    fn pack(&self, parts: &[Vector; 4]) -> Vector {
        let n = self.system.state_dim();
        let agents = self.system.num_agents();
        let mut xi = Vector::zeros(self.dim());
        xi.rows_mut(0, n).copy_from(&parts[0].rows(0, n));
        xi.rows_mut(n, n).copy_from(&parts[2].rows(0, n));
        xi.rows_mut(2 * n, n).copy_from(&parts[3].rows(0, n));
        for i in 1..agents {
            let off = 3 * n + 4 * n * (i - 1);
            for (k, part) in parts.iter().enumerate() {
                xi.rows_mut(off + k * n, n).copy_from(&part.rows(i * n, n));
            }
        }
        xi
    }

    /// Shift by the reference point and rotate with `Uᵀ ⊗ I`. The consensus
    /// component of `v` is dropped; it is zero whenever `Σᵢvᵢ = 0`.
    pub fn project(&self, state: &ClosedLoopState) -> Vector {
        let n = self.system.state_dim();
        let u = &self.spectrum.basis;
        let r = self.reference;
        let parts = [
            kron_apply_transpose(u, &(&state.x - &r.x_bar), n),
            kron_apply_transpose(u, &(&state.v - &r.v_bar), n),
            kron_apply_transpose(u, &(&state.zeta - &r.zeta_bar), n),
            kron_apply_transpose(u, &(&state.eta - &r.eta_bar), n),
        ];
        self.pack(&parts)
    }

    /// Inverse of [`project`](Self::project) on the `Σᵢvᵢ = 0` subspace.
    pub fn lift(&self, xi: &Vector) -> ClosedLoopState {
        let n = self.system.state_dim();
        let u = &self.spectrum.basis;
        let r = self.reference;
        let [bx, bv, bz, be] = self.unpack(xi);
        ClosedLoopState {
            x: kron_apply(u, &bx, n) + &r.x_bar,
            v: kron_apply(u, &bv, n) + &r.v_bar,
            zeta: kron_apply(u, &bz, n) + &r.zeta_bar,
            eta: kron_apply(u, &be, n) + &r.eta_bar,
        }
    }

    /// Exact transformed dynamics, including the fictitious input
    /// `w⋆(t) = (Uᵀ⊗I)φ′(ū, t)`. Since `Ax̄ + Bū = 0`, the shifted plant sees
    /// `−Bφ′(ū, t)`, so `w⋆` enters with the same sign as `w`.
    pub fn shifted_transformed_derivative(&self, t: f64, xi: &Vector) -> Result<Vector> {
        if xi.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "transformed state has length {}, expected {}",
                xi.len(),
                self.dim()
            )));
        }
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        let agents = self.system.num_agents();
        let basis = &self.spectrum.basis;
        let r = self.reference;
        let nl = self.system.nonlinearities;

        let [bx, bv, bz, be] = self.unpack(xi);
        let gains = self.system.gains;
        let mut bu = Vector::zeros(agents * m);
        for i in 0..agents {
            let ui = &gains.k1 * bx.rows(i * n, n)
                + &gains.k2 * bv.rows(i * n, n)
                + &gains.k3 * bz.rows(i * n, n)
                + &gains.k4 * be.rows(i * n, n);
            bu.rows_mut(i * m, m).copy_from(&ui);
        }
        let x = kron_apply(basis, &bx, n) + &r.x_bar;
        let u = kron_apply(basis, &bu, m) + &r.u_bar;

        let res_ref = nl.residual_stacked(&r.u_bar, t, m);
        let w = kron_apply_transpose(basis, &(nl.residual_stacked(&u, t, m) - &res_ref), m);
        let w_star = kron_apply_transpose(basis, &res_ref, m);
        let objectives = self.system.objectives;
        let g = kron_apply_transpose(
            basis,
            &(objectives.psi_transform(&x)? - objectives.psi_transform(&r.x_bar)?),
            n,
        );

        let mut out = Vector::zeros(self.dim());
        let first = &self.blocks.first;
        let xi1 = xi.rows(0, 3 * n);
        let d1 = &self.first_closed * xi1
            - &first.b * (w.rows(0, m) + w_star.rows(0, m))
            - &first.l * g.rows(0, n);
        out.rows_mut(0, 3 * n).copy_from(&d1);
        for i in 1..agents {
            let off = 3 * n + 4 * n * (i - 1);
            let (_, blk) = &self.blocks.others[i - 1];
            let di = &self.others_closed[i - 1] * xi.rows(off, 4 * n)
                - &blk.b * (w.rows(i * m, m) + w_star.rows(i * m, m))
                - &blk.l * g.rows(i * n, n);
            out.rows_mut(off, 4 * n).copy_from(&di);
        }
        Ok(out)
    }
}
