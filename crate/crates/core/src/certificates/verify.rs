use serde::Serialize;

use super::lmi::LmiProblem;
use super::sdp::{minimize, sym_len, sym_unpack, AffineLmi, BarrierSettings};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, symmetrize, Mat, Vector};

/// Strictness required of every inequality in a passing report.
pub const VERIFY_MARGIN: f64 = 1e-9;

/// Positive definite matrices witnessing the stability inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub p: Mat,
    pub p_check: Mat,
    /// Largest certified `ρ` at this `(P, P̌)`.
    pub rho: f64,
    pub theta: Option<f64>,
    /// Optimal `t` of the two feasibility solves, when produced by the solver.
    pub solver_t: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilitySettings {
    pub p_min: f64,
    pub p_max: f64,
    /// A solve is accepted when its optimal `t` is at most `-accept_margin`.
    pub accept_margin: f64,
    pub barrier: BarrierSettings,
}

impl Default for FeasibilitySettings {
    fn default() -> Self {
        Self {
            p_min: 1e-6,
            p_max: 1e4,
            accept_margin: 1e-8,
            barrier: BarrierSettings::default(),
        }
    }
}

/// Minimizes `t` subject to `F(P) ⪯ tI` for each block and `p_min·I ⪯ P ⪯ p_max·I`.
/// Returns the minimizing `P` together with `t`.
/// Assembles one LMI block from a candidate `P`.
type BlockFn<'a> = dyn Fn(&Mat) -> Mat + 'a;

fn min_max_eigenvalue(
    dim: usize,
    blocks: &[&BlockFn<'_>],
    settings: &FeasibilitySettings,
) -> Result<(Mat, f64)> {
    let np = sym_len(dim);
    let nv = np + 1;
    let p_of = |z: &Vector| sym_unpack(&z.as_slice()[..np], dim);
    let mut lmis = Vec::with_capacity(blocks.len() + 2);
    for block in blocks {
        lmis.push(AffineLmi::from_map(nv, |z| {
            let f = block(&p_of(z));
            Mat::identity(f.nrows(), f.ncols()) * z[np] - f
        }));
    }
    let eye = Mat::identity(dim, dim);
    lmis.push(AffineLmi::from_map(nv, |z| p_of(z) - &eye * settings.p_min));
    lmis.push(AffineLmi::from_map(nv, |z| &eye * settings.p_max - p_of(z)));

    let p0 = Mat::identity(dim, dim);
    let t0 = blocks
        .iter()
        .map(|b| max_eigenvalue(&b(&p0)))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let mut z0 = Vector::zeros(nv);
    z0.rows_mut(0, np)
        .copy_from_slice(&super::sdp::sym_pack(&p0));
    z0[np] = t0;
    let mut c = Vector::zeros(nv);
    c[np] = 1.0;

    let sol = minimize(&c, &lmis, &z0, &settings.barrier)?;
    let p = symmetrize(&p_of(&sol.z));
    // Report the attained value rather than the barrier variable.
    let t = blocks
        .iter()
        .map(|b| max_eigenvalue(&b(&p)))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((p, t))
}

/// Common `P` for the disagreement blocks at `λ₂` and `λ_N`.
pub fn solve_agent_lmi(prob: &LmiProblem, settings: &FeasibilitySettings) -> Result<(Mat, f64)> {
    let lambdas = prob.extreme_lambdas();
    let closures: Vec<Box<BlockFn<'_>>> = lambdas
        .iter()
        .map(|&l| Box::new(move |p: &Mat| prob.i_block(p, l, 0.0)) as Box<BlockFn<'_>>)
        .collect();
    let refs: Vec<&BlockFn<'_>> = closures.iter().map(|b| b.as_ref()).collect();
    min_max_eigenvalue(4 * prob.structure.n(), &refs, settings)
}

/// `P̌` for the consensus block.
pub fn solve_consensus_lmi(
    prob: &LmiProblem,
    settings: &FeasibilitySettings,
) -> Result<(Mat, f64)> {
    let block = |p: &Mat| prob.first_block(p, 0.0);
    min_max_eigenvalue(3 * prob.structure.n(), &[&block], settings)
}

/// Solves for `P` and `P̌` independently; both must reach `t ≤ −accept_margin`.
pub fn solve_feasibility(prob: &LmiProblem, settings: &FeasibilitySettings) -> Result<Certificate> {
    let (p, t_agent) = solve_agent_lmi(prob, settings)?;
    if t_agent > -settings.accept_margin {
        return Err(Error::Infeasible { t: t_agent });
    }
    let (p_check, t_consensus) = solve_consensus_lmi(prob, settings)?;
    if t_consensus > -settings.accept_margin {
        return Err(Error::Infeasible { t: t_consensus });
    }
    let rho = certified_rho(prob, &p, &p_check);
    Ok(Certificate {
        p,
        p_check,
        rho,
        theta: None,
        solver_t: Some([t_agent, t_consensus]),
    })
}

fn all_blocks_below(prob: &LmiProblem, p: &Mat, p_check: &Mat, rho: f64, margin: f64) -> bool {
    max_eigenvalue(&prob.first_block(p_check, rho)) <= -margin
        && prob
            .extreme_lambdas()
            .iter()
            .chain(prob.lambdas())
            .all(|&l| max_eigenvalue(&prob.i_block(p, l, rho)) <= -margin)
}

/// Largest `ρ` for which every block with `+ρI` on its state part stays
/// below `−VERIFY_MARGIN`, by bisection. Zero if none does.
pub fn certified_rho(prob: &LmiProblem, p: &Mat, p_check: &Mat) -> f64 {
    let ok = |rho: f64| all_blocks_below(prob, p, p_check, rho, VERIFY_MARGIN);
    let mut lo = 1e-10;
    if !ok(lo) {
        return 0.0;
    }
    let mut hi = 1.0;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return lo;
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Consensus,
    /// Disagreement block at `λ₂` or `λ_N`.
    Extreme,
    /// Disagreement block at one of the graph's eigenvalues.
    Eigenvalue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheck {
    pub kind: BlockKind,
    pub lambda: Option<f64>,
    pub max_eigenvalue: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub min_eig_p: f64,
    pub min_eig_p_check: f64,
    pub blocks: Vec<BlockCheck>,
    pub margin: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub fn worst_block(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_eigenvalue)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn verify_certificate(prob: &LmiProblem, cert: &Certificate) -> Result<VerificationReport> {
    let n = prob.structure.n();
    if cert.p.shape() != (4 * n, 4 * n) || cert.p_check.shape() != (3 * n, 3 * n) {
        return Err(Error::DimensionMismatch(format!(
            "certificate is {:?} / {:?}, expected {}x{} / {}x{}",
            cert.p.shape(),
            cert.p_check.shape(),
            4 * n,
            4 * n,
            3 * n,
            3 * n
        )));
    }
    let check = |kind, lambda: Option<f64>, f: Mat| {
        let max_eigenvalue = max_eigenvalue(&f);
        BlockCheck {
            kind,
            lambda,
            max_eigenvalue,
            pass: max_eigenvalue < -VERIFY_MARGIN,
        }
    };
    let mut blocks = vec![check(
        BlockKind::Consensus,
        None,
        prob.first_block(&cert.p_check, 0.0),
    )];
    for &l in &prob.extreme_lambdas() {
        blocks.push(check(
            BlockKind::Extreme,
            Some(l),
            prob.i_block(&cert.p, l, 0.0),
        ));
    }
    for &l in prob.lambdas() {
        blocks.push(check(
            BlockKind::Eigenvalue,
            Some(l),
            prob.i_block(&cert.p, l, 0.0),
        ));
    }
    let min_eig_p = min_eigenvalue(&cert.p);
    let min_eig_p_check = min_eigenvalue(&cert.p_check);
    let pass = min_eig_p > VERIFY_MARGIN
        && min_eig_p_check > VERIFY_MARGIN
        && blocks.iter().all(|b| b.pass);
    Ok(VerificationReport {
        min_eig_p,
        min_eig_p_check,
        blocks,
        margin: VERIFY_MARGIN,
        pass,
    })
}
