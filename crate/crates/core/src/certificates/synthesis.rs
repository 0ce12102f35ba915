use super::lmi::{LmiProblem, LmiStructure};
use super::sdp::{minimize, sym_len, sym_pack, sym_unpack, AffineLmi, BarrierSettings};
use super::verify::{
    certified_rho, solve_consensus_lmi, verify_certificate, Certificate, FeasibilitySettings,
    VerificationReport,
};
use crate::error::{Error, Result};
use crate::graph::LaplacianSpectrum;
use crate::linalg::{block_matrix, max_eigenvalue, symmetrize, Mat, Vector};
use crate::nonlinearity::SectorBounds;
use crate::objectives::ObjectiveSet;
use crate::protocol::{AgentModel, GainSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisSettings {
    /// Bounds `q_min·I ⪯ Q ⪯ q_max·I` keeping the recovered gain moderate.
    pub q_min: f64,
    pub q_max: f64,
    /// Spectral-norm cap on `Y`, so `‖K‖ ≤ y_max / q_min`.
    pub y_max: f64,
    pub accept_margin: f64,
    pub barrier: BarrierSettings,
    pub feasibility: FeasibilitySettings,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            q_min: 0.1,
            q_max: 1.0,
            y_max: 4.0,
            accept_margin: 1e-8,
            barrier: BarrierSettings::default(),
            feasibility: FeasibilitySettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub gains: GainSet,
    pub certificate: Certificate,
    pub report: VerificationReport,
    /// Optimal `t` of the `(Q, Y)` solve.
    pub agent_t: f64,
    /// Optimal `t` of the follow-up `P̌` solve.
    pub consensus_t: f64,
}

/// Congruence of the disagreement-block inequality with `diag(Q, I)`:
/// `[[Q𝒜ᵀ + 𝒜Q + Yᵀℬᵀ + ℬY, [γYᵀ, μ′QJᵀ] − [ℬ ℒ]], [·, −2I]]`.
pub fn linearized_block(s: &LmiStructure, q: &Mat, y: &Mat, lambda: f64) -> Mat {
    let sys = s.agent_system(lambda);
    let by = &sys.b * y;
    let top = q * sys.a.transpose() + &sys.a * q + by.transpose() + by;
    let coupling = block_matrix(&[vec![
        y.transpose() * s.gamma,
        q * s.selector(4).transpose() * s.mu_prime,
    ]]);
    let off = coupling - block_matrix(&[vec![sys.b.clone(), sys.l.clone()]]);
    let k = off.ncols();
    symmetrize(&block_matrix(&[
        vec![top, off.clone()],
        vec![off.transpose(), Mat::identity(k, k) * -2.0],
    ]))
}

pub fn synthesize_gain(
    model: &AgentModel,
    bounds: &SectorBounds,
    objectives: &ObjectiveSet,
    spectrum: &LaplacianSpectrum,
    settings: &SynthesisSettings,
) -> Result<SynthesisResult> {
    let s = LmiStructure::new(model, bounds, spectrum, objectives)?;
    let (n, m) = (s.n(), s.m());
    let d = 4 * n;
    let nq = sym_len(d);
    let ny = m * d;
    let nv = nq + ny + 1;
    let unpack = |z: &Vector| {
        let q = sym_unpack(&z.as_slice()[..nq], d);
        let y = Mat::from_column_slice(m, d, &z.as_slice()[nq..nq + ny]);
        (q, y)
    };

    let lambdas = s.extreme_lambdas();
    let mut lmis: Vec<AffineLmi> = lambdas
        .iter()
        .map(|&l| {
            AffineLmi::from_map(nv, |z| {
                let (q, y) = unpack(z);
                let g = linearized_block(&s, &q, &y, l);
                Mat::identity(g.nrows(), g.ncols()) * z[nv - 1] - g
            })
        })
        .collect();
    let eye = Mat::identity(d, d);
    lmis.push(AffineLmi::from_map(nv, |z| {
        unpack(z).0 - &eye * settings.q_min
    }));
    lmis.push(AffineLmi::from_map(nv, |z| {
        &eye * settings.q_max - unpack(z).0
    }));
    lmis.push(AffineLmi::from_map(nv, |z| {
        let y = unpack(z).1;
        block_matrix(&[
            vec![Mat::identity(m, m) * settings.y_max, y.clone()],
            vec![y.transpose(), &eye * settings.y_max],
        ])
    }));

    let q0 = &eye * (settings.q_min * settings.q_max).sqrt();
    let y0 = Mat::zeros(m, d);
    let t0 = lambdas
        .iter()
        .map(|&l| max_eigenvalue(&linearized_block(&s, &q0, &y0, l)))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let mut z0 = Vector::zeros(nv);
    z0.rows_mut(0, nq).copy_from_slice(&sym_pack(&q0));
    z0[nv - 1] = t0;
    let mut c = Vector::zeros(nv);
    c[nv - 1] = 1.0;

    let sol =
        minimize(&c, &lmis, &z0, &settings.barrier).map_err(|e| Error::SynthesisInfeasible {
            stage: "disagreement blocks",
            detail: e.to_string(),
        })?;
    let (q, y) = unpack(&sol.z);
    let q = symmetrize(&q);
    let agent_t = lambdas
        .iter()
        .map(|&l| max_eigenvalue(&linearized_block(&s, &q, &y, l)))
        .fold(f64::NEG_INFINITY, f64::max);
    if agent_t > -settings.accept_margin {
        return Err(Error::SynthesisInfeasible {
            stage: "disagreement blocks",
            detail: format!("smallest attainable t = {agent_t:.3e}"),
        });
    }

    let q_inv = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SynthesisInfeasible {
            stage: "gain recovery",
            detail: "Q is not positive definite".into(),
        })?;
    let p = symmetrize(&q_inv.inverse());
    let k = &y * &p;
    let gains = GainSet::from_stacked(&k)?;
    let prob = LmiProblem::new(s, &gains);

    let (p_check, consensus_t) =
        solve_consensus_lmi(&prob, &settings.feasibility).map_err(|e| {
            Error::SynthesisInfeasible {
                stage: "consensus block",
                detail: e.to_string(),
            }
        })?;
    if consensus_t > -settings.accept_margin {
        return Err(Error::SynthesisInfeasible {
            stage: "consensus block",
            detail: format!("smallest attainable t = {consensus_t:.3e}"),
        });
    }

    let rho = certified_rho(&prob, &p, &p_check);
    let certificate = Certificate {
        p,
        p_check,
        rho,
        theta: None,
        solver_t: Some([agent_t, consensus_t]),
    };
    let report = verify_certificate(&prob, &certificate)?;
    if !report.pass {
        return Err(Error::SynthesisInfeasible {
            stage: "verification",
            detail: format!("worst block eigenvalue {:.3e}", report.worst_block()),
        });
    }
    Ok(SynthesisResult {
        gains,
        certificate,
        report,
        agent_t,
        consensus_t,
    })
}
