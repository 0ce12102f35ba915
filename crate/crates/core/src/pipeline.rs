//! End-to-end verification of a scenario's gain.

use serde::Serialize;

use crate::certificates::{
    build_lmi, certified_rho, solve_feasibility, suboptimality_bound, verify_certificate,
    Certificate, LmiProblem, SuboptimalityBound, VerificationReport,
};
use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::linalg::{mat_to_rows, Mat};
use crate::protocol::{solve_reference_point, GainSet, ReferencePoint};

#[derive(Debug, Clone)]
pub struct Verification {
    pub problem: LmiProblem,
    pub certificate: Option<Certificate>,
    /// Best `t` when the feasibility solve failed.
    pub infeasible_t: Option<f64>,
    pub report: Option<VerificationReport>,
    pub reference: Option<ReferencePoint>,
    pub bound: Option<SuboptimalityBound>,
    pub config_rho: f64,
}

impl Verification {
    pub fn pass(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.pass)
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.bound.map(|b| b.epsilon)
    }

    pub fn summary(&self) -> VerifySummary {
        let s = &self.problem.structure;
        VerifySummary {
            pass: self.pass(),
            lambda2: s.lambda2(),
            lambda_max: s.lambda_max(),
            gamma: s.gamma,
            mu_prime: s.mu_prime,
            solver_t: self.certificate.as_ref().and_then(|c| c.solver_t),
            infeasible_t: self.infeasible_t,
            report: self.report.clone(),
            certified_rho: self.certificate.as_ref().map(|c| c.rho),
            bound: self.bound,
            config_rho: self.config_rho,
            epsilon_at_config_rho: self.bound.map(|b| b.epsilon_at(self.config_rho)),
            config_rho_certified: self.certificate.as_ref().map(|c| self.config_rho <= c.rho),
            optimizer: self
                .reference
                .as_ref()
                .map(|r| r.optimizer.iter().copied().collect()),
            u_bar_agent: self
                .reference
                .as_ref()
                .map(|r| r.u_bar.rows(0, s.m()).iter().copied().collect()),
            certificate: self.certificate.as_ref().map(|c| CertificateRows {
                p: mat_to_rows(&c.p),
                p_check: mat_to_rows(&c.p_check),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRows {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "P_check")]
    pub p_check: Vec<Vec<f64>>,
}

/// Schema of the verification report file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub pass: bool,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub gamma: f64,
    pub mu_prime: f64,
    pub solver_t: Option<[f64; 2]>,
    pub infeasible_t: Option<f64>,
    pub report: Option<VerificationReport>,
    pub certified_rho: Option<f64>,
    pub bound: Option<SuboptimalityBound>,
    pub config_rho: f64,
    pub epsilon_at_config_rho: Option<f64>,
    pub config_rho_certified: Option<bool>,
    pub optimizer: Option<Vec<f64>>,
    pub u_bar_agent: Option<Vec<f64>>,
    pub certificate: Option<CertificateRows>,
}

/// Checks `gains` on the scenario, using the supplied certificate if any and
/// otherwise solving for one. An infeasible solve yields a failing result
/// rather than an error.
pub fn verify_scenario(
    scenario: &Scenario,
    gains: &GainSet,
    supplied: Option<&(Mat, Mat)>,
) -> Result<Verification> {
    let bounds = scenario.bounds();
    let spectrum = scenario.graph.spectrum()?;
    let problem = build_lmi(
        &scenario.model,
        &bounds,
        &scenario.objectives,
        &spectrum,
        gains,
    )?;
    let mut out = Verification {
        problem,
        certificate: None,
        infeasible_t: None,
        report: None,
        reference: None,
        bound: None,
        config_rho: scenario.bound_rho,
    };
    let certificate = match supplied {
        Some((p, p_check)) => Certificate {
            rho: certified_rho(&out.problem, p, p_check),
            p: p.clone(),
            p_check: p_check.clone(),
            theta: None,
            solver_t: None,
        },
        None => match solve_feasibility(&out.problem, &scenario.feasibility) {
            Ok(c) => c,
            Err(Error::Infeasible { t }) => {
                out.infeasible_t = Some(t);
                return Ok(out);
            }
            Err(e) => return Err(e),
        },
    };
    let report = verify_certificate(&out.problem, &certificate)?;
    if report.pass {
        let reference =
            solve_reference_point(&scenario.model, &bounds, &scenario.objectives, gains)?;
        out.bound = Some(suboptimality_bound(
            &certificate,
            &scenario.model,
            &bounds,
            &reference,
        ));
        out.reference = Some(reference);
    }
    out.report = Some(report);
    out.certificate = Some(certificate);
    Ok(out)
}
