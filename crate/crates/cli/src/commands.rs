use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use doc_coord_core::config::{CertificateSpec, GainsSpec, GraphSpec};
use doc_coord_core::linalg::mat_to_rows;
use doc_coord_core::{
    simulate_many, synthesize_gain, tail_metrics, verify_scenario, Error, GainSet, Overrides,
    Scenario, ScenarioConfig, TailMetrics, Trajectory, Verification, VerificationReport,
};
use serde::{Deserialize, Serialize};

use crate::output::{output_dir, write_columns, write_json, write_trajectory};
use crate::{CommonArgs, Outcome};

/// Tail error every reproduction run has to stay within.
pub const TAIL_ERROR_LIMIT: f64 = 0.3;
pub const V_SUM_LIMIT: f64 = 1e-6;

fn outcome(pass: bool) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A gains file is either a bare gains object or any object with a `gains`
/// field (such as synthesis.json), optionally carrying a `certificate`.
fn read_gains(path: &Path) -> Result<(GainsSpec, Option<CertificateSpec>)> {
    let value: serde_json::Value = read_json(path)?;
    let parse = || -> serde_json::Result<_> {
        match value.get("gains") {
            Some(g) => Ok((
                serde_json::from_value(g.clone())?,
                value
                    .get("certificate")
                    .filter(|c| !c.is_null())
                    .map(|c| serde_json::from_value(c.clone()))
                    .transpose()?,
            )),
            None => Ok((serde_json::from_value(value.clone())?, None)),
        }
    };
    parse().with_context(|| format!("parsing gains in {}", path.display()))
}

fn load(config: ScenarioConfig, args: &CommonArgs) -> Result<(Scenario, PathBuf)> {
    let mut config = config;
    let graph: Option<GraphSpec> = args.graph.as_deref().map(read_json).transpose()?;
    config.apply(&Overrides {
        dt: args.dt,
        t_final: args.t_final,
        seed: args.seed,
        gamma: args.gamma,
        graph,
    });
    if let Some(path) = &args.gains {
        let (gains, certificate) = read_gains(path)?;
        config.gains = Some(gains);
        config.certificate = certificate;
    }
    let scenario = config.build()?;
    let dir = output_dir(args, scenario.output_dir.as_deref())?;
    Ok((scenario, dir))
}

fn load_path(path: &Path, args: &CommonArgs) -> Result<(Scenario, PathBuf)> {
    load(ScenarioConfig::from_path(path)?, args)
}

fn describe(v: &Verification) -> String {
    match (&v.report, v.infeasible_t) {
        (_, Some(t)) => format!("FAIL: no certificate exists (best margin t = {t:.4e})"),
        (Some(r), _) => {
            let mut line = format!(
                "{}: worst block eigenvalue {:.4e}, min eig(P) {:.4e}, min eig(P_check) {:.4e}",
                if r.pass { "PASS" } else { "FAIL" },
                r.worst_block(),
                r.min_eig_p,
                r.min_eig_p_check
            );
            if let (Some(c), Some(b)) = (&v.certificate, &v.bound) {
                line.push_str(&format!(
                    ", certified rho {:.4e}, epsilon {:.4e}",
                    c.rho, b.epsilon
                ));
            }
            line
        }
        (None, None) => "FAIL: not verified".into(),
    }
}

pub fn verify(path: &Path, args: &CommonArgs) -> Result<Outcome> {
    let (scenario, dir) = load_path(path, args)?;
    let gains = scenario.require_gains()?;
    let v = verify_scenario(&scenario, gains, scenario.certificate.as_ref())?;
    let report = write_json(&dir, "verify_report.json", &v.summary())?;
    println!("verify {}", describe(&v));
    println!("wrote {}", report.display());
    Ok(outcome(v.pass()))
}

#[derive(Debug, Serialize)]
struct SynthesisFile {
    pass: bool,
    failed_stage: Option<&'static str>,
    detail: Option<String>,
    gains: Option<GainsSpec>,
    certificate: Option<CertificateSpec>,
    certified_rho: Option<f64>,
    agent_t: Option<f64>,
    consensus_t: Option<f64>,
    report: Option<VerificationReport>,
}

fn split_gains(g: &GainSet) -> GainsSpec {
    GainsSpec {
        k: None,
        k1: Some(mat_to_rows(&g.k1)),
        k2: Some(mat_to_rows(&g.k2)),
        k3: Some(mat_to_rows(&g.k3)),
        k4: Some(mat_to_rows(&g.k4)),
    }
}

pub fn synthesize(path: &Path, args: &CommonArgs) -> Result<Outcome> {
    let (scenario, dir) = load_path(path, args)?;
    let spectrum = scenario.graph.spectrum()?;
    let result = synthesize_gain(
        &scenario.model,
        &scenario.bounds(),
        &scenario.objectives,
        &spectrum,
        &scenario.synthesis,
    );
    let (file, pass) = match result {
        Ok(res) => {
            println!(
                "synthesize {}: agent margin {:.4e}, consensus margin {:.4e}, worst block eigenvalue {:.4e}",
                if res.report.pass { "PASS" } else { "FAIL" },
                res.agent_t,
                res.consensus_t,
                res.report.worst_block()
            );
            let file = SynthesisFile {
                pass: res.report.pass,
                failed_stage: None,
                detail: None,
                gains: Some(split_gains(&res.gains)),
                certificate: Some(CertificateSpec {
                    p: mat_to_rows(&res.certificate.p),
                    p_check: mat_to_rows(&res.certificate.p_check),
                }),
                certified_rho: Some(res.certificate.rho),
                agent_t: Some(res.agent_t),
                consensus_t: Some(res.consensus_t),
                report: Some(res.report),
            };
            let pass = file.pass;
            (file, pass)
        }
        Err(Error::SynthesisInfeasible { stage, detail }) => {
            println!("synthesize FAIL at stage {stage}: {detail}");
            let file = SynthesisFile {
                pass: false,
                failed_stage: Some(stage),
                detail: Some(detail),
                gains: None,
                certificate: None,
                certified_rho: None,
                agent_t: None,
                consensus_t: None,
                report: None,
            };
            (file, false)
        }
        Err(e) => return Err(e.into()),
    };
    let written = write_json(&dir, "synthesis.json", &file)?;
    println!("wrote {}", written.display());
    Ok(outcome(pass))
}

#[derive(Debug, Serialize)]
struct Metrics {
    seed: u64,
    dt: f64,
    t_final: f64,
    tail_window: (f64, f64),
    diverged_at: Option<f64>,
    tail: Option<TailMetrics>,
    max_v_sum: Option<f64>,
    certificate_pass: bool,
    epsilon: Option<f64>,
    /// `ε > sup_err` over the tail window.
    epsilon_exceeds_sup_err: Option<bool>,
}

fn run_simulation(scenario: &Scenario, dir: &Path, verification: &Verification) -> Result<Outcome> {
    let cfg = &scenario.sim;
    let mut metrics = Metrics {
        seed: cfg.rng_seed,
        dt: cfg.dt,
        t_final: cfg.t_final,
        tail_window: cfg.tail_window,
        diverged_at: None,
        tail: None,
        max_v_sum: None,
        certificate_pass: verification.pass(),
        epsilon: verification.epsilon(),
        epsilon_exceeds_sup_err: None,
    };
    let traj = match doc_coord_core::simulate(&scenario.system()?, cfg) {
        Ok(t) => t,
        Err(Error::Diverged { time }) => {
            println!("simulate FAIL: diverged at t = {time}");
            metrics.diverged_at = Some(time);
            let written = write_json(dir, "metrics.json", &metrics)?;
            println!("wrote {}", written.display());
            return Ok(Outcome::Fail);
        }
        Err(e) => return Err(e.into()),
    };
    let tail = tail_metrics(&traj, cfg.tail_window)?;
    metrics.tail = Some(tail);
    metrics.max_v_sum = Some(traj.max_v_sum());
    metrics.epsilon_exceeds_sup_err = metrics.epsilon.map(|e| e > tail.sup_err);
    println!(
        "simulate: tail sup err {:.4e}, mean err {:.4e}, sup obj gap {:.4e}, epsilon {}",
        tail.sup_err,
        tail.mean_err,
        tail.sup_obj_gap,
        metrics.epsilon.map_or("n/a".into(), |e| format!("{e:.4e}"))
    );
    for written in [
        write_trajectory(dir, "trajectory.csv", &traj)?,
        write_json(dir, "metrics.json", &metrics)?,
    ] {
        println!("wrote {}", written.display());
    }
    Ok(Outcome::Pass)
}

pub fn simulate(path: &Path, args: &CommonArgs) -> Result<Outcome> {
    let (scenario, dir) = load_path(path, args)?;
    let gains = scenario.require_gains()?;
    let verification = verify_scenario(&scenario, gains, scenario.certificate.as_ref())?;
    run_simulation(&scenario, &dir, &verification)
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    seed: u64,
    diverged_at: Option<f64>,
    tail: Option<TailMetrics>,
    max_v_sum: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ReproduceSummary {
    pass: bool,
    optimizer: Option<Vec<f64>>,
    epsilon: Option<f64>,
    tail_window: (f64, f64),
    tail_error_limit: f64,
    checks: Vec<Check>,
    runs: Vec<RunSummary>,
}

pub fn reproduce(path: Option<&Path>, args: &CommonArgs) -> Result<Outcome> {
    let config = match path {
        Some(p) => ScenarioConfig::from_path(p)?,
        None => ScenarioConfig::reference(),
    };
    let (scenario, dir) = load(config, args)?;
    let gains = scenario.require_gains().context("stage verify")?;
    let mut checks = Vec::new();

    let verification =
        verify_scenario(&scenario, gains, scenario.certificate.as_ref()).context("stage verify")?;
    write_json(&dir, "verify_report.json", &verification.summary())?;
    println!("stage verify {}", describe(&verification));
    checks.push(Check {
        name: "verify".into(),
        pass: verification.pass(),
        detail: describe(&verification),
    });
    let epsilon = verification.epsilon();

    let system = scenario.system().context("stage simulate")?;
    let cfgs = scenario.seeded_runs();
    let mut runs = Vec::new();
    let mut trajectories: Vec<(u64, Trajectory)> = Vec::new();
    for (cfg, result) in cfgs.iter().zip(simulate_many(&system, &cfgs)) {
        let seed = cfg.rng_seed;
        match result {
            Ok(traj) => {
                let tail = tail_metrics(&traj, cfg.tail_window)
                    .with_context(|| format!("stage metrics (seed {seed})"))?;
                let v_sum = traj.max_v_sum();
                println!(
                    "stage simulate seed {seed}: tail sup err {:.4e}, mean err {:.4e}, max v-sum {:.2e}",
                    tail.sup_err, tail.mean_err, v_sum
                );
                let mut ok = tail.sup_err <= TAIL_ERROR_LIMIT;
                let mut detail = format!("sup err {:.4e} <= {TAIL_ERROR_LIMIT}", tail.sup_err);
                if let Some(e) = epsilon {
                    ok &= tail.sup_err < e;
                    detail.push_str(&format!(", below epsilon {e:.4e}"));
                }
                checks.push(Check {
                    name: format!("tail error (seed {seed})"),
                    pass: ok,
                    detail,
                });
                checks.push(Check {
                    name: format!("v-sum conservation (seed {seed})"),
                    pass: v_sum <= V_SUM_LIMIT,
                    detail: format!("max |sum v| {v_sum:.3e} <= {V_SUM_LIMIT:e}"),
                });
                runs.push(RunSummary {
                    seed,
                    diverged_at: None,
                    tail: Some(tail),
                    max_v_sum: Some(v_sum),
                });
                trajectories.push((seed, traj));
            }
            Err(Error::Diverged { time }) => {
                println!("stage simulate seed {seed}: FAIL, diverged at t = {time}");
                checks.push(Check {
                    name: format!("tail error (seed {seed})"),
                    pass: false,
                    detail: format!("diverged at t = {time}"),
                });
                runs.push(RunSummary {
                    seed,
                    diverged_at: Some(time),
                    tail: None,
                    max_v_sum: None,
                });
            }
            Err(e) => return Err(e).with_context(|| format!("stage simulate (seed {seed})")),
        }
    }

    let mut written = vec![dir.join("verify_report.json")];
    if let Some((_, first)) = trajectories.first() {
        let series = |f: fn(&Trajectory) -> &Vec<f64>, prefix: &str| -> Vec<(String, Vec<f64>)> {
            trajectories
                .iter()
                .map(|(seed, t)| (format!("{prefix}_seed{seed}"), f(t).clone()))
                .collect()
        };
        written.push(write_columns(
            &dir,
            "err.csv",
            &first.times,
            &series(|t| &t.err, "err"),
        )?);
        written.push(write_columns(
            &dir,
            "obj_gap.csv",
            &first.times,
            &series(|t| &t.obj_gap, "obj_gap"),
        )?);
        let n = first.state_dim;
        let x_columns: Vec<(String, Vec<f64>)> = (0..first.num_agents * n)
            .map(|j| {
                (
                    format!("x_{}_{}", j / n + 1, j % n + 1),
                    first.states.iter().map(|s| s.x[j]).collect(),
                )
            })
            .collect();
        written.push(write_columns(&dir, "x.csv", &first.times, &x_columns)?);
    }

    let pass = checks.iter().all(|c| c.pass);
    let summary = ReproduceSummary {
        pass,
        optimizer: verification
            .reference
            .as_ref()
            .map(|r| r.optimizer.iter().copied().collect())
            .or_else(|| {
                scenario
                    .objectives
                    .solve_global_optimizer()
                    .ok()
                    .map(|z| z.iter().copied().collect())
            }),
        epsilon,
        tail_window: scenario.sim.tail_window,
        tail_error_limit: TAIL_ERROR_LIMIT,
        checks,
        runs,
    };
    written.push(write_json(&dir, "summary.json", &summary)?);
    for path in &written {
        println!("wrote {}", path.display());
    }
    for c in summary.checks.iter().filter(|c| !c.pass) {
        println!("FAIL {}: {}", c.name, c.detail);
    }
    println!("reproduce-paper {}", if pass { "PASS" } else { "FAIL" });
    Ok(outcome(pass))
}
