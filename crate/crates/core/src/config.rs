//! JSON scenario files and their validation into typed components.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certificates::{FeasibilitySettings, SynthesisSettings};
use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::linalg::{mat_from_rows, Mat, Vector};
use crate::nonlinearity::{AgentNonlinearities, InputNonlinearity, NonlinearityKind, SectorBounds};
use crate::objectives::{ObjectiveSet, QuadraticObjective};
use crate::protocol::{AgentModel, CoordinationSystem, GainSet};
use crate::simulator::SimConfig;

/// The bundled reference scenario.
pub const REFERENCE_CONFIG: &str = include_str!("../configs/paper_sec5.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    pub nonlinearity: NonlinearitySpec,
    pub graph: GraphSpec,
    pub objectives: ObjectivesSpec,
    #[serde(default)]
    pub gains: Option<GainsSpec>,
    #[serde(default)]
    pub certificate: Option<CertificateSpec>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub bound: BoundSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B0")]
    pub b0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorSpec {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Identity,
    SinusoidalGain {
        base: f64,
        amplitude: f64,
        frequency: f64,
    },
    Linear {
        slope: f64,
    },
    SlopeTable {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    pub sector: SectorSpec,
    /// Shared by every agent unless `per_agent` is given.
    #[serde(default)]
    pub function: Option<FunctionSpec>,
    #[serde(default)]
    pub per_agent: Option<Vec<FunctionSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub num_agents: usize,
    /// `path` or `complete`; alternative to `edges`.
    #[serde(default)]
    pub topology: Option<String>,
    /// 1-based `(i, j, weight)` triples.
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalObjectiveSpec {
    pub center: Vec<f64>,
    /// Isotropic curvature `scale·I`.
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub curvature: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectivesSpec {
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub ell: Option<f64>,
    pub locals: Vec<LocalObjectiveSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    /// Stacked `[K₁ K₂ K₃ K₄]`.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K1", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K2", default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K3", default, skip_serializing_if = "Option::is_none")]
    pub k3: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K4", default, skip_serializing_if = "Option::is_none")]
    pub k4: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "P_check")]
    pub p_check: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub t_final: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub tail_window: (f64, f64),
    pub seed: u64,
    /// Seeds for multi-run checks; defaults to `[seed]`.
    pub seeds: Option<Vec<u64>>,
    pub initial_x: Option<Vec<f64>>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            t_final: d.t_final,
            dt: d.dt,
            record_stride: d.record_stride,
            tail_window: d.tail_window,
            seed: d.rng_seed,
            seeds: None,
            initial_x: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub accept_margin: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub y_max: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let f = FeasibilitySettings::default();
        let s = SynthesisSettings::default();
        Self {
            p_min: f.p_min,
            p_max: f.p_max,
            accept_margin: f.accept_margin,
            q_min: s.q_min,
            q_max: s.q_max,
            y_max: s.y_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSpec {
    /// Margin used for the reported `epsilon_at_config_rho`.
    pub rho: f64,
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self { rho: 0.1 }
    }
}

/// Command-line style overrides, applied before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub graph: Option<GraphSpec>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn reference() -> Self {
        Self::from_json(REFERENCE_CONFIG).expect("bundled scenario parses")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.simulation.dt = dt;
        }
        if let Some(t_final) = o.t_final {
            self.simulation.t_final = t_final;
            let (a, b) = self.simulation.tail_window;
            if b > t_final {
                // Keep the window's length, anchored at the new horizon.
                self.simulation.tail_window = ((t_final - (b - a)).max(0.0), t_final);
            }
        }
        if let Some(seed) = o.seed {
            self.simulation.seed = seed;
            self.simulation.seeds = None;
        }
        if let Some(gamma) = o.gamma {
            self.nonlinearity.sector.gamma = Some(gamma);
        }
        if let Some(graph) = &o.graph {
            self.graph = graph.clone();
        }
    }

    pub fn build(&self) -> Result<Scenario> {
        let model = AgentModel::new(
            matrix("model.A", &self.model.a)?,
            matrix("model.B0", &self.model.b0)?,
        )?;
        let n = model.state_dim();
        let m = model.input_dim();

        let graph = build_graph(&self.graph)?;
        let agents = graph.num_agents();

        let nonlinearities = build_nonlinearities(&self.nonlinearity, agents)?;
        let objectives = build_objectives(&self.objectives, agents, n)?;

        let gains = self
            .gains
            .as_ref()
            .map(|g| build_gains(g, m, n))
            .transpose()?;
        let certificate = self
            .certificate
            .as_ref()
            .map(|c| -> Result<(Mat, Mat)> {
                let p = matrix("certificate.P", &c.p)?;
                let p_check = matrix("certificate.P_check", &c.p_check)?;
                if p.shape() != (4 * n, 4 * n) || p_check.shape() != (3 * n, 3 * n) {
                    return Err(Error::Config(format!(
                        "certificate: P must be {0}x{0} and P_check {1}x{1}",
                        4 * n,
                        3 * n
                    )));
                }
                Ok((p, p_check))
            })
            .transpose()?;

        let s = &self.simulation;
        let initial_x = match &s.initial_x {
            Some(x) if x.len() != agents * n => {
                return Err(Error::Config(format!(
                    "simulation.initial_x: expected {} entries, got {}",
                    agents * n,
                    x.len()
                )))
            }
            other => other.as_ref().map(|x| Vector::from_column_slice(x)),
        };
        let sim = SimConfig {
            t_final: s.t_final,
            dt: s.dt,
            record_stride: s.record_stride,
            initial_x,
            initial_v: None,
            initial_zeta: None,
            initial_eta: None,
            tail_window: s.tail_window,
            rng_seed: s.seed,
        };
        sim.validate()
            .map_err(|e| Error::Config(format!("simulation: {e}")))?;
        let seeds = s.seeds.clone().unwrap_or_else(|| vec![s.seed]);
        if seeds.is_empty() {
            return Err(Error::Config("simulation.seeds must not be empty".into()));
        }

        let v = &self.solver;
        if !(v.p_min > 0.0
            && v.p_max > v.p_min
            && v.q_min > 0.0
            && v.q_max > v.q_min
            && v.y_max > 0.0)
        {
            return Err(Error::Config(
                "solver: need 0 < p_min < p_max, 0 < q_min < q_max and y_max > 0".into(),
            ));
        }
        let feasibility = FeasibilitySettings {
            p_min: v.p_min,
            p_max: v.p_max,
            accept_margin: v.accept_margin,
            ..Default::default()
        };
        let synthesis = SynthesisSettings {
            q_min: v.q_min,
            q_max: v.q_max,
            y_max: v.y_max,
            accept_margin: v.accept_margin,
            feasibility,
            ..Default::default()
        };
        if !(self.bound.rho.is_finite() && self.bound.rho > 0.0) {
            return Err(Error::Config("bound.rho must be positive".into()));
        }

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            model,
            nonlinearities,
            graph,
            objectives,
            gains,
            certificate,
            sim,
            seeds,
            feasibility,
            synthesis,
            bound_rho: self.bound.rho,
            output_dir: self.output_dir.clone(),
        })
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: AgentModel,
    pub nonlinearities: AgentNonlinearities,
    pub graph: NetworkGraph,
    pub objectives: ObjectiveSet,
    pub gains: Option<GainSet>,
    pub certificate: Option<(Mat, Mat)>,
    pub sim: SimConfig,
    pub seeds: Vec<u64>,
    pub feasibility: FeasibilitySettings,
    pub synthesis: SynthesisSettings,
    pub bound_rho: f64,
    pub output_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn reference() -> Self {
        ScenarioConfig::reference()
            .build()
            .expect("bundled scenario is valid")
    }

    pub fn bounds(&self) -> SectorBounds {
        self.nonlinearities.bounds()
    }

    pub fn require_gains(&self) -> Result<&GainSet> {
        self.gains
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no gains".into()))
    }

    pub fn system(&self) -> Result<CoordinationSystem<'_>> {
        self.system_with(self.require_gains()?)
    }

    pub fn system_with<'a>(&'a self, gains: &'a GainSet) -> Result<CoordinationSystem<'a>> {
        CoordinationSystem::new(
            &self.model,
            &self.nonlinearities,
            &self.graph,
            &self.objectives,
            gains,
        )
    }

    /// Simulation settings for each configured seed.
    pub fn seeded_runs(&self) -> Vec<SimConfig> {
        self.seeds
            .iter()
            .map(|&rng_seed| SimConfig {
                rng_seed,
                ..self.sim.clone()
            })
            .collect()
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Mat> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("{field}: matrix must be non-empty")));
    }
    let m = mat_from_rows(rows)
        .ok_or_else(|| Error::Config(format!("{field}: rows have unequal lengths")))?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{field}: entries must be finite")));
    }
    Ok(m)
}

pub fn build_graph(spec: &GraphSpec) -> Result<NetworkGraph> {
    match (&spec.topology, &spec.edges) {
        (Some(_), Some(_)) => Err(Error::Config(
            "graph: give either topology or edges, not both".into(),
        )),
        (Some(t), None) => match t.as_str() {
            "path" => NetworkGraph::path(spec.num_agents),
            "complete" => NetworkGraph::complete(spec.num_agents),
            other => Err(Error::Config(format!(
                "graph.topology: unknown topology {other:?} (expected \"path\" or \"complete\")"
            ))),
        },
        (None, Some(edges)) => NetworkGraph::from_one_based(spec.num_agents, edges),
        (None, None) => Err(Error::Config("graph: topology or edges required".into())),
    }
}

fn function_kind(f: &FunctionSpec, sector: &SectorBounds, field: &str) -> Result<NonlinearityKind> {
    let (lo, hi) = (sector.alpha(), sector.beta());
    let within = |lo_f: f64, hi_f: f64| lo_f >= lo - 1e-12 && hi_f <= hi + 1e-12;
    let (kind, range) = match f {
        FunctionSpec::Identity => (NonlinearityKind::Identity, (1.0, 1.0)),
        FunctionSpec::SinusoidalGain {
            base,
            amplitude,
            frequency,
        } => (
            NonlinearityKind::SinusoidalGain {
                base: *base,
                amp: *amplitude,
                freq: *frequency,
            },
            (base - amplitude.abs(), base + amplitude.abs()),
        ),
        FunctionSpec::Linear { slope } => (
            NonlinearityKind::SlopeTable {
                breakpoints: vec![],
                slopes: vec![*slope],
            },
            (*slope, *slope),
        ),
        FunctionSpec::SlopeTable {
            breakpoints,
            slopes,
        } => {
            let lo_s = slopes.iter().copied().fold(f64::INFINITY, f64::min);
            let hi_s = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (
                NonlinearityKind::SlopeTable {
                    breakpoints: breakpoints.clone(),
                    slopes: slopes.clone(),
                },
                (lo_s, hi_s),
            )
        }
    };
    if !(range.0.is_finite() && range.1.is_finite()) || !within(range.0, range.1) {
        return Err(Error::Config(format!(
            "{field}: slopes span [{}, {}], outside the declared sector [{lo}, {hi}]",
            range.0, range.1
        )));
    }
    Ok(kind)
}

fn build_nonlinearities(spec: &NonlinearitySpec, agents: usize) -> Result<AgentNonlinearities> {
    let s = spec.sector;
    let bounds = SectorBounds::new(s.alpha, s.beta, s.gamma)
        .map_err(|e| Error::Config(format!("nonlinearity.sector: {e}")))?;
    match (&spec.function, &spec.per_agent) {
        (Some(f), None) => {
            let kind = function_kind(f, &bounds, "nonlinearity.function")?;
            Ok(AgentNonlinearities::homogeneous(
                InputNonlinearity::new(kind, bounds)?,
                agents,
            ))
        }
        (None, Some(list)) => {
            if list.len() != agents {
                return Err(Error::Config(format!(
                    "nonlinearity.per_agent: expected {agents} entries, got {}",
                    list.len()
                )));
            }
            let per_agent = list
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let kind = function_kind(f, &bounds, &format!("nonlinearity.per_agent[{i}]"))?;
                    InputNonlinearity::new(kind, bounds)
                })
                .collect::<Result<Vec<_>>>()?;
            AgentNonlinearities::heterogeneous(per_agent)
        }
        _ => Err(Error::Config(
            "nonlinearity: give exactly one of function or per_agent".into(),
        )),
    }
}

fn build_objectives(spec: &ObjectivesSpec, agents: usize, n: usize) -> Result<ObjectiveSet> {
    if spec.locals.len() != agents {
        return Err(Error::Config(format!(
            "objectives.locals: expected {agents} entries (one per agent), got {}",
            spec.locals.len()
        )));
    }
    let locals = spec
        .locals
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let field = format!("objectives.locals[{i}]");
            if l.center.len() != n {
                return Err(Error::Config(format!(
                    "{field}.center: expected {n} entries, got {}",
                    l.center.len()
                )));
            }
            let center = Vector::from_column_slice(&l.center);
            let curvature = match (&l.scale, &l.curvature) {
                (Some(s), None) => Mat::identity(n, n) * *s,
                (None, Some(rows)) => matrix(&format!("{field}.curvature"), rows)?,
                _ => {
                    return Err(Error::Config(format!(
                        "{field}: give exactly one of scale or curvature"
                    )))
                }
            };
            QuadraticObjective::new(curvature, center)
                .map_err(|e| Error::Config(format!("{field}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ObjectiveSet::quadratic(locals, spec.mu, spec.ell)
        .map_err(|e| Error::Config(format!("objectives: {e}")))
}

fn build_gains(spec: &GainsSpec, m: usize, n: usize) -> Result<GainSet> {
    let gains = match spec {
        GainsSpec {
            k: Some(k),
            k1: None,
            k2: None,
            k3: None,
            k4: None,
        } => GainSet::from_stacked(&matrix("gains.K", k)?)?,
        GainsSpec {
            k: None,
            k1: Some(k1),
            k2: Some(k2),
            k3: Some(k3),
            k4: Some(k4),
        } => GainSet::new(
            matrix("gains.K1", k1)?,
            matrix("gains.K2", k2)?,
            matrix("gains.K3", k3)?,
            matrix("gains.K4", k4)?,
        )?,
        _ => {
            return Err(Error::Config(
                "gains: give either K or all of K1, K2, K3, K4".into(),
            ))
        }
    };
    if gains.input_dim() != m || gains.state_dim() != n {
        return Err(Error::Config(format!(
            "gains: K must be {m}x{} (blocks {m}x{n}), got blocks {}x{}",
            4 * n,
            gains.input_dim(),
            gains.state_dim()
        )));
    }
    Ok(gains)
}

impl GainsSpec {
    pub fn from_gains(g: &GainSet) -> Self {
        Self {
            k: Some(crate::linalg::mat_to_rows(&g.stacked())),
            k1: None,
            k2: None,
            k3: None,
            k4: None,
        }
    }
}
