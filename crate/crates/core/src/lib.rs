//! Robust distributed optimal coordination of linear agents with
//! sector-bounded input nonlinearities.
//!
//! Agents `ẋᵢ = Axᵢ + B₀φᵢ(uᵢ, t)` run a dynamic protocol that drives every
//! state into a neighbourhood of the minimiser of `Σᵢ fᵢ`. The crate provides
//! the graph and objective machinery, the protocol and its reference point,
//! LMI certificates with a built-in barrier SDP solver, gain synthesis, the
//! resulting sub-optimality bound, and a deterministic RK4 simulator.

pub mod certificates;
pub mod config;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod nonlinearity;
pub mod objectives;
pub mod pipeline;
pub mod protocol;
pub mod simulator;

pub use certificates::{
    build_lmi, certified_rho, solve_feasibility, suboptimality_bound, synthesize_gain,
    verify_certificate, Certificate, FeasibilitySettings, LmiProblem, SuboptimalityBound,
    SynthesisResult, SynthesisSettings, VerificationReport,
};
pub use config::{Overrides, Scenario, ScenarioConfig};
pub use error::{Error, Result};
pub use graph::{build_laplacian, LaplacianSpectrum, NetworkGraph};
pub use linalg::{Mat, Vector};
pub use nonlinearity::{
    tight_gamma, AgentNonlinearities, InputNonlinearity, NonlinearityKind, SectorBounds,
};
pub use objectives::{LocalObjective, ObjectiveSet, QuadraticObjective};
pub use pipeline::{verify_scenario, Verification, VerifySummary};
pub use protocol::{
    assemble_transformed_blocks, control_input, controller_derivatives, solve_reference_point,
    AgentModel, ClosedLoopState, CoordinationSystem, GainSet, ReferencePoint, TransformedSystem,
};
pub use simulator::{
    cross_check_transformed, simulate, simulate_many, tail_metrics, SimConfig, TailMetrics,
    Trajectory,
};
