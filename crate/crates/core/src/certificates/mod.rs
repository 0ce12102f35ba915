//! Stability certificates for the coordination protocol: the matrix
//! inequalities, a barrier SDP solver for them, gain synthesis, and the
//! resulting sub-optimality bound.

mod bound;
mod lmi;
pub mod sdp;
mod synthesis;
mod verify;

pub use bound::{suboptimality_bound, SuboptimalityBound};
pub use lmi::{assemble_block, build_lmi, LmiProblem, LmiStructure};
pub use synthesis::{linearized_block, synthesize_gain, SynthesisResult, SynthesisSettings};
pub use verify::{
    certified_rho, solve_agent_lmi, solve_consensus_lmi, solve_feasibility, verify_certificate,
    BlockCheck, BlockKind, Certificate, FeasibilitySettings, VerificationReport, VERIFY_MARGIN,
};
