use crate::error::{Error, Result};
use crate::graph::LaplacianSpectrum;
use crate::linalg::{block_matrix, symmetrize, Mat};
use crate::nonlinearity::SectorBounds;
use crate::objectives::ObjectiveSet;
use crate::protocol::{
    consensus_block_system, disagreement_block_system, AgentModel, BlockSystem, GainSet,
};

/// Two eigenvalues closer than this are treated as one extreme point.
const LAMBDA_DEDUP_TOL: f64 = 1e-12;

/// Plant, sector and spectral data the stability inequalities depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiStructure {
    pub a: Mat,
    /// `B = βB₀`.
    pub b: Mat,
    pub ell: f64,
    pub gamma: f64,
    pub mu_prime: f64,
    /// `λ₂ … λ_N` ascending.
    pub lambdas: Vec<f64>,
}

impl LmiStructure {
    pub fn new(
        model: &AgentModel,
        bounds: &SectorBounds,
        spectrum: &LaplacianSpectrum,
        objectives: &ObjectiveSet,
    ) -> Result<Self> {
        if objectives.dim() != model.state_dim() {
            return Err(Error::DimensionMismatch(
                "objective and model state dimensions differ".into(),
            ));
        }
        if spectrum.num_agents() != objectives.num_agents() {
            return Err(Error::DimensionMismatch(
                "graph and objectives disagree on the number of agents".into(),
            ));
        }
        if spectrum.lambda2() <= 0.0 {
            return Err(Error::DisconnectedGraph {
                lambda2: spectrum.lambda2(),
            });
        }
        let s = Self {
            a: model.a().clone(),
            b: model.input_matrix(bounds),
            ell: objectives.ell(),
            gamma: bounds.gamma(),
            mu_prime: objectives.mu_prime(),
            lambdas: spectrum.nonzero_eigenvalues().to_vec(),
        };
        s.check_sector()?;
        Ok(s)
    }

    fn check_sector(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidSector(format!(
                "gamma = {} outside [0, 1]",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.mu_prime) {
            return Err(Error::InvalidSector(format!(
                "mu' = {} outside [0, 1)",
                self.mu_prime
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn lambda2(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambdas.last().expect("connected graph has N >= 2")
    }

    /// `{λ₂, λ_N}`, collapsed to one value when they coincide.
    pub fn extreme_lambdas(&self) -> Vec<f64> {
        let (lo, hi) = (self.lambda2(), self.lambda_max());
        if hi - lo <= LAMBDA_DEDUP_TOL * hi.max(1.0) {
            vec![lo]
        } else {
            vec![lo, hi]
        }
    }

    pub fn agent_system(&self, lambda: f64) -> BlockSystem {
        disagreement_block_system(&self.a, &self.b, self.ell, lambda)
    }

    pub fn consensus_system(&self) -> BlockSystem {
        consensus_block_system(&self.a, &self.b, self.ell)
    }

    /// `J = [I 0 … 0]` picking the plant state out of a block of `blocks·n`.
    pub fn selector(&self, blocks: usize) -> Mat {
        let n = self.n();
        let mut j = Mat::zeros(n, blocks * n);
        j.view_mut((0, 0), (n, n)).fill_with_identity();
        j
    }

    pub fn agent_block_dim(&self) -> usize {
        5 * self.n() + self.m()
    }

    pub fn consensus_block_dim(&self) -> usize {
        4 * self.n() + self.m()
    }
}

/// `[[A_clᵀP + PA_cl + ρI, 𝒦ᵀ − P[ℬ ℒ]], [·, −2I]]`.
pub fn assemble_block(sys: &BlockSystem, a_cl: &Mat, coupling: &Mat, p: &Mat, rho: f64) -> Mat {
    let d = a_cl.nrows();
    let top = a_cl.transpose() * p + p * a_cl + Mat::identity(d, d) * rho;
    let channels = block_matrix(&[vec![sys.b.clone(), sys.l.clone()]]);
    let off = coupling.transpose() - p * channels;
    let k = coupling.nrows();
    symmetrize(&block_matrix(&[
        vec![top, off.clone()],
        vec![off.transpose(), Mat::identity(k, k) * -2.0],
    ]))
}

/// The stability inequalities for a fixed gain.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub structure: LmiStructure,
    /// `K = [K₁ K₂ K₃ K₄]`.
    pub k: Mat,
    /// `Ǩ = [K₁ K₃ K₄]`.
    pub k_check: Mat,
}

pub fn build_lmi(
    model: &AgentModel,
    bounds: &SectorBounds,
    objectives: &ObjectiveSet,
    spectrum: &LaplacianSpectrum,
    gains: &GainSet,
) -> Result<LmiProblem> {
    gains.check_model(model)?;
    let structure = LmiStructure::new(model, bounds, spectrum, objectives)?;
    Ok(LmiProblem::new(structure, gains))
}

impl LmiProblem {
    pub fn new(structure: LmiStructure, gains: &GainSet) -> Self {
        Self {
            structure,
            k: gains.stacked(),
            k_check: gains.consensus_block(),
        }
    }

    /// Same problem with a different declared residual sector bound.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        out.structure.gamma = gamma;
        out.structure.check_sector()?;
        Ok(out)
    }

    pub fn gamma(&self) -> f64 {
        self.structure.gamma
    }

    pub fn mu_prime(&self) -> f64 {
        self.structure.mu_prime
    }

    /// `𝒦′ = [γK; μ′J]`.
    pub fn agent_coupling(&self) -> Mat {
        let s = &self.structure;
        block_matrix(&[vec![&self.k * s.gamma], vec![s.selector(4) * s.mu_prime]])
    }

    /// `𝒦̌ = [γǨ; μ′J̌]`.
    pub fn consensus_coupling(&self) -> Mat {
        let s = &self.structure;
        block_matrix(&[
            vec![&self.k_check * s.gamma],
            vec![s.selector(3) * s.mu_prime],
        ])
    }

    /// Disagreement-block inequality at eigenvalue `λ`, with `+ρI` on the state block.
    pub fn i_block(&self, p: &Mat, lambda: f64, rho: f64) -> Mat {
        let sys = self.structure.agent_system(lambda);
        let a_cl = &sys.a + &sys.b * &self.k;
        assemble_block(&sys, &a_cl, &self.agent_coupling(), p, rho)
    }

    /// Consensus-block inequality for `P̌`.
    pub fn first_block(&self, p_check: &Mat, rho: f64) -> Mat {
        let sys = self.structure.consensus_system();
        let a_cl = &sys.a + &sys.b * &self.k_check;
        assemble_block(&sys, &a_cl, &self.consensus_coupling(), p_check, rho)
    }

    pub fn extreme_lambdas(&self) -> Vec<f64> {
        self.structure.extreme_lambdas()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.structure.lambdas
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NetworkGraph;
    use crate::linalg::{max_eigenvalue, Vector};
    use crate::objectives::QuadraticObjective;

    fn scalar_problem(k1: f64) -> LmiProblem {
        let model = AgentModel::new(Mat::zeros(1, 1), Mat::identity(1, 1)).unwrap();
        let bounds = SectorBounds::new(1.0, 1.0, Some(0.0)).unwrap();
        let objs = ObjectiveSet::quadratic(
            vec![QuadraticObjective::isotropic(1.0, Vector::zeros(1)).unwrap(); 2],
            None,
            None,
        )
        .unwrap();
        let graph = NetworkGraph::from_one_based(2, &[(1, 2, 0.5)]).unwrap();
        let gains =
            GainSet::from_stacked(&Mat::from_row_slice(1, 4, &[k1, 0.0, 0.0, 0.0])).unwrap();
        build_lmi(&model, &bounds, &objs, &graph.spectrum().unwrap(), &gains).unwrap()
    }

    #[test]
    fn scalar_hand_assembly() {
        let prob = scalar_problem(-1.0);
        assert_eq!(prob.extreme_lambdas(), vec![1.0]);
        let f = prob.i_block(&Mat::identity(4, 4), 1.0, 0.0);
        assert_eq!(f.shape(), (6, 6));
        assert!((f[(0, 0)] + 2.0).abs() < 1e-15);
        assert_eq!(
            f.view((0, 4), (1, 2)).into_owned(),
            Mat::from_row_slice(1, 2, &[-1.0, 0.0])
        );
        assert_eq!(
            f.view((4, 4), (2, 2)).into_owned(),
            Mat::identity(2, 2) * -2.0
        );
        // With K₂ = K₃ = K₄ = 0 the controller integrators are marginal, so
        // no P can make this block negative definite; at P = I it is indefinite.
        let oracle = max_eigenvalue(&f);
        assert!(oracle > 0.0);
    }

    #[test]
    fn corner_and_symmetry() {
        let prob = scalar_problem(-1.0);
        let p = Mat::from_fn(4, 4, |r, c| 1.0 / (1.0 + r as f64 + c as f64));
        for f in [
            prob.i_block(&p, 0.3, 0.1),
            prob.first_block(&p.view((0, 0), (3, 3)).into_owned(), 0.0),
        ] {
            let d = f.nrows();
            assert!((&f - f.transpose()).amax() <= 1e-12);
            assert_eq!(
                f.view((d - 2, d - 2), (2, 2)).into_owned(),
                Mat::identity(2, 2) * -2.0
            );
        }
    }

    #[test]
    fn affine_in_lambda() {
        let prob = scalar_problem(-1.0);
        let p = Mat::from_fn(4, 4, |r, c| if r == c { 2.0 } else { 0.1 });
        let (lo, hi) = (0.2, 7.0);
        let mid = prob.i_block(&p, 0.5 * (lo + hi), 0.0);
        let avg = (prob.i_block(&p, lo, 0.0) + prob.i_block(&p, hi, 0.0)) * 0.5;
        assert!((mid - avg).amax() <= 1e-10);
    }

    #[test]
    fn sector_validation() {
        let prob = scalar_problem(-1.0);
        assert!(matches!(prob.with_gamma(1.5), Err(Error::InvalidSector(_))));
        assert!(prob.with_gamma(0.4).is_ok());
    }
}
