use serde::Serialize;

use super::verify::Certificate;
use crate::linalg::{max_eigenvalue, min_eigenvalue, spectral_norm};
use crate::nonlinearity::SectorBounds;
use crate::protocol::{AgentModel, ReferencePoint};

/// Ultimate bound on `‖x − 𝟙⊗x⋆‖` implied by a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuboptimalityBound {
    pub epsilon: f64,
    /// `γ·ε`, using `‖φ′(ū, t)‖ ≤ γ‖ū‖`.
    pub epsilon_tight: f64,
    pub rho: f64,
    pub lambda_upper: f64,
    pub lambda_lower: f64,
    pub input_norm: f64,
    pub u_bar_norm: f64,
    pub gamma: f64,
}

impl SuboptimalityBound {
    /// `ε` for another margin `ρ`, holding everything else fixed.
    pub fn epsilon_at(&self, rho: f64) -> f64 {
        epsilon(
            self.lambda_upper,
            self.lambda_lower,
            self.input_norm,
            self.u_bar_norm,
            rho,
        )
    }
}

fn epsilon(upper: f64, lower: f64, b_norm: f64, u_norm: f64, rho: f64) -> f64 {
    if u_norm == 0.0 {
        return 0.0;
    }
    if rho <= 0.0 || lower <= 0.0 {
        return f64::INFINITY;
    }
    2.0 * (upper / lower).sqrt() * (b_norm * upper / rho) * u_norm
}

/// `ε = 2√(λ̄/λ̲)·(‖B‖λ̄/ρ)·‖ū‖` with `λ̄`, `λ̲` the extreme eigenvalues over
/// `P` and `P̌`, and `ρ` the certificate's margin.
pub fn suboptimality_bound(
    cert: &Certificate,
    model: &AgentModel,
    bounds: &SectorBounds,
    reference: &ReferencePoint,
) -> SuboptimalityBound {
    let lambda_upper = max_eigenvalue(&cert.p).max(max_eigenvalue(&cert.p_check));
    let lambda_lower = min_eigenvalue(&cert.p).min(min_eigenvalue(&cert.p_check));
    let input_norm = spectral_norm(&model.input_matrix(bounds));
    let u_bar_norm = reference.u_bar.norm();
    let eps = epsilon(lambda_upper, lambda_lower, input_norm, u_bar_norm, cert.rho);
    let gamma = bounds.gamma();
    SuboptimalityBound {
        epsilon: eps,
        epsilon_tight: if gamma == 0.0 { 0.0 } else { gamma * eps },
        rho: cert.rho,
        lambda_upper,
        lambda_lower,
        input_norm,
        u_bar_norm,
        gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_by_hand() {
        // λ̄ = 4, λ̲ = 1, ‖B‖ = 2, ‖ū‖ = 3, ρ = 0.5 → 2·2·(2·4/0.5)·3 = 192
        assert!((epsilon(4.0, 1.0, 2.0, 3.0, 0.5) - 192.0).abs() < 1e-12);
        assert_eq!(epsilon(4.0, 1.0, 2.0, 0.0, 0.5), 0.0);
        assert_eq!(epsilon(4.0, 1.0, 2.0, 1.0, 0.0), f64::INFINITY);
    }
}
