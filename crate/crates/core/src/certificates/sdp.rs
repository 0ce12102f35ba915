//! Dense log-barrier path-following for small linear SDPs
//!
//! ```text
//! minimize cᵀz  subject to  S_k(z) = C_k + Σⱼ zⱼ A_kj ≻ 0
//! ```

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Affine symmetric matrix map `z ↦ C + Σⱼ zⱼAⱼ`; zero coefficients are dropped.
#[derive(Debug, Clone)]
pub struct AffineLmi {
    constant: Mat,
    terms: Vec<(usize, Mat)>,
}

impl AffineLmi {
    /// Extracts the coefficients of an affine map by probing it at `0` and at
    /// each unit vector.
    pub fn from_map(num_vars: usize, map: impl Fn(&Vector) -> Mat) -> Self {
        let zero = Vector::zeros(num_vars);
        let constant = sym(&map(&zero));
        let mut terms = Vec::new();
        let mut e = zero;
        for j in 0..num_vars {
            e[j] = 1.0;
            let coeff = sym(&map(&e)) - &constant;
            e[j] = 0.0;
            if coeff.amax() > 0.0 {
                terms.push((j, coeff));
            }
        }
        Self { constant, terms }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, z: &Vector) -> Mat {
        let mut s = self.constant.clone();
        for (j, a) in &self.terms {
            s += a * z[*j];
        }
        s
    }
}

fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub initial_tau: f64,
    pub tau_growth: f64,
    /// Stop once the central-path gap bound `θ/τ` falls below this.
    pub gap_tol: f64,
    /// Stop centering when half the squared Newton decrement is below this.
    pub centering_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            initial_tau: 1.0,
            tau_growth: 10.0,
            gap_tol: 1e-10,
            centering_tol: 1e-10,
            max_newton: 80,
            max_outer: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub z: Vector,
    pub objective: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
}

/// `−log det S` via Cholesky, `None` if `S` is not positive definite.
fn neg_log_det(s: &Mat) -> Option<f64> {
    let chol = s.clone().cholesky()?;
    let l = chol.l_dirty();
    Some(-2.0 * (0..s.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

fn barrier_value(c: &Vector, lmis: &[AffineLmi], tau: f64, z: &Vector) -> Option<f64> {
    let mut value = tau * c.dot(z);
    for lmi in lmis {
        value += neg_log_det(&lmi.eval(z))?;
    }
    Some(value)
}

/// Gradient and Hessian of `τcᵀz − Σ log det S_k(z)`.
fn barrier_derivatives(
    c: &Vector,
    lmis: &[AffineLmi],
    tau: f64,
    z: &Vector,
) -> Result<(Vector, Mat)> {
    let nv = z.len();
    let mut grad = c * tau;
    let mut hess = Mat::zeros(nv, nv);
    for lmi in lmis {
        let s_inv = lmi
            .eval(z)
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("iterate left the feasible cone".into()))?
            .inverse();
        let scaled: Vec<(usize, Mat)> = lmi.terms.iter().map(|(j, a)| (*j, &s_inv * a)).collect();
        for (a, (i, mi)) in scaled.iter().enumerate() {
            grad[*i] -= mi.trace();
            for (j, mj) in &scaled[a..] {
                // tr(Mᵢ Mⱼ) = Σ Mᵢ ∘ Mⱼᵀ
                let h = mi.component_mul(&mj.transpose()).sum();
                hess[(*i, *j)] += h;
                if i != j {
                    hess[(*j, *i)] += h;
                }
            }
        }
    }
    Ok((grad, hess))
}

fn newton_direction(grad: &Vector, hess: &Mat) -> Result<Vector> {
    if let Some(chol) = hess.clone().cholesky() {
        return Ok(-chol.solve(grad));
    }
    let scale = hess.diagonal().amax().max(1.0);
    let regularized = hess + Mat::identity(hess.nrows(), hess.ncols()) * (scale * 1e-12);
    if let Some(chol) = regularized.cholesky() {
        return Ok(-chol.solve(grad));
    }
    hess.clone()
        .lu()
        .solve(&-grad)
        .ok_or_else(|| Error::NumericalFailure("singular Newton system".into()))
}

/// Minimizes `cᵀz` over the intersection of the LMIs from a strictly
/// feasible start.
pub fn minimize(
    c: &Vector,
    lmis: &[AffineLmi],
    z0: &Vector,
    settings: &BarrierSettings,
) -> Result<BarrierSolution> {
    if c.len() != z0.len() {
        return Err(Error::DimensionMismatch(format!(
            "objective has {} entries, start point {}",
            c.len(),
            z0.len()
        )));
    }
    let theta: usize = lmis.iter().map(AffineLmi::dim).sum();
    let mut z = z0.clone();
    if barrier_value(c, lmis, 1.0, &z).is_none() {
        return Err(Error::NumericalFailure(
            "barrier start point is not strictly feasible".into(),
        ));
    }

    let mut tau = settings.initial_tau;
    let mut newton_steps = 0;
    let mut outer = 0;
    while outer < settings.max_outer {
        outer += 1;
        for _ in 0..settings.max_newton {
            let (grad, hess) = barrier_derivatives(c, lmis, tau, &z)?;
            let dz = newton_direction(&grad, &hess)?;
            let slope = grad.dot(&dz);
            if -slope / 2.0 <= settings.centering_tol {
                break;
            }
            let current = barrier_value(c, lmis, tau, &z).unwrap_or(f64::INFINITY);
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-14 {
                let trial = &z + &dz * step;
                if let Some(v) = barrier_value(c, lmis, tau, &trial) {
                    if v <= current + 0.25 * step * slope {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            newton_steps += 1;
            if !accepted {
                break;
            }
        }
        if theta as f64 / tau < settings.gap_tol {
            break;
        }
        tau *= settings.tau_growth;
    }
    Ok(BarrierSolution {
        objective: c.dot(&z),
        z,
        outer_iterations: outer,
        newton_steps,
    })
}

/// Number of free entries of a symmetric `d × d` matrix.
pub fn sym_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Symmetric matrix from its upper triangle, read row by row.
pub fn sym_unpack(z: &[f64], d: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    let mut k = 0;
    for r in 0..d {
        for c in r..d {
            m[(r, c)] = z[k];
            m[(c, r)] = z[k];
            k += 1;
        }
    }
    m
}

pub fn sym_pack(m: &Mat) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(sym_len(d));
    for r in 0..d {
        for c in r..d {
            out.push(0.5 * (m[(r, c)] + m[(c, r)]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_pack_round_trip() {
        let m = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        assert_eq!(sym_unpack(&sym_pack(&m), 3), m);
        assert_eq!(sym_len(3), 6);
    }

    #[test]
    fn coefficient_extraction_recovers_affine_map() {
        let lmi = AffineLmi::from_map(2, |z| {
            Mat::from_row_slice(2, 2, &[1.0 + z[0], z[1], z[1], 2.0 - z[0]])
        });
        let z = Vector::from_vec(vec![0.3, -0.7]);
        let direct = Mat::from_row_slice(2, 2, &[1.3, -0.7, -0.7, 1.7]);
        assert!((lmi.eval(&z) - direct).amax() < 1e-15);
    }

    #[test]
    fn minimizes_largest_eigenvalue() {
        // min t s.t. tI − diag(1, 3) − x·[[0,1],[1,0]] ≻ 0 is attained at x = 0, t = 3.
        let lmi = AffineLmi::from_map(2, |z| {
            Mat::from_row_slice(2, 2, &[z[1] - 1.0, -z[0], -z[0], z[1] - 3.0])
        });
        let c = Vector::from_vec(vec![0.0, 1.0]);
        let sol = minimize(
            &c,
            &[lmi],
            &Vector::from_vec(vec![0.5, 10.0]),
            &Default::default(),
        )
        .unwrap();
        assert!((sol.objective - 3.0).abs() < 1e-8);
        assert!(sol.z[0].abs() < 1e-4);
    }

    #[test]
    fn linear_program_as_diagonal_lmi() {
        // min −x − y s.t. x ≥ 0, y ≥ 0, x + 2y ≤ 4, 3x + y ≤ 6 → optimum at (1.6, 1.2)
        let lmi = AffineLmi::from_map(2, |z| {
            Mat::from_diagonal(&Vector::from_vec(vec![
                z[0],
                z[1],
                4.0 - z[0] - 2.0 * z[1],
                6.0 - 3.0 * z[0] - z[1],
            ]))
        });
        let c = Vector::from_vec(vec![-1.0, -1.0]);
        let sol = minimize(
            &c,
            &[lmi],
            &Vector::from_vec(vec![0.5, 0.5]),
            &Default::default(),
        )
        .unwrap();
        assert!((sol.z[0] - 1.6).abs() < 1e-8 && (sol.z[1] - 1.2).abs() < 1e-8);
    }

    #[test]
    fn rejects_infeasible_start() {
        let lmi = AffineLmi::from_map(1, |z| Mat::from_element(1, 1, z[0]));
        let c = Vector::from_element(1, 1.0);
        assert!(minimize(
            &c,
            &[lmi],
            &Vector::from_element(1, -1.0),
            &Default::default()
        )
        .is_err());
    }
}
