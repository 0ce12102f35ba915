//! Time-varying input nonlinearities `φᵢ(u, t)` and their decomposition
//! `B₀φ(u, t) = Bu − Bφ′(u, t)` with `B = βB₀` and a residual `φ′` confined
//! to the sector `[0, γ]`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorBounds {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl SectorBounds {
    /// `0 < α ≤ β`, `(β − α)/β ≤ γ ≤ 1`. Passing `None` for `γ` uses the tight value.
    pub fn new(alpha: f64, beta: f64, gamma: Option<f64>) -> Result<Self> {
        let tight = tight_gamma(alpha, beta)?;
        let gamma = gamma.unwrap_or(tight);
        if !gamma.is_finite() || gamma < tight - 1e-12 || gamma > 1.0 {
            return Err(Error::InvalidBounds(format!(
                "gamma = {gamma} must lie in [{tight}, 1] for alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Declared residual sector bound (possibly larger than the tight one).
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.alpha, self.beta, Some(gamma))
    }
}

/// Tight residual sector bound `(β − α)/β`.
pub fn tight_gamma(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha.is_finite() && beta.is_finite()) || alpha <= 0.0 || beta < alpha {
        return Err(Error::InvalidBounds(format!(
            "need 0 < alpha <= beta, got alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok((beta - alpha) / beta)
}

pub type CustomNonlinearityFn = dyn Fn(&Vector, f64) -> Vector + Send + Sync;

/// Component-wise input nonlinearity.
#[derive(Clone)]
pub enum NonlinearityKind {
    Identity,
    /// `[φ(u, t)]ⱼ = (base + amp·sin(freq·t))·uⱼ`.
    SinusoidalGain {
        base: f64,
        amp: f64,
        freq: f64,
    },
    /// Odd piecewise-linear map. `slopes[0]` applies on `|u| ≤ breakpoints[0]`,
    /// `slopes[k]` between `breakpoints[k-1]` and `breakpoints[k]`, and the last
    /// slope beyond the final breakpoint. A single slope is a linear gain.
    SlopeTable {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
    },
    /// Arbitrary map `(u, t) ↦ φ(u, t)`; must satisfy its declared bounds.
    Custom(Arc<CustomNonlinearityFn>),
}

impl fmt::Debug for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "Identity"),
            Self::SinusoidalGain { base, amp, freq } => f
                .debug_struct("SinusoidalGain")
                .field("base", base)
                .field("amp", amp)
                .field("freq", freq)
                .finish(),
            Self::SlopeTable {
                breakpoints,
                slopes,
            } => f
                .debug_struct("SlopeTable")
                .field("breakpoints", breakpoints)
                .field("slopes", slopes)
                .finish(),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputNonlinearity {
    kind: NonlinearityKind,
    bounds: SectorBounds,
}

impl InputNonlinearity {
    pub fn new(kind: NonlinearityKind, bounds: SectorBounds) -> Result<Self> {
        if let NonlinearityKind::SlopeTable {
            breakpoints,
            slopes,
        } = &kind
        {
            if slopes.len() != breakpoints.len() + 1 {
                return Err(Error::Config(
                    "slope table needs exactly one more slope than breakpoints".into(),
                ));
            }
            if breakpoints.iter().any(|b| !(b.is_finite() && *b > 0.0))
                || breakpoints.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(Error::Config(
                    "slope-table breakpoints must be positive and strictly increasing".into(),
                ));
            }
        }
        Ok(Self { kind, bounds })
    }

    /// `φ(u) = u` with `α = β = 1`.
    pub fn identity() -> Self {
        Self {
            kind: NonlinearityKind::Identity,
            bounds: SectorBounds::new(1.0, 1.0, None).expect("valid"),
        }
    }

    /// Constant per-component gain `slope·u`.
    pub fn linear(slope: f64, bounds: SectorBounds) -> Result<Self> {
        Self::new(
            NonlinearityKind::SlopeTable {
                breakpoints: vec![],
                slopes: vec![slope],
            },
            bounds,
        )
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn bounds(&self) -> SectorBounds {
        self.bounds
    }

    pub fn with_bounds(&self, bounds: SectorBounds) -> Self {
        Self {
            kind: self.kind.clone(),
            bounds,
        }
    }

    /// `φ(u, t)`.
    pub fn apply(&self, u: &Vector, t: f64) -> Result<Vector> {
        if u.iter().any(|v| !v.is_finite()) || !t.is_finite() {
            return Err(Error::NonFinite("nonlinearity input"));
        }
        Ok(self.apply_unchecked(u, t))
    }

    pub(crate) fn apply_unchecked(&self, u: &Vector, t: f64) -> Vector {
        match &self.kind {
            NonlinearityKind::Identity => u.clone(),
            NonlinearityKind::SinusoidalGain { base, amp, freq } => {
                u * (base + amp * (freq * t).sin())
            }
            NonlinearityKind::SlopeTable {
                breakpoints,
                slopes,
            } => u.map(|x| slope_table_eval(breakpoints, slopes, x)),
            NonlinearityKind::Custom(f) => f(u, t),
        }
    }

    /// Residual `φ′(u, t) = u − φ(u, t)/β`.
    pub fn residual(&self, u: &Vector, t: f64) -> Result<Vector> {
        Ok(u - self.apply(u, t)? / self.bounds.beta)
    }

    pub(crate) fn residual_unchecked(&self, u: &Vector, t: f64) -> Vector {
        u - self.apply_unchecked(u, t) / self.bounds.beta
    }

    /// Evaluates the incremental residual sector condition, the plain residual
    /// sector condition, and the component-wise slope bounds on each sample
    /// `(u, u′, t)`, reporting worst violations.
    pub fn verify_sector(&self, samples: &[(Vector, Vector, f64)]) -> Result<SectorReport> {
        let gamma = self.bounds.gamma;
        let mut incremental = f64::NEG_INFINITY;
        let mut plain = f64::NEG_INFINITY;
        let mut slope = 0.0_f64;
        for (u, u2, t) in samples {
            let r = self.residual(u, *t)?;
            let r2 = self.residual(u2, *t)?;
            let dr = &r2 - &r;
            let du = u2 - u;
            incremental = incremental.max(dr.dot(&(&dr - &du * gamma)));
            plain = plain
                .max(r.dot(&(&r - u * gamma)))
                .max(r2.dot(&(&r2 - u2 * gamma)));

            let dphi = self.apply(u2, *t)? - self.apply(u, *t)?;
            for j in 0..u.len() {
                if du[j].abs() > 1e-9 {
                    let s = dphi[j] / du[j];
                    let excess = (self.bounds.alpha - s).max(s - self.bounds.beta);
                    slope = slope.max(excess);
                }
            }
        }
        Ok(SectorReport {
            samples: samples.len(),
            max_incremental_violation: incremental.max(0.0),
            max_sector_violation: plain.max(0.0),
            max_slope_violation: slope,
        })
    }
}

fn slope_table_eval(breakpoints: &[f64], slopes: &[f64], x: f64) -> f64 {
    let mag = x.abs();
    let mut acc = 0.0;
    let mut prev = 0.0;
    for (k, &bp) in breakpoints.iter().enumerate() {
        if mag <= bp {
            return x.signum() * (acc + slopes[k] * (mag - prev));
        }
        acc += slopes[k] * (bp - prev);
        prev = bp;
    }
    x.signum() * (acc + slopes[slopes.len() - 1] * (mag - prev))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorReport {
    pub samples: usize,
    /// Worst `(Δφ′)ᵀ(Δφ′ − γΔu)`, clamped at zero.
    pub max_incremental_violation: f64,
    /// Worst `φ′(u)ᵀ(φ′(u) − γu)`, clamped at zero.
    pub max_sector_violation: f64,
    /// Largest distance of a component difference quotient outside `[α, β]`.
    pub max_slope_violation: f64,
}

impl SectorReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_incremental_violation <= tol
            && self.max_sector_violation <= tol
            && self.max_slope_violation <= tol
    }
}

/// One nonlinearity per agent, all sharing the same sector bounds.
#[derive(Debug, Clone)]
pub struct AgentNonlinearities {
    per_agent: Vec<InputNonlinearity>,
    bounds: SectorBounds,
}

impl AgentNonlinearities {
    pub fn homogeneous(nl: InputNonlinearity, num_agents: usize) -> Self {
        let bounds = nl.bounds;
        Self {
            per_agent: vec![nl; num_agents],
            bounds,
        }
    }

    pub fn heterogeneous(per_agent: Vec<InputNonlinearity>) -> Result<Self> {
        let first = per_agent
            .first()
            .ok_or_else(|| Error::Config("empty nonlinearity list".into()))?
            .bounds;
        if per_agent.iter().any(|nl| nl.bounds != first) {
            return Err(Error::Config(
                "all agents must declare identical (alpha, beta, gamma)".into(),
            ));
        }
        Ok(Self {
            per_agent,
            bounds: first,
        })
    }

    pub fn bounds(&self) -> SectorBounds {
        self.bounds
    }

    pub fn num_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn agent(&self, i: usize) -> &InputNonlinearity {
        &self.per_agent[i]
    }

    /// Same kinds with a different declared `γ`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let bounds = self.bounds.with_gamma(gamma)?;
        Ok(Self {
            per_agent: self
                .per_agent
                .iter()
                .map(|nl| nl.with_bounds(bounds))
                .collect(),
            bounds,
        })
    }

    /// Stacked `φ′(u, t)` for an agent-stacked input of block size `m`.
    pub fn residual_stacked(&self, u: &Vector, t: f64, m: usize) -> Vector {
        let mut out = Vector::zeros(u.len());
        for (i, nl) in self.per_agent.iter().enumerate() {
            let ui = u.rows(i * m, m).into_owned();
            out.rows_mut(i * m, m)
                .copy_from(&nl.residual_unchecked(&ui, t));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn sinusoid() -> InputNonlinearity {
        InputNonlinearity::new(
            NonlinearityKind::SinusoidalGain {
                base: 0.8,
                amp: 0.2,
                freq: 2.0,
            },
            SectorBounds::new(0.6, 1.0, Some(0.5)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn sinusoid_values() {
        let nl = sinusoid();
        assert_eq!(nl.apply(&v(&[1.0, 1.0]), 0.0).unwrap(), v(&[0.8, 0.8]));
        let y = nl.apply(&v(&[1.0, 0.0]), PI / 4.0).unwrap();
        assert!((y - v(&[1.0, 0.0])).amax() < 1e-15);
        assert_eq!(nl.apply(&Vector::zeros(2), 3.7).unwrap(), Vector::zeros(2));
        assert!(nl.apply(&v(&[f64::INFINITY, 0.0]), 0.0).is_err());
    }

    #[test]
    fn residual_values() {
        let id = InputNonlinearity::identity();
        assert_eq!(
            id.residual(&v(&[3.0, -2.0]), 1.0).unwrap(),
            Vector::zeros(2)
        );
        let r = sinusoid().residual(&v(&[1.0, 1.0]), 0.0).unwrap();
        assert!((r - v(&[0.2, 0.2])).amax() < 1e-15);
        assert_eq!(
            sinusoid().residual(&Vector::zeros(2), 9.0).unwrap(),
            Vector::zeros(2)
        );
    }

    #[test]
    fn decomposition_identity() {
        let nl = sinusoid();
        let b0 = Mat::from_row_slice(2, 2, &[1.0, 5.0, 2.0, 3.0]);
        let beta = 1.7;
        let nl = nl.with_bounds(SectorBounds::new(0.6 / 1.7, beta, Some(0.9)).unwrap());
        let b = &b0 * beta;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let u = v(&[rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]);
            let t = rng.gen_range(0.0..10.0);
            let lhs = &b0 * nl.apply(&u, t).unwrap();
            let rhs = &b * &u - &b * nl.residual(&u, t).unwrap();
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn tight_gamma_values() {
        assert!((tight_gamma(0.6, 1.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(tight_gamma(0.7, 0.7).unwrap(), 0.0);
        assert!((tight_gamma(0.5, 2.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(tight_gamma(0.0, 1.0).is_err());
        assert!(tight_gamma(-0.1, 1.0).is_err());
        assert!(tight_gamma(1.0, 0.5).is_err());
    }

    #[test]
    fn declared_gamma_cannot_undercut_tight_value() {
        assert!(SectorBounds::new(0.6, 1.0, Some(0.3)).is_err());
        assert!(SectorBounds::new(0.6, 1.0, Some(0.4)).is_ok());
        assert!(SectorBounds::new(0.6, 1.0, Some(1.5)).is_err());
    }

    #[test]
    fn sinusoid_slopes_stay_in_sector() {
        let nl = sinusoid();
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            let s = nl.apply(&v(&[1.0]), t).unwrap()[0];
            assert!((0.6..=1.0).contains(&s));
        }
    }

    #[test]
    fn sector_verification() {
        let nl = sinusoid();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<_> = (0..2000)
            .map(|_| {
                (
                    v(&[rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]),
                    v(&[rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]),
                    rng.gen_range(0.0..10.0),
                )
            })
            .collect();
        assert!(nl.verify_sector(&samples).unwrap().holds(1e-12));

        let same: Vec<_> = samples
            .iter()
            .map(|(u, _, t)| (u.clone(), u.clone(), *t))
            .collect();
        assert_eq!(
            nl.verify_sector(&same).unwrap().max_incremental_violation,
            0.0
        );

        let shallow =
            InputNonlinearity::linear(0.3, SectorBounds::new(0.6, 1.0, None).unwrap()).unwrap();
        let report = shallow.verify_sector(&samples).unwrap();
        assert!((report.max_slope_violation - 0.3).abs() < 1e-9);
        assert!(!report.holds(1e-12));
    }

    #[test]
    fn slope_table_is_odd_and_continuous() {
        let nl = InputNonlinearity::new(
            NonlinearityKind::SlopeTable {
                breakpoints: vec![1.0, 2.0],
                slopes: vec![1.0, 0.5, 0.8],
            },
            SectorBounds::new(0.5, 1.0, None).unwrap(),
        )
        .unwrap();
        let f = |x: f64| nl.apply(&v(&[x]), 0.0).unwrap()[0];
        assert_eq!(f(0.5), 0.5);
        assert_eq!(f(1.5), 1.25);
        assert!((f(3.0) - 2.3).abs() < 1e-15);
        assert_eq!(f(-3.0), -f(3.0));
        assert_eq!(f(0.0), 0.0);
    }

    #[test]
    fn heterogeneous_bounds_must_agree() {
        let a = sinusoid();
        let b = InputNonlinearity::identity();
        assert!(AgentNonlinearities::heterogeneous(vec![a.clone(), b]).is_err());
        assert!(AgentNonlinearities::heterogeneous(vec![a.clone(), a]).is_ok());
    }
}
