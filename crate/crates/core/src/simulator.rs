//! Fixed-step RK4 integration of the networked closed loop, trajectory
//! recording and tail metrics.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::LaplacianSpectrum;
use crate::linalg::Vector;
use crate::protocol::{
    control_input, ClosedLoopState, CoordinationSystem, ReferencePoint, TransformedSystem,
};

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e9;
/// Half-width of the uniform box for random initial plant states.
pub const INITIAL_BOX: f64 = 2.0;
const V_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_final: f64,
    pub dt: f64,
    pub record_stride: usize,
    /// Drawn uniformly from `[−2, 2]` per entry when absent.
    pub initial_x: Option<Vector>,
    pub initial_v: Option<Vector>,
    pub initial_zeta: Option<Vector>,
    pub initial_eta: Option<Vector>,
    pub tail_window: (f64, f64),
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_final: 50.0,
            dt: 1e-3,
            record_stride: 10,
            initial_x: None,
            initial_v: None,
            initial_zeta: None,
            initial_eta: None,
            tail_window: (40.0, 50.0),
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(Error::Config(format!(
                "t_final must be at least dt, got {}",
                self.t_final
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be positive".into()));
        }
        let (a, b) = self.tail_window;
        if !(a < b && b <= self.t_final) {
            return Err(Error::Config(format!(
                "tail window [{a}, {b}] must satisfy t_a < t_b <= t_final = {}",
                self.t_final
            )));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Initial closed-loop state; controller states default to zero.
    pub fn initial_state(&self, num_agents: usize, n: usize) -> Result<ClosedLoopState> {
        let len = num_agents * n;
        let x = match &self.initial_x {
            Some(x) => x.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                Vector::from_fn(len, |_, _| rng.gen_range(-INITIAL_BOX..=INITIAL_BOX))
            }
        };
        let or_zero = |v: &Option<Vector>| v.clone().unwrap_or_else(|| Vector::zeros(len));
        let state = ClosedLoopState {
            x,
            v: or_zero(&self.initial_v),
            zeta: or_zero(&self.initial_zeta),
            eta: or_zero(&self.initial_eta),
        };
        for (name, part) in [
            ("x", &state.x),
            ("v", &state.v),
            ("zeta", &state.zeta),
            ("eta", &state.eta),
        ] {
            if part.len() != len {
                return Err(Error::DimensionMismatch(format!(
                    "initial {name} has length {}, expected {len}",
                    part.len()
                )));
            }
        }
        if state.v_sum(n).norm() > V_SUM_TOL {
            return Err(Error::Config(
                "initial v must sum to zero across agents".into(),
            ));
        }
        Ok(state)
    }
}

/// Recorded samples of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub num_agents: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<ClosedLoopState>,
    pub inputs: Vec<Vector>,
    /// `‖x − 𝟙⊗x⋆‖`.
    pub err: Vec<f64>,
    /// `|Σᵢfᵢ(xᵢ) − Σᵢfᵢ(x⋆)|`.
    pub obj_gap: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_v_sum(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.v_sum(self.state_dim).norm())
            .fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> Option<&ClosedLoopState> {
        self.states.last()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for name in ["x", "v", "zeta", "eta"] {
            for i in 1..=self.num_agents {
                for k in 1..=self.state_dim {
                    cols.push(format!("{name}_{i}_{k}"));
                }
            }
        }
        for i in 1..=self.num_agents {
            for k in 1..=self.input_dim {
                cols.push(format!("u_{i}_{k}"));
            }
        }
        cols.push("err".into());
        cols.push("obj_gap".into());
        cols.join(",")
    }

    /// One row per recorded sample, floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        let mut row = String::new();
        for k in 0..self.len() {
            row.clear();
            let s = &self.states[k];
            let values = std::iter::once(self.times[k])
                .chain(s.x.iter().copied())
                .chain(s.v.iter().copied())
                .chain(s.zeta.iter().copied())
                .chain(s.eta.iter().copied())
                .chain(self.inputs[k].iter().copied())
                .chain([self.err[k], self.obj_gap[k]]);
            for (j, v) in values.enumerate() {
                if j > 0 {
                    row.push(',');
                }
                row.push_str(&format!("{v:.16e}"));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Classical RK4 with `tₖ = k·dt`. `record(k, tₖ, s)` sees every
/// `stride`-th state plus the first and last.
fn rk4<F, R>(
    f: F,
    s0: Vector,
    dt: f64,
    steps: usize,
    stride: usize,
    mut record: R,
) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
    R: FnMut(usize, f64, &Vector) -> Result<()>,
{
    let mut s = s0;
    record(0, 0.0, &s)?;
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = 0.5 * dt;
        let k1 = f(t, &s)?;
        let k2 = f(t + h, &(&s + &k1 * h))?;
        let k3 = f(t + h, &(&s + &k2 * h))?;
        let k4 = f(t + dt, &(&s + &k3 * dt))?;
        s += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        let t_next = (k + 1) as f64 * dt;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("closed-loop state"));
        }
        if s.norm() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { time: t_next });
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            record(k + 1, t_next, &s)?;
        }
    }
    Ok(s)
}

pub fn simulate(system: &CoordinationSystem<'_>, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let (agents, n, m) = (system.num_agents(), system.state_dim(), system.input_dim());
    let init = cfg.initial_state(agents, n)?;
    let objectives = system.objectives;
    let x_star = objectives.solve_global_optimizer()?;
    let f_star = objectives.global_value(&x_star);
    let mut x_bar = Vector::zeros(agents * n);
    for i in 0..agents {
        x_bar.rows_mut(i * n, n).copy_from(&x_star);
    }

    let mut traj = Trajectory {
        num_agents: agents,
        state_dim: n,
        input_dim: m,
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        err: Vec::new(),
        obj_gap: Vec::new(),
    };
    rk4(
        |t, s| system.derivative(t, s),
        init.to_vector(),
        cfg.dt,
        cfg.num_steps(),
        cfg.record_stride,
        |_, t, s| {
            let state = ClosedLoopState::from_vector(s);
            traj.inputs.push(control_input(system.gains, &state)?);
            traj.err.push((&state.x - &x_bar).norm());
            traj.obj_gap
                .push((objectives.total_value(&state.x) - f_star).abs());
            traj.times.push(t);
            traj.states.push(state);
            Ok(())
        },
    )?;
    Ok(traj)
}

/// Runs independent configurations concurrently, one thread each.
pub fn simulate_many(
    system: &CoordinationSystem<'_>,
    cfgs: &[SimConfig],
) -> Vec<Result<Trajectory>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|cfg| scope.spawn(move || simulate(system, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TailMetrics {
    pub sup_err: f64,
    pub mean_err: f64,
    pub sup_obj_gap: f64,
    pub samples: usize,
}

pub fn tail_metrics(traj: &Trajectory, window: (f64, f64)) -> Result<TailMetrics> {
    let (a, b) = window;
    let slack = 1e-9 * b.abs().max(1.0);
    let idx: Vec<usize> = (0..traj.len())
        .filter(|&k| traj.times[k] >= a - slack && traj.times[k] <= b + slack)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyWindow { start: a, end: b });
    }
    let sup_err = idx.iter().map(|&k| traj.err[k]).fold(0.0, f64::max);
    let mean_err = idx.iter().map(|&k| traj.err[k]).sum::<f64>() / idx.len() as f64;
    let sup_obj_gap = idx.iter().map(|&k| traj.obj_gap[k]).fold(0.0, f64::max);
    Ok(TailMetrics {
        sup_err,
        mean_err,
        sup_obj_gap,
        samples: idx.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CrossCheck {
    pub max_deviation: f64,
    pub samples: usize,
}

/// Integrates the closed loop and, independently, its transformed block
/// form from the mapped initial state, then compares them through the map.
pub fn cross_check_transformed(
    system: &CoordinationSystem<'_>,
    spectrum: &LaplacianSpectrum,
    reference: &ReferencePoint,
    initial: &ClosedLoopState,
    horizon: f64,
    dt: f64,
) -> Result<CrossCheck> {
    let transformed = TransformedSystem::new(*system, spectrum, reference)?;
    let steps = (horizon / dt).round() as usize;
    let xi0 = transformed.project(initial);
    let (original, blocks) = std::thread::scope(|scope| {
        let original = scope.spawn(|| {
            let mut out = Vec::with_capacity(steps + 1);
            rk4(
                |t, s| system.derivative(t, s),
                initial.to_vector(),
                dt,
                steps,
                1,
                |_, _, s| {
                    out.push(transformed.project(&ClosedLoopState::from_vector(s)));
                    Ok(())
                },
            )
            .map(|_| out)
        });
        let blocks = scope.spawn(|| {
            let mut out = Vec::with_capacity(steps + 1);
            rk4(
                |t, xi| transformed.shifted_transformed_derivative(t, xi),
                xi0.clone(),
                dt,
                steps,
                1,
                |_, _, xi| {
                    out.push(xi.clone());
                    Ok(())
                },
            )
            .map(|_| out)
        });
        (
            original.join().expect("simulation thread panicked"),
            blocks.join().expect("simulation thread panicked"),
        )
    });
    let (original, blocks) = (original?, blocks?);
    let max_deviation = original
        .iter()
        .zip(&blocks)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    Ok(CrossCheck {
        max_deviation,
        samples: original.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NetworkGraph;
    use crate::linalg::Mat;
    use crate::nonlinearity::{AgentNonlinearities, InputNonlinearity};
    use crate::objectives::{ObjectiveSet, QuadraticObjective};
    use crate::protocol::{AgentModel, GainSet};

    fn flat(times: &[f64], err: &[f64]) -> Trajectory {
        Trajectory {
            num_agents: 1,
            state_dim: 1,
            input_dim: 1,
            times: times.to_vec(),
            states: times
                .iter()
                .map(|_| ClosedLoopState::from_plant(Vector::zeros(1)))
                .collect(),
            inputs: vec![Vector::zeros(1); times.len()],
            err: err.to_vec(),
            obj_gap: err.to_vec(),
        }
    }

    #[test]
    fn tail_of_constant_error() {
        let times: Vec<f64> = (0..=50).map(f64::from).collect();
        let m = tail_metrics(&flat(&times, &vec![0.1; 51]), (40.0, 50.0)).unwrap();
        assert_eq!((m.sup_err, m.samples), (0.1, 11));
        assert!((m.mean_err - 0.1).abs() < 1e-15);
    }

    #[test]
    fn tail_of_decaying_error() {
        let times: Vec<f64> = (0..=500).map(|k| k as f64 * 0.1).collect();
        let err: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let m = tail_metrics(&flat(&times, &err), (40.0, 50.0)).unwrap();
        assert!(m.sup_err <= (-40.0f64).exp() * (1.0 + 1e-12));
    }

    #[test]
    fn empty_window_is_an_error() {
        let tr = flat(&[0.0, 1.0], &[0.0, 0.0]);
        assert!(matches!(
            tail_metrics(&tr, (5.0, 6.0)),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SimConfig {
            dt: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            tail_window: (45.0, 40.0),
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            tail_window: (40.0, 60.0),
            ..ok.clone()
        }
        .validate()
        .is_err());
        let bad_v = SimConfig {
            initial_v: Some(Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0])),
            ..ok
        };
        assert!(bad_v.initial_state(2, 2).is_err());
    }

    #[test]
    fn seeded_initial_states_are_reproducible_and_boxed() {
        let cfg = SimConfig {
            rng_seed: 7,
            ..Default::default()
        };
        let a = cfg.initial_state(5, 2).unwrap();
        let b = cfg.initial_state(5, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.x.amax() <= INITIAL_BOX);
        let c = SimConfig {
            rng_seed: 8,
            ..Default::default()
        }
        .initial_state(5, 2)
        .unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn equilibrium_stays_put() {
        let model = AgentModel::new(Mat::identity(1, 1) * -1.0, Mat::identity(1, 1)).unwrap();
        let nl = AgentNonlinearities::homogeneous(InputNonlinearity::identity(), 2);
        let graph = NetworkGraph::path(2).unwrap();
        let objs = ObjectiveSet::quadratic(
            vec![QuadraticObjective::isotropic(1.0, Vector::zeros(1)).unwrap(); 2],
            None,
            None,
        )
        .unwrap();
        let gains =
            GainSet::from_stacked(&Mat::from_row_slice(1, 4, &[-1.0, 0.5, 0.2, 0.3])).unwrap();
        let sys = CoordinationSystem::new(&model, &nl, &graph, &objs, &gains).unwrap();
        let cfg = SimConfig {
            t_final: 1.0,
            dt: 0.01,
            record_stride: 5,
            initial_x: Some(Vector::zeros(2)),
            tail_window: (0.5, 1.0),
            ..Default::default()
        };
        let tr = simulate(&sys, &cfg).unwrap();
        assert_eq!(tr.len(), 21);
        assert!(tr.states.iter().all(|s| s.to_vector().amax() == 0.0));
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn divergence_is_reported() {
        let model = AgentModel::new(Mat::identity(1, 1) * 5.0, Mat::identity(1, 1)).unwrap();
        let nl = AgentNonlinearities::homogeneous(InputNonlinearity::identity(), 2);
        let graph = NetworkGraph::path(2).unwrap();
        let objs = ObjectiveSet::quadratic(
            vec![QuadraticObjective::isotropic(1.0, Vector::zeros(1)).unwrap(); 2],
            None,
            None,
        )
        .unwrap();
        let gains = GainSet::from_stacked(&Mat::zeros(1, 4)).unwrap();
        let sys = CoordinationSystem::new(&model, &nl, &graph, &objs, &gains).unwrap();
        let cfg = SimConfig {
            t_final: 10.0,
            dt: 0.01,
            initial_x: Some(Vector::from_vec(vec![1.0, 1.0])),
            tail_window: (5.0, 10.0),
            ..Default::default()
        };
        assert!(matches!(simulate(&sys, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn csv_layout() {
        let tr = flat(&[0.0, 0.5], &[1.0, 0.25]);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,x_1_1,v_1_1,zeta_1_1,eta_1_1,u_1_1,err,obj_gap"
        );
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[6], 1.0);
        assert_eq!(lines.count(), 1);
    }
}
