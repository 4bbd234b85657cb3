//! Fixed-step simulation of the robot team and the target.
//!
//! Each step, in order: apply due events, evaluate the target velocity, update
//! every estimator from the measured target position, solve every robot's QP on
//! the same pre-step snapshot, log, then integrate robots and target together.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{ConvoyError, Result};
use crate::estimator::{estimator_step, EstimatorState, CLAMP_FRACTION};
use crate::metrics::{convoy_error, lyapunov_value, ordering_sequence, stationarity_residual};
use crate::qp::{closed_form_input, row_jacobian, solve, ConvoyQp, SolveStatus};
use crate::scenario::{
    EventKind, Obstacle, RobotState, RobotStatus, ScenarioConfig, TargetMotionSpec, TargetState,
};
use crate::subtasks::{assemble_constraints, ControlParams, SubtaskEval};
use crate::vector::VecN;

/// Planar unicycle; the controlled point sits `ℓ` ahead of `position` along the heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicyclePose {
    pub position: VecN,
    pub heading: f64,
    /// Last forward speed command.
    pub v: f64,
    /// Last turn-rate command.
    pub u_theta: f64,
}

impl UnicyclePose {
    pub fn new(position: VecN, heading: f64) -> Self {
        UnicyclePose {
            position,
            heading: wrap_angle(heading),
            v: 0.0,
            u_theta: 0.0,
        }
    }

    /// Pose whose offset point is `point`.
    pub fn from_offset_point(point: &VecN, heading: f64, ell: f64) -> Self {
        let mut position = point.clone();
        position[0] -= ell * heading.cos();
        position[1] -= ell * heading.sin();
        UnicyclePose::new(position, heading)
    }

    pub fn offset_point(&self, ell: f64) -> VecN {
        let mut p = self.position.clone();
        p[0] += ell * self.heading.cos();
        p[1] += ell * self.heading.sin();
        p
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta - TAU * ((theta + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Planar velocity command to unicycle speed and turn rate.
pub fn nid_transform(u_star: &VecN, theta: f64, ell: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let v = u_star[0] * c + u_star[1] * s;
    let u_theta = (-u_star[0] * s + u_star[1] * c) / ell;
    (v, u_theta)
}

pub fn unicycle_step(pose: &UnicyclePose, v: f64, u_theta: f64, dt: f64) -> UnicyclePose {
    let (s, c) = pose.heading.sin_cos();
    let mut position = pose.position.clone();
    position[0] += dt * v * c;
    position[1] += dt * v * s;
    UnicyclePose {
        position,
        heading: wrap_angle(pose.heading + dt * u_theta),
        v,
        u_theta,
    }
}

/// Ball-shaped implicit task `φ = ‖x − c‖² − ρ²`.
pub fn ball_subtask(x: &VecN, center: &VecN, radius: f64) -> SubtaskEval {
    let d = x - center;
    SubtaskEval {
        phi: d.dot(&d) - radius * radius,
        grad: &d * 2.0,
    }
}

/// One best-effort gradient-descent step `x − dt·∇φ(x)`.
pub fn baseline_gradient_step(
    x: &VecN,
    subtask: impl Fn(&VecN) -> Result<SubtaskEval>,
    dt: f64,
) -> Result<VecN> {
    let ev = subtask(x)?;
    Ok(x.axpy(-dt, &ev.grad))
}

pub fn target_velocity(spec: &TargetMotionSpec, t: f64, x_d: &VecN) -> Result<VecN> {
    spec.velocity(t, x_d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub id: u32,
    pub position: VecN,
    pub u: VecN,
    pub delta: f64,
    pub n_active_rows: usize,
    pub iterations: usize,
    pub status: RobotStatus,
    /// `‖v̂ − v_d‖` of the estimate used this step.
    pub v_hat_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub x_d: VecN,
    pub v_d: VecN,
    pub robots: Vec<RobotRecord>,
    pub convoy_error: VecN,
    /// Over active robots; infinite with fewer than two.
    pub min_pair_dist: f64,
    pub min_target_dist: f64,
    /// Smallest `‖x_i − c‖ − r_o` over active robots and scenario obstacles.
    pub min_obstacle_clearance: Option<f64>,
    pub lyapunov: f64,
    pub max_residual: f64,
    pub ordering: Option<Vec<u32>>,
    /// Largest `‖u*_solver − u*_closed‖` over robots whose rows were all active
    /// with the box inactive.
    pub closed_form_gap: Option<f64>,
}

impl StepRecord {
    pub fn robot(&self, id: u32) -> Option<&RobotRecord> {
        self.robots.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub scenario: String,
    pub n: usize,
    pub dt: f64,
    pub zeta: f64,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: usize,
    pub t: f64,
    pub robots: Vec<RobotState>,
    pub target: TargetState,
    /// One per robot, aligned with `robots`.
    pub estimators: Vec<EstimatorState>,
    /// Unicycle bodies when `nid_ell` is set, aligned with `robots`.
    pub poses: Option<Vec<UnicyclePose>>,
}

impl SimState {
    pub fn initial(cfg: &ScenarioConfig) -> Result<Self> {
        let robots = cfg.initial_robots();
        let x_d = cfg.target_motion.start().clone();
        let v_d = target_velocity(&cfg.target_motion, 0.0, &x_d)?;
        let estimators = robots
            .iter()
            .map(|_| EstimatorState::new(x_d.clone(), cfg.chi1, cfg.chi2, cfg.zeta))
            .collect();
        let poses = match cfg.nid_ell {
            Some(ell) => {
                if cfg.n != 2 {
                    return Err(ConvoyError::InvalidScenario(
                        "unicycle robots need n = 2".into(),
                    ));
                }
                Some(
                    robots
                        .iter()
                        .map(|r| {
                            UnicyclePose::from_offset_point(&r.position, r.heading.unwrap_or(0.0), ell)
                        })
                        .collect(),
                )
            }
            None => None,
        };
        Ok(SimState {
            step: 0,
            t: 0.0,
            robots,
            target: TargetState {
                position: x_d,
                velocity: v_d,
            },
            estimators,
            poses,
        })
    }
}

fn with_context(robot: u32, t: f64) -> impl FnOnce(ConvoyError) -> ConvoyError {
    move |e| ConvoyError::Step {
        robot,
        t,
        source: Box::new(e),
    }
}

fn min_pair_distance(states: &[RobotState]) -> f64 {
    let active: Vec<&RobotState> = states.iter().filter(|s| s.is_active()).collect();
    let mut best = f64::INFINITY;
    for (a, i) in active.iter().enumerate() {
        for j in &active[a + 1..] {
            best = best.min(i.position.distance(&j.position));
        }
    }
    best
}

/// Advances one step of length `dt` and returns the new state with the record of
/// the step just taken (robot positions and inputs at the start of the step).
pub fn sim_step(state: &SimState, cfg: &ScenarioConfig, dt: f64) -> Result<(SimState, StepRecord)> {
    let t = state.t;
    let params = ControlParams::from(cfg);
    let mut robots = state.robots.clone();

    for ev in &cfg.events {
        if ev.time <= t + 1e-9 && ev.kind == EventKind::Breakdown {
            for r in robots.iter_mut().filter(|r| ev.robot_ids.contains(&r.id)) {
                r.status = RobotStatus::Broken;
            }
        }
    }

    let x_d = state.target.position.clone();
    let v_d = target_velocity(&cfg.target_motion, t, &x_d)?;

    let mut obstacles: Vec<Obstacle> = cfg.obstacles.clone();
    if cfg.broken_as_obstacles {
        obstacles.extend(
            robots
                .iter()
                .filter(|r| !r.is_active())
                .map(|r| Obstacle::new(r.position.clone(), cfg.collision_radius)),
        );
    }

    let limit = cfg.zeta * CLAMP_FRACTION;
    let mut estimators = Vec::with_capacity(robots.len());
    let mut records = Vec::with_capacity(robots.len());
    let mut gap: Option<f64> = None;
    for (robot, est) in robots.iter().zip(&state.estimators) {
        let n = robot.position.dim();
        if !robot.is_active() {
            estimators.push(est.clone());
            records.push(RobotRecord {
                id: robot.id,
                position: robot.position.clone(),
                u: VecN::zeros(n),
                delta: 0.0,
                n_active_rows: 0,
                iterations: 0,
                status: robot.status,
                v_hat_error: 0.0,
                heading: None,
            });
            continue;
        }
        let est = estimator_step(est, &x_d, dt);
        let v_hat = if cfg.oracle_velocity {
            v_d.clamp_inf(limit)
        } else {
            est.v_hat.clone()
        };
        let rows = assemble_constraints(robot.id, &robots, &x_d, &v_hat, &obstacles, &params)
            .map_err(with_context(robot.id, t))?;
        let qp = ConvoyQp::new(v_hat.clone(), rows, cfg.zeta, cfg.weight);
        let sol = solve(&qp);
        if sol.status != SolveStatus::Optimal {
            return Err(ConvoyError::Solver {
                robot: robot.id,
                t,
                status: sol.status,
            });
        }
        if sol.all_rows_active() && sol.box_inactive() {
            let (jac, gamma) = row_jacobian(&qp.rows);
            if let Ok(cf) = closed_form_input(&jac, &gamma, &v_hat, cfg.weight) {
                let g = sol.u_star.distance(&cf.u_star);
                gap = Some(gap.map_or(g, |m: f64| m.max(g)));
            }
        }
        records.push(RobotRecord {
            id: robot.id,
            position: robot.position.clone(),
            u: sol.u_star,
            delta: sol.delta_star,
            n_active_rows: sol.active_set.len(),
            iterations: sol.iterations,
            status: robot.status,
            v_hat_error: v_hat.distance(&v_d),
            heading: None,
        });
        estimators.push(est);
    }

    let active_dist = robots
        .iter()
        .filter(|r| r.is_active())
        .map(|r| r.position.distance(&x_d))
        .fold(f64::INFINITY, f64::min);
    let clearance = cfg
        .obstacles
        .iter()
        .flat_map(|o| {
            robots
                .iter()
                .filter(|r| r.is_active())
                .map(move |r| r.position.distance(&o.center) - o.radius)
        })
        .reduce(f64::min);
    let residual = stationarity_residual(&robots, &x_d, &obstacles, &params)?
        .into_iter()
        .fold(0.0, f64::max);

    let snapshot = state_with_status(&state.robots, &robots);

    // integrate
    let mut poses = state.poses.clone();
    for (k, (robot, rec)) in robots.iter_mut().zip(records.iter_mut()).enumerate() {
        if !robot.is_active() {
            if let Some(p) = poses.as_mut() {
                rec.heading = Some(p[k].heading);
            }
            continue;
        }
        match (poses.as_mut(), cfg.nid_ell) {
            (Some(p), Some(ell)) => {
                rec.heading = Some(p[k].heading);
                let (v, w) = nid_transform(&rec.u, p[k].heading, ell);
                p[k] = unicycle_step(&p[k], v, w, dt);
                robot.position = p[k].offset_point(ell);
                robot.heading = Some(p[k].heading);
            }
            _ => robot.position = robot.position.axpy(dt, &rec.u),
        }
    }

    let record = StepRecord {
        t,
        convoy_error: convoy_error(&snapshot, &x_d),
        min_pair_dist: min_pair_distance(&snapshot),
        min_target_dist: active_dist,
        min_obstacle_clearance: clearance,
        lyapunov: lyapunov_value(&snapshot, &x_d, &params)?,
        max_residual: residual,
        ordering: ordering_sequence(&snapshot, t)
            .ok()
            .map(|o| o.perm),
        closed_form_gap: gap,
        robots: records,
        x_d: x_d.clone(),
        v_d: v_d.clone(),
    };

    let step = state.step + 1;
    let next = SimState {
        step,
        t: step as f64 * dt,
        robots,
        target: TargetState {
            position: x_d.axpy(dt, &v_d),
            velocity: v_d,
        },
        estimators,
        poses,
    };
    Ok((next, record))
}

/// Pre-step positions with post-event statuses.
fn state_with_status(before: &[RobotState], after: &[RobotState]) -> Vec<RobotState> {
    before
        .iter()
        .zip(after)
        .map(|(b, a)| RobotState {
            status: a.status,
            ..b.clone()
        })
        .collect()
}

/// Runs the scenario for `round(duration / dt)` steps.
pub fn run(cfg: &ScenarioConfig) -> Result<SimLog> {
    let steps = cfg.steps();
    if steps == 0 {
        return Err(ConvoyError::EmptyLog {
            duration: cfg.duration,
            dt: cfg.dt,
        });
    }
    let mut state = SimState::initial(cfg)?;
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, record) = sim_step(&state, cfg, cfg.dt)?;
        records.push(record);
        state = next;
    }
    Ok(SimLog {
        scenario: cfg.name.clone(),
        n: cfg.n,
        dt: cfg.dt,
        zeta: cfg.zeta,
        records,
    })
}
