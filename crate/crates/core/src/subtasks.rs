//! Barrier-function subtasks and per-robot constraint rows.
//!
//! Each row has the form `grad·(u − v̂) + gamma − δ·[has_slack] ≤ 0`, with `u` the
//! robot input and `v̂` its estimate of the target velocity.

use serde::{Deserialize, Serialize};

use crate::error::{ConvoyError, Result};
use crate::scenario::{Obstacle, RobotState, ScenarioConfig};
use crate::vector::VecN;
use crate::EPS_SING;

/// Barrier value and its gradient with respect to the robot position.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtaskEval {
    pub phi: f64,
    pub grad: VecN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum RowKind {
    Target,
    Neighbor(u32),
    Obstacle(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub grad: VecN,
    pub gamma: f64,
    pub has_slack: bool,
    pub kind: RowKind,
}

/// Gains and radii shared by every robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub collision_radius: f64,
    pub sensing_radius: f64,
    pub zeta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub weight: f64,
}

impl From<&ScenarioConfig> for ControlParams {
    fn from(cfg: &ScenarioConfig) -> Self {
        ControlParams {
            collision_radius: cfg.collision_radius,
            sensing_radius: cfg.sensing_radius,
            zeta: cfg.zeta,
            eta1: cfg.eta1,
            eta2: cfg.eta2,
            weight: cfg.weight,
        }
    }
}

fn unit(v: &VecN, what: &'static str) -> Result<(f64, VecN)> {
    let d = v.norm();
    if d < EPS_SING {
        return Err(ConvoyError::Singular { what, distance: d });
    }
    Ok((d, v * (1.0 / d)))
}

/// Target approaching: `phi = ‖x_i − x_d‖`.
pub fn eval_target_subtask(x_i: &VecN, x_d: &VecN) -> Result<SubtaskEval> {
    let (d, grad) = unit(&(x_i - x_d), "robot-target distance")?;
    Ok(SubtaskEval { phi: d, grad })
}

/// Collision-free with a neighbor: `phi = r − ‖x_i − x_j‖`, nonpositive when safe.
pub fn eval_neighbor_subtask(x_i: &VecN, x_j: &VecN, r: f64) -> Result<SubtaskEval> {
    let (d, dir) = unit(&(x_i - x_j), "inter-robot distance")?;
    Ok(SubtaskEval {
        phi: r - d,
        grad: -dir,
    })
}

/// Obstacle clearance: `phi = ‖x_i − c‖ − r_o`, nonnegative when safe.
pub fn eval_obstacle_subtask(x_i: &VecN, obs: &Obstacle) -> Result<SubtaskEval> {
    let (d, grad) = unit(&(x_i - &obs.center), "robot-obstacle distance")?;
    Ok(SubtaskEval {
        phi: d - obs.radius,
        grad,
    })
}

pub fn gamma1(phi: f64, eta1: f64) -> f64 {
    eta1 * phi
}

pub fn gamma2(phi: f64, zeta: f64, eta2: f64) -> f64 {
    2.0 * zeta * phi / eta2
}

/// Active robots other than `i` within `sensing_radius` (inclusive), ascending by id.
pub fn neighbor_set(i: u32, states: &[RobotState], sensing_radius: f64) -> Vec<u32> {
    let Some(me) = states.iter().find(|s| s.id == i) else {
        return Vec::new();
    };
    let mut ids: Vec<u32> = states
        .iter()
        .filter(|s| s.id != i && s.is_active())
        .filter(|s| me.position.distance(&s.position) <= sensing_radius)
        .map(|s| s.id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Builds robot `i`'s rows: target first, then neighbors by id, then obstacles by index.
///
/// Obstacle rows enforce `d/dt φᵒ ≥ −γ₂(φᵒ)` on the true derivative `∇φᵒ·u` (the
/// obstacle is static), rewritten in the `u − v̂` row form. They are emitted only
/// while the obstacle surface is within `R − r` of the robot.
pub fn assemble_constraints(
    i: u32,
    states: &[RobotState],
    x_d: &VecN,
    v_hat: &VecN,
    obstacles: &[Obstacle],
    params: &ControlParams,
) -> Result<Vec<ConstraintRow>> {
    let me = states
        .iter()
        .find(|s| s.id == i)
        .ok_or_else(|| ConvoyError::InvalidScenario(format!("unknown robot {i}")))?;
    let x_i = &me.position;

    let target = eval_target_subtask(x_i, x_d)?;
    let mut rows = vec![ConstraintRow {
        gamma: gamma1(target.phi, params.eta1),
        grad: target.grad,
        has_slack: true,
        kind: RowKind::Target,
    }];

    for j in neighbor_set(i, states, params.sensing_radius) {
        let other = states.iter().find(|s| s.id == j).expect("neighbor exists");
        let ev = eval_neighbor_subtask(x_i, &other.position, params.collision_radius)?;
        rows.push(ConstraintRow {
            gamma: gamma2(ev.phi, params.zeta, params.eta2),
            grad: ev.grad,
            has_slack: false,
            kind: RowKind::Neighbor(j),
        });
    }

    let reach = params.sensing_radius - params.collision_radius;
    for (k, obs) in obstacles.iter().enumerate() {
        let ev = eval_obstacle_subtask(x_i, obs)?;
        if ev.phi > reach {
            continue;
        }
        // -grad·u ≤ γ₂(φ)  ⇔  (-grad)·(u − v̂) + (−grad·v̂ − γ₂(φ)) ≤ 0
        let gamma = -ev.grad.dot(v_hat) - gamma2(ev.phi, params.zeta, params.eta2);
        rows.push(ConstraintRow {
            grad: -ev.grad,
            gamma,
            has_slack: false,
            kind: RowKind::Obstacle(k),
        });
    }
    Ok(rows)
}
