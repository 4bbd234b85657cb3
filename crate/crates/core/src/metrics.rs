//! Convoy error, ordering sequences, Lyapunov value, stationarity residual and
//! the objective verdicts computed from a finished log.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ConvoyError, Result};
use crate::scenario::{Obstacle, RobotState, ScenarioConfig};
use crate::sim::SimLog;
use crate::subtasks::{
    eval_neighbor_subtask, eval_obstacle_subtask, eval_target_subtask, gamma1, gamma2,
    neighbor_set, ControlParams,
};
use crate::vector::VecN;
use crate::EPS_SING;

/// Length of the final window used by objectives 1, 2(a) and the distance part of 2(b).
pub const FINAL_WINDOW: f64 = 5.0;
/// Fraction of the run over which the ordering must stay constant.
pub const ORDERING_FRACTION: f64 = 0.2;
/// Allowed dip below the collision radius from time discretization.
pub const SAFETY_MARGIN: f64 = 0.01;
/// Rounding allowance on the adjacent-distance band; robots resting in contact
/// sit at `r` up to a few ulps.
pub const DISTANCE_ROUNDING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingSequence {
    pub perm: Vec<u32>,
    pub t: f64,
}

impl OrderingSequence {
    /// Rotation of `perm` starting at its smallest id.
    pub fn canonical(&self) -> Vec<u32> {
        canonical_cycle(&self.perm)
    }
}

pub fn canonical_cycle(perm: &[u32]) -> Vec<u32> {
    let Some(start) = perm.iter().enumerate().min_by_key(|(_, id)| **id).map(|(k, _)| k) else {
        return Vec::new();
    };
    perm[start..].iter().chain(&perm[..start]).copied().collect()
}

fn active(states: &[RobotState]) -> impl Iterator<Item = &RobotState> {
    states.iter().filter(|s| s.is_active())
}

/// Centroid of the active robots minus the target position.
pub fn convoy_error(states: &[RobotState], x_d: &VecN) -> VecN {
    let mut sum = VecN::zeros(x_d.dim());
    let mut count = 0usize;
    for s in active(states) {
        sum += &s.position;
        count += 1;
    }
    if count == 0 {
        return VecN::zeros(x_d.dim());
    }
    &sum * (1.0 / count as f64) - x_d
}

/// Anticlockwise order of the active robots about their centroid, starting from
/// the smallest angle in `[0, 2π)`.
///
/// In 3D the rule is applied to the xy-projection, ties broken by z.
/// Remaining ties go to the lower id.
pub fn ordering_sequence(states: &[RobotState], t: f64) -> Result<OrderingSequence> {
    let robots: Vec<&RobotState> = active(states).collect();
    if robots.len() < 3 {
        return Err(ConvoyError::TooFewRobots {
            needed: 3,
            got: robots.len(),
        });
    }
    let k = robots.len() as f64;
    let cx = robots.iter().map(|s| s.position[0]).sum::<f64>() / k;
    let cy = robots.iter().map(|s| s.position[1]).sum::<f64>() / k;

    let mut keyed = Vec::with_capacity(robots.len());
    for s in &robots {
        let dx = s.position[0] - cx;
        let dy = s.position[1] - cy;
        if dx.hypot(dy) < EPS_SING {
            return Err(ConvoyError::DegenerateOrdering { robot: s.id });
        }
        let angle = dy.atan2(dx).rem_euclid(TAU);
        let z = if s.position.dim() > 2 { s.position[2] } else { 0.0 };
        keyed.push((angle, z, s.id));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(OrderingSequence {
        perm: keyed.into_iter().map(|(_, _, id)| id).collect(),
        t,
    })
}

fn obstacle_in_reach(phi: f64, params: &ControlParams) -> bool {
    phi <= params.sensing_radius - params.collision_radius
}

/// Per active robot, `‖grad₀·γ₁(φ₀) + Σ_j grad_j·γ₂(φ_j) + Σ_o ...‖`.
///
/// Obstacle terms use the barrier `−φᵒ ≤ 0` and only count while the obstacle is
/// within reach, matching the rows the controller sees.
pub fn stationarity_residual(
    states: &[RobotState],
    x_d: &VecN,
    obstacles: &[Obstacle],
    params: &ControlParams,
) -> Result<Vec<f64>> {
    active(states)
        .map(|s| {
            let target = eval_target_subtask(&s.position, x_d)?;
            let mut sum = &target.grad * gamma1(target.phi, params.eta1);
            for j in neighbor_set(s.id, states, params.sensing_radius) {
                let other = states.iter().find(|o| o.id == j).expect("neighbor exists");
                let ev = eval_neighbor_subtask(&s.position, &other.position, params.collision_radius)?;
                sum = sum.axpy(gamma2(ev.phi, params.zeta, params.eta2), &ev.grad);
            }
            for obs in obstacles {
                let ev = eval_obstacle_subtask(&s.position, obs)?;
                if obstacle_in_reach(ev.phi, params) {
                    sum = sum.axpy(gamma2(ev.phi, params.zeta, params.eta2), &ev.grad);
                }
            }
            Ok(sum.norm())
        })
        .collect()
}

/// `Σ_i Σ_{j∈N_i} γ₂(φ_ij)·grad_ij`; vanishes for any symmetric neighbor relation.
pub fn repulsion_sum(states: &[RobotState], params: &ControlParams) -> Result<VecN> {
    let n = states.first().map_or(0, |s| s.position.dim());
    let mut sum = VecN::zeros(n);
    for s in active(states) {
        for j in neighbor_set(s.id, states, params.sensing_radius) {
            let other = states.iter().find(|o| o.id == j).expect("neighbor exists");
            let ev = eval_neighbor_subtask(&s.position, &other.position, params.collision_radius)?;
            sum = sum.axpy(gamma2(ev.phi, params.zeta, params.eta2), &ev.grad);
        }
    }
    Ok(sum)
}

/// `V = Σ_i γ₁(φ_i0)² + ½ Σ_i Σ_{j∈N_i} γ₂(φ_ij)²`.
pub fn lyapunov_value(states: &[RobotState], x_d: &VecN, params: &ControlParams) -> Result<f64> {
    let mut v = 0.0;
    for s in active(states) {
        let target = eval_target_subtask(&s.position, x_d)?;
        v += gamma1(target.phi, params.eta1).powi(2);
        for j in neighbor_set(s.id, states, params.sensing_radius) {
            let other = states.iter().find(|o| o.id == j).expect("neighbor exists");
            let ev = eval_neighbor_subtask(&s.position, &other.position, params.collision_radius)?;
            v += 0.5 * gamma2(ev.phi, params.zeta, params.eta2).powi(2);
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective1 {
    pub passed: bool,
    pub mean_error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective2a {
    pub passed: bool,
    pub max_relative_speed: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective2b {
    pub passed: bool,
    pub min_adjacent: f64,
    pub max_adjacent: f64,
    pub lower: f64,
    pub upper: f64,
    pub ordering_constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective3 {
    pub passed: bool,
    pub min_pairwise: f64,
    pub min_target: f64,
    pub pairwise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvoyReport {
    pub scenario: String,
    pub objective1: Objective1,
    pub objective2a: Objective2a,
    pub objective2b: Objective2b,
    pub objective3: Objective3,
    /// Earliest time after which the (cyclic) ordering never changes.
    pub ordering_stable_since: Option<f64>,
    pub final_ordering: Vec<u32>,
    /// How orderings were computed; 3D runs use the xy-projection.
    pub ordering_rule: String,
    pub lyapunov_settled: bool,
    pub residual_final: f64,
    pub max_input_inf_norm: f64,
    pub min_obstacle_clearance: Option<f64>,
    /// Steps where the closed-form input applied, and the largest deviation seen there.
    pub closed_form_samples: usize,
    pub closed_form_max_gap: f64,
}

impl ConvoyReport {
    pub fn all_passed(&self) -> bool {
        self.objective1.passed
            && self.objective2a.passed
            && self.objective2b.passed
            && self.objective3.passed
    }
}

/// Evaluates the three convoying objectives on a finished log.
///
/// Orderings are compared as cycles, so a relabelled starting robot caused by an
/// angle wrapping through zero does not count as a change.
pub fn check_objectives(log: &SimLog, cfg: &ScenarioConfig) -> ConvoyReport {
    let records = &log.records;
    let t_end = records.last().map_or(0.0, |r| r.t + log.dt);
    let window_start = t_end - FINAL_WINDOW - 1e-9;
    let ordering_start = t_end * (1.0 - ORDERING_FRACTION) - 1e-9;
    let window: Vec<_> = records.iter().filter(|r| r.t >= window_start).collect();

    let mean_error = if window.is_empty() {
        f64::INFINITY
    } else {
        window.iter().map(|r| r.convoy_error.norm()).sum::<f64>() / window.len() as f64
    };
    let tol_e = cfg.convoy_error_tolerance();

    let tol_v = 0.05 * cfg.zeta;
    let mut max_rel = 0.0f64;
    let mut min_adj = f64::INFINITY;
    let mut max_adj = 0.0f64;
    let mut ordering_missing = window.is_empty();
    for r in &window {
        let Some(order) = &r.ordering else {
            ordering_missing = true;
            continue;
        };
        let k = order.len();
        for a in 0..k {
            let i = r.robot(order[a]).expect("ordered robot logged");
            let j = r.robot(order[(a + 1) % k]).expect("ordered robot logged");
            max_rel = max_rel.max(i.u.distance(&j.u));
            let d = i.position.distance(&j.position);
            min_adj = min_adj.min(d);
            max_adj = max_adj.max(d);
        }
    }

    let canon: Vec<Option<Vec<u32>>> = records
        .iter()
        .map(|r| r.ordering.as_deref().map(canonical_cycle))
        .collect();
    let last = canon.last().cloned().flatten();
    let mut stable_from = records.len();
    while stable_from > 0 && last.is_some() && canon[stable_from - 1] == last {
        stable_from -= 1;
    }
    let ordering_stable_since = (stable_from < records.len()).then(|| records[stable_from].t);
    let ordering_constant = ordering_stable_since.is_some_and(|t| t <= ordering_start.max(0.0));

    let min_pairwise = records.iter().map(|r| r.min_pair_dist).fold(f64::INFINITY, f64::min);
    let min_target = records.iter().map(|r| r.min_target_dist).fold(f64::INFINITY, f64::min);
    let pairwise_floor = cfg.collision_radius - SAFETY_MARGIN;

    let v_end = records.last().map_or(0.0, |r| r.lyapunov);
    let v_ref = window.first().map_or(0.0, |r| r.lyapunov);
    let gaps: Vec<f64> = window.iter().filter_map(|r| r.closed_form_gap).collect();

    ConvoyReport {
        scenario: cfg.name.clone(),
        objective1: Objective1 {
            passed: mean_error <= tol_e,
            mean_error,
            tolerance: tol_e,
        },
        objective2a: Objective2a {
            passed: !ordering_missing && max_rel <= tol_v,
            max_relative_speed: max_rel,
            tolerance: tol_v,
        },
        objective2b: Objective2b {
            passed: !ordering_missing
                && min_adj >= cfg.collision_radius - DISTANCE_ROUNDING
                && max_adj < cfg.sensing_radius
                && ordering_constant,
            min_adjacent: min_adj,
            max_adjacent: max_adj,
            lower: cfg.collision_radius,
            upper: cfg.sensing_radius,
            ordering_constant,
        },
        objective3: Objective3 {
            passed: min_pairwise >= pairwise_floor && min_target > 0.0,
            min_pairwise,
            min_target,
            pairwise_floor,
        },
        ordering_stable_since,
        final_ordering: records
            .last()
            .and_then(|r| r.ordering.clone())
            .unwrap_or_default(),
        ordering_rule: if cfg.n >= 3 {
            "xy-projection about the centroid, ties by z then id".into()
        } else {
            "angle about the centroid, ties by id".into()
        },
        lyapunov_settled: (v_end - v_ref).abs() <= 0.01 * v_ref,
        residual_final: records.last().map_or(f64::INFINITY, |r| r.max_residual),
        max_input_inf_norm: records
            .iter()
            .flat_map(|r| r.robots.iter().map(|b| b.u.inf_norm()))
            .fold(0.0, f64::max),
        min_obstacle_clearance: records
            .iter()
            .filter_map(|r| r.min_obstacle_clearance)
            .reduce(f64::min),
        closed_form_samples: gaps.len(),
        closed_form_max_gap: gaps.into_iter().fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> ControlParams {
        ControlParams {
            collision_radius: 1.5,
            sensing_radius: 4.0,
            zeta: 0.2,
            eta1: 2.0,
            eta2: 2.5,
            weight: 10.0,
        }
    }

    fn at_angles(degrees: &[f64], radius: f64) -> Vec<RobotState> {
        degrees
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let a = d.to_radians();
                RobotState::new(k as u32 + 1, [radius * a.cos(), radius * a.sin()])
            })
            .collect()
    }

    #[test]
    fn convoy_error_examples() {
        let x_d = VecN::from([2.0, 1.0]);
        let states = vec![RobotState::new(1, [1.0, 0.0]), RobotState::new(2, [3.0, 0.0])];
        assert_eq!(convoy_error(&states, &x_d), VecN::from([0.0, -1.0]));
        let on_target = vec![RobotState::new(1, [2.0, 1.0])];
        assert_eq!(convoy_error(&on_target, &x_d), VecN::zeros(2));
    }

    #[test]
    fn ordering_by_angle() {
        let seq = ordering_sequence(&at_angles(&[90.0, 210.0, 330.0], 2.0), 0.0).unwrap();
        assert_eq!(seq.perm, vec![1, 2, 3]);
        let seq = ordering_sequence(&at_angles(&[90.0, 330.0, 210.0], 2.0), 0.0).unwrap();
        assert_eq!(seq.perm, vec![1, 3, 2]);
    }

    #[test]
    fn ordering_needs_three_robots() {
        assert!(matches!(
            ordering_sequence(&at_angles(&[0.0, 180.0], 2.0), 0.0),
            Err(ConvoyError::TooFewRobots { .. })
        ));
    }

    #[test]
    fn ordering_detects_robot_on_centroid() {
        let mut states = at_angles(&[0.0, 120.0, 240.0], 2.0);
        states.push(RobotState::new(9, [0.0, 0.0]));
        assert!(matches!(
            ordering_sequence(&states, 0.0),
            Err(ConvoyError::DegenerateOrdering { robot: 9 })
        ));
    }

    #[test]
    fn ordering_in_3d_uses_projection_then_z() {
        let states = vec![
            RobotState::new(1, [1.0, 0.0, 1.0]),
            RobotState::new(2, [1.0, 0.0, -1.0]),
            RobotState::new(3, [-1.0, 1.0, 0.0]),
            RobotState::new(4, [-1.0, -1.0, 0.0]),
        ];
        let seq = ordering_sequence(&states, 0.0).unwrap();
        assert_eq!(seq.perm, vec![2, 1, 3, 4]);
    }

    #[test]
    fn six_robot_figure_layout() {
        // hexagon whose smallest angle belongs to robot 2, then 6, 1, 3, 4, 5
        let degrees = [125.0, 5.0, 185.0, 245.0, 305.0, 65.0];
        let states = at_angles(&degrees, 3.0);
        let seq = ordering_sequence(&states, 0.0).unwrap();
        assert_eq!(seq.perm, vec![2, 6, 1, 3, 4, 5]);
    }

    #[test]
    fn single_robot_values() {
        let states = vec![RobotState::new(1, [3.0, 4.0])];
        let x_d = VecN::zeros(2);
        let p = params();
        let res = stationarity_residual(&states, &x_d, &[], &p).unwrap();
        assert!((res[0] - 10.0).abs() < 1e-12);
        let v = lyapunov_value(&states, &x_d, &p).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_pair_has_equal_residuals() {
        let states = vec![RobotState::new(1, [-0.75, 0.0]), RobotState::new(2, [0.75, 0.0])];
        let res = stationarity_residual(&states, &VecN::zeros(2), &[], &params()).unwrap();
        assert!((res[0] - res[1]).abs() < 1e-12);
    }

    #[test]
    fn far_robots_contribute_only_attraction() {
        let states = vec![RobotState::new(1, [-5.0, 0.0]), RobotState::new(2, [5.0, 0.0])];
        let v = lyapunov_value(&states, &VecN::zeros(2), &params()).unwrap();
        assert!((v - 2.0 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn canonical_cycle_rotates_to_smallest() {
        assert_eq!(canonical_cycle(&[3, 1, 2]), vec![1, 2, 3]);
        assert_eq!(canonical_cycle(&[2, 6, 1, 3, 4, 5]), vec![1, 3, 4, 5, 2, 6]);
        assert!(canonical_cycle(&[]).is_empty());
    }

    fn cloud() -> impl Strategy<Value = Vec<RobotState>> {
        prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 3), 3..8).prop_map(|pts| {
            pts.into_iter()
                .enumerate()
                .map(|(k, p)| RobotState::new(k as u32 + 1, p))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn repulsion_cancels_pairwise(states in cloud()) {
            let sum = repulsion_sum(&states, &params());
            prop_assume!(sum.is_ok());
            prop_assert!(sum.unwrap().norm() <= 1e-9);
        }

        #[test]
        fn convoy_error_is_translation_equivariant(states in cloud(), w in prop::collection::vec(-10.0f64..10.0, 3)) {
            let w = VecN::new(w);
            let x_d = VecN::from([0.5, -0.5, 0.25]);
            let shifted: Vec<RobotState> = states.iter().map(|s| RobotState::new(s.id, &s.position + &w)).collect();
            let a = convoy_error(&states, &x_d);
            let b = convoy_error(&shifted, &(&x_d + &w));
            prop_assert!((&a - &b).norm() <= 1e-9);
        }

        #[test]
        fn ordering_is_a_permutation(states in cloud()) {
            if let Ok(seq) = ordering_sequence(&states, 0.0) {
                let mut ids = seq.perm.clone();
                ids.sort_unstable();
                let expected: Vec<u32> = states.iter().map(|s| s.id).collect();
                prop_assert_eq!(ids, expected);
            }
        }

        #[test]
        fn rigid_motion_keeps_lyapunov(states in cloud(), angle in 0.0f64..TAU, shift in prop::collection::vec(-5.0f64..5.0, 3)) {
            let (s, c) = angle.sin_cos();
            let shift = VecN::new(shift);
            let map = |p: &VecN| VecN::from([c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1], p[2] + shift[2]]);
            let x_d = VecN::from([0.3, 0.1, -0.2]);
            let moved: Vec<RobotState> = states.iter().map(|r| RobotState::new(r.id, map(&r.position))).collect();
            let a = lyapunov_value(&states, &x_d, &params());
            let b = lyapunov_value(&moved, &map(&x_d), &params());
            prop_assume!(a.is_ok() && b.is_ok());
            let (a, b) = (a.unwrap(), b.unwrap());
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn rotation_keeps_cyclic_order(offset in 0.0f64..40.0) {
            let base = [0.0, 50.0, 130.0, 200.0, 290.0];
            let rotated: Vec<f64> = base.iter().map(|d| d + offset).collect();
            let a = ordering_sequence(&at_angles(&base, 2.0), 0.0).unwrap();
            let b = ordering_sequence(&at_angles(&rotated, 2.0), 0.0).unwrap();
            prop_assert_eq!(a.canonical(), b.canonical());
        }
    }
}
