//! Scenario configuration, world state and assumption checks.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConvoyError, Result};
use crate::vector::VecN;
use crate::EPS_SING;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    #[default]
    Active,
    Broken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotState {
    pub id: u32,
    pub position: VecN,
    /// Heading in radians; only read by the unicycle adapter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
    #[serde(default)]
    pub status: RobotStatus,
}

impl RobotState {
    pub fn new(id: u32, position: impl Into<VecN>) -> Self {
        RobotState {
            id,
            position: position.into(),
            heading: None,
            status: RobotStatus::Active,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == RobotStatus::Active
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position: VecN,
    pub velocity: VecN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: VecN,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: impl Into<VecN>, radius: f64) -> Self {
        Obstacle {
            center: center.into(),
            radius,
        }
    }
}

/// How the target moves. `start` is the target position at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetMotionSpec {
    Constant { start: VecN, velocity: VecN },
    /// Velocity `2ω·[cos(θ+π/2), sin(θ+π/2), 0]` where θ is the angle of the
    /// target about `center` in the xy-plane.
    Circular { start: VecN, center: VecN, omega: f64 },
}

impl TargetMotionSpec {
    pub fn start(&self) -> &VecN {
        match self {
            TargetMotionSpec::Constant { start, .. } | TargetMotionSpec::Circular { start, .. } => {
                start
            }
        }
    }

    /// Upper bound on the inf-norm of any velocity this motion can produce.
    pub fn speed_bound(&self) -> f64 {
        match self {
            TargetMotionSpec::Constant { velocity, .. } => velocity.inf_norm(),
            TargetMotionSpec::Circular { omega, .. } => 2.0 * omega.abs(),
        }
    }

    pub fn is_circular(&self) -> bool {
        matches!(self, TargetMotionSpec::Circular { .. })
    }

    /// Target velocity at time `t` with the target at `x_d`.
    pub fn velocity(&self, _t: f64, x_d: &VecN) -> Result<VecN> {
        match self {
            TargetMotionSpec::Constant { velocity, .. } => Ok(velocity.clone()),
            TargetMotionSpec::Circular { center, omega, .. } => {
                let dx = x_d[0] - center[0];
                let dy = x_d[1] - center[1];
                if dx.hypot(dy) < EPS_SING {
                    return Err(ConvoyError::CircleCenter);
                }
                let theta = dy.atan2(dx);
                let mut v = VecN::zeros(x_d.dim());
                v[0] = 2.0 * omega * (theta + FRAC_PI_2).cos();
                v[1] = 2.0 * omega * (theta + FRAC_PI_2).sin();
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Breakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: f64,
    pub kind: EventKind,
    pub robot_ids: Vec<u32>,
}

fn default_weight() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_chi1() -> f64 {
    2.0
}
fn default_chi2() -> f64 {
    1.0
}
fn default_delta0() -> f64 {
    100.0
}

/// Everything needed to reproduce one run.
///
/// JSON keys match the field names except `r`/`R` (collision/sensing radius).
/// Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub robots: Vec<RobotState>,
    #[serde(rename = "r")]
    pub collision_radius: f64,
    #[serde(rename = "R")]
    pub sensing_radius: f64,
    /// Componentwise input limit, `‖u‖∞ ≤ zeta`.
    pub zeta: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Slack penalty weight in the per-robot cost.
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    pub target_motion: TargetMotionSpec,
    #[serde(default = "default_chi1")]
    pub chi1: f64,
    #[serde(default = "default_chi2")]
    pub chi2: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    /// Near-identity offset; setting it switches robots to unicycle dynamics (n = 2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nid_ell: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Uniform perturbation (m) applied to the listed initial positions, drawn from `seed`.
    #[serde(default)]
    pub jitter: f64,
    /// Initial slack value; must be an admissible warm start at t = 0.
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    /// Feed the true target velocity instead of the local estimate.
    #[serde(default)]
    pub oracle_velocity: bool,
    /// Keep broken robots as static obstacles of radius `r` instead of dropping them.
    #[serde(default)]
    pub broken_as_obstacles: bool,
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn steps(&self) -> usize {
        if self.dt <= 0.0 || self.duration <= 0.0 {
            return 0;
        }
        (self.duration / self.dt).round() as usize
    }

    /// Initial robot states with `jitter` applied.
    pub fn initial_robots(&self) -> Vec<RobotState> {
        if self.jitter <= 0.0 {
            return self.robots.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.robots
            .iter()
            .map(|robot| {
                let mut robot = robot.clone();
                for k in 0..robot.position.dim() {
                    robot.position[k] += rng.gen_range(-self.jitter..=self.jitter);
                }
                robot
            })
            .collect()
    }

    /// Tolerance on the final-window convoy error used by the objective checks.
    pub fn convoy_error_tolerance(&self) -> f64 {
        if self.target_motion.is_circular() {
            0.2
        } else {
            0.1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, problems: Vec<String>, ok_detail: String) {
        let passed = problems.is_empty();
        self.checks.push(AssumptionCheck {
            name: name.to_string(),
            passed,
            detail: if passed { ok_detail } else { problems.join("; ") },
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "[{mark}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Checks the standing assumptions of the controller against a scenario.
// Negated comparisons below reject NaN as well.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_scenario(cfg: &ScenarioConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let robots = cfg.initial_robots();
    let n = cfg.n;

    // dimensions and finiteness
    let mut problems = Vec::new();
    if n < 2 {
        problems.push(format!("n = {n} < 2"));
    }
    let mut check_vec = |what: String, v: &VecN| {
        if v.dim() != n {
            problems.push(format!("{what} has dimension {} (n = {n})", v.dim()));
        } else if !v.is_finite() {
            problems.push(format!("{what} is not finite"));
        }
    };
    for robot in &robots {
        check_vec(format!("robot {} position", robot.id), &robot.position);
    }
    match &cfg.target_motion {
        TargetMotionSpec::Constant { start, velocity } => {
            check_vec("target start".into(), start);
            check_vec("target velocity".into(), velocity);
        }
        TargetMotionSpec::Circular { start, center, .. } => {
            check_vec("target start".into(), start);
            check_vec("circle center".into(), center);
        }
    }
    for (k, obs) in cfg.obstacles.iter().enumerate() {
        check_vec(format!("obstacle {k} center"), &obs.center);
    }
    report.push("dimensions", problems, format!("n = {n}"));
    if !report.passed() {
        return report;
    }

    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    for robot in &robots {
        if robot.id < 1 {
            problems.push(format!("robot id {} < 1", robot.id));
        }
        if !seen.insert(robot.id) {
            problems.push(format!("duplicate robot id {}", robot.id));
        }
    }
    report.push("robot_ids", problems, format!("{} robots", robots.len()));

    let mut problems = Vec::new();
    let positive = [
        ("r", cfg.collision_radius),
        ("zeta", cfg.zeta),
        ("eta1", cfg.eta1),
        ("eta2", cfg.eta2),
        ("dt", cfg.dt),
        ("chi1", cfg.chi1),
        ("chi2", cfg.chi2),
    ];
    for (name, value) in positive {
        if !(value > 0.0 && value.is_finite()) {
            problems.push(format!("{name} = {value} must be positive"));
        }
    }
    if !(cfg.weight > 1.0) {
        problems.push(format!("weight = {} must exceed 1", cfg.weight));
    }
    if !(cfg.duration >= 0.0) {
        problems.push(format!("duration = {} is negative", cfg.duration));
    }
    if cfg.jitter < 0.0 {
        problems.push(format!("jitter = {} is negative", cfg.jitter));
    }
    for (k, obs) in cfg.obstacles.iter().enumerate() {
        if !(obs.radius > 0.0) {
            problems.push(format!("obstacle {k} radius {} must be positive", obs.radius));
        }
    }
    if let Some(ell) = cfg.nid_ell {
        if !(ell > 0.0) {
            problems.push(format!("nid_ell = {ell} must be positive"));
        }
        if n != 2 {
            problems.push("unicycle dynamics (nid_ell) require n = 2".to_string());
        }
    }
    if let TargetMotionSpec::Circular { start, center, .. } = &cfg.target_motion {
        if (start[0] - center[0]).hypot(start[1] - center[1]) < EPS_SING {
            problems.push("circular target starts on its center".to_string());
        }
    }
    report.push("parameters", problems, "all gains and radii positive, weight > 1".into());

    // sensing radius
    let needed = cfg.collision_radius + cfg.eta2;
    let problems = if cfg.sensing_radius >= needed {
        vec![]
    } else {
        vec![format!(
            "R = {} < r + eta2 = {needed}",
            cfg.sensing_radius
        )]
    };
    report.push(
        "sensing_radius",
        problems,
        format!("R = {} >= r + eta2 = {needed}", cfg.sensing_radius),
    );

    // initial distances
    let mut problems = Vec::new();
    let x_d = cfg.target_motion.start();
    let mut min_pair = f64::INFINITY;
    let mut min_target = f64::INFINITY;
    for (a, ra) in robots.iter().enumerate() {
        let dt = ra.position.distance(x_d);
        min_target = min_target.min(dt);
        if dt <= EPS_SING {
            problems.push(format!("robot {} starts on the target", ra.id));
        }
        for rb in &robots[a + 1..] {
            let d = ra.position.distance(&rb.position);
            min_pair = min_pair.min(d);
            if d < cfg.collision_radius {
                problems.push(format!(
                    "robots {} and {} start {d:.4} m apart (< r = {})",
                    ra.id, rb.id, cfg.collision_radius
                ));
            }
        }
    }
    report.push(
        "initial_distances",
        problems,
        format!("min pairwise {min_pair:.4} m, min robot-target {min_target:.4} m"),
    );

    let bound = cfg.target_motion.speed_bound();
    let problems = if bound < cfg.zeta {
        vec![]
    } else {
        vec![format!("target speed bound {bound} >= zeta = {}", cfg.zeta)]
    };
    report.push(
        "target_speed",
        problems,
        format!("target speed bound {bound} < zeta = {}", cfg.zeta),
    );

    let mut problems = Vec::new();
    for (k, obs) in cfg.obstacles.iter().enumerate() {
        for robot in &robots {
            let clearance = robot.position.distance(&obs.center) - obs.radius;
            if clearance <= 0.0 {
                problems.push(format!("robot {} starts inside obstacle {k}", robot.id));
            }
        }
    }
    report.push(
        "obstacles_clear",
        problems,
        format!("{} obstacles, none containing a robot", cfg.obstacles.len()),
    );

    let mut problems = Vec::new();
    for ev in &cfg.events {
        if !(0.0..=cfg.duration).contains(&ev.time) {
            problems.push(format!("event at t = {} outside [0, {}]", ev.time, cfg.duration));
        }
        for id in &ev.robot_ids {
            if !seen.contains(id) {
                problems.push(format!("event names unknown robot {id}"));
            }
        }
    }
    report.push("events", problems, format!("{} events", cfg.events.len()));

    // the slack warm start (u = v_hat, delta = delta0) must satisfy every target row at t = 0
    let needed = robots
        .iter()
        .map(|r| cfg.eta1 * r.position.distance(x_d))
        .fold(0.0, f64::max);
    let problems = if cfg.delta0 >= needed {
        vec![]
    } else {
        vec![format!("delta0 = {} < eta1 * max distance = {needed:.4}", cfg.delta0)]
    };
    report.push(
        "slack_warm_start",
        problems,
        format!("delta0 = {} >= {needed:.4}", cfg.delta0),
    );

    report
}
