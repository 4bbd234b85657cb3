//! The per-robot convoying QP.
//!
//! ```text
//! minimize    ‖u − v̂‖² + l·δ²
//! subject to  g_kᵀ(u − v̂) + γ_k − δ·[k is the slack row] ≤ 0
//!             δ ≥ 0
//!             ‖u‖∞ ≤ ζ
//! ```
//!
//! Solved with a dual active-set method (Goldfarb–Idnani) after the change of
//! variables `y = (u − v̂, √l·δ)`, which turns the cost into `‖y‖²` and the
//! problem into a least-distance projection. With at most four variables and a
//! dozen rows every linear solve is a tiny dense one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ConvoyError, Result};
use crate::subtasks::ConstraintRow;
use crate::vector::VecN;

pub const MAX_ITERATIONS: usize = 100;
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvoyQp {
    pub v_hat: VecN,
    pub rows: Vec<ConstraintRow>,
    pub zeta: f64,
    pub weight: f64,
    /// Columns of an orthogonal matrix `Q`; the box becomes `‖Qᵀu‖∞ ≤ ζ`.
    /// `None` means the coordinate axes.
    pub box_frame: Option<Vec<VecN>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleNumerics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: VecN,
    pub delta_star: f64,
    /// One multiplier per constraint row.
    pub lambda: Vec<f64>,
    /// Sum of the box multipliers.
    pub varsigma: f64,
    /// Box multipliers ordered `[+axis0, −axis0, +axis1, −axis1, …]`.
    pub box_multipliers: Vec<f64>,
    /// Multiplier of `δ ≥ 0`.
    pub slack_bound_multiplier: f64,
    /// Indices of active constraint rows.
    pub active_set: Vec<usize>,
    /// Indices into `box_multipliers` of active box faces.
    pub active_box: Vec<usize>,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl QpSolution {
    pub fn all_rows_active(&self) -> bool {
        self.active_set.len() == self.lambda.len()
    }

    pub fn box_inactive(&self) -> bool {
        self.active_box.is_empty()
    }
}

impl ConvoyQp {
    pub fn new(v_hat: VecN, rows: Vec<ConstraintRow>, zeta: f64, weight: f64) -> Self {
        ConvoyQp {
            v_hat,
            rows,
            zeta,
            weight,
            box_frame: None,
        }
    }

    pub fn with_box_frame(mut self, columns: Vec<VecN>) -> Self {
        self.box_frame = Some(columns);
        self
    }

    pub fn n(&self) -> usize {
        self.v_hat.dim()
    }

    pub fn box_axes(&self) -> Vec<VecN> {
        match &self.box_frame {
            Some(cols) => cols.clone(),
            None => (0..self.n())
                .map(|k| {
                    let mut e = VecN::zeros(self.n());
                    e[k] = 1.0;
                    e
                })
                .collect(),
        }
    }

    pub fn objective(&self, u: &VecN, delta: f64) -> f64 {
        let w = u - &self.v_hat;
        w.dot(&w) + self.weight * delta * delta
    }

    /// Row residuals `g_kᵀ(u − v̂) + γ_k − δ·s_k`; feasible rows are ≤ 0.
    pub fn row_residuals(&self, u: &VecN, delta: f64) -> Vec<f64> {
        let w = u - &self.v_hat;
        self.rows
            .iter()
            .map(|row| row.grad.dot(&w) + row.gamma - if row.has_slack { delta } else { 0.0 })
            .collect()
    }

    /// Box residuals `±q_kᵀu − ζ` in the order of [`QpSolution::box_multipliers`].
    pub fn box_residuals(&self, u: &VecN) -> Vec<f64> {
        self.box_axes()
            .iter()
            .flat_map(|q| {
                let s = q.dot(u);
                [s - self.zeta, -s - self.zeta]
            })
            .collect()
    }

    /// Largest constraint violation of `(u, δ)` (0 when feasible).
    pub fn max_violation(&self, u: &VecN, delta: f64) -> f64 {
        self.row_residuals(u, delta)
            .into_iter()
            .chain(self.box_residuals(u))
            .chain(std::iter::once(-delta))
            .fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, u: &VecN, delta: f64, tol: f64) -> bool {
        self.max_violation(u, delta) <= tol
    }

    /// Smallest admissible slack for a given input, ignoring hard rows.
    fn min_slack(&self, w: &VecN) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.has_slack)
            .map(|r| r.grad.dot(w) + r.gamma)
            .fold(0.0, f64::max)
    }
}

/// `u = v̂` with the smallest slack that makes the target row hold.
///
/// Hard rows are satisfied by this seed whenever their `γ ≤ 0`, which holds for
/// neighbor rows while robots keep at least the collision radius apart.
pub fn feasible_seed(qp: &ConvoyQp) -> (VecN, f64) {
    let delta = qp.min_slack(&VecN::zeros(qp.n()));
    (qp.v_hat.clone(), delta)
}

struct Halfspace {
    a: DVector<f64>,
    b: f64,
}

/// Constraints in the scaled variable `y = (u − v̂, √l·δ)`:
/// rows first, then `δ ≥ 0`, then the box faces.
fn scaled_constraints(qp: &ConvoyQp) -> Vec<Halfspace> {
    let n = qp.n();
    let sqrt_l = qp.weight.sqrt();
    let mut out = Vec::with_capacity(qp.rows.len() + 1 + 2 * n);
    for row in &qp.rows {
        let mut a = DVector::zeros(n + 1);
        for k in 0..n {
            a[k] = row.grad[k];
        }
        if row.has_slack {
            a[n] = -1.0 / sqrt_l;
        }
        out.push(Halfspace { a, b: -row.gamma });
    }
    let mut a = DVector::zeros(n + 1);
    a[n] = -1.0;
    out.push(Halfspace { a, b: 0.0 });
    for q in qp.box_axes() {
        let qv = q.dot(&qp.v_hat);
        let mut a = DVector::zeros(n + 1);
        for k in 0..n {
            a[k] = q[k];
        }
        out.push(Halfspace {
            a: a.clone(),
            b: qp.zeta - qv,
        });
        out.push(Halfspace {
            a: -a,
            b: qp.zeta + qv,
        });
    }
    out
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e.abs()), hi.max(e.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `(N Nᵀ) r = N a` for the active rows `N`.
fn active_solve(cons: &[Halfspace], active: &[usize], a: &DVector<f64>) -> Option<DVector<f64>> {
    let k = active.len();
    if k == 0 {
        return Some(DVector::zeros(0));
    }
    let gram = DMatrix::from_fn(k, k, |i, j| cons[active[i]].a.dot(&cons[active[j]].a));
    if condition_number(&gram) > CONDITION_LIMIT {
        return None;
    }
    let rhs = DVector::from_fn(k, |i, _| cons[active[i]].a.dot(a));
    gram.cholesky().map(|c| c.solve(&rhs))
}

/// Solves the convoying QP.
///
/// Dual active-set iteration: start at the unconstrained minimizer `u = v̂, δ = 0`,
/// repeatedly add the most violated constraint (lowest index on ties) and drop
/// active constraints whose multipliers would turn negative. Each add or drop
/// counts as one iteration; the cap is [`MAX_ITERATIONS`]. If the iteration does
/// not finish, the feasible seed is returned with a non-optimal status.
pub fn solve(qp: &ConvoyQp) -> QpSolution {
    let n = qp.n();
    let m = qp.rows.len();
    let cons = scaled_constraints(qp);
    let scale = 1.0 + qp.zeta + qp.rows.iter().fold(0.0f64, |s, r| s.max(r.gamma.abs()));
    let tol = 1e-12 * scale;

    let mut y = DVector::<f64>::zeros(n + 1);
    let mut active: Vec<usize> = Vec::new();
    let mut mu: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let status = 'outer: loop {
        // most violated inactive constraint, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        for (idx, c) in cons.iter().enumerate() {
            if active.contains(&idx) {
                continue;
            }
            let viol = c.a.dot(&y) - c.b;
            if viol > tol && pick.is_none_or(|(_, best)| viol > best) {
                pick = Some((idx, viol));
            }
        }
        let Some((p, _)) = pick else {
            break SolveStatus::Optimal;
        };

        let mut mu_p = 0.0;
        loop {
            iterations += 1;
            if iterations > MAX_ITERATIONS {
                break 'outer SolveStatus::MaxIter;
            }
            let a_p = &cons[p].a;
            let Some(r) = active_solve(&cons, &active, a_p) else {
                break 'outer SolveStatus::InfeasibleNumerics;
            };
            let mut z = a_p.clone();
            for (i, &idx) in active.iter().enumerate() {
                z.axpy(-r[i], &cons[idx].a, 1.0);
            }
            let zz = z.dot(&z);

            // partial (dual) step: first active multiplier to reach zero
            let mut drop: Option<(usize, f64)> = None;
            for (i, &idx) in active.iter().enumerate() {
                if r[i] > 1e-14 {
                    let ratio = mu[i] / r[i];
                    let better = match drop {
                        None => true,
                        Some((j, best)) => {
                            ratio < best || (ratio == best && idx < active[j])
                        }
                    };
                    if better {
                        drop = Some((i, ratio));
                    }
                }
            }
            let full = if zz > 1e-14 * a_p.dot(a_p) {
                Some((a_p.dot(&y) - cons[p].b) / zz)
            } else {
                None
            };

            let step = match (full, drop) {
                (None, None) => break 'outer SolveStatus::InfeasibleNumerics,
                (Some(t1), Some((_, t2))) => t1.min(t2),
                (Some(t1), None) => t1,
                (None, Some((_, t2))) => t2,
            };

            if full.is_some() {
                y.axpy(-step, &z, 1.0);
            }
            for (i, value) in mu.iter_mut().enumerate() {
                *value -= step * r[i];
            }
            mu_p += step;

            match (full, drop) {
                (Some(t1), d) if d.is_none_or(|(_, t2)| t1 <= t2) => {
                    active.push(p);
                    mu.push(mu_p);
                    break;
                }
                (_, Some((i, _))) => {
                    active.remove(i);
                    mu.remove(i);
                }
                _ => unreachable!(),
            }
        }
    };

    if status != SolveStatus::Optimal {
        let (u, delta) = feasible_seed(qp);
        return QpSolution {
            u_star: u,
            delta_star: delta,
            lambda: vec![0.0; m],
            varsigma: 0.0,
            box_multipliers: vec![0.0; 2 * n],
            slack_bound_multiplier: 0.0,
            active_set: Vec::new(),
            active_box: Vec::new(),
            iterations,
            status,
        };
    }

    // multipliers of ‖y‖² are twice those of ½‖y‖²
    let mut lambda = vec![0.0; m];
    let mut box_multipliers = vec![0.0; 2 * n];
    let mut slack_bound_multiplier = 0.0;
    let mut active_set = Vec::new();
    let mut active_box = Vec::new();
    let mut order: Vec<(usize, f64)> = active.iter().copied().zip(mu.iter().copied()).collect();
    order.sort_by_key(|(idx, _)| *idx);
    for (idx, value) in order {
        let value = 2.0 * value.max(0.0);
        if idx < m {
            lambda[idx] = value;
            active_set.push(idx);
        } else if idx == m {
            slack_bound_multiplier = value;
        } else {
            box_multipliers[idx - m - 1] = value;
            active_box.push(idx - m - 1);
        }
    }

    let mut u_star = qp.v_hat.clone();
    for k in 0..n {
        u_star[k] += y[k];
    }
    if qp.box_frame.is_none() {
        // active faces land within rounding of ±ζ; snap them onto it
        u_star = u_star.clamp_inf(qp.zeta);
    }
    QpSolution {
        u_star,
        delta_star: (y[n] / qp.weight.sqrt()).max(0.0),
        lambda,
        varsigma: box_multipliers.iter().sum(),
        box_multipliers,
        slack_bound_multiplier,
        active_set,
        active_box,
        iterations,
        status,
    }
}

/// Brute-force reference solution on a grid over the box.
///
/// The first pass covers the whole box at `resolution`; two refinement passes
/// search ±2 cells around the incumbent at a tenth and a hundredth of it. For
/// every candidate input the slack is the smallest feasible one; candidates that
/// violate a hard row are skipped. `v̂` itself is always tried so a feasible
/// incumbent exists whenever the seed is feasible. Intended for `n ≤ 3`.
pub fn grid_oracle(qp: &ConvoyQp, resolution: f64) -> QpSolution {
    let n = qp.n();
    let axes = qp.box_axes();
    let zeta = qp.zeta;
    let to_u = |c: &[f64]| -> VecN {
        let mut u = VecN::zeros(n);
        for (ck, q) in c.iter().zip(&axes) {
            u = u.axpy(*ck, q);
        }
        u
    };
    let evaluate = |u: &VecN| -> Option<(f64, f64)> {
        let w = u - &qp.v_hat;
        let hard_ok = qp
            .rows
            .iter()
            .filter(|r| !r.has_slack)
            .all(|r| r.grad.dot(&w) + r.gamma <= 1e-12);
        if !hard_ok {
            return None;
        }
        let delta = qp.min_slack(&w);
        Some((qp.objective(u, delta), delta))
    };

    let mut evaluated = 0usize;
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut consider = |c: Vec<f64>, best: &mut Option<(f64, Vec<f64>, f64)>| {
        evaluated += 1;
        if let Some((obj, delta)) = evaluate(&to_u(&c)) {
            if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
                *best = Some((obj, c, delta));
            }
        }
    };

    let seed_c: Vec<f64> = axes.iter().map(|q| q.dot(&qp.v_hat)).collect();
    consider(seed_c, &mut best);

    let mut lo = vec![-zeta; n];
    let mut hi = vec![zeta; n];
    let mut h = resolution;
    for pass in 0..3 {
        if pass > 0 {
            let Some((_, c, _)) = &best else { break };
            let span = 2.0 * h;
            h /= 10.0;
            lo = c.iter().map(|x| (x - span).max(-zeta)).collect();
            hi = c.iter().map(|x| (x + span).min(zeta)).collect();
        }
        let counts: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| ((b - a) / h).floor() as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        for flat in 0..total {
            let mut rem = flat;
            let mut c = Vec::with_capacity(n);
            for k in 0..n {
                let idx = rem % counts[k];
                rem /= counts[k];
                c.push((lo[k] + idx as f64 * h).min(hi[k]));
            }
            consider(c, &mut best);
        }
    }

    let (_, c, delta) = best.unwrap_or_else(|| {
        let (u, d) = feasible_seed(qp);
        (f64::INFINITY, axes.iter().map(|q| q.dot(&u)).collect(), d)
    });
    let u = to_u(&c);
    let residuals = qp.row_residuals(&u, delta);
    QpSolution {
        active_set: residuals
            .iter()
            .enumerate()
            .filter(|(_, g)| g.abs() <= resolution * 1e-2)
            .map(|(k, _)| k)
            .collect(),
        u_star: u,
        delta_star: delta,
        lambda: vec![0.0; qp.rows.len()],
        varsigma: 0.0,
        box_multipliers: vec![0.0; 2 * n],
        slack_bound_multiplier: 0.0,
        active_box: Vec::new(),
        iterations: evaluated,
        status: SolveStatus::Optimal,
    }
}

/// Stacks row gradients into `J` (m×n) and offsets into `γ`.
pub fn row_jacobian(rows: &[ConstraintRow]) -> (DMatrix<f64>, DVector<f64>) {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.grad.dim());
    let jac = DMatrix::from_fn(m, n, |i, k| rows[i].grad[k]);
    let gamma = DVector::from_fn(m, |i, _| rows[i].gamma);
    (jac, gamma)
}

/// Closed-form input for the regime where every row carries its own slack and
/// is active while the box is inactive.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    pub u_star: VecN,
    /// `Ξ = (I_m + l·J·Jᵀ)⁻¹`
    pub xi: DMatrix<f64>,
    /// `Ξ` computed as `I_m − l·J·Ξ̃·Jᵀ` with `Ξ̃ = (I_n + l·Jᵀ·J)⁻¹`.
    pub xi_woodbury: DMatrix<f64>,
}

fn guarded_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = condition_number(&m);
    if cond > CONDITION_LIMIT {
        return Err(ConvoyError::IllConditioned(cond));
    }
    m.try_inverse().ok_or(ConvoyError::IllConditioned(f64::INFINITY))
}

/// `u* = v̂ − l·Jᵀ·Ξ·γ`.
pub fn closed_form_input(
    jac: &DMatrix<f64>,
    gamma: &DVector<f64>,
    v_hat: &VecN,
    weight: f64,
) -> Result<ClosedForm> {
    let (m, n) = jac.shape();
    if gamma.len() != m {
        return Err(ConvoyError::Dimension {
            expected: m,
            got: gamma.len(),
        });
    }
    if n != v_hat.dim() {
        return Err(ConvoyError::Dimension {
            expected: v_hat.dim(),
            got: n,
        });
    }
    let xi = guarded_inverse(DMatrix::identity(m, m) + jac * jac.transpose() * weight)?;
    let xi_tilde = guarded_inverse(DMatrix::identity(n, n) + jac.transpose() * jac * weight)?;
    let xi_woodbury = DMatrix::identity(m, m) - jac * &xi_tilde * jac.transpose() * weight;
    let shift = jac.transpose() * (&xi * gamma) * weight;
    let mut u_star = v_hat.clone();
    for k in 0..n {
        u_star[k] -= shift[k];
    }
    Ok(ClosedForm {
        u_star,
        xi,
        xi_woodbury,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// ‖∇ Lagrangian‖ over `(u, δ)`.
    pub stationarity: f64,
    pub primal_violation: f64,
    /// Smallest multiplier (should be ≥ 0).
    pub dual_min: f64,
    /// Largest `|λ_k·g_k|` over all constraints.
    pub complementarity: f64,
    /// `|λ_slack − 2·l·δ*|`.
    pub slack_identity: f64,
}

impl ResidualReport {
    pub fn max_abs(&self) -> f64 {
        self.stationarity
            .max(self.primal_violation)
            .max(-self.dual_min.min(0.0))
            .max(self.complementarity)
            .max(self.slack_identity)
    }
}

pub fn kkt_residuals(qp: &ConvoyQp, sol: &QpSolution) -> ResidualReport {
    let n = qp.n();
    let u = &sol.u_star;
    let delta = sol.delta_star;
    let w = u - &qp.v_hat;

    let mut grad_u = &w * 2.0;
    let mut grad_delta = 2.0 * qp.weight * delta - sol.slack_bound_multiplier;
    let mut lambda_slack = 0.0;
    for (row, lam) in qp.rows.iter().zip(&sol.lambda) {
        grad_u = grad_u.axpy(*lam, &row.grad);
        if row.has_slack {
            grad_delta -= lam;
            lambda_slack += lam;
        }
    }
    for (k, q) in qp.box_axes().iter().enumerate() {
        grad_u = grad_u.axpy(sol.box_multipliers[2 * k], q);
        grad_u = grad_u.axpy(-sol.box_multipliers[2 * k + 1], q);
    }
    debug_assert_eq!(grad_u.dim(), n);

    let rows = qp.row_residuals(u, delta);
    let boxes = qp.box_residuals(u);
    let complementarity = rows
        .iter()
        .zip(&sol.lambda)
        .chain(boxes.iter().zip(&sol.box_multipliers))
        .map(|(g, l)| (g * l).abs())
        .fold((delta * sol.slack_bound_multiplier).abs(), f64::max);
    let dual_min = sol
        .lambda
        .iter()
        .chain(&sol.box_multipliers)
        .fold(sol.slack_bound_multiplier, |m, &l| m.min(l));

    ResidualReport {
        stationarity: (grad_u.dot(&grad_u) + grad_delta * grad_delta).sqrt(),
        primal_violation: qp.max_violation(u, delta),
        dual_min,
        complementarity,
        slack_identity: (lambda_slack - 2.0 * qp.weight * delta).abs(),
    }
}
