//! A-posteriori certification of trajectory estimates.
//!
//! Every check compares a measured trajectory quantity against a theoretical
//! envelope and reports both numbers; a check passes when
//! `measured <= bound * (1 + slack) + abs_tol`. Slack absorbs first-order
//! discretization error (O(h)), never a genuine violation (O(1)).
//!
//! Statements that hold almost everywhere are tested on grid indices away
//! from active-set-change events: the discrete stand-in for the measure-zero
//! exceptional set is the finite event set.

use crate::fields::Field;
use crate::integrator::Trajectory;
use crate::proxsets::{minimal_norm_velocity, ConeRep, ProxSet, SetError};
use crate::tolerances::{ANGULAR_TOL, DEFAULT_ABS_TOL, DEFAULT_SLACK, GRID_ROUNDING_GUARD};
use crate::vector::Vector;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("alpha must lie in [0, 1), got {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("b must be nonnegative, got {value} at index {index}")]
    NegativeB { index: usize, value: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("trajectories live on different grids ({left} vs {right} nodes, steps {left_step} vs {right_step})")]
    GridMismatch { left: usize, right: usize, left_step: f64, right_step: f64 },
    #[error("time {t} is not a grid node, or fewer than {needed} steps remain after it")]
    OffGrid { t: f64, needed: usize },
    #[error("check requires a steepest-descent field, got {got}")]
    WrongFieldKind { got: &'static str },
    #[error("trajectory has not converged: final velocity {final_velocity:.6e} exceeds stop tolerance {stop_tol:.1e}")]
    NotConverged { final_velocity: f64, stop_tol: f64 },
    #[error("potential is not certified convex")]
    NotConvex,
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Relative and absolute allowance applied to every bound comparison.
#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    pub slack: f64,
    pub abs_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { slack: DEFAULT_SLACK, abs_tol: DEFAULT_ABS_TOL }
    }
}

/// One measured-versus-bound comparison. The verdict is a pure function of
/// the stored fields, so a reader can re-derive it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub abs_tol: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn evaluate(name: impl Into<String>, measured: f64, bound: f64, cfg: &CheckConfig) -> Self {
        let mut check = Self {
            name: name.into(),
            measured,
            bound,
            slack: cfg.slack,
            abs_tol: cfg.abs_tol,
            pass: false,
        };
        check.pass = check.recomputed_pass();
        check
    }

    /// The pass verdict derived from the stored numbers.
    pub fn recomputed_pass(&self) -> bool {
        self.measured <= self.bound * (1.0 + self.slack) + self.abs_tol
    }
}

/// Report over one scenario: every requested check plus the conjunction.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub scenario_digest: String,
    pub checks: Vec<BoundCheck>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn new(scenario_digest: String, checks: Vec<BoundCheck>) -> Self {
        let overall_pass = checks.iter().all(|c| c.pass);
        Self { scenario_digest, checks, overall_pass }
    }
}

/// Default per-scenario check constant `10 (1 + k)(1 + M)`, where `k` is the
/// field's certified one-sided constant and `M` the largest field magnitude
/// realized along the trajectory.
pub fn default_check_constant(traj: &Trajectory, field: &Field) -> f64 {
    let m = traj.states().iter().map(|x| field.value(x).norm()).fold(0.0f64, f64::max);
    10.0 * (1.0 + field.one_sided_lipschitz()) * (1.0 + m)
}

/// Cumulative trapezoid of `values` over `times`, starting at zero.
fn cumtrapz(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..times.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        out.push(acc);
    }
    out
}

/// Scalar comparison envelope: the sampled right-hand side of
/// `w^{1-alpha}(t) <= w0^{1-alpha} exp(int a) + int exp(int_s^t a) b(s) ds`,
/// by trapezoidal quadrature. The result bounds `w^{1-alpha}`, not `w`
/// itself, when `alpha > 0`.
pub fn gronwall_bound(
    times: &[f64],
    a: &[f64],
    b: &[f64],
    alpha: f64,
    w0: f64,
) -> Result<Vec<f64>, AnalysisError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(AnalysisError::InvalidAlpha { alpha });
    }
    if let Some((index, &value)) = b.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(AnalysisError::NegativeB { index, value });
    }
    if times.len() != a.len() || times.len() != b.len() || times.is_empty() {
        return Err(AnalysisError::InvalidInput(format!(
            "grid and samples must share a nonzero length: {} vs {} vs {}",
            times.len(),
            a.len(),
            b.len()
        )));
    }
    if !(w0 >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!("w0 must be nonnegative, got {w0}")));
    }
    let a_cum = cumtrapz(times, a);
    let damped: Vec<f64> = b.iter().zip(&a_cum).map(|(bi, ai)| bi * (-ai).exp()).collect();
    let integral = cumtrapz(times, &damped);
    let head = w0.powf(1.0 - alpha);
    Ok(a_cum
        .iter()
        .zip(&integral)
        .map(|(ai, ii)| ai.exp() * (head + ii))
        .collect())
}

/// Whether two node cones describe different active constraint sets:
/// differing generator counts, or any generator without a partner within the
/// angular tolerance.
pub fn active_set_changed(a: &ConeRep, b: &ConeRep) -> bool {
    let ga = a.generators();
    let gb = b.generators();
    if ga.len() != gb.len() {
        return true;
    }
    let mut used = vec![false; gb.len()];
    'outer: for g in ga {
        for (j, h) in gb.iter().enumerate() {
            if !used[j] && g.dist(h) <= ANGULAR_TOL {
                used[j] = true;
                continue 'outer;
            }
        }
        return true;
    }
    false
}

/// Steps `k` across which the active set changes (between node `k` and node
/// `k + 1`).
pub fn event_indices(traj: &Trajectory) -> Vec<usize> {
    traj.cones()
        .windows(2)
        .enumerate()
        .filter(|(_, w)| active_set_changed(&w[0], &w[1]))
        .map(|(k, _)| k)
        .collect()
}

/// Among per-index `(measured, bound)` pairs, the one with the worst pass
/// margin; collapsing a family of comparisons into one reported check.
fn worst_pair(pairs: impl IntoIterator<Item = (f64, f64)>, cfg: &CheckConfig) -> (f64, f64) {
    let mut worst = (f64::NEG_INFINITY, (0.0, 0.0));
    let mut any = false;
    for (m, b) in pairs {
        let margin = m - (b * (1.0 + cfg.slack) + cfg.abs_tol);
        if !any || margin > worst.0 {
            worst = (margin, (m, b));
            any = true;
        }
    }
    worst.1
}

/// The velocity never exceeds the field by more than the field itself:
/// `||v_k - f(x_k)|| - ||f(x_k)|| <= 0` per step. The discrete scheme
/// satisfies this exactly (the predictor is within `h ||f||` of the set), so
/// only projection roundoff plus an h-proportional allowance is tolerated.
pub fn check_velocity_field_bound(traj: &Trajectory, field: &Field, cfg: &CheckConfig) -> BoundCheck {
    let measured = traj
        .discrete_velocities()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let f = field.value(traj.state(k));
            v.dist(&f) - f.norm()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let h_cfg = CheckConfig { slack: cfg.slack, abs_tol: cfg.abs_tol + cfg.slack * traj.step() };
    BoundCheck::evaluate("velocity_field_bound", measured, 0.0, &h_cfg)
}

/// Two trajectories of the same scenario stay within the comparison
/// envelope `||x0 - y0|| exp(int b)`, `b(t) = k + (||f(x)|| + ||f(y)||) / r`.
pub fn check_two_solution_bound(
    traj_x: &Trajectory,
    traj_y: &Trajectory,
    field: &Field,
    r: f64,
    cfg: &CheckConfig,
) -> Result<BoundCheck, AnalysisError> {
    if traj_x.n_nodes() != traj_y.n_nodes() || traj_x.step() != traj_y.step() {
        return Err(AnalysisError::GridMismatch {
            left: traj_x.n_nodes(),
            right: traj_y.n_nodes(),
            left_step: traj_x.step(),
            right_step: traj_y.step(),
        });
    }
    let k_os = field.one_sided_lipschitz();
    let a: Vec<f64> = traj_x
        .states()
        .iter()
        .zip(traj_y.states())
        .map(|(x, y)| {
            let curvature = if r.is_finite() {
                (field.value(x).norm() + field.value(y).norm()) / r
            } else {
                0.0
            };
            k_os + curvature
        })
        .collect();
    let w0 = traj_x.state(0).dist(traj_y.state(0));
    let zeros = vec![0.0; a.len()];
    let envelope = gronwall_bound(traj_x.times(), &a, &zeros, 0.0, w0)?;
    let pairs = traj_x
        .states()
        .iter()
        .zip(traj_y.states())
        .map(|(x, y)| x.dist(y))
        .zip(envelope);
    let (measured, bound) = worst_pair(pairs, cfg);
    Ok(BoundCheck::evaluate("two_solution_gronwall", measured, bound, cfg))
}

/// The minimal-norm velocity stays under the decay envelope
/// `||v0|| exp(int k + 2 ||f(x)|| / r)`.
pub fn check_velocity_decay_bound(
    traj: &Trajectory,
    field: &Field,
    r: f64,
    cfg: &CheckConfig,
) -> BoundCheck {
    let k_os = field.one_sided_lipschitz();
    let a: Vec<f64> = traj
        .states()
        .iter()
        .map(|x| {
            let curvature =
                if r.is_finite() { 2.0 * field.value(x).norm() / r } else { 0.0 };
            k_os + curvature
        })
        .collect();
    let w0 = traj.right_velocities()[0].norm();
    let zeros = vec![0.0; a.len()];
    let envelope = gronwall_bound(traj.times(), &a, &zeros, 0.0, w0)
        .expect("alpha 0 and b 0 are always valid");
    let pairs = traj.right_velocities().iter().map(Vector::norm).zip(envelope);
    let (measured, bound) = worst_pair(pairs, cfg);
    BoundCheck::evaluate("velocity_decay", measured, bound, cfg)
}

/// Difference quotients from the right converge to the minimal-norm
/// velocity: over `delta in {8h, 4h, 2h}` the deviation
/// `q_delta = ||(x(t+delta) - x(t))/delta - v(t)||` must not grow as `delta`
/// shrinks (within the allowance) and must end at Euler order. Encoded as
/// `measured = max(q_2h, q_2h - q_4h, q_4h - q_8h)` against
/// `bound = C_check * 2h`.
pub fn check_right_derivative(
    traj: &Trajectory,
    set: &ProxSet,
    field: &Field,
    t: f64,
    c_check: f64,
    cfg: &CheckConfig,
) -> Result<BoundCheck, AnalysisError> {
    let h = traj.step();
    let k = (t / h).round();
    let node = k as usize;
    let needed = 8usize;
    if (t - k * h).abs() > GRID_ROUNDING_GUARD * (1.0 + t.abs())
        || k < 0.0
        || node + needed >= traj.n_nodes()
    {
        return Err(AnalysisError::OffGrid { t, needed });
    }
    let x = traj.state(node);
    let cone = set.normal_cone(x, crate::tolerances::MEMBERSHIP_TOL)?;
    let v = minimal_norm_velocity(&cone, &field.value(x));
    let q = |steps: usize| -> f64 {
        let delta = steps as f64 * h;
        traj.state(node + steps).sub(x).scale(1.0 / delta).dist(&v)
    };
    let (q8, q4, q2) = (q(8), q(4), q(2));
    let measured = q2.max(q2 - q4).max(q4 - q8);
    Ok(BoundCheck::evaluate("right_derivative", measured, c_check * 2.0 * h, cfg))
}

/// Between events the minimal-norm velocity moves by at most `L_v h` per
/// step. Indices within `window` steps of an active-set change are excluded
/// (the velocity genuinely jumps there, from the left only); the event steps
/// themselves are returned.
pub fn check_right_continuity_v(
    traj: &Trajectory,
    window: usize,
    l_v: f64,
    cfg: &CheckConfig,
) -> (BoundCheck, Vec<usize>) {
    let events = event_indices(traj);
    let h = traj.step();
    let excluded = |k: usize| {
        events.iter().any(|&e| k >= e.saturating_sub(window) && k <= e + window)
    };
    let measured = traj
        .right_velocities()
        .windows(2)
        .enumerate()
        .filter(|(k, _)| !excluded(*k))
        .map(|(_, w)| w[1].dist(&w[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let measured = if measured.is_finite() { measured } else { 0.0 };
    let check = BoundCheck::evaluate("right_velocity_continuity", measured, l_v * h, cfg);
    (check, events)
}

/// The velocity norm cannot dip below its initial value immediately: over
/// the first `window` nodes the drop `||v0|| - min ||v_k||` stays within the
/// discretization allowance `C window h`. A finite-grid proxy for a
/// limit-inferior statement; no effective rate exists to test against.
pub fn check_liminf_lower(
    traj: &Trajectory,
    window: usize,
    c_check: f64,
    cfg: &CheckConfig,
) -> BoundCheck {
    let v0 = traj.right_velocities()[0].norm();
    let min = traj
        .right_velocities()
        .iter()
        .take(window + 1)
        .map(Vector::norm)
        .fold(f64::INFINITY, f64::min);
    let bound = c_check * window as f64 * traj.step();
    BoundCheck::evaluate("liminf_lower", v0 - min, bound, cfg)
}

/// Early difference quotients never exceed the initial minimal-norm
/// velocity: `max over delta in {h, 2h, 4h, ..., window h} of
/// ||x(delta) - x0|| / delta <= ||v0||`.
pub fn check_difference_quotient_limsup(
    traj: &Trajectory,
    window: usize,
    cfg: &CheckConfig,
) -> BoundCheck {
    let x0 = traj.state(0);
    let v0 = traj.right_velocities()[0].norm();
    let h = traj.step();
    let mut steps = 1usize;
    let mut measured = f64::NEG_INFINITY;
    while steps <= window && steps < traj.n_nodes() {
        let delta = steps as f64 * h;
        measured = measured.max(traj.state(steps).dist(x0) / delta);
        steps *= 2;
    }
    BoundCheck::evaluate("difference_quotient_limsup", measured, v0, cfg)
}

/// For steepest-descent trajectories: the per-step energy balance
/// `(V(x_{k+1}) - V(x_k))/h + ||v_k||^2` vanishes at Euler order away from
/// events, and `V` never increases anywhere (events included). Two checks.
pub fn energy_identity_residual(
    traj: &Trajectory,
    field: &Field,
    c_energy: f64,
    cfg: &CheckConfig,
) -> Result<Vec<BoundCheck>, AnalysisError> {
    let Some(potential) = field.potential() else {
        return Err(AnalysisError::WrongFieldKind { got: field.kind_name() });
    };
    let h = traj.step();
    let values: Vec<f64> = traj.states().iter().map(|x| potential.value(x)).collect();
    let mut residual = f64::NEG_INFINITY;
    let mut rise = f64::NEG_INFINITY;
    for k in 0..traj.n_nodes() - 1 {
        let dv = values[k + 1] - values[k];
        rise = rise.max(dv);
        if !active_set_changed(&traj.cones()[k], &traj.cones()[k + 1]) {
            let r = (dv / h + traj.right_velocities()[k].norm_sq()).abs();
            residual = residual.max(r);
        }
    }
    let residual = if residual.is_finite() { residual } else { 0.0 };
    Ok(vec![
        BoundCheck::evaluate("energy_identity", residual, c_energy * h, cfg),
        BoundCheck::evaluate("energy_monotone", rise, 0.0, cfg),
    ])
}

/// Total dissipation balances the potential drop once the flow has come to
/// rest: `|sum_k ||v_k||^2 h - (V(x0) - V(x_N))| <= C_D h T`.
pub fn dissipation_integral(
    traj: &Trajectory,
    field: &Field,
    c_dissipation: f64,
    stop_tol: f64,
    cfg: &CheckConfig,
) -> Result<BoundCheck, AnalysisError> {
    let Some(potential) = field.potential() else {
        return Err(AnalysisError::WrongFieldKind { got: field.kind_name() });
    };
    let final_velocity = traj.right_velocities().last().expect("nonempty").norm();
    if final_velocity > stop_tol {
        return Err(AnalysisError::NotConverged { final_velocity, stop_tol });
    }
    let h = traj.step();
    let n = traj.n_nodes() - 1;
    let integral: f64 =
        traj.right_velocities().iter().take(n).map(|v| v.norm_sq() * h).sum();
    let drop = potential.value(traj.state(0)) - potential.value(traj.final_state());
    let measured = (integral - drop).abs();
    let bound = c_dissipation * h * traj.horizon();
    Ok(BoundCheck::evaluate("dissipation_integral", measured, bound, cfg))
}

/// Long-horizon steepest descent of a convex potential minimizes it:
/// `V(x_N) <= min over samples V(y) + ||x0 - y*||^2 / (2T)`, within slack
/// scaled by the potential's magnitude. On a disjoint union the flow cannot
/// leave its member, so the comparison is against the member-local minimum
/// and the check is named accordingly.
pub fn convex_minimization_check(
    traj: &Trajectory,
    field: &Field,
    set: &ProxSet,
    y_samples: &[Vector],
    cfg: &CheckConfig,
) -> Result<BoundCheck, AnalysisError> {
    let Some(potential) = field.potential() else {
        return Err(AnalysisError::WrongFieldKind { got: field.kind_name() });
    };
    if !potential.is_certified_convex() {
        return Err(AnalysisError::NotConvex);
    }
    if y_samples.is_empty() {
        return Err(AnalysisError::InvalidInput("no comparison points given".into()));
    }
    for y in y_samples {
        let d = set.distance(y)?;
        if d > crate::tolerances::MEMBERSHIP_TOL {
            return Err(AnalysisError::Set(SetError::NotInSet {
                distance: d,
                tol: crate::tolerances::MEMBERSHIP_TOL,
            }));
        }
    }
    let member = set.union_member_containing(traj.final_state(), crate::tolerances::MEMBERSHIP_TOL)?;
    let mut name = "convex_minimization".to_string();
    let candidates: Vec<&Vector> = match member {
        None => y_samples.iter().collect(),
        Some(idx) => {
            name.push_str("_member_local");
            let mut local = Vec::new();
            for y in y_samples {
                if set.union_member_containing(y, crate::tolerances::MEMBERSHIP_TOL)? == Some(idx) {
                    local.push(y);
                }
            }
            if local.is_empty() {
                return Err(AnalysisError::InvalidInput(format!(
                    "no comparison point lies in union member {idx}, where the trajectory ended"
                )));
            }
            local
        }
    };
    let v_final = potential.value(traj.final_state());
    let (y_best, v_best) = candidates
        .iter()
        .map(|y| (*y, potential.value(y)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("candidates nonempty");
    let measured = v_final - v_best;
    let bound = traj.state(0).dist(y_best).powi(2) / (2.0 * traj.horizon());
    let scaled = CheckConfig {
        slack: cfg.slack,
        abs_tol: cfg.abs_tol + cfg.slack * (1.0 + v_final.abs()),
    };
    Ok(BoundCheck::evaluate(name, measured, bound, &scaled))
}
