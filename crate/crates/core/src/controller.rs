//! Navigation vectors, reactive collision avoidance and the combined command.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalized_dot, rotate, Vec2, EPS_NORM};

/// Gains, radii and limits of the velocity controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    /// Navigation gain, 1/s.
    pub k_n: f64,
    /// Collision-avoidance gain.
    pub k_c: f64,
    /// Minimum normalized speed factor of an informed agent.
    pub v_min: f64,
    /// Exponent of the neighbor slow-down.
    pub alpha: f64,
    /// Proximity radius, m.
    pub r_f: f64,
    /// Obstacle reaction radius, m.
    pub r_o: f64,
    /// Speed limit, m/s.
    pub v_max: f64,
    /// Obstacle distances below this are clamped to it, m.
    pub eps_dist: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            k_n: 1.2,
            k_c: 1.0,
            v_min: 0.3,
            alpha: 2.0,
            r_f: 4.0,
            r_o: 2.5,
            v_max: 2.0,
            eps_dist: 0.05,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.k_n,
            self.k_c,
            self.v_min,
            self.alpha,
            self.r_f,
            self.r_o,
            self.v_max,
            self.eps_dist,
        ]
        .iter()
        .all(|v| v.is_finite());
        let bad = |m: &str| Err(Error::InvalidConfig(format!("control: {m}")));
        if !finite {
            return bad("all parameters must be finite");
        }
        if !(self.v_min > 0.0 && self.v_min < 1.0) {
            return bad("v_min must lie in (0, 1)");
        }
        if self.alpha <= 0.0 || self.r_f <= 0.0 || self.r_o <= 0.0 || self.v_max <= 0.0 {
            return bad("alpha, r_f, r_o and v_max must be positive");
        }
        if self.k_n < 0.0 || self.k_c < 0.0 {
            return bad("gains must be non-negative");
        }
        if self.eps_dist <= 0.0 || self.eps_dist >= self.r_o {
            return bad("eps_dist must lie in (0, r_o)");
        }
        Ok(())
    }
}

/// Navigation vector of an informed agent toward waypoint `a_n`.
///
/// The gain shrinks as the neighbors fall behind, but never below `v_min`.
/// Without neighbors the factor is `v_min`.
pub fn nav_informed(a_n: Vec2, p_i: Vec2, neighbors: &[Vec2], params: &ControlParams) -> Vec2 {
    (a_n - p_i) * (informed_factor(p_i, neighbors, params) * params.k_n)
}

/// Speed factor applied to an informed agent's navigation vector.
pub fn informed_factor(p_i: Vec2, neighbors: &[Vec2], params: &ControlParams) -> f64 {
    if neighbors.is_empty() {
        return params.v_min;
    }
    let total: f64 = neighbors.iter().map(|q| q.distance(p_i)).sum();
    let spread = total / (2.0 * params.r_f * neighbors.len() as f64);
    params.v_min.max(1.0 - spread)
}

/// Navigation vector of an uninformed agent toward waypoint `a_n`.
///
/// For each neighbor in the given order, the component pointing at that
/// neighbor is scaled by `min(1, (d / r_f)^alpha)`. Neighbors closer than
/// [`EPS_NORM`] are skipped.
pub fn nav_uninformed(a_n: Vec2, p_i: Vec2, neighbors: &[Vec2], params: &ControlParams) -> Vec2 {
    let mut n = (a_n - p_i) * params.k_n;
    for &q in neighbors {
        let rel = q - p_i;
        let Some(dir) = rel.normalized() else { continue };
        let scale = (rel.norm() / params.r_f).powf(params.alpha).min(1.0);
        let along = dir * n.dot(dir);
        n = n - along + along * scale;
    }
    n
}

/// The two unit candidates for avoiding obstacle `o` and the rotation angle.
///
/// The away-from-obstacle direction is rotated by `+phi` and `-phi`, with
/// `phi = pi d / (2 r_o)`. Distances below `eps_dist` are clamped; an agent
/// sitting exactly on the obstacle uses the +x axis as away direction.
pub fn collision_candidates(p_i: Vec2, o: Vec2, params: &ControlParams) -> (Vec2, Vec2, f64) {
    let rel = p_i - o;
    let away = rel.normalized().unwrap_or(Vec2::new(1.0, 0.0));
    let d = rel.norm().max(params.eps_dist);
    let phi = FRAC_PI_2 * d / params.r_o;
    (rotate(away, phi), rotate(away, -phi), phi)
}

/// Avoidance magnitude for an obstacle at distance `d`: zero from `r_o` on.
pub fn repulsion_magnitude(d: f64, params: &ControlParams) -> f64 {
    let d = d.max(params.eps_dist);
    (1.0 / d - 1.0 / params.r_o).max(0.0)
}

/// Superposed avoidance vector for all `obstacles`.
///
/// Each obstacle contributes along whichever candidate is closer in angle to
/// the previous command `u_prev`; ties and a vanishing `u_prev` pick the
/// counter-clockwise candidate.
pub fn collision_vector(p_i: Vec2, obstacles: &[Vec2], u_prev: Vec2, params: &ControlParams) -> Vec2 {
    let mut c = Vec2::ZERO;
    for &o in obstacles {
        let (plus, minus, _) = collision_candidates(p_i, o, params);
        let chosen = match (normalized_dot(plus, u_prev), normalized_dot(minus, u_prev)) {
            (Some(a), Some(b)) if b > a => minus,
            _ => plus,
        };
        c += chosen * repulsion_magnitude(p_i.distance(o), params);
    }
    c * params.k_c
}

/// Purely repulsive reference: every obstacle pushes straight away from itself.
pub fn repulsive_vector(p_i: Vec2, obstacles: &[Vec2], params: &ControlParams) -> Vec2 {
    let mut c = Vec2::ZERO;
    for &o in obstacles {
        let away = (p_i - o).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        c += away * repulsion_magnitude(p_i.distance(o), params);
    }
    c * params.k_c
}

/// Which avoidance rule the controller uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AvoidanceMode {
    /// Rotated candidates chosen against the previous command.
    #[default]
    Rotational,
    /// Straight repulsion away from each obstacle.
    Repulsive,
}

impl AvoidanceMode {
    pub fn vector(self, p_i: Vec2, obstacles: &[Vec2], u_prev: Vec2, params: &ControlParams) -> Vec2 {
        match self {
            AvoidanceMode::Rotational => collision_vector(p_i, obstacles, u_prev, params),
            AvoidanceMode::Repulsive => repulsive_vector(p_i, obstacles, params),
        }
    }
}

/// Velocity command `n + c`, norm-clamped to `v_max`.
pub fn control(n: Vec2, c: Vec2, v_max: f64) -> Vec2 {
    let u = n + c;
    if u.norm() < EPS_NORM {
        return Vec2::ZERO;
    }
    u.clamp_norm(v_max)
}
