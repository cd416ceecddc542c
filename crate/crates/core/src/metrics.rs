//! Motion descriptors computed from path histories, and the swarm order metric.
//!
//! All three metrics are averages of normalized inner products, so they lie in
//! `[-1, 1]`. Terms involving a displacement (or velocity) shorter than
//! [`EPS_NORM`](crate::geometry::EPS_NORM) are left out of the average.

use thiserror::Error;

use crate::geometry::{normalized_dot, Vec2};
use crate::perception::PathHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("history has {len} entries, at least {needed} required")]
    TooShort { len: usize, needed: usize },
}

fn require(h: &PathHistory, needed: usize) -> Result<(), MetricError> {
    if h.len() < needed {
        Err(MetricError::TooShort { len: h.len(), needed })
    } else {
        Ok(())
    }
}

/// Consecutive differences of a history, newest first:
/// `d[m] = H[m] - H[m + 1]`.
pub fn displacements(h: &PathHistory) -> Result<Vec<Vec2>, MetricError> {
    require(h, 2)?;
    let pos: Vec<Vec2> = h.positions().collect();
    Ok(pos.windows(2).map(|w| w[0] - w[1]).collect())
}

/// Mean of the defined terms, or 0 when none is defined.
fn mean_defined(terms: impl Iterator<Item = Option<f64>>) -> f64 {
    let (sum, n) = terms.flatten().fold((0.0, 0usize), |(s, n), t| (s + t, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// How alike two observed motions are: the average alignment of their
/// displacements over the common recent window.
///
/// 1 for co-directed paths, -1 for opposite ones, 0 for orthogonal ones.
pub fn path_similarity(a: &PathHistory, b: &PathHistory) -> Result<f64, MetricError> {
    let da = displacements(a)?;
    let db = displacements(b)?;
    Ok(mean_defined(da.iter().zip(&db).map(|(&u, &v)| normalized_dot(u, v))))
}

/// How steady one observed motion is: the average alignment between
/// consecutive displacements. 1 for a straight line.
pub fn path_persistence(h: &PathHistory) -> Result<f64, MetricError> {
    require(h, 3)?;
    let d = displacements(h)?;
    Ok(mean_defined(d.windows(2).map(|w| normalized_dot(w[1], w[0]))))
}

/// Mean pairwise velocity alignment over all ordered pairs.
///
/// Pairs involving a (near) stationary agent contribute 0 but still count in
/// the `N (N - 1)` normalizer. Fewer than two velocities give 0.
pub fn order_metric(velocities: &[Vec2]) -> f64 {
    let n = velocities.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, &vi) in velocities.iter().enumerate() {
        for (j, &vj) in velocities.iter().enumerate() {
            if i != j {
                sum += normalized_dot(vi, vj).unwrap_or(0.0);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}
