//! Noisy relative observation of other UAVs, the neighbor set and per-neighbor
//! path histories.
//!
//! Estimates are stored in the observer's world frame: the observer knows its
//! own position exactly and adds the (noisy) relative measurement to it.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Step, UavId, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ObserveError {
    #[error("no prior estimate to propagate without line of sight")]
    NoPriorEstimate,
}

/// Standard deviations of the estimation error with and without line of sight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationModel {
    pub sigma_los: f64,
    pub sigma_nlos: f64,
}

impl Default for ObservationModel {
    fn default() -> Self {
        ObservationModel {
            sigma_los: 0.2,
            sigma_nlos: 0.5,
        }
    }
}

fn gaussian2<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Vec2::new(x * sigma, y * sigma)
}

/// One position estimate of another UAV.
///
/// With line of sight the estimate is the true position plus isotropic
/// Gaussian noise of deviation `sigma_los`. Without it the previous estimate
/// performs a random walk with per-step deviation `sigma_nlos`, so its mean
/// stays at the last sighting while the covariance grows linearly.
///
/// Two normal variates are drawn on every call regardless of the branch.
pub fn observe<R: Rng + ?Sized>(
    truth: Vec2,
    prev_estimate: Option<Vec2>,
    has_los: bool,
    model: &ObservationModel,
    rng: &mut R,
) -> Result<Vec2, ObserveError> {
    if has_los {
        Ok(truth + gaussian2(rng, model.sigma_los))
    } else {
        let prev = prev_estimate.ok_or(ObserveError::NoPriorEstimate)?;
        Ok(prev + gaussian2(rng, model.sigma_nlos))
    }
}

/// UAVs currently tracked by one observer, with the last step each was seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    last_los: BTreeMap<UavId, Step>,
    k_m: Step,
}

impl NeighborSet {
    pub fn new(k_m: Step) -> Self {
        NeighborSet {
            last_los: BTreeMap::new(),
            k_m,
        }
    }

    /// Adds every UAV with line of sight at `k`, refreshes their timestamps and
    /// drops those unseen for more than `k_m` steps. UAVs absent from `los`
    /// count as not visible.
    pub fn update<I>(&mut self, los: I, k: Step)
    where
        I: IntoIterator<Item = (UavId, bool)>,
    {
        for (j, visible) in los {
            if visible {
                self.last_los.insert(j, k);
            }
        }
        let k_m = self.k_m;
        self.last_los.retain(|_, &mut seen| k.saturating_sub(seen) <= k_m);
    }

    pub fn contains(&self, j: UavId) -> bool {
        self.last_los.contains_key(&j)
    }

    pub fn last_los(&self, j: UavId) -> Option<Step> {
        self.last_los.get(&j).copied()
    }

    /// Members in ascending id order.
    pub fn ids(&self) -> impl Iterator<Item = UavId> + '_ {
        self.last_los.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.last_los.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_los.is_empty()
    }

    pub fn k_m(&self) -> Step {
        self.k_m
    }
}

/// Time-stamped estimates of one observed UAV, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PathHistory {
    entries: VecDeque<(Vec2, Step)>,
    k_p: Step,
}

impl PathHistory {
    pub fn new(k_p: Step) -> Self {
        PathHistory {
            entries: VecDeque::new(),
            k_p,
        }
    }

    /// Builds a history from positions given newest first, stamped at
    /// consecutive steps ending at `newest_step`.
    pub fn from_positions(positions: &[Vec2], newest_step: Step, k_p: Step) -> Self {
        assert!(positions.len() as Step <= newest_step + 1, "timestamps would underflow");
        let entries = positions
            .iter()
            .enumerate()
            .map(|(m, &p)| (p, newest_step - m as Step))
            .collect();
        PathHistory { entries, k_p }
    }

    /// Prepends `estimate` when the UAV is a neighbor, then ages out entries.
    ///
    /// An entry is dropped once it is `k_p` or more steps old, which keeps the
    /// length at most `k_p` with one sample per step. A `k` not newer than the
    /// newest entry only triggers aging.
    pub fn update(&mut self, estimate: Vec2, k: Step, in_neighbors: bool) {
        let newer = self.entries.front().is_none_or(|&(_, t)| k > t);
        debug_assert!(newer || !in_neighbors, "history update at a non-increasing step");
        if in_neighbors && newer {
            self.entries.push_front((estimate, k));
        }
        self.age_out(k);
    }

    /// Drops entries older than the retention window without adding anything.
    pub fn age_out(&mut self, k: Step) {
        while let Some(&(_, t)) = self.entries.back() {
            if k.saturating_sub(t) >= self.k_p {
                self.entries.pop_back();
            } else {
                break;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn newest(&self) -> Option<Vec2> {
        self.entries.front().map(|e| e.0)
    }

    pub fn oldest(&self) -> Option<Vec2> {
        self.entries.back().map(|e| e.0)
    }

    /// The `m`-th estimate, 0 being the newest.
    pub fn get(&self, m: usize) -> Option<Vec2> {
        self.entries.get(m).map(|e| e.0)
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn times(&self) -> impl Iterator<Item = Step> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    pub fn k_p(&self) -> Step {
        self.k_p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_los_is_exact() {
        let model = ObservationModel {
            sigma_los: 0.0,
            sigma_nlos: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = Vec2::new(3.5, -1.25);
        assert_eq!(observe(truth, None, true, &model, &mut rng), Ok(truth));
        let prev = Vec2::new(1.0, 1.0);
        assert_eq!(observe(truth, Some(prev), false, &model, &mut rng), Ok(prev));
    }

    #[test]
    fn nlos_without_prior_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = observe(Vec2::ZERO, None, false, &ObservationModel::default(), &mut rng);
        assert_eq!(r, Err(ObserveError::NoPriorEstimate));
    }

    #[test]
    fn nlos_random_walk_covariance_grows_linearly() {
        // Monte-Carlo: after k steps without sight the displacement covariance
        // is k * sigma^2 * I.
        let model = ObservationModel {
            sigma_los: 0.0,
            sigma_nlos: 0.5,
        };
        let steps = 25usize;
        let trials = 10_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for _ in 0..trials {
            let start = Vec2::new(2.0, 3.0);
            let mut est = start;
            for _ in 0..steps {
                est = observe(Vec2::ZERO, Some(est), false, &model, &mut rng).unwrap();
            }
            let d = est - start;
            sxx += d.x * d.x;
            syy += d.y * d.y;
            sxy += d.x * d.y;
        }
        let n = trials as f64;
        let expected = steps as f64 * model.sigma_nlos.powi(2);
        assert!((sxx / n - expected).abs() / expected < 0.1, "var x {}", sxx / n);
        assert!((syy / n - expected).abs() / expected < 0.1, "var y {}", syy / n);
        assert!((sxy / n).abs() / expected < 0.1, "cov xy {}", sxy / n);
    }

    #[test]
    fn observation_is_seed_deterministic() {
        let model = ObservationModel::default();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut est = None;
            (0..50)
                .map(|k| {
                    let e = observe(Vec2::new(k as f64, 0.0), est, k == 0 || k % 3 != 0, &model, &mut rng).unwrap();
                    est = Some(e);
                    e
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn neighbor_added_on_sight() {
        let mut ns = NeighborSet::new(3);
        ns.update([(UavId(2), true), (UavId(1), false)], 10);
        assert!(ns.contains(UavId(2)));
        assert!(!ns.contains(UavId(1)));
        assert_eq!(ns.last_los(UavId(2)), Some(10));
    }

    #[test]
    fn neighbor_expiry_boundary() {
        let k_m = 5;
        let mut ns = NeighborSet::new(k_m);
        ns.update([(UavId(0), true)], 0);
        for k in 1..=k_m {
            ns.update([(UavId(0), false)], k);
            assert!(ns.contains(UavId(0)), "still present at k = {k}");
        }
        ns.update([(UavId(0), false)], k_m + 1);
        assert!(!ns.contains(UavId(0)));
        // regaining sight re-adds with a fresh timestamp
        ns.update([(UavId(0), true)], k_m + 4);
        assert_eq!(ns.last_los(UavId(0)), Some(k_m + 4));
    }

    #[test]
    fn history_first_entry() {
        let mut h = PathHistory::new(5);
        h.update(Vec2::new(1.0, 2.0), 0, true);
        assert_eq!(h.len(), 1);
        assert_eq!(h.newest(), Some(Vec2::new(1.0, 2.0)));
    }

    #[test]
    fn history_trims_to_window() {
        let mut h = PathHistory::new(5);
        for k in 0..6u64 {
            h.update(Vec2::new(k as f64, 0.0), k, true);
        }
        assert_eq!(h.len(), 5);
        assert_eq!(h.newest(), Some(Vec2::new(5.0, 0.0)));
        assert_eq!(h.oldest(), Some(Vec2::new(1.0, 0.0)));
    }

    #[test]
    fn history_empties_without_neighbor() {
        let k_p = 5;
        let mut h = PathHistory::new(k_p);
        for k in 0..3u64 {
            h.update(Vec2::new(k as f64, 0.0), k, true);
        }
        // hand step-through: newest entry stamped 2 ages out once k - 2 >= 5
        let mut lens = Vec::new();
        for k in 3..=2 + k_p + 1 {
            h.update(Vec2::ZERO, k, false);
            lens.push(h.len());
        }
        assert_eq!(lens, vec![3, 3, 2, 1, 0, 0]);
    }

    proptest! {
        #[test]
        fn structures_keep_invariants(
            flags in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 4), 1..200),
            k_m in 0u64..20,
            k_p in 1u64..30,
        ) {
            let mut ns = NeighborSet::new(k_m);
            let mut hs: Vec<PathHistory> = (0..4).map(|_| PathHistory::new(k_p)).collect();
            for (k, row) in flags.iter().enumerate() {
                let k = k as Step;
                ns.update(row.iter().enumerate().map(|(j, &f)| (UavId(j), f)), k);
                for j in ns.ids() {
                    prop_assert!(k - ns.last_los(j).unwrap() <= k_m);
                }
                for (j, h) in hs.iter_mut().enumerate() {
                    h.update(Vec2::new(k as f64, j as f64), k, ns.contains(UavId(j)));
                    prop_assert!(h.len() as u64 <= k_p);
                    let times: Vec<Step> = h.times().collect();
                    prop_assert!(times.windows(2).all(|w| w[0] > w[1]));
                    if let Some(&oldest) = times.last() {
                        prop_assert!(k - oldest <= k_p);
                    }
                }
            }
        }
    }
}
