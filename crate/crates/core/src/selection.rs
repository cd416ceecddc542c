//! Iterative target selection: which neighbor (if any) an uninformed UAV
//! follows, driven by a three-state machine.
//!
//! An informed UAV always heads for the goal. An uninformed one keeps the
//! neighbors that are far enough away, not closing in on its previous target,
//! and observed long enough to score; among those it follows the one whose
//! path is both steady and most similar to the others.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{UavId, Vec2};
use crate::metrics::{path_persistence, path_similarity};
use crate::perception::PathHistory;

/// Path histories of the current neighbors, keyed by observed UAV.
pub type Histories = BTreeMap<UavId, PathHistory>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("no potential targets to choose from")]
    EmptySet,
}

/// State of the target-selection machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmState {
    /// Hold position.
    Hold,
    /// Follow a selected UAV.
    Follow,
    /// Head for the goal.
    Goal,
}

impl FsmState {
    pub fn step(self, input: FsmInput) -> FsmState {
        fsm_step(self, input)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FsmState::Hold => "q0",
            FsmState::Follow => "q1",
            FsmState::Goal => "q2",
        }
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Input symbol of the target-selection machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmInput {
    Alone,
    Swarm,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionParams {
    /// Proximity radius: closer neighbors are not considered as targets (m).
    pub r_f: f64,
    /// Minimum history length to be scored.
    pub min_history: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            r_f: 4.0,
            min_history: 3,
        }
    }
}

/// Neighbors an uninformed UAV may follow, in ascending id order.
///
/// A neighbor `j` is kept when all hold:
/// * its newest estimate is at least `r_f` from `p_i`;
/// * it is not the case that its newest estimate is closer to `prev_target`
///   than its oldest one;
/// * its history has at least `min_history` entries.
pub fn potential_targets(p_i: Vec2, prev_target: Vec2, histories: &Histories, params: &SelectionParams) -> Vec<UavId> {
    histories
        .iter()
        .filter(|(_, h)| {
            let (Some(newest), Some(oldest)) = (h.newest(), h.oldest()) else {
                return false;
            };
            let far_enough = newest.distance(p_i) >= params.r_f;
            let closing_in = newest.distance(prev_target) < oldest.distance(prev_target);
            far_enough && !closing_in && h.len() >= params.min_history
        })
        .map(|(&j, _)| j)
        .collect()
}

pub fn fsm_input(informed: bool, n_targets: usize) -> FsmInput {
    if informed {
        FsmInput::Goal
    } else if n_targets > 0 {
        FsmInput::Swarm
    } else {
        FsmInput::Alone
    }
}

/// Transition function. `Goal` is absorbing.
pub fn fsm_step(state: FsmState, input: FsmInput) -> FsmState {
    match (state, input) {
        (FsmState::Goal, _) | (_, FsmInput::Goal) => FsmState::Goal,
        (_, FsmInput::Swarm) => FsmState::Follow,
        (_, FsmInput::Alone) => FsmState::Hold,
    }
}

/// Selection score of candidate `j`: its persistence plus its similarity to
/// every other candidate.
pub fn target_score(j: UavId, candidates: &[UavId], histories: &Histories) -> f64 {
    let hj = &histories[&j];
    let persistence = path_persistence(hj).unwrap_or(0.0);
    let similarity: f64 = candidates
        .iter()
        .filter(|&&l| l != j)
        .map(|l| path_similarity(hj, &histories[l]).unwrap_or(0.0))
        .sum();
    persistence + similarity
}

/// The chosen target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub id: UavId,
    /// Newest estimate of the chosen UAV.
    pub position: Vec2,
    pub score: f64,
}

/// Highest-scoring candidate; ties go to the lowest id.
///
/// Every candidate must have a history in `histories`.
pub fn select_target(candidates: &[UavId], histories: &Histories) -> Result<Selection, SelectionError> {
    let mut ids = candidates.to_vec();
    ids.sort_unstable();
    let mut best: Option<(UavId, f64)> = None;
    for &j in &ids {
        let s = target_score(j, &ids, histories);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    let (id, score) = best.ok_or(SelectionError::EmptySet)?;
    let position = histories[&id].newest().expect("candidate with empty history");
    Ok(Selection { id, position, score })
}

/// Target position for the current machine state. A missing input the state
/// needs (no selection in `Follow`, no goal in `Goal`) falls back to holding.
pub fn resolve_target(state: FsmState, p_i: Vec2, selected: Option<Vec2>, goal: Option<Vec2>) -> Vec2 {
    match state {
        FsmState::Hold => p_i,
        FsmState::Follow => selected.unwrap_or(p_i),
        FsmState::Goal => goal.unwrap_or(p_i),
    }
}
