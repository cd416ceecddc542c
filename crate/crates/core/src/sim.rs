//! World stepping, missions and batches.
//!
//! Every step all agents decide from the same frozen world state, then move
//! together. A master seed fans out into separate random streams for the
//! forest, the spawn and every ordered observer/observed pair.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::controller::{control, nav_informed, nav_uninformed};
use crate::environment::{generate_forest, nearby_obstacles, sense_obstacles, Forest, ForestSpec, LineOfSight};
use crate::error::{Error, Result};
use crate::geometry::{Step, UavId, Vec2};
use crate::metrics::order_metric;
use crate::perception::{observe, NeighborSet, ObservationModel, PathHistory};
use crate::planner::{next_waypoint, plan, update_grid, OccupancyGrid};
use crate::selection::{fsm_input, fsm_step, potential_targets, resolve_target, select_target, FsmState, Histories};

/// Sampling budget for [`spawn`].
pub const SPAWN_ATTEMPTS: usize = 100_000;

const STREAM_SPAWN: u64 = 1;
const STREAM_PAIRS: u64 = 2;

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Forest seed used when the configuration does not fix one.
pub fn derived_forest_seed(master_seed: u64) -> u64 {
    mix_seed(master_seed ^ 0x666F_7265_7374)
}

fn stream(master_seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(id);
    rng
}

/// Builds or loads the scenario's forest.
pub fn build_forest(config: &ScenarioConfig) -> Result<Forest> {
    if let Some(path) = &config.forest.file {
        return Forest::load(path);
    }
    generate_forest(&ForestSpec {
        seed: config
            .forest
            .seed
            .unwrap_or_else(|| derived_forest_seed(config.master_seed)),
        area: config.forest.area,
        n_trees: config.forest.n_trees,
        tree_radius: config.forest.tree_radius,
        min_spacing: config.forest.min_spacing(),
        keep_clear: config.keep_clear(),
    })
}

/// Uniform positions in the spawn disk, pairwise at least two body radii plus
/// the margin apart and clear of every tree.
pub fn spawn<R: Rng + ?Sized>(config: &ScenarioConfig, forest: &Forest, rng: &mut R) -> Result<Vec<Vec2>> {
    let spacing = 2.0 * config.uav_radius + config.spawn_margin;
    let mut placed: Vec<Vec2> = Vec::with_capacity(config.n_uavs);
    for _ in 0..SPAWN_ATTEMPTS {
        if placed.len() == config.n_uavs {
            break;
        }
        let r = config.spawn_radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let p = config.spawn_center + Vec2::new(r * theta.cos(), r * theta.sin());
        let crowded = placed.iter().any(|q| q.distance(p) < spacing);
        let in_tree = forest
            .trees
            .iter()
            .any(|t| t.center.distance(p) < t.radius + config.uav_radius);
        if !crowded && !in_tree {
            placed.push(p);
        }
    }
    if placed.len() < config.n_uavs {
        return Err(Error::SpawnInfeasible { n_uavs: config.n_uavs });
    }
    Ok(placed)
}

/// One UAV and everything it knows.
#[derive(Debug, Clone)]
pub struct Agent {
    pub id: UavId,
    pub informed: bool,
    pub position: Vec2,
    /// Command applied during the previous step.
    pub u_prev: Vec2,
    pub fsm: FsmState,
    pub prev_target: Vec2,
    pub neighbors: NeighborSet,
    /// Latest estimate of every UAV observed so far.
    pub estimates: BTreeMap<UavId, Vec2>,
    pub histories: Histories,
    pub grid: OccupancyGrid,
}

/// What one agent decided during a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub fsm: FsmState,
    pub target_id: Option<UavId>,
    pub target: Vec2,
    pub waypoint: Vec2,
    pub nav: Vec2,
    pub avoid: Vec2,
    pub u: Vec2,
}

/// One estimate made during a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub observer: UavId,
    pub observed: UavId,
    pub position: Vec2,
    pub los: bool,
}

/// The simulated world.
#[derive(Debug, Clone)]
pub struct World {
    config: ScenarioConfig,
    forest: Forest,
    agents: Vec<Agent>,
    pair_rngs: Vec<ChaCha8Rng>,
    model: ObservationModel,
    los: LineOfSight,
    k: Step,
}

/// Everything recorded about one agent at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: UavId,
    pub informed: bool,
    pub position: Vec2,
    pub decision: Decision,
    pub n_neighbors: usize,
    /// Distance to the nearest tree center.
    pub tree_distance: f64,
}

/// Swarm state at one step, before the step's motion is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: Step,
    pub agents: Vec<AgentRecord>,
    pub estimates: Vec<Estimate>,
    /// Order metric of the commanded velocities.
    pub order: f64,
    pub pair_distance: Option<PairDistances>,
}

/// Minimum, maximum and mean over all unordered agent pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistances {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl PairDistances {
    pub fn of(positions: &[Vec2]) -> Option<PairDistances> {
        let mut d = Vec::new();
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[i + 1..] {
                d.push(a.distance(*b));
            }
        }
        if d.is_empty() {
            return None;
        }
        Some(PairDistances {
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: d.iter().sum::<f64>() / d.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_step: Option<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_time: Option<f64>,
    pub steps: Step,
    /// Smallest distance between two agents over the mission; infinite for one agent.
    pub min_pair_distance: f64,
    /// Smallest agent to tree-center distance; infinite without trees.
    pub min_tree_distance: f64,
    /// Order metric at the last recorded step, 0 when nothing was recorded.
    pub final_order: f64,
}

/// A full mission: resolved configuration, forest, per-step records, summary.
#[derive(Debug, Clone)]
pub struct MissionLog {
    pub config: ScenarioConfig,
    pub forest: Forest,
    pub records: Vec<StepRecord>,
    pub final_positions: Vec<Vec2>,
    pub summary: MissionSummary,
}

impl World {
    pub fn new(config: &ScenarioConfig) -> Result<World> {
        config.validate()?;
        let forest = build_forest(config)?;
        let mut config = config.clone();
        if config.forest.file.is_none() {
            config.forest.seed = Some(forest.seed);
        }
        let positions = spawn(&config, &forest, &mut stream(config.master_seed, STREAM_SPAWN))?;
        let n = config.n_uavs;
        let agents = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let id = UavId(i);
                let informed = config.is_informed(id);
                Agent {
                    id,
                    informed,
                    position: p,
                    u_prev: Vec2::ZERO,
                    fsm: if informed { FsmState::Goal } else { FsmState::Hold },
                    prev_target: p,
                    neighbors: NeighborSet::new(config.perception.k_m),
                    estimates: BTreeMap::new(),
                    histories: Histories::new(),
                    grid: OccupancyGrid::covering(&config.forest.area, config.planner.cell_size),
                }
            })
            .collect();
        let pair_rngs = (0..(n * n) as u64)
            .map(|s| stream(config.master_seed, STREAM_PAIRS + s))
            .collect();
        Ok(World {
            model: config.perception.noise(),
            los: config.perception.line_of_sight(),
            config,
            forest,
            agents,
            pair_rngs,
            k: 0,
        })
    }

    /// Configuration with the forest seed actually used filled in.
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn step_index(&self) -> Step {
        self.k
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.position).collect()
    }

    /// True once every agent is inside the goal disk.
    pub fn is_complete(&self) -> bool {
        self.agents
            .iter()
            .all(|a| a.position.distance(self.config.goal) <= self.config.goal_radius)
    }

    /// Advances one step and returns what happened in it.
    pub fn step(&mut self) -> StepRecord {
        let k = self.k;
        let positions = self.positions();
        let n = self.agents.len();
        let mut estimates = Vec::new();
        let mut decisions = Vec::with_capacity(n);
        for i in 0..n {
            let d = decide(
                &mut self.agents[i],
                &positions,
                &self.forest,
                &self.config,
                &self.model,
                &self.los,
                &mut self.pair_rngs[i * n..(i + 1) * n],
                k,
                &mut estimates,
            );
            decisions.push(d);
        }
        let velocities: Vec<Vec2> = decisions.iter().map(|d| d.u).collect();
        let agents = self
            .agents
            .iter()
            .zip(&decisions)
            .map(|(a, &decision)| AgentRecord {
                id: a.id,
                informed: a.informed,
                position: a.position,
                decision,
                n_neighbors: a.neighbors.len(),
                tree_distance: self.forest.nearest_tree_distance(a.position),
            })
            .collect();
        let record = StepRecord {
            k,
            agents,
            estimates,
            order: order_metric(&velocities),
            pair_distance: PairDistances::of(&positions),
        };
        for (a, u) in self.agents.iter_mut().zip(velocities) {
            a.position += u * self.config.dt;
            a.u_prev = u;
        }
        self.k += 1;
        record
    }
}

#[allow(clippy::too_many_arguments)]
fn decide(
    agent: &mut Agent,
    positions: &[Vec2],
    forest: &Forest,
    config: &ScenarioConfig,
    model: &ObservationModel,
    los: &LineOfSight,
    rngs: &mut [ChaCha8Rng],
    k: Step,
    log: &mut Vec<Estimate>,
) -> Decision {
    let i = agent.id.index();
    let p = agent.position;

    let sensed = sense_obstacles(forest, p, config.perception.r_sense);
    update_grid(
        &mut agent.grid,
        sensed.iter().map(|&t| &forest.trees[t]),
        config.planner.inflation,
    );

    let mut bodies = Vec::new();
    let flags: Vec<(UavId, bool)> = (0..positions.len())
        .filter(|&j| j != i)
        .map(|j| {
            bodies.clear();
            bodies.extend(
                positions
                    .iter()
                    .enumerate()
                    .filter(|&(l, _)| l != i && l != j)
                    .map(|(_, &q)| q),
            );
            (UavId(j), los.check(forest, p, positions[j], &bodies))
        })
        .collect();
    agent.neighbors.update(flags.iter().copied(), k);

    for &(j, visible) in &flags {
        let member = agent.neighbors.contains(j);
        if member {
            let prev = agent.estimates.get(&j).copied();
            let est = observe(positions[j.index()], prev, visible, model, &mut rngs[j.index()])
                .expect("neighbors always have a prior estimate");
            agent.estimates.insert(j, est);
            log.push(Estimate {
                observer: agent.id,
                observed: j,
                position: est,
                los: visible,
            });
            agent
                .histories
                .entry(j)
                .or_insert_with(|| PathHistory::new(config.perception.k_p))
                .update(est, k, true);
        } else if let Some(h) = agent.histories.get_mut(&j) {
            h.age_out(k);
        }
    }
    agent
        .histories
        .retain(|j, h| !h.is_empty() || agent.neighbors.contains(*j));

    let neighbor_estimates: Vec<Vec2> = agent.neighbors.ids().map(|j| agent.estimates[&j]).collect();

    let (fsm, target_id, target) = if agent.informed {
        (FsmState::Goal, None, config.goal)
    } else {
        let current: Histories = agent
            .histories
            .iter()
            .filter(|(j, _)| agent.neighbors.contains(**j))
            .map(|(&j, h)| (j, h.clone()))
            .collect();
        let candidates = potential_targets(p, agent.prev_target, &current, &config.selection_params());
        let state = fsm_step(agent.fsm, fsm_input(false, candidates.len()));
        let selection = (state == FsmState::Follow)
            .then(|| select_target(&candidates, &current).ok())
            .flatten();
        let target = resolve_target(state, p, selection.map(|s| s.position), None);
        (state, selection.map(|s| s.id), target)
    };
    agent.fsm = fsm;
    agent.prev_target = target;

    let waypoint = if fsm == FsmState::Hold {
        p
    } else {
        next_waypoint(&plan(&agent.grid, p, target), p)
    };
    let nav = if agent.informed {
        nav_informed(waypoint, p, &neighbor_estimates, &config.control)
    } else {
        nav_uninformed(waypoint, p, &neighbor_estimates, &config.control)
    };
    let obstacles = nearby_obstacles(forest, &neighbor_estimates, p, config.control.r_o);
    let avoid = config.avoidance.vector(p, &obstacles, agent.u_prev, &config.control);
    let u = control(nav, avoid, config.control.v_max);
    Decision {
        fsm,
        target_id,
        target,
        waypoint,
        nav,
        avoid,
        u,
    }
}

/// Runs until every agent is inside the goal disk or the step budget is spent.
pub fn run_mission(config: &ScenarioConfig) -> Result<MissionLog> {
    let mut world = World::new(config)?;
    let mut records = Vec::new();
    let mut completion = None;
    while world.step_index() < world.config().max_steps {
        if world.is_complete() {
            completion = Some(world.step_index());
            break;
        }
        records.push(world.step());
    }
    if completion.is_none() && world.is_complete() {
        completion = Some(world.step_index());
    }
    let final_positions = world.positions();
    let summary = summarize(world.config(), world.forest(), &records, &final_positions, completion);
    Ok(MissionLog {
        config: world.config().clone(),
        forest: world.forest().clone(),
        records,
        final_positions,
        summary,
    })
}

/// Recomputes the mission summary from the per-step records.
pub fn summarize(
    config: &ScenarioConfig,
    forest: &Forest,
    records: &[StepRecord],
    final_positions: &[Vec2],
    completion: Option<Step>,
) -> MissionSummary {
    let snapshots = records
        .iter()
        .map(|r| r.agents.iter().map(|a| a.position).collect::<Vec<_>>())
        .chain(std::iter::once(final_positions.to_vec()));
    let mut min_pair = f64::INFINITY;
    let mut min_tree = f64::INFINITY;
    for positions in snapshots {
        if let Some(d) = PairDistances::of(&positions) {
            min_pair = min_pair.min(d.min);
        }
        for &p in &positions {
            min_tree = min_tree.min(forest.nearest_tree_distance(p));
        }
    }
    MissionSummary {
        completed: completion.is_some(),
        completion_step: completion,
        completion_time: completion.map(|s| s as f64 * config.dt),
        steps: records.len() as Step,
        min_pair_distance: min_pair,
        min_tree_distance: min_tree,
        final_order: records.last().map_or(0.0, |r| r.order),
    }
}

/// Mean, minimum and maximum of a sample; all zero for an empty sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stats {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Stats {
                count: 0,
                mean: 0.0,
                min: 0.0,
                max: 0.0,
            };
        }
        Stats {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub master_seed: u64,
    pub forest_seed: u64,
    #[serde(flatten)]
    pub summary: MissionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub n_runs: usize,
    pub completed_runs: usize,
    /// Over completed runs only.
    pub completion_time: Stats,
    pub min_pair_distance: Stats,
    pub min_tree_distance: Stats,
    pub final_order: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: Vec<RunSummary>,
    pub aggregate: BatchAggregate,
}

impl BatchSummary {
    pub fn all_completed(&self) -> bool {
        self.aggregate.completed_runs == self.aggregate.n_runs
    }
}

/// Configuration of run `r` of a batch: master seed offset by `r`, forest seed
/// from `forest_seeds` when given, otherwise derived from the run's master seed.
pub fn batch_run_config(config: &ScenarioConfig, r: usize, forest_seeds: Option<&[u64]>) -> ScenarioConfig {
    let mut c = config.clone();
    c.master_seed = config.master_seed.wrapping_add(r as u64);
    c.forest.seed = match forest_seeds {
        Some(seeds) => Some(seeds[r % seeds.len()]),
        None => config.forest.seed.or(Some(derived_forest_seed(c.master_seed))),
    };
    c
}

/// Independent missions run in parallel; see [`batch_run_config`] for seeding.
pub fn run_batch(config: &ScenarioConfig, n_runs: usize, forest_seeds: Option<&[u64]>) -> Result<BatchSummary> {
    run_batch_with(config, n_runs, forest_seeds, |_, _| Ok(()))
}

/// [`run_batch`] that hands every finished mission log to `each`.
pub fn run_batch_with<F>(
    config: &ScenarioConfig,
    n_runs: usize,
    forest_seeds: Option<&[u64]>,
    each: F,
) -> Result<BatchSummary>
where
    F: Fn(usize, &MissionLog) -> Result<()> + Sync,
{
    if n_runs == 0 {
        return Err(Error::InvalidConfig("a batch needs at least one run".into()));
    }
    if forest_seeds.is_some_and(|s| s.is_empty()) {
        return Err(Error::InvalidConfig("forest seed list is empty".into()));
    }
    let runs: Vec<RunSummary> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let c = batch_run_config(config, r, forest_seeds);
            let log = run_mission(&c)?;
            each(r, &log)?;
            Ok(RunSummary {
                run: r,
                master_seed: c.master_seed,
                forest_seed: log.forest.seed,
                summary: log.summary,
            })
        })
        .collect::<Result<_>>()?;
    let completed: Vec<&RunSummary> = runs.iter().filter(|r| r.summary.completed).collect();
    let aggregate = BatchAggregate {
        n_runs,
        completed_runs: completed.len(),
        completion_time: Stats::of(completed.iter().filter_map(|r| r.summary.completion_time)),
        min_pair_distance: Stats::of(runs.iter().map(|r| r.summary.min_pair_distance)),
        min_tree_distance: Stats::of(runs.iter().map(|r| r.summary.min_tree_distance)),
        final_order: Stats::of(runs.iter().map(|r| r.summary.final_order)),
    };
    Ok(BatchSummary { runs, aggregate })
}
