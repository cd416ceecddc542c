//! Scenario configuration, presets and validation.
//!
//! Configurations are TOML documents. Every table rejects unknown keys.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{AvoidanceMode, ControlParams};
use crate::environment::{default_min_spacing, trees_for_density, Area, KeepClearZone, LineOfSight};
use crate::error::{Error, Result};
use crate::geometry::{UavId, Vec2};
use crate::perception::ObservationModel;
use crate::selection::SelectionParams;

/// Forest used by a scenario: generated from parameters or loaded from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    /// Fixed forest seed. When absent it is derived from the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub area: Area,
    pub n_trees: usize,
    pub tree_radius: f64,
    /// Minimum center-to-center spacing; defaults to two radii plus 1.2 m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_spacing: Option<f64>,
    /// Extra clearance around the spawn disk kept free of trees (m).
    pub spawn_clearance: f64,
    /// Load the forest from this file instead of generating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl ForestConfig {
    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
            .unwrap_or_else(|| default_min_spacing(self.tree_radius))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Estimation noise with line of sight (m).
    pub sigma_los: f64,
    /// Per-step random-walk noise without line of sight (m).
    pub sigma_nlos: f64,
    /// Steps a neighbor is kept without line of sight.
    pub k_m: u64,
    /// Path-history retention in steps.
    pub k_p: u64,
    /// Radius within which trees are disclosed to the agent's map (m).
    pub r_sense: f64,
    /// Added to tree radii in line-of-sight tests (m).
    pub los_inflation: f64,
    /// Let other UAV bodies block line of sight.
    pub uav_occlusion: bool,
    /// Occluding body radius when `uav_occlusion` is on (m).
    pub uav_body_radius: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            sigma_los: 0.2,
            sigma_nlos: 0.5,
            k_m: 30,
            k_p: 50,
            r_sense: 8.0,
            los_inflation: 0.0,
            uav_occlusion: false,
            uav_body_radius: 0.25,
        }
    }
}

impl PerceptionConfig {
    pub fn noise(&self) -> ObservationModel {
        ObservationModel {
            sigma_los: self.sigma_los,
            sigma_nlos: self.sigma_nlos,
        }
    }

    pub fn line_of_sight(&self) -> LineOfSight {
        LineOfSight {
            inflation: self.los_inflation,
            uav_body_radius: self.uav_occlusion.then_some(self.uav_body_radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub cell_size: f64,
    /// Added to the tree radius when marking occupied cells (m).
    pub inflation: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            cell_size: 0.5,
            inflation: 0.25,
        }
    }
}

/// Everything that determines a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_uavs: usize,
    pub informed_ids: BTreeSet<UavId>,
    pub goal: Vec2,
    pub spawn_center: Vec2,
    pub spawn_radius: f64,
    pub goal_radius: f64,
    /// Body radius of a UAV (m).
    pub uav_radius: f64,
    /// Extra spacing between spawned UAVs beyond two body radii (m).
    pub spawn_margin: f64,
    pub dt: f64,
    pub max_steps: u64,
    pub master_seed: u64,
    pub forest: ForestConfig,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub min_history: MinHistory,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub control: ControlParams,
    #[serde(default)]
    pub avoidance: AvoidanceMode,
}

/// Minimum history length for a neighbor to be a potential target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MinHistory(pub usize);

impl Default for MinHistory {
    fn default() -> Self {
        MinHistory(3)
    }
}

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 3 UAVs, 1 informed.
    Case1A,
    /// 3 UAVs, 2 informed.
    Case1B,
    /// 6 UAVs, 2 informed.
    Case2A,
    /// 6 UAVs, 4 informed.
    Case2B,
    /// 4 UAVs, 1 informed, sparser forest, goal 40 m north.
    ForestReal,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Case1A,
        Preset::Case1B,
        Preset::Case2A,
        Preset::Case2B,
        Preset::ForestReal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Case1A => "1a",
            Preset::Case1B => "1b",
            Preset::Case2A => "2a",
            Preset::Case2B => "2b",
            Preset::ForestReal => "forest-real",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown preset `{s}`")))
    }
}

/// How the tree count of a case preset is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForestMatch {
    /// Tree count giving the stated density of 0.4 (51 trees in 50 x 50 m).
    #[default]
    Rho,
    /// The stated tree count of 104, which gives a density of about 0.82.
    NTrees,
}

impl FromStr for ForestMatch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(ForestMatch::Rho),
            "n-trees" => Ok(ForestMatch::NTrees),
            _ => Err(Error::Parse(format!(
                "unknown forest match `{s}` (expected rho or n-trees)"
            ))),
        }
    }
}

const CASE_AREA: Area = Area {
    origin: Vec2::new(-15.0, -25.0),
    width: 50.0,
    height: 50.0,
};
const TREE_RADIUS: f64 = 0.3;

fn ids(v: &[usize]) -> BTreeSet<UavId> {
    v.iter().map(|&i| UavId(i)).collect()
}

impl ScenarioConfig {
    /// Case presets use the default forest match.
    pub fn preset(p: Preset) -> Self {
        Self::preset_with(p, ForestMatch::default())
    }

    pub fn preset_with(p: Preset, m: ForestMatch) -> Self {
        let control = ControlParams::default();
        let case_trees = match m {
            ForestMatch::Rho => trees_for_density(0.4, control.r_o, CASE_AREA.size()),
            ForestMatch::NTrees => 104,
        };
        let (n, informed, spawn_r, goal_r): (usize, &[usize], f64, f64) = match p {
            Preset::Case1A => (3, &[0], 3.0, 6.0),
            Preset::Case1B => (3, &[0, 1], 3.0, 6.0),
            Preset::Case2A => (6, &[0, 1], 4.5, 8.5),
            Preset::Case2B => (6, &[0, 1, 2, 3], 4.5, 8.5),
            Preset::ForestReal => (4, &[0], 3.0, 6.0),
        };
        let (goal, area, n_trees) = if p == Preset::ForestReal {
            let area = Area::new(Vec2::new(-25.0, -5.0), 50.0, 50.0);
            (
                Vec2::new(0.0, 40.0),
                area,
                trees_for_density(0.25, control.r_o, area.size()),
            )
        } else {
            (Vec2::new(20.0, 0.0), CASE_AREA, case_trees)
        };
        ScenarioConfig {
            n_uavs: n,
            informed_ids: ids(informed),
            goal,
            spawn_center: Vec2::ZERO,
            spawn_radius: spawn_r,
            goal_radius: goal_r,
            uav_radius: 0.25,
            spawn_margin: 0.3,
            dt: 0.1,
            max_steps: 6000,
            master_seed: 0,
            forest: ForestConfig {
                seed: None,
                area,
                n_trees,
                tree_radius: TREE_RADIUS,
                min_spacing: None,
                spawn_clearance: 2.0,
                file: None,
            },
            perception: PerceptionConfig::default(),
            min_history: MinHistory::default(),
            planner: PlannerConfig::default(),
            control,
            avoidance: AvoidanceMode::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn selection_params(&self) -> SelectionParams {
        SelectionParams {
            r_f: self.control.r_f,
            min_history: self.min_history.0,
        }
    }

    pub fn is_informed(&self, id: UavId) -> bool {
        self.informed_ids.contains(&id)
    }

    /// Zones kept free of trees so that spawning and finishing are feasible.
    pub fn keep_clear(&self) -> Vec<KeepClearZone> {
        vec![
            KeepClearZone::new(self.spawn_center, self.spawn_radius + self.forest.spawn_clearance),
            KeepClearZone::new(self.goal, self.goal_radius),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_uavs == 0 {
            return bad("n_uavs must be at least 1".into());
        }
        if let Some(id) = self.informed_ids.iter().find(|id| id.index() >= self.n_uavs) {
            return bad(format!("informed id {id} is not below n_uavs = {}", self.n_uavs));
        }
        let positive = [
            ("spawn_radius", self.spawn_radius),
            ("goal_radius", self.goal_radius),
            ("uav_radius", self.uav_radius),
            ("dt", self.dt),
            ("forest.tree_radius", self.forest.tree_radius),
            ("forest.area.width", self.forest.area.width),
            ("forest.area.height", self.forest.area.height),
            ("perception.r_sense", self.perception.r_sense),
            ("planner.cell_size", self.planner.cell_size),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite"));
            }
        }
        let non_negative = [
            ("spawn_margin", self.spawn_margin),
            ("forest.spawn_clearance", self.forest.spawn_clearance),
            ("forest.min_spacing", self.forest.min_spacing()),
            ("perception.sigma_los", self.perception.sigma_los),
            ("perception.sigma_nlos", self.perception.sigma_nlos),
            ("perception.los_inflation", self.perception.los_inflation),
            ("planner.inflation", self.planner.inflation),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative and finite"));
            }
        }
        let r = self.perception.uav_body_radius;
        if !(r.is_finite() && r > 0.0) {
            return bad("perception.uav_body_radius must be positive".into());
        }
        for (name, v) in [
            ("goal", self.goal),
            ("spawn_center", self.spawn_center),
            ("forest.area.origin", self.forest.area.origin),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.perception.k_p == 0 {
            return bad("perception.k_p must be positive".into());
        }
        if self.min_history.0 < 3 {
            return bad("min_history must be at least 3".into());
        }
        self.control.validate()
    }
}
