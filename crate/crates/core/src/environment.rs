//! Procedurally generated forests, line-of-sight tests and obstacle sensing.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{segment_point_distance, Vec2};

/// Rejection-sampling budget for [`generate_forest`].
pub const PLACEMENT_ATTEMPTS: usize = 1_000_000;

/// A tree trunk, modelled as a disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    pub center: Vec2,
    pub radius: f64,
}

/// Axis-aligned rectangle with its lower-left corner at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub origin: Vec2,
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn new(origin: Vec2, width: f64, height: f64) -> Self {
        Area { origin, width, height }
    }

    pub fn size(&self) -> f64 {
        self.width * self.height
    }

    pub fn max(&self) -> Vec2 {
        self.origin + Vec2::new(self.width, self.height)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let max = self.max();
        p.x >= self.origin.x && p.x <= max.x && p.y >= self.origin.y && p.y <= max.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }
}

/// Disk in which no tree may be placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeepClearZone {
    pub center: Vec2,
    pub radius: f64,
}

impl KeepClearZone {
    pub fn new(center: Vec2, radius: f64) -> Self {
        KeepClearZone { center, radius }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.distance(self.center) < self.radius
    }
}

/// An immutable forest: tree list, bounding area and the seed it was drawn with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forest {
    pub seed: u64,
    pub area: Area,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn empty(area: Area) -> Self {
        Forest {
            seed: 0,
            area,
            trees: Vec::new(),
        }
    }

    pub fn from_trees(area: Area, trees: Vec<Tree>) -> Self {
        Forest { seed: 0, area, trees }
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Distance from `p` to the nearest tree center, `INFINITY` for an empty forest.
    pub fn nearest_tree_distance(&self, p: Vec2) -> f64 {
        self.trees
            .iter()
            .map(|t| t.center.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `p` to the nearest tree surface (negative inside a trunk).
    pub fn clearance(&self, p: Vec2) -> f64 {
        self.trees
            .iter()
            .map(|t| t.center.distance(p) - t.radius)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let forest: Forest = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        forest.validate()?;
        Ok(forest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_toml_string()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<()> {
        if !(self.area.width > 0.0 && self.area.height > 0.0) || !self.area.origin.is_finite() {
            return Err(Error::InvalidConfig("forest area must be positive and finite".into()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            if !t.center.is_finite() || !t.radius.is_finite() || t.radius <= 0.0 || !self.area.contains(t.center) {
                return Err(Error::InvalidConfig(format!(
                    "tree {i} is malformed or outside the area"
                )));
            }
        }
        Ok(())
    }
}

/// Parameters for [`generate_forest`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForestSpec {
    pub seed: u64,
    pub area: Area,
    pub n_trees: usize,
    pub tree_radius: f64,
    pub min_spacing: f64,
    pub keep_clear: Vec<KeepClearZone>,
}

/// Default center-to-center spacing: one UAV diameter plus margin between trunks.
pub fn default_min_spacing(tree_radius: f64) -> f64 {
    2.0 * tree_radius + 1.2
}

/// Places `n_trees` uniformly at random by rejection sampling.
///
/// Centers avoid every keep-clear zone and respect `min_spacing` pairwise. The
/// output is a pure function of `spec`.
pub fn generate_forest(spec: &ForestSpec) -> Result<Forest> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trees: Vec<Tree> = Vec::with_capacity(spec.n_trees);
    let mut attempts = 0usize;
    let min_sq = spec.min_spacing * spec.min_spacing;
    while trees.len() < spec.n_trees {
        if attempts >= PLACEMENT_ATTEMPTS {
            return Err(Error::PlacementFailure {
                placed: trees.len(),
                requested: spec.n_trees,
            });
        }
        attempts += 1;
        let c = Vec2::new(
            spec.area.origin.x + rng.random::<f64>() * spec.area.width,
            spec.area.origin.y + rng.random::<f64>() * spec.area.height,
        );
        if spec.keep_clear.iter().any(|z| z.contains(c)) {
            continue;
        }
        if trees.iter().any(|t| (t.center - c).norm_squared() < min_sq) {
            continue;
        }
        trees.push(Tree {
            center: c,
            radius: spec.tree_radius,
        });
    }
    Ok(Forest {
        seed: spec.seed,
        area: spec.area,
        trees,
    })
}

/// Clutter measure `n_trees * pi * r^2 / area`.
pub fn density(n_trees: usize, radius: f64, area: f64) -> f64 {
    n_trees as f64 * PI * radius * radius / area
}

/// Inverse of [`density`], rounded to the nearest tree count.
pub fn trees_for_density(rho: f64, radius: f64, area: f64) -> usize {
    (rho * area / (PI * radius * radius)).round() as usize
}

/// True when the closed segment `a`-`b` misses every tree disk.
pub fn line_of_sight(forest: &Forest, a: Vec2, b: Vec2) -> bool {
    LineOfSight::default().check(forest, a, b, &[])
}

/// Line-of-sight model: tree inflation and optional occlusion by UAV bodies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineOfSight {
    /// Added to every tree radius (m).
    pub inflation: f64,
    /// When set, other UAVs occlude as disks of this radius (m).
    pub uav_body_radius: Option<f64>,
}

impl LineOfSight {
    /// `bodies` are the positions of UAVs other than the two endpoints.
    pub fn check(&self, forest: &Forest, a: Vec2, b: Vec2, bodies: &[Vec2]) -> bool {
        let trees_clear = forest
            .trees
            .iter()
            .all(|t| segment_point_distance(a, b, t.center) > t.radius + self.inflation);
        if !trees_clear {
            return false;
        }
        match self.uav_body_radius {
            Some(r) => bodies.iter().all(|&c| segment_point_distance(a, b, c) > r),
            None => true,
        }
    }
}

/// Indices of trees whose center lies within `r_sense` of `p`, ascending.
pub fn sense_obstacles(forest: &Forest, p: Vec2, r_sense: f64) -> Vec<usize> {
    forest
        .trees
        .iter()
        .enumerate()
        .filter(|(_, t)| t.center.distance(p) <= r_sense)
        .map(|(i, _)| i)
        .collect()
}

/// Obstacles posing an immediate collision threat: tree centers, then UAV
/// estimates, closer than `r_o` to `p`.
pub fn nearby_obstacles(forest: &Forest, uav_estimates: &[Vec2], p: Vec2, r_o: f64) -> Vec<Vec2> {
    forest
        .trees
        .iter()
        .map(|t| t.center)
        .chain(uav_estimates.iter().copied())
        .filter(|c| c.distance(p) < r_o)
        .collect()
}
