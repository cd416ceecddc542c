//! Occupancy grid, 8-connected weighted graph and A* shortest paths.
//!
//! Axis moves cost 1 and diagonal moves cost sqrt(2), measured in cells. A path
//! cost is kept as a pair of integer move counts so that two optimal paths
//! always compare equal, whatever order the moves were summed in.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Area, Tree};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no free path between start and goal")]
    Unreachable,
}

/// Grid coordinates of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    /// Euclidean distance in cell units.
    pub fn distance(self, other: Cell) -> f64 {
        f64::from(self.x - other.x).hypot(f64::from(self.y - other.y))
    }
}

/// Cost of a grid path: `axis + diagonal * sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PathCost {
    pub axis: u32,
    pub diagonal: u32,
}

impl PathCost {
    pub fn value(self) -> f64 {
        f64::from(self.axis) + f64::from(self.diagonal) * SQRT_2
    }

    fn add_move(self, diagonal: bool) -> PathCost {
        if diagonal {
            PathCost {
                diagonal: self.diagonal + 1,
                ..self
            }
        } else {
            PathCost {
                axis: self.axis + 1,
                ..self
            }
        }
    }
}

/// Per-agent map of free and occupied cells.
///
/// Cells are only ever marked occupied; knowledge accretes over a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    origin: Vec2,
    cell_size: f64,
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(origin: Vec2, cell_size: f64, width: usize, height: usize) -> Self {
        assert!(cell_size > 0.0 && width > 0 && height > 0, "degenerate grid");
        OccupancyGrid {
            origin,
            cell_size,
            width,
            height,
            occupied: vec![false; width * height],
        }
    }

    /// Grid covering `area` at resolution `cell_size`.
    pub fn covering(area: &Area, cell_size: f64) -> Self {
        let w = (area.width / cell_size).ceil().max(1.0) as usize;
        let h = (area.height / cell_size).ceil().max(1.0) as usize;
        Self::new(area.origin, cell_size, w, h)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    fn cell_at(&self, idx: usize) -> Cell {
        Cell::new((idx % self.width) as i32, (idx / self.width) as i32)
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<Cell> {
        let c = self.raw_cell(p);
        self.in_bounds(c).then_some(c)
    }

    /// Cell containing `p`, clamped to the grid border.
    pub fn cell_clamped(&self, p: Vec2) -> Cell {
        let c = self.raw_cell(p);
        Cell::new(
            c.x.clamp(0, self.width as i32 - 1),
            c.y.clamp(0, self.height as i32 - 1),
        )
    }

    fn raw_cell(&self, p: Vec2) -> Cell {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        let clamp = |v: f64| v.clamp(i32::MIN as f64 / 2.0, i32::MAX as f64 / 2.0) as i32;
        Cell::new(clamp(fx), clamp(fy))
    }

    pub fn center(&self, c: Cell) -> Vec2 {
        self.origin
            + Vec2::new(
                (f64::from(c.x) + 0.5) * self.cell_size,
                (f64::from(c.y) + 0.5) * self.cell_size,
            )
    }

    /// Out-of-bounds cells count as occupied.
    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.occupied[self.index(c)]
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        !self.is_free(c)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn set_occupied(&mut self, c: Cell) {
        if self.in_bounds(c) {
            let i = self.index(c);
            self.occupied[i] = true;
        }
    }

    /// Marks every cell whose center lies within `radius` of `center`.
    pub fn mark_disk(&mut self, center: Vec2, radius: f64) {
        let lo = self.cell_clamped(center - Vec2::new(radius, radius));
        let hi = self.cell_clamped(center + Vec2::new(radius, radius));
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                let c = Cell::new(x, y);
                if self.center(c).distance(center) <= radius {
                    self.set_occupied(c);
                }
            }
        }
    }

    /// Portable-bitmap (`P1`) dump, top row first; `1` marks an occupied cell.
    pub fn to_pbm(&self) -> String {
        let mut out = format!("P1\n{} {}\n", self.width, self.height);
        for y in (0..self.height).rev() {
            let row: Vec<&str> = (0..self.width)
                .map(|x| if self.occupied[y * self.width + x] { "1" } else { "0" })
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

/// Marks the (inflated) footprint of every sensed tree as occupied.
pub fn update_grid<'a, I>(grid: &mut OccupancyGrid, trees: I, inflation: f64)
where
    I: IntoIterator<Item = &'a Tree>,
{
    for t in trees {
        grid.mark_disk(t.center, t.radius + inflation);
    }
}

/// Weight of the edge between two cells: 1 for axis neighbors, sqrt(2) for
/// diagonal ones, `None` when the cells are not adjacent or either is occupied.
pub fn edge_weight(grid: &OccupancyGrid, a: Cell, b: Cell) -> Option<f64> {
    edge_kind(a, b)
        .filter(|_| grid.is_free(a) && grid.is_free(b))
        .map(|diagonal| if diagonal { SQRT_2 } else { 1.0 })
}

/// `Some(true)` for diagonal neighbors, `Some(false)` for axis ones.
fn edge_kind(a: Cell, b: Cell) -> Option<bool> {
    let dx = (a.x - b.x).abs();
    let dy = (a.y - b.y).abs();
    match (dx, dy) {
        (1, 1) => Some(true),
        (1, 0) | (0, 1) => Some(false),
        _ => None,
    }
}

const NEIGHBORS: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// A planned route as cell centers from start to goal.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub waypoints: Vec<Vec2>,
    pub cost: PathCost,
}

impl GridPath {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenNode {
    f: f64,
    h: f64,
    idx: usize,
    cost: PathCost,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // BinaryHeap is a max-heap: reverse so the smallest f (then h, then index) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Nearest free cell to `target` by Euclidean distance, ties to the lowest
/// row-major index.
pub fn nearest_free_cell(grid: &OccupancyGrid, target: Cell) -> Option<Cell> {
    if grid.is_free(target) {
        return Some(target);
    }
    (0..grid.width * grid.height)
        .map(|i| grid.cell_at(i))
        .filter(|&c| grid.is_free(c))
        .min_by(|a, b| a.distance(target).total_cmp(&b.distance(target)))
}

/// Shortest path from `start` to `goal` under [`edge_weight`], with the
/// Euclidean cell distance to the goal as heuristic.
///
/// The start cell is treated as free even when it is marked occupied. An
/// occupied or out-of-bounds goal is replaced by the nearest free cell.
pub fn astar(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Result<GridPath, PlanError> {
    astar_traced(grid, start, goal, |_, _| {})
}

/// [`astar`] that reports every expanded cell together with its heuristic value.
pub fn astar_traced<F>(grid: &OccupancyGrid, start: Cell, goal: Cell, mut on_expand: F) -> Result<GridPath, PlanError>
where
    F: FnMut(Cell, f64),
{
    if !grid.in_bounds(start) {
        return Err(PlanError::Unreachable);
    }
    let goal = nearest_free_cell(grid, goal).ok_or(PlanError::Unreachable)?;
    let free = |c: Cell| c == start || grid.is_free(c);

    let n = grid.width * grid.height;
    let mut best: Vec<Option<PathCost>> = vec![None; n];
    let mut parent: Vec<usize> = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let s = grid.index(start);
    best[s] = Some(PathCost::default());
    let h0 = start.distance(goal);
    open.push(OpenNode {
        f: h0,
        h: h0,
        idx: s,
        cost: PathCost::default(),
    });

    while let Some(node) = open.pop() {
        if closed[node.idx] || best[node.idx] != Some(node.cost) {
            continue;
        }
        closed[node.idx] = true;
        let cell = grid.cell_at(node.idx);
        on_expand(cell, node.h);
        if cell == goal {
            return Ok(reconstruct(grid, &parent, node.idx, node.cost));
        }
        for (dx, dy) in NEIGHBORS {
            let next = Cell::new(cell.x + dx, cell.y + dy);
            if !grid.in_bounds(next) || !free(next) {
                continue;
            }
            let ni = grid.index(next);
            if closed[ni] {
                continue;
            }
            let cost = node.cost.add_move(dx != 0 && dy != 0);
            if best[ni].is_none_or(|b| cost.value() < b.value()) {
                best[ni] = Some(cost);
                parent[ni] = node.idx;
                let h = next.distance(goal);
                open.push(OpenNode {
                    f: cost.value() + h,
                    h,
                    idx: ni,
                    cost,
                });
            }
        }
    }
    Err(PlanError::Unreachable)
}

fn reconstruct(grid: &OccupancyGrid, parent: &[usize], mut idx: usize, cost: PathCost) -> GridPath {
    let mut cells = vec![grid.cell_at(idx)];
    while parent[idx] != usize::MAX {
        idx = parent[idx];
        cells.push(grid.cell_at(idx));
    }
    cells.reverse();
    let waypoints = cells.iter().map(|&c| grid.center(c)).collect();
    GridPath { cells, waypoints, cost }
}

/// Path from `from` toward `to` in world coordinates that always succeeds.
///
/// Both points are clamped onto the grid. When the goal region is cut off from
/// the start, the path leads to the reachable cell closest to `to`.
pub fn plan(grid: &OccupancyGrid, from: Vec2, to: Vec2) -> GridPath {
    let start = grid.cell_clamped(from);
    let goal = grid.cell_clamped(to);
    match astar(grid, start, goal) {
        Ok(path) => path,
        Err(PlanError::Unreachable) => {
            let fallback = closest_reachable(grid, start, to);
            astar(grid, start, fallback).expect("reachable cell must have a path")
        }
    }
}

fn closest_reachable(grid: &OccupancyGrid, start: Cell, to: Vec2) -> Cell {
    let mut seen = vec![false; grid.width * grid.height];
    let mut queue = VecDeque::from([start]);
    seen[grid.index(start)] = true;
    let mut best = (grid.center(start).distance(to), grid.index(start));
    while let Some(c) = queue.pop_front() {
        for (dx, dy) in NEIGHBORS {
            let next = Cell::new(c.x + dx, c.y + dy);
            if grid.is_free(next) && !seen[grid.index(next)] {
                let i = grid.index(next);
                seen[i] = true;
                let d = grid.center(next).distance(to);
                if d < best.0 || (d == best.0 && i < best.1) {
                    best = (d, i);
                }
                queue.push_back(next);
            }
        }
    }
    grid.cell_at(best.1)
}

/// Next navigation waypoint: one step past the waypoint nearest to `p`, or the
/// final waypoint when that is the nearest. Ties go to the lower index.
pub fn next_waypoint(path: &GridPath, p: Vec2) -> Vec2 {
    assert!(!path.waypoints.is_empty(), "empty path");
    let mut nearest = 0;
    let mut best = f64::INFINITY;
    for (m, w) in path.waypoints.iter().enumerate() {
        let d = w.distance(p);
        if d < best {
            best = d;
            nearest = m;
        }
    }
    let next = (nearest + 1).min(path.waypoints.len() - 1);
    path.waypoints[next]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empty(w: usize, h: usize) -> OccupancyGrid {
        OccupancyGrid::new(Vec2::ZERO, 1.0, w, h)
    }

    /// Plain Dijkstra with a linear-scan frontier, written independently.
    /// Returns the float distance and the axis/diagonal move counts of the
    /// optimal path; the counts identify the optimal cost exactly.
    fn dijkstra_counts(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<(f64, (u32, u32))> {
        let (w, h) = (grid.width() as i32, grid.height() as i32);
        let n = (w * h) as usize;
        let mut dist = vec![f64::INFINITY; n];
        let mut moves = vec![(0u32, 0u32); n];
        let mut done = vec![false; n];
        let id = |c: Cell| (c.y * w + c.x) as usize;
        dist[id(start)] = 0.0;
        loop {
            let mut u = None;
            for i in 0..n {
                if !done[i] && dist[i].is_finite() && u.is_none_or(|j: usize| dist[i] < dist[j]) {
                    u = Some(i);
                }
            }
            let u = u?;
            done[u] = true;
            let cu = Cell::new(u as i32 % w, u as i32 / w);
            if cu == goal {
                return Some((dist[u], moves[u]));
            }
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let v = Cell::new(cu.x + dx, cu.y + dy);
                    if (dx, dy) == (0, 0) || v.x < 0 || v.y < 0 || v.x >= w || v.y >= h {
                        continue;
                    }
                    if let Some(wt) = edge_weight(grid, cu, v) {
                        if dist[u] + wt < dist[id(v)] {
                            dist[id(v)] = dist[u] + wt;
                            let (a, d) = moves[u];
                            moves[id(v)] = if dx != 0 && dy != 0 { (a, d + 1) } else { (a + 1, d) };
                        }
                    }
                }
            }
        }
    }

    fn dijkstra(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<f64> {
        dijkstra_counts(grid, start, goal).map(|(d, _)| d)
    }

    fn random_grid(rng: &mut ChaCha8Rng, size: usize, p: f64) -> OccupancyGrid {
        let mut g = empty(size, size);
        for y in 0..size as i32 {
            for x in 0..size as i32 {
                if rng.random::<f64>() < p {
                    g.set_occupied(Cell::new(x, y));
                }
            }
        }
        g
    }

    fn check_path(grid: &OccupancyGrid, path: &GridPath) {
        for w in path.cells.windows(2) {
            assert!(edge_kind(w[0], w[1]).is_some(), "not adjacent: {:?}", w);
        }
        for &c in &path.cells[1..] {
            assert!(grid.is_free(c));
        }
        let axis = path
            .cells
            .windows(2)
            .filter(|w| edge_kind(w[0], w[1]) == Some(false))
            .count();
        assert_eq!(path.cost.axis as usize, axis);
        assert_eq!(path.cost.diagonal as usize, path.len() - 1 - axis);
    }

    #[test]
    fn grid_update_marks_disk_cells() {
        let mut g = OccupancyGrid::new(Vec2::ZERO, 0.5, 20, 20);
        update_grid(&mut g, std::iter::empty(), 0.25);
        assert_eq!(g.occupied_count(), 0);

        let tree = Tree {
            center: Vec2::new(5.1, 4.9),
            radius: 0.8,
        };
        update_grid(&mut g, [&tree], 0.0);
        for y in 0..20 {
            for x in 0..20 {
                let c = Cell::new(x, y);
                let inside = g.center(c).distance(tree.center) <= 0.8;
                assert_eq!(g.is_occupied(c), inside, "{c:?}");
            }
        }
        let before = g.clone();
        update_grid(&mut g, [&tree], 0.0);
        assert_eq!(g, before);
    }

    #[test]
    fn edge_weights() {
        let mut g = empty(3, 3);
        assert_eq!(edge_weight(&g, Cell::new(0, 0), Cell::new(1, 0)), Some(1.0));
        assert_eq!(edge_weight(&g, Cell::new(0, 0), Cell::new(1, 1)), Some(SQRT_2));
        assert_eq!(edge_weight(&g, Cell::new(0, 0), Cell::new(2, 0)), None);
        g.set_occupied(Cell::new(1, 0));
        assert_eq!(edge_weight(&g, Cell::new(0, 0), Cell::new(1, 0)), None);
    }

    #[test]
    fn trivial_and_diagonal_paths() {
        let g = empty(3, 3);
        let p = astar(&g, Cell::new(1, 1), Cell::new(1, 1)).unwrap();
        assert_eq!(p.cells, vec![Cell::new(1, 1)]);
        assert_eq!(p.cost.value(), 0.0);

        let p = astar(&g, Cell::new(0, 0), Cell::new(2, 2)).unwrap();
        assert_eq!(p.cost, PathCost { axis: 0, diagonal: 2 });
        assert_eq!(dijkstra_counts(&g, Cell::new(0, 0), Cell::new(2, 2)).unwrap().1, (0, 2));
        assert!((p.cost.value() - 2.0 * SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        let mut g = empty(5, 5);
        for y in 0..5 {
            g.set_occupied(Cell::new(2, y));
        }
        assert_eq!(astar(&g, Cell::new(0, 0), Cell::new(4, 4)), Err(PlanError::Unreachable));
        // the fallback plan ends at the reachable cell nearest to the goal
        let p = plan(&g, Vec2::new(0.5, 0.5), Vec2::new(4.5, 4.5));
        assert_eq!(*p.cells.last().unwrap(), Cell::new(1, 4));
    }

    #[test]
    fn occupied_goal_retargets_to_nearest_free_cell() {
        let mut g = empty(5, 5);
        g.set_occupied(Cell::new(4, 4));
        let p = astar(&g, Cell::new(0, 0), Cell::new(4, 4)).unwrap();
        // (4, 3) and (3, 4) are equally near; (4, 3) comes first in row-major order
        assert_eq!(*p.cells.last().unwrap(), Cell::new(4, 3));
    }

    #[test]
    fn occupied_start_is_left() {
        let mut g = empty(4, 1);
        g.set_occupied(Cell::new(0, 0));
        let p = astar(&g, Cell::new(0, 0), Cell::new(3, 0)).unwrap();
        assert_eq!(p.cost, PathCost { axis: 3, diagonal: 0 });
    }

    #[test]
    fn astar_matches_dijkstra_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut solved = 0;
        for _ in 0..300 {
            let g = random_grid(&mut rng, 20, 0.25);
            let start = Cell::new(rng.random_range(0..20), rng.random_range(0..20));
            let goal = Cell::new(rng.random_range(0..20), rng.random_range(0..20));
            if g.is_occupied(start) || g.is_occupied(goal) {
                continue;
            }
            match (astar(&g, start, goal), dijkstra_counts(&g, start, goal)) {
                (Ok(p), Some((d, (axis, diagonal)))) => {
                    assert_eq!(p.cost, PathCost { axis, diagonal });
                    assert!((p.cost.value() - d).abs() < 1e-9);
                    check_path(&g, &p);
                    assert_eq!(p.cells[0], start);
                    assert_eq!(*p.cells.last().unwrap(), goal);
                    solved += 1;
                }
                (Err(PlanError::Unreachable), None) => {}
                (a, d) => panic!("disagreement: {a:?} vs {d:?}"),
            }
        }
        assert!(solved > 100);
    }

    #[test]
    fn heuristic_is_admissible_on_expanded_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let g = random_grid(&mut rng, 15, 0.2);
            let start = Cell::new(0, 0);
            let goal = Cell::new(14, 14);
            if g.is_occupied(start) || g.is_occupied(goal) {
                continue;
            }
            let mut expanded = Vec::new();
            let _ = astar_traced(&g, start, goal, |c, h| expanded.push((c, h)));
            for (c, h) in expanded {
                if let Some(remaining) = dijkstra(&g, c, goal) {
                    assert!(h <= remaining + 1e-12, "h({c:?}) = {h} > {remaining}");
                }
            }
        }
    }

    #[test]
    fn astar_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_grid(&mut rng, 20, 0.15);
        let a = astar(&g, Cell::new(1, 1), Cell::new(18, 17));
        let b = astar(&g, Cell::new(1, 1), Cell::new(18, 17));
        assert_eq!(a, b);
    }

    #[test]
    fn next_waypoint_rules() {
        let g = empty(5, 1);
        let p = astar(&g, Cell::new(0, 0), Cell::new(4, 0)).unwrap();
        assert_eq!(next_waypoint(&p, p.waypoints[1]), p.waypoints[2]);
        assert_eq!(next_waypoint(&p, p.waypoints[4]), p.waypoints[4]);
        let mid = (p.waypoints[2] + p.waypoints[3]) * 0.5;
        assert_eq!(next_waypoint(&p, mid), p.waypoints[3]);
    }

    #[test]
    fn pbm_dump() {
        let mut g = empty(3, 2);
        g.set_occupied(Cell::new(0, 1));
        assert_eq!(g.to_pbm(), "P1\n3 2\n1 0 0\n0 0 0\n");
    }

    #[test]
    fn world_cell_mapping() {
        let area = Area::new(Vec2::new(-15.0, -25.0), 50.0, 50.0);
        let g = OccupancyGrid::covering(&area, 0.5);
        assert_eq!((g.width(), g.height()), (100, 100));
        let c = g.cell_of(Vec2::ZERO).unwrap();
        assert_eq!(c, Cell::new(30, 50));
        assert_eq!(g.center(c), Vec2::new(0.25, 0.25));
        assert_eq!(g.cell_of(Vec2::new(40.0, 0.0)), None);
        assert_eq!(g.cell_clamped(Vec2::new(40.0, 0.0)), Cell::new(99, 50));
    }
}
