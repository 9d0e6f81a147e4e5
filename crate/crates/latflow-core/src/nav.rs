//! Grid-world navigation: scripted scenarios, costmaps sourced from
//! observed, privileged, or predicted height maps, a receding-horizon
//! primitive planner, and the SR / CR / SPL episode metrics.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float; // float intrinsics without std

use crate::predict::{LatentPredictor, PredictError};
use crate::rng;
use crate::vae::{VaeError, VaeModel};
use crate::world::{
    crop_heightmap, denormalize_height, wrap_angle, BodyCommand, CropKind, RobotPose, TerrainGrid,
    WorldError, CELL_M, EXTENDED_COLS, EXTENDED_ROWS, GRID_CELLS, LOCAL_COLS, LOCAL_ROWS,
    NESTED_COL_OFFSET, NESTED_ROW_OFFSET, TERRAIN_SIZE_M,
};

pub const FOOTPRINT_RADIUS_M: f64 = 0.35;
pub const MAX_SPEED_M_S: f64 = 1.0;
pub const CONTROL_PERIOD_S: f64 = 0.1;
pub const EPISODE_STEP_CAP: usize = 200;
pub const SUCCESS_RADIUS_M: f64 = 0.4;
/// Cells taller (or deeper) than this are treated as obstacles.
pub const OBSTACLE_HEIGHT_M: f64 = 0.15;
pub const ROLLOUT_HORIZON_S: f64 = 1.5;
const PRIMITIVE_HEADINGS: usize = 16;
const PRIMITIVE_SPEEDS: [f64; 3] = [0.25, 0.5, MAX_SPEED_M_S];
const COLLISION_PENALTY: f64 = 50.0;
const CLEARANCE_WEIGHT: f64 = 2.0;
const CLEARANCE_TARGET_M: f64 = 0.5;
const MAX_YAW_RATE_RAD_S: f64 = core::f64::consts::PI;
const WALL_HEIGHT_M: f64 = 0.8;
/// Cost multiplier for stepping through an occupied cell when
/// computing the guidance potential; keeps the field finite so a
/// robot pressed against a wall still sees a gradient out.
const SOFT_BLOCK_FACTOR: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NavError {
    #[error("no collision-free {name} path found for seed {seed}")]
    ScenarioUnreachable { name: &'static str, seed: u64 },
    #[error("predicted map source requires VAE and predictor checkpoints")]
    MissingModels,
    #[error("prediction models disagree on crop kind or latent dimension")]
    ModelMismatch,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    MazeEasy,
    MazeHard,
    Hallway,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::MazeEasy => "maze_easy",
            ScenarioKind::MazeHard => "maze_hard",
            ScenarioKind::Hallway => "hallway",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "maze_easy" => Some(ScenarioKind::MazeEasy),
            "maze_hard" => Some(ScenarioKind::MazeHard),
            "hallway" => Some(ScenarioKind::Hallway),
            _ => None,
        }
    }

    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::MazeEasy,
        ScenarioKind::MazeHard,
        ScenarioKind::Hallway,
    ];

    fn id(self) -> u64 {
        match self {
            ScenarioKind::MazeEasy => 0,
            ScenarioKind::MazeHard => 1,
            ScenarioKind::Hallway => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSource {
    ObservedOnly,
    GroundTruthExtended,
    Predicted,
}

impl MapSource {
    pub fn name(self) -> &'static str {
        match self {
            MapSource::ObservedOnly => "observed_only",
            MapSource::GroundTruthExtended => "ground_truth_extended",
            MapSource::Predicted => "predicted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "observed_only" => Some(MapSource::ObservedOnly),
            "ground_truth_extended" => Some(MapSource::GroundTruthExtended),
            "predicted" => Some(MapSource::Predicted),
            _ => None,
        }
    }
}

/// A navigation task: fixed wall blueprint plus seed-jittered start
/// and goal, verified traversable at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub terrain: TerrainGrid,
    pub start: RobotPose,
    pub goal: (f64, f64),
    /// Shortest collision-free path length start -> goal, in meters.
    pub optimal_length_m: f64,
}

fn wall(t: &mut TerrainGrid, cx: f64, cy: f64, half_w: f64, half_h: f64) {
    t.fill_rect(cx, cy, half_w, half_h, |_| WALL_HEIGHT_M);
}

fn carve(t: &mut TerrainGrid, cx: f64, cy: f64, half_w: f64, half_h: f64) {
    t.fill_rect(cx, cy, half_w, half_h, |_| 0.0);
}

/// Fixed geometry per scenario: terrain, start pose, goal, and the
/// per-axis jitter half-ranges for (start, goal).
fn blueprint(kind: ScenarioKind) -> (TerrainGrid, RobotPose, (f64, f64), [(f64, f64); 2]) {
    let mut t = TerrainGrid::flat();
    match kind {
        ScenarioKind::MazeEasy => {
            // Two staggered walls forcing a double-corner detour.
            wall(&mut t, 2.7, 2.5, 0.1, 2.5);
            wall(&mut t, 4.9, 5.0, 0.1, 2.0);
            (
                t,
                RobotPose::new(1.0, 2.0, 0.0),
                (7.0, 6.0),
                [(0.3, 0.3), (0.3, 0.3)],
            )
        }
        ScenarioKind::MazeHard => {
            // U-shaped trap opening toward the start; the goal sits
            // behind its back wall, slightly off-axis so the detour
            // around one arm is clearly shorter. The trap is deeper
            // than the local sensing range, so a short-horizon
            // planner drives in.
            wall(&mut t, 4.3, 3.4, 0.9, 0.1);
            wall(&mut t, 4.3, 4.6, 0.9, 0.1);
            wall(&mut t, 5.1, 4.0, 0.1, 1.0);
            (
                t,
                RobotPose::new(1.2, 4.0, 0.0),
                (6.8, 4.6),
                [(0.3, 0.3), (0.3, 0.3)],
            )
        }
        ScenarioKind::Hallway => {
            // Solid block with 1.0 m corridors carved out: a long
            // hall, a dead-end stub, and the goal branch. The stub cap
            // is outside local sensing but inside extended sensing.
            wall(&mut t, 4.0, 4.0, 4.0, 4.0);
            carve(&mut t, 4.0, 1.4, 3.4, 0.5);
            carve(&mut t, 2.7, 2.05, 0.5, 1.15);
            carve(&mut t, 5.1, 3.4, 0.5, 2.5);
            (
                t,
                RobotPose::new(1.2, 1.4, 0.0),
                (5.1, 5.4),
                [(0.3, 0.0), (0.0, 0.3)],
            )
        }
    }
}

/// Builds a scenario with seed-jittered start and goal, retrying the
/// jitter until a collision-free path exists (it always does for the
/// shipped blueprints; the retry guards the jitter edge cases).
pub fn build_scenario(kind: ScenarioKind, seed: u64) -> Result<Scenario, NavError> {
    let (terrain, base_start, base_goal, jitter) = blueprint(kind);
    let truth = OccupancyGrid::from_terrain(&terrain);
    for attempt in 0..16u64 {
        let mut r = rng::stream(seed, rng::streams::SCENARIO, (kind.id() << 8) | attempt);
        let jx = |r: &mut _, half: f64| {
            if half > 0.0 {
                rng::next_range(r, -half, half)
            } else {
                0.0
            }
        };
        let sx = base_start.x + jx(&mut r, jitter[0].0);
        let sy = base_start.y + jx(&mut r, jitter[0].1);
        let gx = base_goal.0 + jx(&mut r, jitter[1].0);
        let gy = base_goal.1 + jx(&mut r, jitter[1].1);
        let (Some(sc), Some(gc)) = (cell_of(sx, sy), cell_of(gx, gy)) else {
            continue;
        };
        if truth.blocked[idx(sc)] || truth.blocked[idx(gc)] {
            continue;
        }
        let dist = dijkstra(&truth.blocked, idx(gc), None);
        let l = dist[idx(sc)];
        if l.is_finite() {
            return Ok(Scenario {
                kind,
                terrain,
                start: RobotPose::new(sx, sy, base_start.yaw),
                goal: (gx, gy),
                optimal_length_m: l,
            });
        }
    }
    Err(NavError::ScenarioUnreachable {
        name: kind.name(),
        seed,
    })
}

/// Robot-frame obstacle grid with the extended-crop shape; row i,
/// column j sit at the same body-frame offsets as the extended
/// height-map crop.
#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub occupied: Vec<bool>,
}

impl Costmap {
    fn free() -> Self {
        Costmap {
            occupied: alloc::vec![false; EXTENDED_ROWS * EXTENDED_COLS],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.occupied[row * EXTENDED_COLS + col]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }
}

fn cell_is_obstacle(normalized: f64) -> bool {
    denormalize_height(normalized).abs() > OBSTACLE_HEIGHT_M
}

/// Frozen models needed by the predicted map source.
pub struct PredictionModels<'a> {
    pub local_vae: &'a VaeModel,
    pub extended_vae: &'a VaeModel,
    pub predictor: &'a dyn LatentPredictor,
}

/// Per-step context for the predicted source: the goal and the two
/// most recently executed commands feed the condition vector, and the
/// sample key fixes any sampling the predictor performs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictionInputs {
    pub goal: (f64, f64),
    pub last_cmd: BodyCommand,
    pub before_cmd: BodyCommand,
    pub sample_key: u64,
}

/// Builds the planner's obstacle grid from the requested source.
///
/// observed_only: the local crop is embedded at its nested offsets and
/// everything outside it is optimistically free. ground_truth_extended:
/// the privileged extended crop. predicted: the local crop is encoded,
/// the predictor transports the latent, the extended decoder produces
/// the surroundings, and the directly sensed central window then
/// overrides the prediction (the robot never distrusts its own sensor).
pub fn build_costmap(
    source: MapSource,
    pose: &RobotPose,
    terrain: &TerrainGrid,
    models: Option<&PredictionModels<'_>>,
    inputs: &PredictionInputs,
) -> Result<Costmap, NavError> {
    let mut map = Costmap::free();
    match source {
        MapSource::ObservedOnly => {
            let local = crop_heightmap(terrain, pose, CropKind::Local)?;
            for i in 0..LOCAL_ROWS {
                for j in 0..LOCAL_COLS {
                    map.occupied[(i + NESTED_ROW_OFFSET) * EXTENDED_COLS + j + NESTED_COL_OFFSET] =
                        cell_is_obstacle(local.cells[i * LOCAL_COLS + j]);
                }
            }
        }
        MapSource::GroundTruthExtended => {
            let ext = crop_heightmap(terrain, pose, CropKind::Extended)?;
            for (o, &c) in map.occupied.iter_mut().zip(&ext.cells) {
                *o = cell_is_obstacle(c);
            }
        }
        MapSource::Predicted => {
            let m = models.ok_or(NavError::MissingModels)?;
            if m.local_vae.kind != CropKind::Local
                || m.extended_vae.kind != CropKind::Extended
                || m.local_vae.latent_dim != m.predictor.latent_dim()
                || m.extended_vae.latent_dim != m.predictor.latent_dim()
            {
                return Err(NavError::ModelMismatch);
            }
            let local = crop_heightmap(terrain, pose, CropKind::Local)?;
            let (z_mean, _) = m.local_vae.encode(&local)?;
            let cond = crate::world::make_condition(
                pose,
                inputs.goal,
                &inputs.last_cmd,
                &inputs.before_cmd,
            );
            let z_hat = m.predictor.predict(&z_mean, &cond, inputs.sample_key)?;
            let decoded = m.extended_vae.decode(&z_hat)?;
            for (o, &c) in map.occupied.iter_mut().zip(&decoded.cells) {
                *o = cell_is_obstacle(c);
            }
            for i in 0..LOCAL_ROWS {
                for j in 0..LOCAL_COLS {
                    map.occupied[(i + NESTED_ROW_OFFSET) * EXTENDED_COLS + j + NESTED_COL_OFFSET] =
                        cell_is_obstacle(local.cells[i * LOCAL_COLS + j]);
                }
            }
        }
    }
    Ok(map)
}

#[inline]
fn cell_of(x: f64, y: f64) -> Option<(usize, usize)> {
    if !(0.0..TERRAIN_SIZE_M).contains(&x) || !(0.0..TERRAIN_SIZE_M).contains(&y) {
        return None;
    }
    let col = ((x / CELL_M) as usize).min(GRID_CELLS - 1);
    let row = ((y / CELL_M) as usize).min(GRID_CELLS - 1);
    Some((row, col))
}

#[inline]
fn idx((row, col): (usize, usize)) -> usize {
    row * GRID_CELLS + col
}

/// World-frame occupancy with its inflation and clearance fields.
pub(crate) struct OccupancyGrid {
    occupied: Vec<bool>,
    /// Distance (m) from each cell center to the nearest occupied one.
    clearance_m: Vec<f64>,
    /// Cells a 0.35 m-radius robot center may not enter.
    blocked: Vec<bool>,
}

impl OccupancyGrid {
    fn new(occupied: &[bool]) -> Self {
        let clearance_m = distance_map(occupied);
        let blocked = clearance_m.iter().map(|&d| d <= FOOTPRINT_RADIUS_M).collect();
        OccupancyGrid {
            occupied: occupied.to_vec(),
            clearance_m,
            blocked,
        }
    }

    pub(crate) fn from_terrain(terrain: &TerrainGrid) -> Self {
        let occupied: Vec<bool> = terrain
            .heights
            .iter()
            .map(|&h| h.abs() > OBSTACLE_HEIGHT_M)
            .collect();
        OccupancyGrid::new(&occupied)
    }

    /// Embeds a robot-frame costmap into the world grid; world cells
    /// outside the costmap window stay free (unknown space is assumed
    /// traversable).
    fn from_costmap(map: &Costmap, pose: &RobotPose) -> Self {
        let (sin, cos) = pose.yaw.sin_cos();
        let rc = (EXTENDED_ROWS as f64 - 1.0) / 2.0;
        let cc = (EXTENDED_COLS as f64 - 1.0) / 2.0;
        let mut occupied = alloc::vec![false; GRID_CELLS * GRID_CELLS];
        for row in 0..GRID_CELLS {
            let yc = (row as f64 + 0.5) * CELL_M;
            for col in 0..GRID_CELLS {
                let xc = (col as f64 + 0.5) * CELL_M;
                let dx = xc - pose.x;
                let dy = yc - pose.y;
                let fwd = cos * dx + sin * dy;
                let left = -sin * dx + cos * dy;
                let i = fwd / CELL_M + rc;
                let j = left / CELL_M + cc;
                let (ri, rj) = (i.round(), j.round());
                if ri >= 0.0
                    && rj >= 0.0
                    && (ri as usize) < EXTENDED_ROWS
                    && (rj as usize) < EXTENDED_COLS
                    && map.at(ri as usize, rj as usize)
                {
                    occupied[row * GRID_CELLS + col] = true;
                }
            }
        }
        OccupancyGrid::new(&occupied)
    }

    #[inline]
    fn blocked_at(&self, x: f64, y: f64) -> bool {
        match cell_of(x, y) {
            Some(c) => self.blocked[idx(c)],
            None => true,
        }
    }

    /// Exact contact test: does a 0.35 m disc at (x, y) overlap any
    /// occupied cell square? Wider than `blocked_at` by up to half a
    /// cell diagonal, so grazing contact along an obstacle face
    /// registers even where the center-distance grid reads free.
    fn footprint_overlaps(&self, x: f64, y: f64) -> bool {
        let Some((row, col)) = cell_of(x, y) else {
            return false;
        };
        let reach = (FOOTPRINT_RADIUS_M / CELL_M).ceil() as i64 + 1;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                if nr < 0 || nc < 0 || nr >= GRID_CELLS as i64 || nc >= GRID_CELLS as i64 {
                    continue;
                }
                let cell = nr as usize * GRID_CELLS + nc as usize;
                if !self.occupied[cell] {
                    continue;
                }
                let (x0, y0) = (nc as f64 * CELL_M, nr as f64 * CELL_M);
                let px = x.clamp(x0, x0 + CELL_M);
                let py = y.clamp(y0, y0 + CELL_M);
                let (dx, dy) = (x - px, y - py);
                if dx * dx + dy * dy <= FOOTPRINT_RADIUS_M * FOOTPRINT_RADIUS_M {
                    return true;
                }
            }
        }
        false
    }

    /// Unblocks exactly the cells whose squares the robot body disc
    /// currently overlaps. Space the body already occupies is
    /// traversable by definition; without this, resampling noise near
    /// a wall can mark the robot's own cell blocked and freeze the
    /// planner in place. The overlap test keeps the release tight: a
    /// wider ring would punch through thin inflation bands and let
    /// rollouts cross walls the physics still blocks. Occupancy and
    /// clearance stay untouched, so the contact count and the
    /// clearance penalty remain honest.
    fn release_footprint(&mut self, x: f64, y: f64) {
        let Some((row, col)) = cell_of(x, y) else {
            return;
        };
        let reach = (FOOTPRINT_RADIUS_M / CELL_M).ceil() as i64 + 1;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                if nr < 0 || nc < 0 || nr >= GRID_CELLS as i64 || nc >= GRID_CELLS as i64 {
                    continue;
                }
                let (x0, y0) = (nc as f64 * CELL_M, nr as f64 * CELL_M);
                let px = x.clamp(x0, x0 + CELL_M);
                let py = y.clamp(y0, y0 + CELL_M);
                let (dx, dy) = (x - px, y - py);
                if dx * dx + dy * dy <= FOOTPRINT_RADIUS_M * FOOTPRINT_RADIUS_M {
                    self.blocked[nr as usize * GRID_CELLS + nc as usize] = false;
                }
            }
        }
    }
}

const FAR: f64 = 1e12;

/// One-dimensional squared distance transform (lower envelope of
/// parabolas), in cell units.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -FAR;
    z[1] = FAR;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * q - 2 * p) as f64;
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = FAR;
                break;
            }
        }
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *dq = diff * diff + f[v[k]];
    }
}

/// Euclidean distance (m) from every cell center to the nearest
/// occupied cell center; FAR-scale values where nothing is occupied.
fn distance_map(occupied: &[bool]) -> Vec<f64> {
    let n = GRID_CELLS;
    let mut sq = alloc::vec![0.0; n * n];
    for (s, &o) in sq.iter_mut().zip(occupied) {
        *s = if o { 0.0 } else { FAR };
    }
    let mut f = alloc::vec![0.0; n];
    let mut d = alloc::vec![0.0; n];
    let mut v = alloc::vec![0usize; n];
    let mut z = alloc::vec![0.0; n + 1];
    for col in 0..n {
        for row in 0..n {
            f[row] = sq[row * n + col];
        }
        edt_1d(&f, &mut d, &mut v, &mut z);
        for row in 0..n {
            sq[row * n + col] = d[row];
        }
    }
    for row in 0..n {
        f.copy_from_slice(&sq[row * n..(row + 1) * n]);
        edt_1d(&f, &mut d, &mut v, &mut z);
        for (col, &dv) in d.iter().enumerate() {
            sq[row * n + col] = dv.sqrt() * CELL_M;
        }
    }
    sq
}

#[derive(PartialEq)]
struct QueueEntry {
    cost: f64,
    cell: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the cheapest.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected shortest-path distance (m) from the goal cell to every
/// cell. With `soft_factor`, blocked cells are passable at that cost
/// multiple (the field stays finite everywhere); without it they are
/// impassable and unreachable cells read infinity.
fn dijkstra(blocked: &[bool], goal: usize, soft_factor: Option<f64>) -> Vec<f64> {
    let n = GRID_CELLS;
    let mut dist = alloc::vec![f64::INFINITY; n * n];
    let mut heap = BinaryHeap::new();
    dist[goal] = 0.0;
    heap.push(QueueEntry {
        cost: 0.0,
        cell: goal,
    });
    while let Some(QueueEntry { cost, cell }) = heap.pop() {
        if cost > dist[cell] {
            continue;
        }
        let (row, col) = (cell / n, cell % n);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                if nr < 0 || nc < 0 || nr >= n as i64 || nc >= n as i64 {
                    continue;
                }
                let next = nr as usize * n + nc as usize;
                let mut step = if dr != 0 && dc != 0 {
                    CELL_M * core::f64::consts::SQRT_2
                } else {
                    CELL_M
                };
                if blocked[next] {
                    match soft_factor {
                        Some(f) => step *= f,
                        None => continue,
                    }
                }
                let cand = cost + step;
                if cand < dist[next] {
                    dist[next] = cand;
                    heap.push(QueueEntry {
                        cost: cand,
                        cell: next,
                    });
                }
            }
        }
    }
    dist
}

/// Planner working state derived from one costmap.
struct PlanningGrid {
    grid: OccupancyGrid,
    potential: Vec<f64>,
}

impl PlanningGrid {
    fn build(map: &Costmap, pose: &RobotPose, goal: (f64, f64)) -> Self {
        let mut grid = OccupancyGrid::from_costmap(map, pose);
        let goal_cell = cell_of(goal.0, goal.1)
            .map(idx)
            .unwrap_or_else(|| idx((GRID_CELLS / 2, GRID_CELLS / 2)));
        // Potential on the honest grid (walls stay expensive), then
        // release the body footprint for the rollout collision test
        // only, so the planner can always move off its own cell.
        let potential = dijkstra(&grid.blocked, goal_cell, Some(SOFT_BLOCK_FACTOR));
        grid.release_footprint(pose.x, pose.y);
        PlanningGrid { grid, potential }
    }

    fn potential_at(&self, x: f64, y: f64) -> f64 {
        match cell_of(x, y) {
            Some(c) => self.potential[idx(c)],
            None => FAR,
        }
    }

    fn clearance_at(&self, x: f64, y: f64) -> f64 {
        match cell_of(x, y) {
            Some(c) => self.grid.clearance_m[idx(c)],
            None => 0.0,
        }
    }
}

/// The 49 motion primitives: 16 body-frame headings at 3 speeds, plus
/// stop (index 48). Returns (body velocity, heading change).
fn primitive(index: usize) -> (BodyCommand, f64) {
    if index == PRIMITIVE_HEADINGS * PRIMITIVE_SPEEDS.len() {
        return (BodyCommand::default(), 0.0);
    }
    let heading = index / PRIMITIVE_SPEEDS.len();
    let speed = PRIMITIVE_SPEEDS[index % PRIMITIVE_SPEEDS.len()];
    let phi = wrap_angle(2.0 * core::f64::consts::PI * heading as f64 / PRIMITIVE_HEADINGS as f64);
    let (s, c) = phi.sin_cos();
    (
        BodyCommand {
            vx: speed * c,
            vy: speed * s,
            omega: 0.0,
        },
        phi,
    )
}

const PRIMITIVE_COUNT: usize = PRIMITIVE_HEADINGS * PRIMITIVE_SPEEDS.len() + 1;

/// Scores every primitive over a 1.5 s rollout on the costmap and
/// returns the body-frame command of the best one. Score = potential
/// decrease − 50·(any rollout collision) − 2·(shortfall of the body
/// clearance below 0.5 m). Ties go to the smallest heading change,
/// then the lowest primitive index. Deterministic.
pub fn plan_step(map: &Costmap, pose: &RobotPose, goal: (f64, f64)) -> BodyCommand {
    let grid = PlanningGrid::build(map, pose, goal);
    let substeps = (ROLLOUT_HORIZON_S / CONTROL_PERIOD_S) as usize;
    let start_pot = grid.potential_at(pose.x, pose.y);
    let (sin, cos) = pose.yaw.sin_cos();
    let mut best: Option<(f64, f64, usize, BodyCommand)> = None;
    for index in 0..PRIMITIVE_COUNT {
        let (cmd, phi) = primitive(index);
        let wx = cmd.vx * cos - cmd.vy * sin;
        let wy = cmd.vx * sin + cmd.vy * cos;
        let (mut x, mut y) = (pose.x, pose.y);
        let mut collided = false;
        let mut min_clear = grid.clearance_at(x, y);
        for _ in 0..substeps {
            let (nx, ny) = (x + wx * CONTROL_PERIOD_S, y + wy * CONTROL_PERIOD_S);
            if grid.grid.blocked_at(nx, ny) {
                collided = true;
                break;
            }
            x = nx;
            y = ny;
            min_clear = min_clear.min(grid.clearance_at(x, y));
        }
        let body_clear = min_clear - FOOTPRINT_RADIUS_M;
        let score = (start_pot - grid.potential_at(x, y))
            - COLLISION_PENALTY * if collided { 1.0 } else { 0.0 }
            - CLEARANCE_WEIGHT * (CLEARANCE_TARGET_M - body_clear).max(0.0);
        let abs_phi = phi.abs();
        let replace = match &best {
            None => true,
            Some((bs, bphi, _, _)) => {
                score > bs + 1e-12 || ((score - bs).abs() <= 1e-12 && abs_phi < bphi - 1e-12)
            }
        };
        if replace {
            let delta = wrap_angle(wy.atan2(wx) - pose.yaw).clamp(
                -MAX_YAW_RATE_RAD_S * CONTROL_PERIOD_S,
                MAX_YAW_RATE_RAD_S * CONTROL_PERIOD_S,
            );
            let omega = if cmd.vx == 0.0 && cmd.vy == 0.0 {
                0.0
            } else {
                delta / CONTROL_PERIOD_S
            };
            best = Some((score, abs_phi, index, BodyCommand { omega, ..cmd }));
        }
    }
    best.unwrap().3
}

/// One control period of motion against a grid, with axis-separated
/// sliding: a blocked diagonal move degrades to its free axis
/// component. Returns the new position and whether contact occurred.
fn step_with_slide(grid: &OccupancyGrid, x: f64, y: f64, dx: f64, dy: f64) -> (f64, f64, bool) {
    if !grid.blocked_at(x + dx, y + dy) {
        return (x + dx, y + dy, false);
    }
    if !grid.blocked_at(x + dx, y) {
        return (x + dx, y, true);
    }
    if !grid.blocked_at(x, y + dy) {
        return (x, y + dy, true);
    }
    (x, y, true)
}

/// Executes one control period of a body-frame command against the
/// true obstacle grid: rotate to world frame, slide along blocked
/// axes, turn toward the motion direction at the capped yaw rate.
/// Returns the new pose and whether the footprint made contact.
pub(crate) fn execute_command(
    truth: &OccupancyGrid,
    pose: &RobotPose,
    cmd: &BodyCommand,
) -> (RobotPose, bool) {
    let (sin, cos) = pose.yaw.sin_cos();
    let wx = cmd.vx * cos - cmd.vy * sin;
    let wy = cmd.vx * sin + cmd.vy * cos;
    let (nx, ny, obstructed) = step_with_slide(
        truth,
        pose.x,
        pose.y,
        wx * CONTROL_PERIOD_S,
        wy * CONTROL_PERIOD_S,
    );
    let collided = obstructed || truth.footprint_overlaps(nx, ny);
    let yaw = wrap_angle(pose.yaw + cmd.omega * CONTROL_PERIOD_S);
    (RobotPose::new(nx, ny, yaw), collided)
}

/// One pose of the executed trajectory; velocities are the body-frame
/// command issued at this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub optimal_length_m: f64,
    pub actual_length_m: f64,
    pub collisions: usize,
    pub final_goal_distance_m: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Runs one closed-loop episode at 10 Hz: sense (per the map source),
/// plan, execute one control period against the true terrain, repeat
/// up to 200 steps. Success is reaching within 0.4 m of the goal, and
/// collisions are counted against the true obstacle grid with sliding
/// contact. Deterministic in (scenario, source, models, seed).
pub fn run_episode(
    scenario: &Scenario,
    source: MapSource,
    models: Option<&PredictionModels<'_>>,
    seed: u64,
) -> Result<EpisodeResult, NavError> {
    let truth = OccupancyGrid::from_terrain(&scenario.terrain);
    let goal = scenario.goal;
    let mut pose = scenario.start;
    let mut trajectory = alloc::vec![TrajectoryPoint {
        step: 0,
        x: pose.x,
        y: pose.y,
        yaw: pose.yaw,
        vx: 0.0,
        vy: 0.0,
        collided: false,
    }];
    let mut last_cmd = BodyCommand::default();
    let mut before_cmd = BodyCommand::default();
    let mut collisions = 0usize;
    let mut actual_length = 0.0;
    let mut success = false;
    let mut final_dist = 0.0;
    for step in 0..=EPISODE_STEP_CAP {
        let (dx, dy) = (goal.0 - pose.x, goal.1 - pose.y);
        final_dist = (dx * dx + dy * dy).sqrt();
        if final_dist <= SUCCESS_RADIUS_M {
            success = true;
            break;
        }
        if step == EPISODE_STEP_CAP {
            break;
        }
        let inputs = PredictionInputs {
            goal,
            last_cmd,
            before_cmd,
            sample_key: rng::mix(seed, rng::streams::SAMPLER, step as u64),
        };
        let map = build_costmap(source, &pose, &scenario.terrain, models, &inputs)?;
        let cmd = plan_step(&map, &pose, goal);
        let (next, collided) = execute_command(&truth, &pose, &cmd);
        if collided {
            collisions += 1;
        }
        let (mx, my) = (next.x - pose.x, next.y - pose.y);
        actual_length += (mx * mx + my * my).sqrt();
        pose = next;
        trajectory.push(TrajectoryPoint {
            step: step + 1,
            x: pose.x,
            y: pose.y,
            yaw: pose.yaw,
            vx: cmd.vx,
            vy: cmd.vy,
            collided,
        });
        before_cmd = last_cmd;
        last_cmd = cmd;
    }
    Ok(EpisodeResult {
        success,
        optimal_length_m: scenario.optimal_length_m,
        actual_length_m: actual_length,
        collisions,
        final_goal_distance_m: final_dist,
        trajectory,
    })
}

/// Aggregate navigation metrics over a batch of episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavMetrics {
    pub episodes: usize,
    /// Success rate in percent.
    pub success_rate: f64,
    /// Mean collision count per episode.
    pub collision_rate: f64,
    /// Success weighted by path length: mean of S·L/max(P, L).
    pub spl: f64,
}

pub fn compute_metrics(results: &[EpisodeResult]) -> NavMetrics {
    let n = results.len();
    if n == 0 {
        return NavMetrics {
            episodes: 0,
            success_rate: 0.0,
            collision_rate: 0.0,
            spl: 0.0,
        };
    }
    let mut successes = 0usize;
    let mut collisions = 0.0;
    let mut spl = 0.0;
    for r in results {
        collisions += r.collisions as f64;
        if r.success {
            successes += 1;
            let denom = r.actual_length_m.max(r.optimal_length_m);
            spl += if denom > 1e-12 {
                r.optimal_length_m / denom
            } else {
                1.0
            };
        }
    }
    NavMetrics {
        episodes: n,
        success_rate: 100.0 * successes as f64 / n as f64,
        collision_rate: collisions / n as f64,
        spl: spl / n as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::VelocityFieldModel;
    use crate::predict::FlowPredictor;
    use crate::world::generate_terrain;

    fn synthetic(success: bool, l: f64, p: f64, collisions: usize) -> EpisodeResult {
        EpisodeResult {
            success,
            optimal_length_m: l,
            actual_length_m: p,
            collisions,
            final_goal_distance_m: if success { 0.0 } else { 1.0 },
            trajectory: Vec::new(),
        }
    }

    #[test]
    fn spl_hand_cases() {
        let m = compute_metrics(&[synthetic(true, 5.0, 5.0, 0)]);
        assert!((m.spl - 1.0).abs() < 1e-12);
        assert!((m.success_rate - 100.0).abs() < 1e-12);

        let m = compute_metrics(&[synthetic(true, 5.0, 10.0, 0), synthetic(false, 5.0, 3.0, 2)]);
        assert!((m.spl - 0.25).abs() < 1e-12, "spl {}", m.spl);
        assert!((m.success_rate - 50.0).abs() < 1e-12);
        assert!((m.collision_rate - 1.0).abs() < 1e-12);

        let m = compute_metrics(&[synthetic(false, 5.0, 9.0, 1), synthetic(false, 4.0, 0.0, 0)]);
        assert_eq!(m.success_rate, 0.0);
        assert_eq!(m.spl, 0.0);
    }

    #[test]
    fn spl_never_exceeds_success_fraction() {
        let mut r = rng::stream(3, rng::streams::SCENARIO, 99);
        for _ in 0..50 {
            let eps: Vec<EpisodeResult> = (0..10)
                .map(|_| {
                    synthetic(
                        rng::next_index(&mut r, 2) == 0,
                        rng::next_range(&mut r, 0.5, 10.0),
                        rng::next_range(&mut r, 0.0, 20.0),
                        rng::next_index(&mut r, 4),
                    )
                })
                .collect();
            let m = compute_metrics(&eps);
            assert!(m.spl <= m.success_rate / 100.0 + 1e-12);
        }
    }

    #[test]
    fn goal_within_reach_succeeds_at_step_zero() {
        let sc = Scenario {
            kind: ScenarioKind::MazeEasy,
            terrain: TerrainGrid::flat(),
            start: RobotPose::new(4.0, 4.0, 0.0),
            goal: (4.3, 4.0),
            optimal_length_m: 0.3,
        };
        let r = run_episode(&sc, MapSource::ObservedOnly, None, 0).unwrap();
        assert!(r.success);
        assert_eq!(r.actual_length_m, 0.0);
        assert_eq!(r.trajectory.len(), 1);
        assert_eq!(r.collisions, 0);
    }

    #[test]
    fn success_rule_rejects_final_distance_just_outside() {
        // Seal the robot in a one-cell pocket 0.41 m from the goal: it
        // can never close the gap, so the episode must time out.
        let mut t = TerrainGrid::flat();
        wall(&mut t, 4.0, 4.0, 0.6, 0.6);
        carve(&mut t, 4.0, 4.0, 0.1, 0.1);
        let sc = Scenario {
            kind: ScenarioKind::MazeEasy,
            terrain: t,
            start: RobotPose::new(4.0, 4.0, 0.0),
            goal: (4.41, 4.0),
            optimal_length_m: 0.41,
        };
        let r = run_episode(&sc, MapSource::GroundTruthExtended, None, 0).unwrap();
        assert!(!r.success);
        assert!((r.final_goal_distance_m - 0.41).abs() < 1e-9);
        assert_eq!(r.trajectory.len(), EPISODE_STEP_CAP + 1);
    }

    #[test]
    fn flat_terrain_costmaps_are_free_for_every_source() {
        let t = TerrainGrid::flat();
        let pose = RobotPose::new(4.0, 4.0, 0.7);
        let inputs = PredictionInputs::default();
        for source in [MapSource::ObservedOnly, MapSource::GroundTruthExtended] {
            let map = build_costmap(source, &pose, &t, None, &inputs).unwrap();
            assert_eq!(map.occupied_count(), 0, "{}", source.name());
        }
    }

    #[test]
    fn extended_source_sees_a_wall_the_local_window_cannot() {
        let mut t = TerrainGrid::flat();
        wall(&mut t, 4.5, 4.0, 0.1, 1.0); // 2.5 m ahead of the robot
        let pose = RobotPose::new(2.0, 4.0, 0.0);
        let inputs = PredictionInputs::default();
        let obs = build_costmap(MapSource::ObservedOnly, &pose, &t, None, &inputs).unwrap();
        let gt = build_costmap(MapSource::GroundTruthExtended, &pose, &t, None, &inputs).unwrap();
        assert_eq!(obs.occupied_count(), 0);
        assert!(gt.occupied_count() > 0);
    }

    #[test]
    fn ground_truth_restricted_to_local_window_matches_observed() {
        let t = generate_terrain(11, 0.25, true).unwrap();
        let pose = RobotPose::new(3.3, 4.6, 1.1);
        let inputs = PredictionInputs::default();
        let obs = build_costmap(MapSource::ObservedOnly, &pose, &t, None, &inputs).unwrap();
        let gt = build_costmap(MapSource::GroundTruthExtended, &pose, &t, None, &inputs).unwrap();
        for i in 0..LOCAL_ROWS {
            for j in 0..LOCAL_COLS {
                assert_eq!(
                    obs.at(i + NESTED_ROW_OFFSET, j + NESTED_COL_OFFSET),
                    gt.at(i + NESTED_ROW_OFFSET, j + NESTED_COL_OFFSET),
                    "window cell ({i},{j})"
                );
            }
        }
        // Outside the window the observed map must claim free space.
        assert!(obs.occupied_count() <= gt.occupied_count());
    }

    #[test]
    fn predicted_source_keeps_the_sensed_window_and_extended_shape() {
        let t = generate_terrain(5, 0.2, false).unwrap();
        let pose = RobotPose::new(4.4, 3.8, -0.4);
        let local = VaeModel::init(CropKind::Local, 4, 8, 1);
        let extended = VaeModel::init(CropKind::Extended, 4, 8, 2);
        let predictor = FlowPredictor::new(VelocityFieldModel::init(4, 8, true, 3));
        let models = PredictionModels {
            local_vae: &local,
            extended_vae: &extended,
            predictor: &predictor,
        };
        let inputs = PredictionInputs {
            goal: (7.0, 7.0),
            ..Default::default()
        };
        let pred = build_costmap(MapSource::Predicted, &pose, &t, Some(&models), &inputs).unwrap();
        let obs = build_costmap(MapSource::ObservedOnly, &pose, &t, None, &inputs).unwrap();
        assert_eq!(pred.occupied.len(), EXTENDED_ROWS * EXTENDED_COLS);
        for i in 0..LOCAL_ROWS {
            for j in 0..LOCAL_COLS {
                assert_eq!(
                    pred.at(i + NESTED_ROW_OFFSET, j + NESTED_COL_OFFSET),
                    obs.at(i + NESTED_ROW_OFFSET, j + NESTED_COL_OFFSET)
                );
            }
        }
        assert_eq!(
            build_costmap(MapSource::Predicted, &pose, &t, None, &inputs).unwrap_err(),
            NavError::MissingModels
        );
    }

    #[test]
    fn planner_drives_straight_at_a_visible_goal() {
        let t = TerrainGrid::flat();
        let pose = RobotPose::new(2.0, 4.0, 0.0);
        let map =
            build_costmap(MapSource::GroundTruthExtended, &pose, &t, None, &Default::default())
                .unwrap();
        let cmd = plan_step(&map, &pose, (5.0, 4.0));
        assert!(cmd.vx > 0.95, "vx {}", cmd.vx);
        assert!(cmd.vy.abs() < 1e-9, "vy {}", cmd.vy);
    }

    #[test]
    fn planner_prefers_backing_out_of_a_pocket() {
        let mut t = TerrainGrid::flat();
        wall(&mut t, 4.6, 4.0, 0.1, 1.0); // front
        wall(&mut t, 3.8, 3.1, 0.9, 0.1); // right side
        wall(&mut t, 3.8, 4.9, 0.9, 0.1); // left side
        let pose = RobotPose::new(4.0, 4.0, 0.0);
        let map =
            build_costmap(MapSource::GroundTruthExtended, &pose, &t, None, &Default::default())
                .unwrap();
        let cmd = plan_step(&map, &pose, (6.0, 4.0));
        assert!(cmd.vx < -0.2, "expected retreat, got vx {}", cmd.vx);
    }

    #[test]
    fn planner_is_deterministic() {
        let t = generate_terrain(21, 0.3, false).unwrap();
        let pose = RobotPose::new(3.0, 3.0, 0.5);
        let map =
            build_costmap(MapSource::GroundTruthExtended, &pose, &t, None, &Default::default())
                .unwrap();
        assert_eq!(plan_step(&map, &pose, (7.0, 7.0)), plan_step(&map, &pose, (7.0, 7.0)));
    }

    #[test]
    fn scenarios_build_with_verified_paths() {
        for kind in ScenarioKind::ALL {
            let sc = build_scenario(kind, 4).unwrap();
            let (dx, dy) = (sc.goal.0 - sc.start.x, sc.goal.1 - sc.start.y);
            let euclid = (dx * dx + dy * dy).sqrt();
            assert!(
                sc.optimal_length_m >= euclid - 0.2,
                "{}: geodesic {} vs euclid {euclid}",
                kind.name(),
                sc.optimal_length_m
            );
            assert!(sc.optimal_length_m.is_finite());
            let again = build_scenario(kind, 4).unwrap();
            assert_eq!(sc, again);
            let other = build_scenario(kind, 5).unwrap();
            assert_ne!(
                (sc.start, sc.goal),
                (other.start, other.goal),
                "{}: jitter did not move start/goal",
                kind.name()
            );
        }
    }

    #[test]
    fn maze_hard_detour_is_much_longer_than_the_straight_line() {
        for seed in 0..8 {
            let sc = build_scenario(ScenarioKind::MazeHard, seed).unwrap();
            let (dx, dy) = (sc.goal.0 - sc.start.x, sc.goal.1 - sc.start.y);
            let euclid = (dx * dx + dy * dy).sqrt();
            assert!(
                sc.optimal_length_m > euclid + 0.5,
                "seed {seed}: trap adds detour: {} vs {euclid}",
                sc.optimal_length_m
            );
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        let sc = build_scenario(ScenarioKind::MazeEasy, 7).unwrap();
        let a = run_episode(&sc, MapSource::GroundTruthExtended, None, 7).unwrap();
        let b = run_episode(&sc, MapSource::GroundTruthExtended, None, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.actual_length_m >= 0.0);
        if a.success {
            assert!(a.final_goal_distance_m <= SUCCESS_RADIUS_M);
        }
    }

    #[test]
    fn privileged_sensing_solves_maze_easy() {
        let sc = build_scenario(ScenarioKind::MazeEasy, 1).unwrap();
        let r = run_episode(&sc, MapSource::GroundTruthExtended, None, 1).unwrap();
        assert!(
            r.success,
            "failed: final distance {}, {} steps",
            r.final_goal_distance_m,
            r.trajectory.len()
        );
        assert!(r.actual_length_m >= sc.optimal_length_m - 0.5);
    }

    // Probe, not a gate: fraction of observed-only maze_hard episodes
    // that enter the trap interior, expected to be the dominant mode.
    #[test]
    #[ignore]
    fn probe_observed_robots_enter_the_trap() {
        let mut entered = 0;
        let mut succeeded = 0;
        let n = 100;
        for seed in 0..n {
            let sc = build_scenario(ScenarioKind::MazeHard, seed).unwrap();
            let r = run_episode(&sc, MapSource::ObservedOnly, None, seed).unwrap();
            if r.trajectory
                .iter()
                .any(|p| p.x > 3.4 && p.x < 5.0 && p.y > 3.5 && p.y < 4.5)
            {
                entered += 1;
            }
            if r.success {
                succeeded += 1;
            }
        }
        assert!(entered * 2 >= n, "entered {entered}/{n}, succeeded {succeeded}");
    }

    // Probe, not a gate: prints the SR/CR/SPL margins between map
    // sources that the model-free scenario geometry produces.
    #[test]
    #[ignore]
    fn probe_source_margins() {
        for kind in [ScenarioKind::MazeHard, ScenarioKind::Hallway] {
            for source in [MapSource::ObservedOnly, MapSource::GroundTruthExtended] {
                let results: Vec<EpisodeResult> = (0..100)
                    .map(|seed| {
                        let sc = build_scenario(kind, seed).unwrap();
                        run_episode(&sc, source, None, seed).unwrap()
                    })
                    .collect();
                let m = compute_metrics(&results);
                std::println!(
                    "{:>10} {:>22} SR {:6.1}% CR {:6.2} SPL {:.3}",
                    kind.name(),
                    source.name(),
                    m.success_rate,
                    m.collision_rate,
                    m.spl
                );
            }
        }
    }
}
