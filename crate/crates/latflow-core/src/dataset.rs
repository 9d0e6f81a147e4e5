//! Scripted collection of latent-pair datasets.
//!
//! Each sample comes from its own procedurally generated terrain: a
//! pose is drawn uniformly over free cells (yaw uniform), a goal is
//! drawn uniformly over free cells at least 1 m away, and the scripted
//! planner then runs a short episode (2-24 control periods, length
//! drawn per scene) on the fully observed costmap. The sample is
//! emitted at the evolved pose with the two just-executed commands as
//! its command history — the same semantics the closed-loop simulator
//! feeds to a predictor — and the local and extended crops are encoded
//! to posterior means by the frozen VAEs. Mid-episode poses carry
//! navigation context: the expert has been steering around structures
//! it can see in full, so the recent commands and the goal offset are
//! informative about terrain beyond the local crop.
//!
//! Splits draw from disjoint, consecutive scene-seed ranges; the
//! out-of-distribution split generates terrains with pits. Everything
//! is a pure function of the configuration.

use alloc::vec::Vec;
use thiserror::Error;

use crate::nav::{
    build_costmap, execute_command, plan_step, BodyCommand, MapSource, NavError, OccupancyGrid,
    PredictionInputs, OBSTACLE_HEIGHT_M,
};
use crate::rng::{self, streams};
use crate::vae::{VaeError, VaeModel};
use crate::world::{
    crop_heightmap, generate_terrain, make_condition, wrap_angle, CropKind, Dataset,
    LatentPairSample, RobotPose, Split, TerrainGrid, WorldError, CELL_M, GRID_CELLS,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{expected:?} encoder required, got a {got:?} one")]
    WrongEncoderKind { expected: CropKind, got: CropKind },
    #[error("encoder latent dims differ: local {local}, extended {extended}")]
    EncoderDimMismatch { local: usize, extended: usize },
    #[error("no free goal cell at least 1 m from the pose (scene seed {seed})")]
    NoFeasibleGoal { seed: u64 },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Nav(#[from] NavError),
}

pub const MIN_GOAL_DISTANCE_M: f64 = 1.0;

/// Sizes, base seed, and the per-terrain obstacle-density range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectConfig {
    pub n_train: usize,
    pub n_id: usize,
    pub n_ood: usize,
    pub seed: u64,
    pub density_range: (f64, f64),
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            n_train: 512,
            n_id: 128,
            n_ood: 128,
            seed: 0,
            density_range: (0.05, 0.30),
        }
    }
}

/// The two frozen encoders a collection run reads from.
pub struct EncoderPair<'a> {
    pub local: &'a VaeModel,
    pub extended: &'a VaeModel,
}

impl EncoderPair<'_> {
    fn validate(&self) -> Result<(), DatasetError> {
        if self.local.kind != CropKind::Local {
            return Err(DatasetError::WrongEncoderKind {
                expected: CropKind::Local,
                got: self.local.kind,
            });
        }
        if self.extended.kind != CropKind::Extended {
            return Err(DatasetError::WrongEncoderKind {
                expected: CropKind::Extended,
                got: self.extended.kind,
            });
        }
        if self.local.latent_dim != self.extended.latent_dim {
            return Err(DatasetError::EncoderDimMismatch {
                local: self.local.latent_dim,
                extended: self.extended.latent_dim,
            });
        }
        Ok(())
    }
}

/// The scene seeds a split draws from: consecutive ranges stacked in
/// split order on top of the base seed, disjoint by construction.
pub fn scene_seeds(cfg: &CollectConfig, split: Split) -> core::ops::Range<u64> {
    let (offset, n) = match split {
        Split::Train => (0, cfg.n_train),
        Split::TestId => (cfg.n_train, cfg.n_id),
        Split::TestOod => (cfg.n_train + cfg.n_id, cfg.n_ood),
    };
    let start = cfg.seed.wrapping_add(offset as u64);
    start..start.wrapping_add(n as u64)
}

fn free_cells(terrain: &TerrainGrid) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for row in 0..GRID_CELLS {
        for col in 0..GRID_CELLS {
            if terrain.height_at_cell(row, col).abs() <= OBSTACLE_HEIGHT_M {
                cells.push((row, col));
            }
        }
    }
    cells
}

fn cell_center(cell: (usize, usize)) -> (f64, f64) {
    ((cell.1 as f64 + 0.5) * CELL_M, (cell.0 as f64 + 0.5) * CELL_M)
}

fn collect_one(
    scene_seed: u64,
    ood: bool,
    cfg: &CollectConfig,
    encoders: &EncoderPair<'_>,
) -> Result<LatentPairSample, DatasetError> {
    let mut rng = rng::stream(scene_seed, streams::POSE, 0);
    let density = rng::next_range(&mut rng, cfg.density_range.0, cfg.density_range.1);
    let terrain = generate_terrain(scene_seed, density, ood)?;
    let free = free_cells(&terrain);
    let (px, py) = cell_center(free[rng::next_index(&mut rng, free.len())]);
    let yaw = wrap_angle(rng::next_range(
        &mut rng,
        -core::f64::consts::PI,
        core::f64::consts::PI,
    ));
    let pose = RobotPose::new(px, py, yaw);
    let mut goal = None;
    for _ in 0..4096 {
        let (gx, gy) = cell_center(free[rng::next_index(&mut rng, free.len())]);
        let (dx, dy) = (gx - px, gy - py);
        if dx * dx + dy * dy >= MIN_GOAL_DISTANCE_M * MIN_GOAL_DISTANCE_M {
            goal = Some((gx, gy));
            break;
        }
    }
    let goal = goal.ok_or(DatasetError::NoFeasibleGoal { seed: scene_seed })?;

    // A short scripted episode on the fully observed costmap, so the
    // emitted command history matches what the simulator will pass to a
    // predictor at deployment: the two most recently executed commands,
    // evaluated at the pose they led to. Episodes run 2-24 control
    // periods so most samples sit mid-trajectory, where the expert's
    // recent steering already reflects structure beyond the local crop.
    let steps = 2 + rng::next_index(&mut rng, 23);
    let truth = OccupancyGrid::from_terrain(&terrain);
    let inputs = PredictionInputs::default();
    let mut pose = pose;
    let mut prev_cmd = BodyCommand::default();
    let mut cmd = BodyCommand::default();
    for _ in 0..steps {
        let map = build_costmap(MapSource::GroundTruthExtended, &pose, &terrain, None, &inputs)?;
        prev_cmd = cmd;
        cmd = plan_step(&map, &pose, goal);
        let (next, _) = execute_command(&truth, &pose, &cmd);
        pose = next;
        let (dx, dy) = (goal.0 - pose.x_m, goal.1 - pose.y_m);
        if dx * dx + dy * dy < MIN_GOAL_DISTANCE_M * MIN_GOAL_DISTANCE_M {
            break;
        }
    }

    let local = crop_heightmap(&terrain, &pose, CropKind::Local)?;
    let extended = crop_heightmap(&terrain, &pose, CropKind::Extended)?;
    let (z_local, _) = encoders.local.encode(&local)?;
    let (z_extended, _) = encoders.extended.encode(&extended)?;
    Ok(LatentPairSample {
        z_local,
        z_extended,
        condition: make_condition(&pose, goal, &cmd, &prev_cmd),
    })
}

/// Collects one split: one fresh terrain per sample, scene seeds from
/// [`scene_seeds`]. Deterministic in the configuration.
pub fn collect_split(
    cfg: &CollectConfig,
    split: Split,
    encoders: &EncoderPair<'_>,
) -> Result<Dataset, DatasetError> {
    encoders.validate()?;
    let ood = split == Split::TestOod;
    let mut ds = Dataset::new(split, encoders.local.latent_dim);
    for scene_seed in scene_seeds(cfg, split) {
        ds.push(collect_one(scene_seed, ood, cfg, encoders)?)?;
    }
    Ok(ds)
}

/// All three splits of one collection run.
pub struct CollectedSplits {
    pub train: Dataset,
    pub test_id: Dataset,
    pub test_ood: Dataset,
}

pub fn collect_dataset(
    cfg: &CollectConfig,
    encoders: &EncoderPair<'_>,
) -> Result<CollectedSplits, DatasetError> {
    Ok(CollectedSplits {
        train: collect_split(cfg, Split::Train, encoders)?,
        test_id: collect_split(cfg, Split::TestId, encoders)?,
        test_ood: collect_split(cfg, Split::TestOod, encoders)?,
    })
}
