//! Procedural terrains, robot pose, height-map crops, the condition
//! vector, and latent-pair dataset containers.
//!
//! World frame: the terrain spans `[0, 8] x [0, 8]` meters at 0.1 m
//! cells; cell `(row, col)` covers `x in [col, col+1) * 0.1`,
//! `y in [row, row+1) * 0.1`. Heights are meters above the ground
//! plane. Crops are robot-centered and yaw-aligned: crop rows advance
//! along the robot's forward axis, columns along its left axis.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float; // float intrinsics without std

use crate::codec::{CodecError, Reader, Writer};
use crate::rng;

pub const GRID_CELLS: usize = 80;
pub const CELL_M: f64 = 0.1;
pub const TERRAIN_SIZE_M: f64 = 8.0;
pub const SPAWN_RADIUS_M: f64 = 0.5;

pub const LOCAL_ROWS: usize = 30;
pub const LOCAL_COLS: usize = 20;
pub const EXTENDED_ROWS: usize = 60;
pub const EXTENDED_COLS: usize = 40;

pub const COND_DIM: usize = 32;

pub const DATASET_MAGIC: [u8; 4] = *b"LFDS";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("obstacle density {0} outside [0.02, 0.4] obstacles per square meter")]
    DensityOutOfRange(f64),
    #[error("pose ({x:.3}, {y:.3}) outside terrain bounds")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("goal ({x:.3}, {y:.3}) outside terrain bounds")]
    GoalOutOfBounds { x: f64, y: f64 },
    #[error("latent length {got} does not match dataset dimension {want}")]
    LatentDimMismatch { want: usize, got: usize },
    #[error("invalid dataset: {0}")]
    BadDataset(String),
}

/// Affine map from meters to normalized height-map units: clamp to
/// `[-1, 2]` then rescale to `[-1, 1]`. Flat ground lands at -1/3.
pub fn normalize_height(meters: f64) -> f64 {
    (meters.clamp(-1.0, 2.0) - 0.5) / 1.5
}

/// Inverse of [`normalize_height`] on its image.
pub fn denormalize_height(normalized: f64) -> f64 {
    1.5 * normalized + 0.5
}

/// Square height grid in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    pub heights: Vec<f64>,
}

impl TerrainGrid {
    pub fn flat() -> Self {
        TerrainGrid {
            heights: vec![0.0; GRID_CELLS * GRID_CELLS],
        }
    }

    #[inline]
    pub fn height_at_cell(&self, row: usize, col: usize) -> f64 {
        self.heights[row * GRID_CELLS + col]
    }

    #[inline]
    pub fn set_cell(&mut self, row: usize, col: usize, h: f64) {
        self.heights[row * GRID_CELLS + col] = h;
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..TERRAIN_SIZE_M).contains(&x) && (0.0..TERRAIN_SIZE_M).contains(&y)
    }

    /// Nearest-neighbor height lookup; points off the terrain read 0.
    #[inline]
    pub fn height_at_world(&self, x: f64, y: f64) -> f64 {
        if !self.contains(x, y) {
            return 0.0;
        }
        let col = (x / CELL_M) as usize;
        let row = (y / CELL_M) as usize;
        self.height_at_cell(row.min(GRID_CELLS - 1), col.min(GRID_CELLS - 1))
    }

    /// Marks every cell whose center lies inside an axis-aligned rect.
    pub(crate) fn fill_rect(
        &mut self,
        cx: f64,
        cy: f64,
        half_w: f64,
        half_h: f64,
        f: impl Fn(f64) -> f64,
    ) {
        let c0 = (((cx - half_w) / CELL_M).floor().max(0.0)) as usize;
        let c1 = (((cx + half_w) / CELL_M).ceil()).min(GRID_CELLS as f64) as usize;
        let r0 = (((cy - half_h) / CELL_M).floor().max(0.0)) as usize;
        let r1 = (((cy + half_h) / CELL_M).ceil()).min(GRID_CELLS as f64) as usize;
        for r in r0..r1 {
            let yc = (r as f64 + 0.5) * CELL_M;
            for c in c0..c1 {
                let xc = (c as f64 + 0.5) * CELL_M;
                if (xc - cx).abs() <= half_w && (yc - cy).abs() <= half_h {
                    let h = self.height_at_cell(r, c);
                    self.set_cell(r, c, f(h));
                }
            }
        }
    }
}

/// Distance from a point to an axis-aligned rectangle (0 inside).
fn rect_point_distance(cx: f64, cy: f64, half_w: f64, half_h: f64, px: f64, py: f64) -> f64 {
    let dx = ((px - cx).abs() - half_w).max(0.0);
    let dy = ((py - cy).abs() - half_h).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

/// Generates a terrain with randomly placed axis-aligned box obstacles
/// (sides 0.2-1.2 m, heights 0.3-1.0 m) and, when `ood` is set, 1-4
/// rectangular pits (depths 0.3-1.0 m). A disc of radius 0.5 m around
/// the map center stays flat as the spawn area. Pure in
/// `(seed, density, ood)`.
pub fn generate_terrain(seed: u64, density: f64, ood: bool) -> Result<TerrainGrid, WorldError> {
    if !(0.02..=0.4).contains(&density) && density != 0.0 {
        return Err(WorldError::DensityOutOfRange(density));
    }
    let mut grid = TerrainGrid::flat();
    let mut r = rng::stream(seed, rng::streams::TERRAIN, 0);
    let area = TERRAIN_SIZE_M * TERRAIN_SIZE_M;
    let center = TERRAIN_SIZE_M / 2.0;
    let n_obstacles = (density * area).round() as usize;
    let place = |r: &mut rand_chacha::ChaCha8Rng, grid: &mut TerrainGrid, pit: bool| {
        let half_w = rng::next_range(r, 0.2, 1.2) / 2.0;
        let half_h = rng::next_range(r, 0.2, 1.2) / 2.0;
        let magnitude = rng::next_range(r, 0.3, 1.0);
        // keep the spawn disc flat: retry placement, give up quietly
        for _ in 0..64 {
            let cx = rng::next_range(r, 0.0, TERRAIN_SIZE_M);
            let cy = rng::next_range(r, 0.0, TERRAIN_SIZE_M);
            if rect_point_distance(cx, cy, half_w, half_h, center, center) > SPAWN_RADIUS_M {
                if pit {
                    grid.fill_rect(cx, cy, half_w, half_h, |_| -magnitude);
                } else {
                    grid.fill_rect(cx, cy, half_w, half_h, |h| h.max(magnitude));
                }
                return;
            }
        }
    };
    for _ in 0..n_obstacles {
        place(&mut r, &mut grid, false);
    }
    if ood {
        let n_pits = 1 + rng::next_index(&mut r, 4);
        for _ in 0..n_pits {
            place(&mut r, &mut grid, true);
        }
    }
    Ok(grid)
}

/// Planar pose; yaw is wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % core::f64::consts::TAU;
    if a <= -core::f64::consts::PI {
        a += core::f64::consts::TAU;
    } else if a > core::f64::consts::PI {
        a -= core::f64::consts::TAU;
    }
    a
}

impl RobotPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        RobotPose {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropKind {
    Local,
    Extended,
}

impl CropKind {
    pub fn rows(self) -> usize {
        match self {
            CropKind::Local => LOCAL_ROWS,
            CropKind::Extended => EXTENDED_ROWS,
        }
    }

    pub fn cols(self) -> usize {
        match self {
            CropKind::Local => LOCAL_COLS,
            CropKind::Extended => EXTENDED_COLS,
        }
    }

    pub fn cell_count(self) -> usize {
        self.rows() * self.cols()
    }
}

/// Robot-centered, yaw-aligned crop in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub kind: CropKind,
    pub cells: Vec<f64>,
}

/// Row/column offsets of the local block inside the extended crop.
pub const NESTED_ROW_OFFSET: usize = (EXTENDED_ROWS - LOCAL_ROWS) / 2;
pub const NESTED_COL_OFFSET: usize = (EXTENDED_COLS - LOCAL_COLS) / 2;

/// Samples a robot-centered, yaw-aligned crop with nearest-neighbor
/// lookup; points off the terrain read height 0. Crop row `i`, column
/// `j` sits at forward offset `(i - (rows-1)/2) * 0.1` and left offset
/// `(j - (cols-1)/2) * 0.1` in the body frame, so the local crop is
/// exactly the central block of the extended crop at the same pose.
pub fn crop_heightmap(
    terrain: &TerrainGrid,
    pose: &RobotPose,
    kind: CropKind,
) -> Result<HeightMap, WorldError> {
    if !terrain.contains(pose.x, pose.y) {
        return Err(WorldError::PoseOutOfBounds {
            x: pose.x,
            y: pose.y,
        });
    }
    let (rows, cols) = (kind.rows(), kind.cols());
    let (sin, cos) = pose.yaw.sin_cos();
    let mut cells = Vec::with_capacity(rows * cols);
    let rc = (rows as f64 - 1.0) / 2.0;
    let cc = (cols as f64 - 1.0) / 2.0;
    for i in 0..rows {
        let fwd = (i as f64 - rc) * CELL_M;
        for j in 0..cols {
            let left = (j as f64 - cc) * CELL_M;
            let x = pose.x + fwd * cos - left * sin;
            let y = pose.y + fwd * sin + left * cos;
            cells.push(normalize_height(terrain.height_at_world(x, y)));
        }
    }
    Ok(HeightMap { kind, cells })
}

/// Planar body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyCommand {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

/// 32-wide conditioning vector: body-frame goal (2), goal distance,
/// heading-error sin and cos, current command (3), previous command
/// (3), then zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVec(pub [f64; COND_DIM]);

impl ConditionVec {
    pub fn zeros() -> Self {
        ConditionVec([0.0; COND_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Builds the condition vector for a pose/goal/command trio. A goal
/// coincident with the robot yields the all-zero vector (heading error
/// is undefined there, so its sin/cos encode as zero).
pub fn make_condition(
    pose: &RobotPose,
    goal: (f64, f64),
    cmd: &BodyCommand,
    prev_cmd: &BodyCommand,
) -> ConditionVec {
    let (sin, cos) = pose.yaw.sin_cos();
    let dx = goal.0 - pose.x;
    let dy = goal.1 - pose.y;
    let body_x = cos * dx + sin * dy;
    let body_y = -sin * dx + cos * dy;
    let dist = (body_x * body_x + body_y * body_y).sqrt();
    let mut c = [0.0; COND_DIM];
    if dist >= 1e-9 {
        let heading_err = body_y.atan2(body_x);
        c[0] = body_x;
        c[1] = body_y;
        c[2] = dist;
        c[3] = heading_err.sin();
        c[4] = heading_err.cos();
    }
    c[5] = cmd.vx;
    c[6] = cmd.vy;
    c[7] = cmd.omega;
    c[8] = prev_cmd.vx;
    c[9] = prev_cmd.vy;
    c[10] = prev_cmd.omega;
    ConditionVec(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    TestId,
    TestOod,
}

impl Split {
    pub fn id(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::TestId => 1,
            Split::TestOod => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Split::Train),
            1 => Some(Split::TestId),
            2 => Some(Split::TestOod),
            _ => None,
        }
    }
}

/// One dataset record: latents of the same scene from both frozen
/// encoders plus the conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPairSample {
    pub z_local: Vec<f64>,
    pub z_extended: Vec<f64>,
    pub condition: ConditionVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub latent_dim: usize,
    pub samples: Vec<LatentPairSample>,
}

impl Dataset {
    pub fn new(split: Split, latent_dim: usize) -> Self {
        Dataset {
            split,
            latent_dim,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: LatentPairSample) -> Result<(), WorldError> {
        if sample.z_local.len() != self.latent_dim {
            return Err(WorldError::LatentDimMismatch {
                want: self.latent_dim,
                got: sample.z_local.len(),
            });
        }
        if sample.z_extended.len() != self.latent_dim {
            return Err(WorldError::LatentDimMismatch {
                want: self.latent_dim,
                got: sample.z_extended.len(),
            });
        }
        self.samples.push(sample);
        Ok(())
    }
}

/// Serializes to the `LFDS` layout: magic, version, split id, sample
/// count, latent dim, then per sample `z_local`, `z_extended`,
/// `condition` as little-endian `f32`.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(&DATASET_MAGIC);
    w.put_u8(ds.split.id());
    w.put_u64(ds.samples.len() as u64);
    w.put_u32(ds.latent_dim as u32);
    for s in &ds.samples {
        for &v in &s.z_local {
            w.put_f32(v as f32);
        }
        for &v in &s.z_extended {
            w.put_f32(v as f32);
        }
        for &v in s.condition.as_slice() {
            w.put_f32(v as f32);
        }
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, CodecError> {
    let mut r = Reader::new(bytes, &DATASET_MAGIC)?;
    let split = Split::from_id(r.take_u8()?)
        .ok_or_else(|| CodecError::Invalid("unknown split id".into()))?;
    let count = r.take_u64()? as usize;
    let d = r.take_u32()? as usize;
    if d == 0 {
        return Err(CodecError::Invalid("zero latent dimension".into()));
    }
    let mut ds = Dataset::new(split, d);
    for _ in 0..count {
        let mut z_local = Vec::with_capacity(d);
        for _ in 0..d {
            z_local.push(r.take_f32()? as f64);
        }
        let mut z_extended = Vec::with_capacity(d);
        for _ in 0..d {
            z_extended.push(r.take_f32()? as f64);
        }
        let mut c = [0.0; COND_DIM];
        for v in &mut c {
            *v = r.take_f32()? as f64;
        }
        ds.samples.push(LatentPairSample {
            z_local,
            z_extended,
            condition: ConditionVec(c),
        });
    }
    r.expect_end()?;
    Ok(ds)
}
