//! Height-map corpus for VAE pretraining: robot-centered crops from
//! fresh procedural terrains at uniformly sampled free-cell poses. A
//! configured fraction of the terrains carries pits so the encoders
//! cover the out-of-distribution geometry they will later be asked to
//! embed.

use anyhow::Result;
use latflow_core::nav::OBSTACLE_HEIGHT_M;
use latflow_core::rng::{self, streams};
use latflow_core::world::{
    crop_heightmap, generate_terrain, wrap_angle, CropKind, HeightMap, RobotPose, CELL_M,
    GRID_CELLS,
};

pub fn build_crop_corpus(
    kind: CropKind,
    size: usize,
    seed: u64,
    density_range: (f64, f64),
    pit_fraction: f64,
) -> Result<Vec<HeightMap>> {
    let mut corpus = Vec::with_capacity(size);
    for i in 0..size {
        let mut rng = rng::stream(seed, streams::TERRAIN, i as u64);
        let density = rng::next_range(&mut rng, density_range.0, density_range.1);
        let ood = rng::next_f64(&mut rng) < pit_fraction;
        let terrain = generate_terrain(rng::mix(seed, streams::TERRAIN, i as u64), density, ood)?;
        let mut free = Vec::new();
        for row in 0..GRID_CELLS {
            for col in 0..GRID_CELLS {
                if terrain.height_at_cell(row, col).abs() <= OBSTACLE_HEIGHT_M {
                    free.push((row, col));
                }
            }
        }
        let (row, col) = free[rng::next_index(&mut rng, free.len())];
        let pose = RobotPose::new(
            (col as f64 + 0.5) * CELL_M,
            (row as f64 + 0.5) * CELL_M,
            wrap_angle(rng::next_range(
                &mut rng,
                -std::f64::consts::PI,
                std::f64::consts::PI,
            )),
        );
        corpus.push(crop_heightmap(&terrain, &pose, kind)?);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use latflow_core::world::normalize_height;

    #[test]
    fn corpus_is_deterministic_and_varied() {
        let a = build_crop_corpus(CropKind::Local, 8, 5, (0.05, 0.3), 0.25).unwrap();
        let b = build_crop_corpus(CropKind::Local, 8, 5, (0.05, 0.3), 0.25).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
        assert!(a.iter().any(|m| m != &a[0]));
        let flat = normalize_height(0.0);
        assert!(a
            .iter()
            .any(|m| m.cells.iter().any(|&c| (c - flat).abs() > 1e-9)));
    }

    #[test]
    fn pit_fraction_one_yields_negative_heights_somewhere() {
        let corpus = build_crop_corpus(CropKind::Extended, 12, 9, (0.05, 0.3), 1.0).unwrap();
        let flat = normalize_height(0.0);
        assert!(corpus
            .iter()
            .any(|m| m.cells.iter().any(|&c| c < flat - 1e-6)));
    }
}
