//! Ray-casting view evaluation: counts the frontier voxels a camera can see
//! by walking per-pixel rays through the voxel grid. Used as the reference
//! the projection score is compared and timed against.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{NbvError, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::sampling::CandidateView;
use crate::voxel::{VoxelGrid, VoxelState};

pub const DEFAULT_STRIDE: u32 = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleScore {
    pub visible_frontier: usize,
    pub visible_occupied: usize,
    pub rays_cast: usize,
}

/// Pixel coordinates sampled at `stride`.
pub fn stride_pixels(
    intrinsics: &CameraIntrinsics,
    stride: u32,
) -> impl Iterator<Item = (u32, u32)> + '_ {
    let s = stride.max(1) as usize;
    (0..intrinsics.height)
        .step_by(s)
        .flat_map(move |v| (0..intrinsics.width).step_by(s).map(move |u| (u, v)))
}

/// Casts one ray per `stride`-th pixel. A frontier or occupied voxel counts
/// as visible when some ray reaches it before any occupied voxel; the first
/// occupied voxel on a ray is itself visible.
pub fn oracle_evaluate(
    pose: &Pose,
    grid: &VoxelGrid,
    intrinsics: &CameraIntrinsics,
    stride: u32,
) -> OracleScore {
    let origin = pose.position();
    let rot = pose.rotation;
    let mut frontier = HashSet::new();
    let mut occupied = HashSet::new();
    let mut rays = 0;
    for (u, v) in stride_pixels(intrinsics, stride) {
        rays += 1;
        let dir = rot * intrinsics.pixel_ray(u as f64, v as f64);
        let end = origin + dir * intrinsics.max_range;
        grid.walk_ray(&origin, &end, |idx| match grid.state(idx) {
            VoxelState::Frontier => {
                frontier.insert(grid.linear(idx));
                true
            }
            VoxelState::Occupied => {
                occupied.insert(grid.linear(idx));
                false
            }
            _ => true,
        });
    }
    OracleScore {
        visible_frontier: frontier.len(),
        visible_occupied: occupied.len(),
        rays_cast: rays,
    }
}

/// Scores every candidate concurrently; output order follows the input.
pub fn oracle_evaluate_all(
    candidates: &[CandidateView],
    grid: &VoxelGrid,
    intrinsics: &CameraIntrinsics,
    stride: u32,
) -> Vec<OracleScore> {
    candidates
        .par_iter()
        .map(|c| oracle_evaluate(&c.pose, grid, intrinsics, stride))
        .collect()
}

/// Candidate positions sorted by `visible_frontier`, descending and stable.
pub fn oracle_rank(scores: &[OracleScore]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].visible_frontier.cmp(&scores[a].visible_frontier));
    order
}

/// One row of the oracle benchmark dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTiming {
    pub index: usize,
    pub score: OracleScore,
    pub seconds: f64,
}

/// Sequential, individually timed evaluation for the benchmark CSV.
pub fn oracle_benchmark(
    candidates: &[CandidateView],
    grid: &VoxelGrid,
    intrinsics: &CameraIntrinsics,
    stride: u32,
) -> Vec<OracleTiming> {
    candidates
        .iter()
        .map(|c| {
            let t = Instant::now();
            let score = oracle_evaluate(&c.pose, grid, intrinsics, stride);
            OracleTiming {
                index: c.index,
                score,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

pub fn write_benchmark_csv(path: &Path, rows: &[OracleTiming]) -> Result<()> {
    let mut out = String::from("index,visible_frontier,visible_occupied,eval_time_s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.index, r.score.visible_frontier, r.score.visible_occupied, r.seconds
        );
    }
    std::fs::write(path, out).map_err(|e| NbvError::io(path, e))
}
