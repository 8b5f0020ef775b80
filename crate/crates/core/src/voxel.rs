//! Classified voxel map of the object under reconstruction.
//!
//! Voxels start as [`VoxelState::None`] and are classified from depth
//! observations: the voxel holding a surface point becomes `Occupied`,
//! voxels a sensor ray crosses before reaching any occupied voxel become
//! `Empty`, and untouched voxels behind an occupied one (inside the object
//! box `B`) become `Unknown`. After each observation, unknown voxels that
//! touch both empty and occupied space are promoted to `Frontier`.
//!
//! Allowed transitions:
//!
//! ```text
//! None     -> Empty | Occupied | Unknown
//! Unknown  -> Frontier | Empty | Occupied
//! Frontier -> Empty | Occupied | Unknown
//! Empty    -> Occupied
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{NbvError, Result};
use crate::geometry::Aabb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum VoxelState {
    #[default]
    None = 0,
    Empty = 1,
    Occupied = 2,
    Unknown = 3,
    Frontier = 4,
}

impl VoxelState {
    pub fn transition_allowed(from: VoxelState, to: VoxelState) -> bool {
        use VoxelState::*;
        from == to
            || matches!(
                (from, to),
                (None, Empty | Occupied | Unknown)
                    | (Unknown, Frontier | Empty | Occupied)
                    | (Frontier, Empty | Occupied | Unknown)
                    | (Empty, Occupied)
            )
    }
}

/// Integer voxel coordinates `(x, y, z)`.
pub type VoxelIndex = [usize; 3];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateCounts {
    pub none: usize,
    pub empty: usize,
    pub occupied: usize,
    pub unknown: usize,
    pub frontier: usize,
}

/// State changes made by one [`VoxelGrid::integrate_observation`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationDelta {
    pub to_occupied: usize,
    pub to_empty: usize,
    pub to_unknown: usize,
}

/// Surface points seen from one sensor position.
#[derive(Debug, Clone)]
pub struct Observation {
    pub points: Vec<Point3<f64>>,
    pub sensor_origin: Point3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Point3<f64>,
    resolution: f64,
    dims: [usize; 3],
    states: Vec<VoxelState>,
    bbox: Option<Aabb>,
}

impl VoxelGrid {
    pub fn new(origin: Point3<f64>, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        if !(resolution > 0.0) || dims.contains(&0) {
            return Err(NbvError::InvalidArgument(format!(
                "grid needs positive resolution and extents, got {resolution} / {dims:?}"
            )));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            states: vec![VoxelState::None; dims[0] * dims[1] * dims[2]],
            bbox: None,
        })
    }

    /// Grid covering `span`, snapped outward to whole voxels.
    pub fn covering(span: &Aabb, resolution: f64) -> Result<Self> {
        let ext = span.extent();
        let dims = [0, 1, 2].map(|k| ((ext[k] / resolution).ceil() as usize).max(1));
        Self::new(span.min, resolution, dims)
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bbox(&self) -> Option<Aabb> {
        self.bbox
    }

    pub fn set_bbox(&mut self, bbox: Aabb) {
        self.ensure_covers(&bbox);
        self.bbox = Some(bbox);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Spatial extent of the whole grid.
    pub fn span(&self) -> Aabb {
        let max = self.origin
            + Vector3::new(
                self.dims[0] as f64,
                self.dims[1] as f64,
                self.dims[2] as f64,
            ) * self.resolution;
        Aabb::new(self.origin, max)
    }

    pub fn linear(&self, idx: VoxelIndex) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn coords(&self, linear: usize) -> VoxelIndex {
        let x = linear % self.dims[0];
        let y = (linear / self.dims[0]) % self.dims[1];
        let z = linear / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    pub fn voxel_of(&self, p: &Point3<f64>) -> Option<VoxelIndex> {
        let rel = (p - self.origin) / self.resolution;
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let f = rel[k].floor();
            if !(f >= 0.0 && f < self.dims[k] as f64) {
                return None;
            }
            idx[k] = f as usize;
        }
        Some(idx)
    }

    pub fn center(&self, idx: VoxelIndex) -> Point3<f64> {
        self.origin
            + Vector3::new(
                idx[0] as f64 + 0.5,
                idx[1] as f64 + 0.5,
                idx[2] as f64 + 0.5,
            ) * self.resolution
    }

    pub fn voxel_box(&self, idx: VoxelIndex) -> Aabb {
        let min = self.origin
            + Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.resolution;
        Aabb::new(min, min + Vector3::repeat(self.resolution))
    }

    pub fn state(&self, idx: VoxelIndex) -> VoxelState {
        self.states[self.linear(idx)]
    }

    pub fn states(&self) -> &[VoxelState] {
        &self.states
    }

    /// Direct state write; panics in debug builds on a disallowed transition.
    pub fn set_state(&mut self, idx: VoxelIndex, to: VoxelState) {
        let li = self.linear(idx);
        debug_assert!(
            VoxelState::transition_allowed(self.states[li], to),
            "illegal transition {:?} -> {:?}",
            self.states[li],
            to
        );
        self.states[li] = to;
    }

    /// Test/fixture helper: overwrite a state without transition checks.
    pub fn force_state(&mut self, idx: VoxelIndex, to: VoxelState) {
        let li = self.linear(idx);
        self.states[li] = to;
    }

    pub fn counts(&self) -> StateCounts {
        let mut c = StateCounts::default();
        for s in &self.states {
            match s {
                VoxelState::None => c.none += 1,
                VoxelState::Empty => c.empty += 1,
                VoxelState::Occupied => c.occupied += 1,
                VoxelState::Unknown => c.unknown += 1,
                VoxelState::Frontier => c.frontier += 1,
            }
        }
        c
    }

    /// All voxels in `state`, in linear-index order.
    pub fn voxels_in(&self, state: VoxelState) -> Vec<VoxelIndex> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == state)
            .map(|(i, _)| self.coords(i))
            .collect()
    }

    pub fn centers_in(&self, state: VoxelState) -> Vec<Point3<f64>> {
        self.voxels_in(state)
            .into_iter()
            .map(|i| self.center(i))
            .collect()
    }

    /// Grows the grid (copying states) until it spans `target`.
    pub fn ensure_covers(&mut self, target: &Aabb) {
        let span = self.span();
        if span.contains_box(target) {
            return;
        }
        let res = self.resolution;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..3 {
            let below = ((self.origin[k] - target.min[k]) / res).ceil().max(0.0) as i64;
            let above = ((target.max[k] - span.max[k]) / res).ceil().max(0.0) as i64;
            lo[k] = below;
            hi[k] = above;
        }
        let new_dims = [0, 1, 2].map(|k| self.dims[k] + (lo[k] + hi[k]) as usize);
        let new_origin = self.origin - Vector3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * res;
        let mut grown = VoxelGrid::new(new_origin, res, new_dims).expect("valid dims");
        for (li, s) in self.states.iter().enumerate() {
            if *s != VoxelState::None {
                let c = self.coords(li);
                let moved = [0, 1, 2].map(|k| c[k] + lo[k] as usize);
                let nli = grown.linear(moved);
                grown.states[nli] = *s;
            }
        }
        log::debug!("voxel grid grown {:?} -> {:?}", self.dims, new_dims);
        self.origin = new_origin;
        self.dims = new_dims;
        self.states = grown.states;
    }

    /// Voxels pierced by the segment `start → end`, ordered by entry distance.
    ///
    /// Uses incremental grid traversal (Amanatides–Woo) after clipping the
    /// segment to the grid.
    pub fn traverse_ray(&self, start: &Point3<f64>, end: &Point3<f64>) -> Vec<VoxelIndex> {
        let mut out = Vec::new();
        self.walk_ray(start, end, |idx| {
            out.push(idx);
            true
        });
        out
    }

    /// Visits voxels along the segment in order until `visit` returns false.
    pub fn walk_ray(
        &self,
        start: &Point3<f64>,
        end: &Point3<f64>,
        mut visit: impl FnMut(VoxelIndex) -> bool,
    ) {
        let dir = end - start;
        if dir.norm_squared() == 0.0 {
            if let Some(idx) = self.voxel_of(start) {
                visit(idx);
            }
            return;
        }
        let Some((t0, t1)) = self.span().ray_interval(start, &dir) else {
            return;
        };
        let (t0, t1) = (t0.max(0.0), t1.min(1.0));
        if t0 > t1 {
            return;
        }
        let entry = start + dir * t0;
        let res = self.resolution;
        let mut cur = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for k in 0..3 {
            let rel = (entry[k] - self.origin[k]) / res;
            cur[k] = (rel.floor() as i64).clamp(0, self.dims[k] as i64 - 1);
            if dir[k] > 0.0 {
                step[k] = 1;
                let boundary = self.origin[k] + (cur[k] + 1) as f64 * res;
                t_max[k] = (boundary - start[k]) / dir[k];
                t_delta[k] = res / dir[k];
            } else if dir[k] < 0.0 {
                step[k] = -1;
                let boundary = self.origin[k] + cur[k] as f64 * res;
                t_max[k] = (boundary - start[k]) / dir[k];
                t_delta[k] = -res / dir[k];
            }
        }
        loop {
            if !visit([cur[0] as usize, cur[1] as usize, cur[2] as usize]) {
                return;
            }
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] >= t1 {
                return;
            }
            cur[axis] += step[axis];
            if cur[axis] < 0 || cur[axis] >= self.dims[axis] as i64 {
                return;
            }
            t_max[axis] += t_delta[axis];
        }
    }

    /// Applies one observation: surface points mark `Occupied`, ray prefixes
    /// mark `Empty`, untouched voxels behind the first occupied voxel (and
    /// inside `B`) mark `Unknown`.
    pub fn integrate_observation(&mut self, obs: &Observation) -> IntegrationDelta {
        let mut delta = IntegrationDelta::default();
        for p in &obs.points {
            if let Some(idx) = self.voxel_of(p) {
                if self.state(idx) != VoxelState::Occupied {
                    self.set_state(idx, VoxelState::Occupied);
                    delta.to_occupied += 1;
                }
            }
        }
        let bbox = self.bbox;
        let reach = bbox.map(|b| b.diagonal()).unwrap_or(0.0);
        for p in &obs.points {
            let dir = p - obs.sensor_origin;
            let len = dir.norm();
            if len == 0.0 {
                continue;
            }
            let far = p + dir / len * reach;
            let mut blocked = false;
            let mut pending: Vec<(VoxelIndex, VoxelState)> = Vec::new();
            self.walk_ray(&obs.sensor_origin, &far, |idx| {
                let li = self.linear(idx);
                let st = self.states[li];
                if !blocked {
                    if st == VoxelState::Occupied {
                        blocked = true;
                    } else if st != VoxelState::Empty {
                        pending.push((idx, VoxelState::Empty));
                    }
                    true
                } else {
                    if st == VoxelState::None && bbox.is_some_and(|b| b.contains(&self.center(idx)))
                    {
                        pending.push((idx, VoxelState::Unknown));
                    }
                    true
                }
            });
            for (idx, to) in pending {
                let cur = self.state(idx);
                match to {
                    VoxelState::Empty
                        if cur != VoxelState::Occupied && cur != VoxelState::Empty =>
                    {
                        self.set_state(idx, VoxelState::Empty);
                        delta.to_empty += 1;
                    }
                    VoxelState::Unknown if cur == VoxelState::None => {
                        self.set_state(idx, VoxelState::Unknown);
                        delta.to_unknown += 1;
                    }
                    _ => {}
                }
            }
        }
        delta
    }

    /// `true` iff the 26-neighborhood of `idx` holds both an empty and an
    /// occupied voxel.
    pub fn frontier_predicate(&self, idx: VoxelIndex) -> bool {
        let mut has_empty = false;
        let mut has_occ = false;
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = [idx[0] as i64 + dx, idx[1] as i64 + dy, idx[2] as i64 + dz];
                    if (0..3).any(|k| n[k] < 0 || n[k] >= self.dims[k] as i64) {
                        continue;
                    }
                    match self.state([n[0] as usize, n[1] as usize, n[2] as usize]) {
                        VoxelState::Empty => has_empty = true,
                        VoxelState::Occupied => has_occ = true,
                        _ => {}
                    }
                    if has_empty && has_occ {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Reclassifies every unknown/frontier voxel by the frontier predicate
    /// and returns the frontier set.
    pub fn update_frontier(&mut self) -> Vec<VoxelIndex> {
        let candidates: Vec<usize> = self
            .states
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, VoxelState::Unknown | VoxelState::Frontier))
            .map(|(i, _)| i)
            .collect();
        let decided: Vec<(usize, bool)> = candidates
            .iter()
            .map(|&li| (li, self.frontier_predicate(self.coords(li))))
            .collect();
        let mut frontier = Vec::new();
        for (li, is_frontier) in decided {
            self.states[li] = if is_frontier {
                frontier.push(self.coords(li));
                VoxelState::Frontier
            } else {
                VoxelState::Unknown
            };
        }
        frontier
    }

    /// Recomputes the object box `B`.
    ///
    /// First frame: the occupied box stretched along `view_direction` until
    /// its diagonal doubles. Later frames: the smallest box covering occupied
    /// and unknown voxels plus a sphere of radius `gamma` around every
    /// frontier voxel center.
    pub fn update_bbox(
        &mut self,
        view_direction: &Vector3<f64>,
        first_frame: bool,
        gamma: f64,
    ) -> Result<Aabb> {
        let mut occ: Option<Aabb> = None;
        let mut rest: Option<Aabb> = None;
        let grow = |acc: &mut Option<Aabb>, b: Aabb| {
            *acc = Some(match acc {
                Some(a) => a.union(&b),
                None => b,
            });
        };
        for (li, s) in self.states.iter().enumerate() {
            let idx = self.coords(li);
            match s {
                VoxelState::Occupied => grow(&mut occ, self.voxel_box(idx)),
                VoxelState::Unknown if !first_frame => grow(&mut rest, self.voxel_box(idx)),
                VoxelState::Frontier if !first_frame => grow(
                    &mut rest,
                    Aabb::from_center_half(self.center(idx), Vector3::repeat(gamma)),
                ),
                _ => {}
            }
        }
        let occ = occ.ok_or(NbvError::EmptyFirstObservation)?;
        let bbox = if first_frame {
            stretch_along(&occ, view_direction)
        } else {
            match rest {
                Some(r) => occ.union(&r),
                None => occ,
            }
        };
        self.set_bbox(bbox);
        Ok(bbox)
    }

    /// ASCII PLY of all classified voxel centers with an integer state.
    pub fn write_ply(&self, path: &Path) -> Result<()> {
        let marked: Vec<usize> = (0..self.states.len())
            .filter(|&i| self.states[i] != VoxelState::None)
            .collect();
        let mut out = String::new();
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", marked.len());
        out.push_str("property float x\nproperty float y\nproperty float z\nproperty int state\nend_header\n");
        for li in marked {
            let c = self.center(self.coords(li));
            let _ = writeln!(
                out,
                "{} {} {} {}",
                c.x as f32, c.y as f32, c.z as f32, self.states[li] as u8
            );
        }
        std::fs::write(path, out).map_err(|e| NbvError::io(path, e))
    }
}

/// Extends `b` on the far side along `dir` until the diagonal doubles.
pub fn stretch_along(b: &Aabb, dir: &Vector3<f64>) -> Aabb {
    let n = dir.norm();
    if !(n > 0.0) {
        return *b;
    }
    let u = dir / n;
    let e = b.extent();
    let d2 = e.norm_squared();
    // |e + s·|u||² = 4·|e|²
    let lin: f64 = (0..3).map(|k| e[k] * u[k].abs()).sum();
    let s = -lin + (lin * lin + 3.0 * d2).sqrt();
    let mut out = *b;
    for k in 0..3 {
        if u[k] > 0.0 {
            out.max[k] += s * u[k];
        } else {
            out.min[k] += s * u[k];
        }
    }
    out
}

/// Keeps the first point in each cubic cell of edge `spacing`.
pub fn dedup_points(points: &[Point3<f64>], spacing: f64) -> Vec<Point3<f64>> {
    let mut seen = HashSet::with_capacity(points.len());
    points
        .iter()
        .filter(|p| {
            let key = [0, 1, 2].map(|k| (p[k] / spacing).floor() as i64);
            seen.insert(key)
        })
        .copied()
        .collect()
}

/// Crops to `workspace`, then deduplicates at `spacing`.
pub fn preprocess(points: &[Point3<f64>], workspace: &Aabb, spacing: f64) -> Vec<Point3<f64>> {
    let cropped: Vec<Point3<f64>> = points
        .iter()
        .filter(|p| workspace.contains(p))
        .copied()
        .collect();
    dedup_points(&cropped, spacing)
}
