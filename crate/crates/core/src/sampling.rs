//! Candidate viewpoints on a (partial) sphere around the object box.
//!
//! Views sit on `α` parallels, with counts proportional to each parallel's
//! circumference, and all look at the box center. The sphere radius tracks
//! the box: `R = d_c + diag(B)/2`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{NbvError, Result};
use crate::geometry::{Aabb, Pose};

/// Polar band used in hemisphere mode, measured from the up axis.
pub const HEMISPHERE_POLAR_DEG: (f64, f64) = (15.0, 85.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Hemisphere,
    FullSphere,
}

impl std::str::FromStr for SamplingMode {
    type Err = NbvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hemisphere" | "hemi" => Ok(SamplingMode::Hemisphere),
            "full_sphere" | "full" => Ok(SamplingMode::FullSphere),
            other => Err(NbvError::Config(format!("unknown sampling mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingMode::Hemisphere => "hemisphere",
            SamplingMode::FullSphere => "full_sphere",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    /// Number of parallels `α`.
    pub parallels: usize,
    /// Total candidate count `N`.
    pub count: usize,
    /// Camera working distance `d_c` (m).
    pub working_distance: f64,
    pub up: Vector3<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            mode: SamplingMode::FullSphere,
            parallels: 8,
            count: 800,
            working_distance: 0.4,
            up: Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoords {
    pub radius: f64,
    pub polar: f64,
    pub azimuth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateView {
    pub index: usize,
    pub pose: Pose,
    pub spherical: SphericalCoords,
    pub partition: usize,
    pub score: Option<f64>,
}

pub fn sampling_radius(bbox: &Aabb, working_distance: f64) -> f64 {
    working_distance + bbox.diagonal() / 2.0
}

/// Orthonormal `(e1, e2)` spanning the plane normal to `up`; azimuth 0 is
/// along `e1`.
pub fn azimuth_basis(up: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let up = up.normalize();
    let seed = if up.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (seed - up * seed.dot(&up)).normalize();
    let e2 = up.cross(&e1);
    (e1, e2)
}

pub fn point_on_sphere(
    center: &Point3<f64>,
    radius: f64,
    polar: f64,
    azimuth: f64,
    up: &Vector3<f64>,
) -> Point3<f64> {
    let (e1, e2) = azimuth_basis(up);
    let u = up.normalize();
    center
        + (e1 * (polar.sin() * azimuth.cos())
            + e2 * (polar.sin() * azimuth.sin())
            + u * polar.cos())
            * radius
}

/// Polar angles of the `α` parallels.
///
/// Full sphere: interior points of an even split of `[0, π]`, so the poles
/// are avoided. Hemisphere: evenly spaced across the fixed polar band,
/// endpoints included.
pub fn parallel_polars(mode: SamplingMode, parallels: usize) -> Vec<f64> {
    match mode {
        SamplingMode::FullSphere => (0..parallels)
            .map(|i| PI * (i + 1) as f64 / (parallels + 1) as f64)
            .collect(),
        SamplingMode::Hemisphere => {
            let (lo, hi) = (
                HEMISPHERE_POLAR_DEG.0.to_radians(),
                HEMISPHERE_POLAR_DEG.1.to_radians(),
            );
            if parallels == 1 {
                vec![(lo + hi) / 2.0]
            } else {
                (0..parallels)
                    .map(|i| lo + (hi - lo) * i as f64 / (parallels - 1) as f64)
                    .collect()
            }
        }
    }
}

/// Splits `total` proportionally to `weights` by largest remainder; ties go
/// to the lower index.
pub fn proportional_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn partition_of(azimuth: f64, beta: usize) -> usize {
    let a = azimuth.rem_euclid(TAU);
    ((a / (TAU / beta as f64)).floor() as usize).min(beta - 1)
}

pub fn sample_candidates(
    cfg: &SamplingConfig,
    center: &Point3<f64>,
    radius: f64,
) -> Result<Vec<CandidateView>> {
    if !(radius > 0.0) {
        return Err(NbvError::InvalidArgument(format!(
            "sampling radius {radius}"
        )));
    }
    if cfg.parallels == 0 || cfg.count < cfg.parallels {
        return Err(NbvError::InvalidArgument(format!(
            "need N ≥ α ≥ 1, got N={} α={}",
            cfg.count, cfg.parallels
        )));
    }
    let polars = parallel_polars(cfg.mode, cfg.parallels);
    let weights: Vec<f64> = polars.iter().map(|p| p.sin()).collect();
    let counts = proportional_counts(&weights, cfg.count);
    let mut views = Vec::with_capacity(cfg.count);
    for (ring, (&polar, &n)) in polars.iter().zip(&counts).enumerate() {
        if n == 0 {
            continue;
        }
        let step = TAU / n as f64;
        // odd parallels are offset by half a step
        let phase = if ring % 2 == 1 { step / 2.0 } else { 0.0 };
        for j in 0..n {
            let azimuth = phase + step * j as f64;
            let pos = point_on_sphere(center, radius, polar, azimuth, &cfg.up);
            let pose = Pose::look_at(pos, *center, cfg.up)?;
            views.push(CandidateView {
                index: views.len(),
                pose,
                spherical: SphericalCoords {
                    radius,
                    polar,
                    azimuth,
                },
                partition: 0,
                score: None,
            });
        }
    }
    Ok(views)
}

pub fn assign_partitions(views: &mut [CandidateView], beta: usize) -> Result<()> {
    if beta == 0 {
        return Err(NbvError::InvalidArgument("β must be ≥ 1".into()));
    }
    for v in views {
        v.partition = partition_of(v.spherical.azimuth, beta);
    }
    Ok(())
}

/// CSV of `index,x,y,z,polar,azimuth,partition`.
pub fn write_candidates_csv(path: &Path, views: &[CandidateView]) -> Result<()> {
    let mut out = String::from("index,x,y,z,polar,azimuth,partition\n");
    for v in views {
        let p = v.pose.position();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            v.index, p.x, p.y, p.z, v.spherical.polar, v.spherical.azimuth, v.partition
        );
    }
    std::fs::write(path, out).map_err(|e| NbvError::io(path, e))
}
