//! Viewpoint scoring by ellipsoid projection.
//!
//! Each ellipsoid's dual quadric `Q*` is pushed through the camera matrix,
//! `Φ* = P Q* Pᵀ`, giving the dual of its silhouette conic. The visible
//! area of that ellipse (clipped to the image) is weighted by `0.5^r`,
//! where `r` is the ellipsoid's depth rank among all ellipsoids, and the
//! view score is frontier mass minus occupied mass.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Matrix4, SymmetricEigen, Vector2};
use rayon::prelude::*;

use crate::ellipsoid::{Ellipsoid, EllipsoidKind, EllipsoidSet};
use crate::error::{NbvError, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::sampling::CandidateView;

/// Segments of the polygon standing in for the ellipse when clipping.
pub const ELLIPSE_SEGMENTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedEllipse {
    /// Point conic `Φ` with `xᵀΦx = 0` on the outline (homogeneous pixels).
    pub conic: Matrix3<f64>,
    pub center: Vector2<f64>,
    /// `(major, minor)` semi-axes in pixels.
    pub semi_axes: (f64, f64),
    /// Major axis angle from +u, radians.
    pub orientation: f64,
    /// Area inside the image rectangle, pixels².
    pub area: f64,
    pub valid: bool,
}

impl ProjectedEllipse {
    fn invalid() -> Self {
        Self {
            conic: Matrix3::zeros(),
            center: Vector2::zeros(),
            semi_axes: (0.0, 0.0),
            orientation: 0.0,
            area: 0.0,
            valid: false,
        }
    }

    /// Normalized inside test: `(x−c)ᵀ M (x−c) ≤ 1`.
    fn shape(&self) -> Matrix2<f64> {
        let (a, b) = self.semi_axes;
        let (s, c) = self.orientation.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        r * Matrix2::new(1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b)) * r.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEllipsoid<'a> {
    pub ellipsoid: &'a Ellipsoid,
    /// Depth of the center in the camera frame (m).
    pub camera_z: f64,
    pub rank: usize,
    pub weight: f64,
}

/// Per-ellipsoid contribution to a view score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub kind: EllipsoidKind,
    pub cluster: usize,
    pub rank: usize,
    pub weight: f64,
    pub area: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewScore {
    pub f: f64,
    pub frontier_mass: f64,
    pub occupied_mass: f64,
    pub breakdown: Vec<Contribution>,
}

/// How the visible ellipse area is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AreaMethod {
    /// Polygon clipped to the image rectangle, shoelace area.
    #[default]
    Analytic,
    /// Count of pixel centers inside the ellipse.
    Rasterized,
}

/// Sorts all ellipsoids jointly by camera-frame depth of their centers.
///
/// Equal depths put occupied before frontier, then lower cluster index.
pub fn rank_ellipsoids<'a>(
    ellipsoids: impl IntoIterator<Item = &'a Ellipsoid>,
    pose: &Pose,
) -> Vec<RankedEllipsoid<'a>> {
    let mut items: Vec<(&Ellipsoid, f64)> = ellipsoids
        .into_iter()
        .map(|e| (e, pose.world_to_camera(&e.center).z))
        .collect();
    items.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.0.kind.cmp(&b.0.kind))
            .then(a.0.cluster.cmp(&b.0.cluster))
    });
    items
        .into_iter()
        .enumerate()
        .map(|(rank, (ellipsoid, camera_z))| RankedEllipsoid {
            ellipsoid,
            camera_z,
            rank,
            weight: 0.5f64.powi(rank as i32),
        })
        .collect()
}

pub fn project_ellipsoid(
    ellipsoid: &Ellipsoid,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<ProjectedEllipse> {
    let dual = ellipsoid.dual_quadric()?;
    Ok(project_dual(
        ellipsoid,
        &dual,
        pose,
        intrinsics,
        AreaMethod::Analytic,
    ))
}

pub fn project_ellipsoid_with(
    ellipsoid: &Ellipsoid,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    method: AreaMethod,
) -> Result<ProjectedEllipse> {
    let dual = ellipsoid.dual_quadric()?;
    Ok(project_dual(ellipsoid, &dual, pose, intrinsics, method))
}

fn project_dual(
    ellipsoid: &Ellipsoid,
    dual: &Matrix4<f64>,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    method: AreaMethod,
) -> ProjectedEllipse {
    if pose.world_to_camera(&ellipsoid.center).z <= 0.0 {
        return ProjectedEllipse::invalid();
    }
    let p = pose.projection_matrix(intrinsics);
    let dual_conic = p * dual * p.transpose();
    let Some(conic) = dual_conic.try_inverse() else {
        return ProjectedEllipse::invalid();
    };
    let conic = (conic + conic.transpose()) * 0.5;
    let mut ellipse = match ellipse_from_conic(&conic) {
        Some(e) => e,
        None => return ProjectedEllipse::invalid(),
    };
    ellipse.area = match method {
        AreaMethod::Analytic => clipped_area(&ellipse, intrinsics.width, intrinsics.height),
        AreaMethod::Rasterized => rasterized_area(&ellipse, intrinsics.width, intrinsics.height),
    };
    ellipse
}

/// Geometric ellipse of a point conic; `None` for hyperbolas, parabolas and
/// imaginary or degenerate conics.
pub fn ellipse_from_conic(conic: &Matrix3<f64>) -> Option<ProjectedEllipse> {
    let a2 = conic.fixed_view::<2, 2>(0, 0).into_owned();
    let b = Vector2::new(conic[(0, 2)], conic[(1, 2)]);
    let c = conic[(2, 2)];
    if a2.determinant() <= 0.0 {
        return None;
    }
    let a2_inv = a2.try_inverse()?;
    let center = -(a2_inv * b);
    let s = b.dot(&(a2_inv * b)) - c;
    if s == 0.0 || !s.is_finite() {
        return None;
    }
    let m = a2 / s;
    if m[(0, 0)] <= 0.0 {
        return None;
    }
    let eig = SymmetricEigen::new(m);
    let (i_major, i_minor) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let major = 1.0 / eig.eigenvalues[i_major].sqrt();
    let minor = 1.0 / eig.eigenvalues[i_minor].sqrt();
    let dir = eig.eigenvectors.column(i_major);
    let orientation = dir[1].atan2(dir[0]);
    if !(major.is_finite() && minor.is_finite()) {
        return None;
    }
    Some(ProjectedEllipse {
        conic: *conic,
        center,
        semi_axes: (major, minor),
        orientation,
        area: 0.0,
        valid: true,
    })
}

/// Image rectangle in pixel-center coordinates.
fn image_rect(width: u32, height: u32) -> (f64, f64, f64, f64) {
    (-0.5, -0.5, width as f64 - 0.5, height as f64 - 0.5)
}

/// Area of the ellipse inside the image, via a clipped polygon.
///
/// Polygon radii are scaled so the unclipped polygon has exactly the
/// ellipse's area.
pub fn clipped_area(e: &ProjectedEllipse, width: u32, height: u32) -> f64 {
    let (x0, y0, x1, y1) = image_rect(width, height);
    let (a, b) = e.semi_axes;
    let reach = a.max(b);
    let (cx, cy) = (e.center.x, e.center.y);
    if cx + reach < x0 || cx - reach > x1 || cy + reach < y0 || cy - reach > y1 {
        return 0.0;
    }
    let n = ELLIPSE_SEGMENTS as f64;
    let step = std::f64::consts::TAU / n;
    let inside = cx - reach >= x0 && cx + reach <= x1 && cy - reach >= y0 && cy + reach <= y1;
    if inside {
        return std::f64::consts::PI * a * b;
    }
    let k = (std::f64::consts::TAU / (n * step.sin())).sqrt();
    let (so, co) = e.orientation.sin_cos();
    let mut poly: Vec<[f64; 2]> = (0..ELLIPSE_SEGMENTS)
        .map(|i| {
            let (st, ct) = (i as f64 * step).sin_cos();
            let (u, v) = (k * a * ct, k * b * st);
            [cx + u * co - v * so, cy + u * so + v * co]
        })
        .collect();
    for (axis, bound, keep_greater) in
        [(0, x0, true), (0, x1, false), (1, y0, true), (1, y1, false)]
    {
        poly = clip_half_plane(&poly, axis, bound, keep_greater);
        if poly.is_empty() {
            return 0.0;
        }
    }
    shoelace(&poly)
}

fn clip_half_plane(
    poly: &[[f64; 2]],
    axis: usize,
    bound: f64,
    keep_greater: bool,
) -> Vec<[f64; 2]> {
    let inside = |p: &[f64; 2]| {
        if keep_greater {
            p[axis] >= bound
        } else {
            p[axis] <= bound
        }
    };
    let mut out = Vec::with_capacity(poly.len() + 4);
    for i in 0..poly.len() {
        let cur = poly[i];
        let prev = poly[(i + poly.len() - 1) % poly.len()];
        let (ci, pi) = (inside(&cur), inside(&prev));
        if ci != pi {
            let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
            out.push([
                prev[0] + t * (cur[0] - prev[0]),
                prev[1] + t * (cur[1] - prev[1]),
            ]);
        }
        if ci {
            out.push(cur);
        }
    }
    out
}

fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc.abs() / 2.0
}

/// Number of pixel centers inside the ellipse.
pub fn rasterized_area(e: &ProjectedEllipse, width: u32, height: u32) -> f64 {
    let m = e.shape();
    let Some(m_inv) = m.try_inverse() else {
        return 0.0;
    };
    let hx = m_inv[(0, 0)].sqrt();
    let hy = m_inv[(1, 1)].sqrt();
    let u0 = (e.center.x - hx).floor().max(0.0) as i64;
    let u1 = ((e.center.x + hx).ceil()).min(width as f64 - 1.0) as i64;
    let v0 = (e.center.y - hy).floor().max(0.0) as i64;
    let v1 = ((e.center.y + hy).ceil()).min(height as f64 - 1.0) as i64;
    let mut count = 0usize;
    for v in v0..=v1 {
        for u in u0..=u1 {
            let d = Vector2::new(u as f64, v as f64) - e.center;
            if d.dot(&(m * d)) <= 1.0 {
                count += 1;
            }
        }
    }
    count as f64
}

/// `L̂ = L · W`; invalid projections contribute nothing.
pub fn weighted_mass(ellipse: &ProjectedEllipse, weight: f64) -> f64 {
    if ellipse.valid {
        ellipse.area * weight
    } else {
        0.0
    }
}

/// Ellipsoids with their dual quadrics cached for repeated scoring.
#[derive(Debug, Clone)]
pub struct PreparedEllipsoids<'a> {
    items: Vec<(&'a Ellipsoid, Matrix4<f64>)>,
}

impl<'a> PreparedEllipsoids<'a> {
    pub fn new(set: &'a EllipsoidSet) -> Result<Self> {
        let items = set
            .iter()
            .map(|e| Ok((e, e.dual_quadric()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { items })
    }

    pub fn score(&self, pose: &Pose, intrinsics: &CameraIntrinsics) -> ViewScore {
        let ranked = rank_ellipsoids(self.items.iter().map(|(e, _)| *e), pose);
        let mut frontier_mass = 0.0;
        let mut occupied_mass = 0.0;
        let mut breakdown = Vec::with_capacity(ranked.len());
        for r in &ranked {
            let dual = self
                .items
                .iter()
                .find(|(e, _)| std::ptr::eq(*e, r.ellipsoid))
                .map(|(_, d)| d)
                .expect("ranked ellipsoid comes from the prepared set");
            let proj = project_dual(r.ellipsoid, dual, pose, intrinsics, AreaMethod::Analytic);
            let weighted = weighted_mass(&proj, r.weight);
            match r.ellipsoid.kind {
                EllipsoidKind::Frontier => frontier_mass += weighted,
                EllipsoidKind::Occupied => occupied_mass += weighted,
            }
            breakdown.push(Contribution {
                kind: r.ellipsoid.kind,
                cluster: r.ellipsoid.cluster,
                rank: r.rank,
                weight: r.weight,
                area: proj.area,
                weighted,
            });
        }
        ViewScore {
            f: frontier_mass - occupied_mass,
            frontier_mass,
            occupied_mass,
            breakdown,
        }
    }
}

/// Scores one viewpoint against the current ellipsoid sets.
pub fn evaluate_view(
    pose: &Pose,
    set: &EllipsoidSet,
    intrinsics: &CameraIntrinsics,
) -> Result<ViewScore> {
    Ok(PreparedEllipsoids::new(set)?.score(pose, intrinsics))
}

/// Scores every candidate (in parallel) and stores `F` on each.
pub fn evaluate_all(
    candidates: &mut [CandidateView],
    set: &EllipsoidSet,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<ViewScore>> {
    if candidates.is_empty() {
        return Err(NbvError::EmptyInput("no candidates to evaluate".into()));
    }
    let prepared = PreparedEllipsoids::new(set)?;
    let scores: Vec<ViewScore> = candidates
        .par_iter()
        .map(|c| prepared.score(&c.pose, intrinsics))
        .collect();
    for (c, s) in candidates.iter_mut().zip(&scores) {
        c.score = Some(s.f);
    }
    Ok(scores)
}

/// CSV of `index,F,frontier_mass,occupied_mass`.
pub fn write_scores_csv(
    path: &Path,
    candidates: &[CandidateView],
    scores: &[ViewScore],
) -> Result<()> {
    let mut out = String::from("index,F,frontier_mass,occupied_mass\n");
    for (c, s) in candidates.iter().zip(scores) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.index, s.f, s.frontier_mass, s.occupied_mass
        );
    }
    std::fs::write(path, out).map_err(|e| NbvError::io(path, e))
}
