//! Minimum-volume enclosing ellipsoids.
//!
//! Khachiyan's barycentric coordinate ascent on the lifted points
//! `q_i = (p_i, 1)`, with Todd–Yildirim away steps so that support weights
//! can shrink again. Degenerate inputs (fewer than four points, or points
//! that are collinear/coplanar/coincident) are first thickened by replacing
//! every point with its six axis offsets `p ± h·e_k`.

use nalgebra::{Matrix3, Matrix4, Point3, SymmetricEigen, Vector3, Vector4};

use crate::ellipsoid::{Ellipsoid, EllipsoidKind};
use crate::error::{NbvError, Result};

const DIM: f64 = 3.0;

#[derive(Debug, Clone, Copy)]
pub struct MveeConfig {
    /// Stop once every point satisfies `(x−c)ᵀA(x−c) ≤ 1 + tolerance`.
    pub tolerance: f64,
    /// Offset `h` used to thicken degenerate clusters.
    pub inflation: f64,
    pub max_iter: usize,
}

impl MveeConfig {
    pub fn for_resolution(resolution: f64) -> Self {
        Self {
            inflation: resolution / 2.0,
            ..Self::default()
        }
    }
}

impl Default for MveeConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            inflation: 0.005,
            max_iter: 1000,
        }
    }
}

/// True when the points do not span 3D (fewer than 4, or flat/collinear).
pub fn is_degenerate(points: &[Point3<f64>]) -> bool {
    if points.len() < 4 {
        return true;
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let cov = points
        .iter()
        .map(|p| (p.coords - mean) * (p.coords - mean).transpose())
        .sum::<Matrix3<f64>>()
        / n;
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    max <= 0.0 || min <= 1e-10 * max
}

fn inflate(points: &[Point3<f64>], h: f64) -> Vec<Point3<f64>> {
    let mut out = Vec::with_capacity(points.len() * 6);
    for p in points {
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            out.push(p + e);
            out.push(p - e);
        }
    }
    out
}

/// Minimum-volume ellipsoid containing all `points`.
///
/// The returned shape is rescaled so that every input point satisfies
/// `(x−c)ᵀA(x−c) ≤ 1`.
pub fn fit_mvee(points: &[Point3<f64>], cfg: &MveeConfig) -> Result<Ellipsoid> {
    if points.is_empty() {
        return Err(NbvError::EmptyInput("no points to enclose".into()));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(NbvError::InvalidArgument(
            "MVEE tolerance must be positive".into(),
        ));
    }
    let inflated;
    let pts = if is_degenerate(points) {
        if !(cfg.inflation > 0.0) {
            return Err(NbvError::InvalidArgument(
                "degenerate point set and no inflation radius".into(),
            ));
        }
        inflated = inflate(points, cfg.inflation);
        &inflated[..]
    } else {
        points
    };
    let (center, shape) = khachiyan(pts, cfg)?;
    Ellipsoid::new(center, shape, EllipsoidKind::Occupied, points.len())
}

fn khachiyan(points: &[Point3<f64>], cfg: &MveeConfig) -> Result<(Point3<f64>, Matrix3<f64>)> {
    let n = points.len();
    let lifted_dim = DIM + 1.0;
    // work relative to the centroid for conditioning
    let shift = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n as f64;
    let q: Vec<Vector4<f64>> = points
        .iter()
        .map(|p| {
            let d = p.coords - shift;
            Vector4::new(d.x, d.y, d.z, 1.0)
        })
        .collect();
    let mut u = vec![1.0 / n as f64; n];
    let mut m = vec![0.0; n];
    let stop = 1.0 + DIM * (1.0 + cfg.tolerance);

    for _ in 0..cfg.max_iter {
        let x: Matrix4<f64> = q
            .iter()
            .zip(&u)
            .filter(|(_, w)| **w > 0.0)
            .map(|(qi, w)| qi * qi.transpose() * *w)
            .sum();
        let x_inv = x
            .try_inverse()
            .ok_or_else(|| NbvError::Numerical("singular MVEE moment matrix".into()))?;
        for (mi, qi) in m.iter_mut().zip(&q) {
            *mi = qi.dot(&(x_inv * qi));
        }
        let (j, mj) = argmax(&m);
        if mj <= stop {
            break;
        }
        let (k, mk) = m.iter().enumerate().filter(|(i, _)| u[*i] > 0.0).fold(
            (usize::MAX, f64::INFINITY),
            |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc },
        );
        let gain_up = mj / lifted_dim - 1.0;
        let gain_away = 1.0 - mk / lifted_dim;
        if k != usize::MAX && gain_away > gain_up && u[k] < 1.0 {
            // a point at the current center has mk = 1: drop it entirely
            let full = if mk > 1.0 {
                (lifted_dim - mk) / (lifted_dim * (mk - 1.0))
            } else {
                f64::INFINITY
            };
            let tau = full.min(u[k] / (1.0 - u[k])).max(0.0);
            for w in u.iter_mut() {
                *w *= 1.0 + tau;
            }
            u[k] = (u[k] - tau).max(0.0);
        } else {
            let tau = (mj - lifted_dim) / (lifted_dim * (mj - 1.0));
            for w in u.iter_mut() {
                *w *= 1.0 - tau;
            }
            u[j] += tau;
        }
    }

    let c: Vector3<f64> = q.iter().zip(&u).map(|(qi, w)| qi.xyz() * *w).sum();
    let spread: Matrix3<f64> = q
        .iter()
        .zip(&u)
        .map(|(qi, w)| (qi.xyz() - c) * (qi.xyz() - c).transpose() * *w)
        .sum();
    let spread_inv = spread
        .try_inverse()
        .ok_or_else(|| NbvError::Numerical("singular MVEE spread matrix".into()))?;
    let mut shape = spread_inv / DIM;
    shape = (shape + shape.transpose()) * 0.5;
    let max_form = q
        .iter()
        .map(|qi| {
            let d = qi.xyz() - c;
            d.dot(&(shape * d))
        })
        .fold(0.0, f64::max);
    if max_form > 1.0 {
        shape /= max_form;
    }
    Ok((Point3::from(c + shift), shape))
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc },
    )
}
