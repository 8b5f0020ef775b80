//! Ellipsoid scene representation: occupied and frontier voxel clusters,
//! each summarized by an enclosing ellipsoid and its homogeneous quadric.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix4, Point3, SymmetricEigen, Vector3, Vector4};

use crate::error::{NbvError, Result};
use crate::gmm::{select_components, GmmConfig};
use crate::mvee::{fit_mvee, MveeConfig};
use crate::voxel::{VoxelGrid, VoxelState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EllipsoidKind {
    Occupied,
    Frontier,
}

impl EllipsoidKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EllipsoidKind::Occupied => "occupied",
            EllipsoidKind::Frontier => "frontier",
        }
    }
}

/// `{x : (x−c)ᵀ A (x−c) ≤ 1}` with `A` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: Point3<f64>,
    pub shape: Matrix3<f64>,
    pub kind: EllipsoidKind,
    pub member_count: usize,
    /// Position within its kind's set; used as a ranking tie-break.
    pub cluster: usize,
}

impl Ellipsoid {
    pub fn new(
        center: Point3<f64>,
        shape: Matrix3<f64>,
        kind: EllipsoidKind,
        member_count: usize,
    ) -> Result<Self> {
        let sym = (shape + shape.transpose()) * 0.5;
        if sym.cholesky().is_none() || !center.coords.iter().all(|v| v.is_finite()) {
            return Err(NbvError::Numerical(
                "ellipsoid shape is not positive definite".into(),
            ));
        }
        Ok(Self {
            center,
            shape: sym,
            kind,
            member_count,
            cluster: 0,
        })
    }

    pub fn sphere(center: Point3<f64>, radius: f64, kind: EllipsoidKind) -> Self {
        Self::new(center, Matrix3::identity() / (radius * radius), kind, 1)
            .expect("positive radius")
    }

    pub fn with_kind(mut self, kind: EllipsoidKind, cluster: usize) -> Self {
        self.kind = kind;
        self.cluster = cluster;
        self
    }

    pub fn form_value(&self, x: &Point3<f64>) -> f64 {
        let d = x - self.center;
        d.dot(&(self.shape * d))
    }

    /// Homogeneous point quadric `Q = [[A, −Ac], [−cᵀA, cᵀAc − 1]]`.
    pub fn quadric(&self) -> Matrix4<f64> {
        let a = &self.shape;
        let c = self.center.coords;
        let ac = a * c;
        let mut q = Matrix4::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
        q.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-ac));
        q.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-ac).transpose());
        q[(3, 3)] = c.dot(&ac) - 1.0;
        q
    }

    /// `Q⁻¹ = [[A⁻¹ − ccᵀ, −c], [−cᵀ, −1]]`.
    pub fn dual_quadric(&self) -> Result<Matrix4<f64>> {
        let a_inv = self
            .shape
            .try_inverse()
            .ok_or_else(|| NbvError::Numerical("singular ellipsoid quadric".into()))?;
        let c = self.center.coords;
        let mut d = Matrix4::zeros();
        d.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(a_inv - c * c.transpose()));
        d.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-c));
        d.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-c).transpose());
        d[(3, 3)] = -1.0;
        Ok(d)
    }

    /// Semi-axis lengths, ascending.
    pub fn semi_axes(&self) -> Vector3<f64> {
        let mut ax = SymmetricEigen::new(self.shape)
            .eigenvalues
            .map(|l| 1.0 / l.sqrt());
        ax.as_mut_slice().sort_by(f64::total_cmp);
        ax
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI / self.shape.determinant().sqrt()
    }

    /// Surface point at spherical parameters `(theta, phi)` of the unit sphere
    /// mapped through `A^{-1/2}`.
    pub fn surface_point(&self, theta: f64, phi: f64) -> Point3<f64> {
        let eig = SymmetricEigen::new(self.shape);
        let inv_sqrt = eig.eigenvectors
            * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        let s = Vector3::new(
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        );
        self.center + inv_sqrt * s
    }

    pub fn homogeneous_center(&self) -> Vector4<f64> {
        self.center.to_homogeneous()
    }
}

/// Occupied and frontier ellipsoids of one iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EllipsoidSet {
    pub occupied: Vec<Ellipsoid>,
    pub frontier: Vec<Ellipsoid>,
    /// Component counts picked by BIC (0 when the class was empty).
    pub t_occupied: usize,
    pub t_frontier: usize,
}

impl EllipsoidSet {
    pub fn len(&self) -> usize {
        self.occupied.len() + self.frontier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Ellipsoid> {
        self.occupied.iter().chain(self.frontier.iter())
    }

    /// One line per ellipsoid: kind, center, the six upper-triangle entries
    /// of `A`, member count.
    pub fn dump(&self) -> String {
        let mut out = String::from("kind cx cy cz a00 a01 a02 a11 a12 a22 members\n");
        for e in self.iter() {
            let a = &e.shape;
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {} {}",
                e.kind.as_str(),
                e.center.x,
                e.center.y,
                e.center.z,
                a[(0, 0)],
                a[(0, 1)],
                a[(0, 2)],
                a[(1, 1)],
                a[(1, 2)],
                a[(2, 2)],
                e.member_count
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub t_max: usize,
    pub gmm: GmmConfig,
    pub mvee: MveeConfig,
}

impl FitConfig {
    pub fn new(t_max: usize, resolution: f64) -> Self {
        Self {
            t_max,
            gmm: GmmConfig::for_resolution(resolution),
            mvee: MveeConfig::for_resolution(resolution),
        }
    }
}

/// Clusters `points` (BIC-selected GMM) and encloses every nonempty cluster.
pub fn fit_clusters(
    points: &[Point3<f64>],
    kind: EllipsoidKind,
    seed: u64,
    cfg: &FitConfig,
) -> Result<(Vec<Ellipsoid>, usize)> {
    if points.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let sel = select_components(points, cfg.t_max, seed, &cfg.gmm)?;
    let mut out = Vec::with_capacity(sel.components);
    for members in sel.assignment.clusters.iter().filter(|c| !c.is_empty()) {
        let pts: Vec<Point3<f64>> = members.iter().map(|&i| points[i]).collect();
        let mut e = fit_mvee(&pts, &cfg.mvee)?.with_kind(kind, out.len());
        e.member_count = pts.len();
        out.push(e);
    }
    Ok((out, sel.components))
}

/// Refits both ellipsoid sets from the grid's occupied and frontier voxel
/// centers.
pub fn refit_all(grid: &VoxelGrid, seed: u64, cfg: &FitConfig) -> Result<EllipsoidSet> {
    let occ = grid.centers_in(VoxelState::Occupied);
    if occ.is_empty() {
        return Err(NbvError::EmptyInput("grid has no occupied voxels".into()));
    }
    let front = grid.centers_in(VoxelState::Frontier);
    let (occupied, t_occupied) = fit_clusters(&occ, EllipsoidKind::Occupied, seed, cfg)?;
    let (frontier, t_frontier) = fit_clusters(&front, EllipsoidKind::Frontier, seed, cfg)?;
    Ok(EllipsoidSet {
        occupied,
        frontier,
        t_occupied,
        t_frontier,
    })
}
