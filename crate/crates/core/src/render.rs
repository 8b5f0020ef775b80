//! Synthetic depth camera: BVH-accelerated ray casting against a triangle
//! mesh, back-projection to world points and PLY export.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{NbvError, Result};
use crate::geometry::{Aabb, CameraIntrinsics, Pose};
use crate::mesh::TriangleMesh;

const DET_EPS: f64 = 1e-9;
const LEAF_SIZE: usize = 4;

/// Marker for pixels without a return.
pub const NO_HIT: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Vector3<f64>,
}

/// Möller–Trumbore; returns the ray parameter of a hit with `t > 0`.
pub fn intersect_triangle(ray: &Ray, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = ray.dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < DET_EPS * e1.norm() * e2.norm() * ray.dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = ray.origin - tri[0];
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > 0.0).then_some(t)
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        count: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Immutable mesh plus bounding volume hierarchy; shareable across threads.
#[derive(Debug, Clone)]
pub struct Scene {
    mesh: TriangleMesh,
    tris: Vec<[Point3<f64>; 3]>,
    nodes: Vec<Node>,
}

impl Scene {
    pub fn new(mesh: TriangleMesh) -> Self {
        let tris: Vec<[Point3<f64>; 3]> = (0..mesh.triangles().len())
            .map(|i| mesh.triangle(i))
            .collect();
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let centroids: Vec<Point3<f64>> = tris
            .iter()
            .map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
            .collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        build(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        let tris = order.iter().map(|&i| tris[i]).collect();
        Self { mesh, tris, nodes }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// Nearest positive hit parameter along the ray, if any.
    pub fn cast(&self, ray: &Ray) -> Option<f64> {
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            match node.bounds().ray_interval(&ray.origin, &ray.dir) {
                Some((t0, t1)) if t1 >= 0.0 && t0 <= best => {}
                _ => continue,
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for tri in &self.tris[start..start + count] {
                        if let Some(t) = intersect_triangle(ray, tri) {
                            best = best.min(t);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best.is_finite().then_some(best)
    }
}

fn build(
    tris: &[[Point3<f64>; 3]],
    centroids: &[Point3<f64>],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let slice = &mut order[start..end];
    let bounds = Aabb::from_points(slice.iter().flat_map(|&i| tris[i].iter())).expect("nonempty");
    let idx = nodes.len();
    if slice.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start,
            count: slice.len(),
        });
        return idx;
    }
    let cb = Aabb::from_points(slice.iter().map(|&i| &centroids[i])).expect("nonempty");
    let ext = cb.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf {
        bounds,
        start,
        count: 0,
    });
    let left = build(tris, centroids, order, start, start + mid, nodes);
    let right = build(tris, centroids, order, start + mid, end, nodes);
    nodes[idx] = Node::Inner {
        bounds,
        left,
        right,
    };
    idx
}

/// Range image: per-pixel Euclidean distance along the pixel ray.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    /// Row-major, `width * height` entries; [`NO_HIT`] where nothing was seen.
    pub depths: Vec<f64>,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl DepthFrame {
    pub fn depth(&self, u: u32, v: u32) -> f64 {
        self.depths[(v * self.intrinsics.width + u) as usize]
    }

    pub fn hit_count(&self) -> usize {
        self.depths.iter().filter(|d| d.is_finite()).count()
    }

    /// Depths with the no-hit marker encoded as 0, as written to artifacts.
    pub fn exported_depths(&self) -> Vec<f64> {
        self.depths
            .iter()
            .map(|&d| if d.is_finite() { d } else { 0.0 })
            .collect()
    }
}

pub fn render_depth(scene: &Scene, pose: &Pose, intrinsics: &CameraIntrinsics) -> DepthFrame {
    let w = intrinsics.width;
    let origin = pose.position();
    let depths = (0..intrinsics.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i as u32 % w, i as u32 / w);
            let dir = pose.rotation * intrinsics.pixel_ray(u as f64, v as f64);
            match scene.cast(&Ray { origin, dir }) {
                Some(t) if t <= intrinsics.max_range => t,
                _ => NO_HIT,
            }
        })
        .collect();
    DepthFrame {
        depths,
        pose: *pose,
        intrinsics: *intrinsics,
    }
}

/// Adds zero-mean Gaussian range noise to every hit pixel.
pub fn add_depth_noise(frame: &mut DepthFrame, sigma: f64, seed: u64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| NbvError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = frame.intrinsics.max_range;
    for d in frame.depths.iter_mut().filter(|d| d.is_finite()) {
        let noisy = *d + normal.sample(&mut rng);
        *d = if noisy > 0.0 && noisy <= max {
            noisy
        } else {
            NO_HIT
        };
    }
    Ok(())
}

/// Back-projects every hit pixel into world coordinates, in row-major order.
pub fn frame_to_points(frame: &DepthFrame) -> Vec<Point3<f64>> {
    let k = &frame.intrinsics;
    frame
        .depths
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .map(|(i, &d)| {
            let (u, v) = (i as u32 % k.width, i as u32 / k.width);
            let cam = Point3::from(k.pixel_ray(u as f64, v as f64) * d);
            frame.pose.camera_to_world(&cam)
        })
        .collect()
}

pub fn write_point_cloud_ply(path: &Path, points: &[Point3<f64>]) -> Result<()> {
    let mut out = String::with_capacity(points.len() * 32 + 128);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", points.len());
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
    }
    std::fs::write(path, out).map_err(|e| NbvError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use approx::assert_relative_eq;

    fn camera(w: u32, h: u32, f: f64) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            width: w,
            height: h,
            working_distance: 0.4,
            max_range: 5.0,
        }
    }

    #[test]
    fn triangle_hit_and_miss() {
        let tri = [
            Point3::new(-1.0, -1.0, 2.0),
            Point3::new(1.0, -1.0, 2.0),
            Point3::new(0.0, 1.0, 2.0),
        ];
        let hit = Ray {
            origin: Point3::origin(),
            dir: Vector3::z(),
        };
        assert_relative_eq!(intersect_triangle(&hit, &tri).unwrap(), 2.0);
        let behind = Ray {
            origin: Point3::origin(),
            dir: -Vector3::z(),
        };
        assert!(intersect_triangle(&behind, &tri).is_none());
        let parallel = Ray {
            origin: Point3::origin(),
            dir: Vector3::x(),
        };
        assert!(intersect_triangle(&parallel, &tri).is_none());
    }

    #[test]
    fn bvh_matches_brute_force() {
        let mesh = shapes::torus(Point3::origin(), 0.2, 0.07, 24, 12);
        let scene = Scene::new(mesh.clone());
        let tris: Vec<_> = (0..mesh.triangles().len())
            .map(|i| mesh.triangle(i))
            .collect();
        for k in 0..400 {
            let a = k as f64 * 0.37;
            let origin = Point3::new(a.cos() * 0.8, a.sin() * 0.8, (a * 1.7).sin() * 0.4);
            let target = Point3::new((a * 3.1).sin() * 0.2, (a * 2.3).cos() * 0.2, 0.0);
            let ray = Ray {
                origin,
                dir: (target - origin).normalize(),
            };
            let brute = tris
                .iter()
                .filter_map(|t| intersect_triangle(&ray, t))
                .fold(f64::INFINITY, f64::min);
            match scene.cast(&ray) {
                Some(t) => assert_relative_eq!(t, brute, epsilon = 1e-12),
                None => assert!(brute.is_infinite()),
            }
        }
    }

    #[test]
    fn center_pixel_sees_near_surface_of_sphere() {
        let scene = Scene::new(shapes::uv_sphere(Point3::new(0.0, 0.0, 1.0), 0.5, 64, 128));
        let k = camera(64, 48, 50.0);
        let frame = render_depth(&scene, &Pose::identity(), &k);
        // tessellation sits inside the true sphere; the pole vertex is exact
        assert_relative_eq!(frame.depth(32, 24), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn camera_facing_away_sees_nothing() {
        let scene = Scene::new(shapes::uv_sphere(Point3::new(0.0, 0.0, 1.0), 0.5, 16, 32));
        let away =
            Pose::look_at(Point3::origin(), Point3::new(0.0, 0.0, -1.0), Vector3::y()).unwrap();
        let frame = render_depth(&scene, &away, &camera(32, 24, 30.0));
        assert_eq!(frame.hit_count(), 0);
        assert!(frame_to_points(&frame).is_empty());
        assert!(frame.exported_depths().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn silhouette_radius_matches_analytic() {
        // a = 0.1, d = 1.0, f = 500: r = f·a/√(d²−a²) ≈ 50.2519 px
        let scene = Scene::new(shapes::uv_sphere(Point3::new(0.0, 0.0, 1.0), 0.1, 128, 256));
        let k = camera(200, 200, 500.0);
        let frame = render_depth(&scene, &Pose::identity(), &k);
        let analytic: f64 = 500.0 * 0.1 / (1.0f64 - 0.01).sqrt();
        let disc = std::f64::consts::PI * analytic * analytic;
        let hits = frame.hit_count() as f64;
        assert!((hits - disc).abs() / disc < 0.01, "{hits} vs {disc}");
        let max_r = (0..200u32)
            .flat_map(|v| (0..200u32).map(move |u| (u, v)))
            .filter(|&(u, v)| frame.depth(u, v).is_finite())
            .map(|(u, v)| ((u as f64 - 100.0).powi(2) + (v as f64 - 100.0).powi(2)).sqrt())
            .fold(0.0, f64::max);
        assert!((max_r - analytic).abs() < 1.5, "{max_r}");
    }

    #[test]
    fn principal_point_back_projects_onto_axis() {
        let k = CameraIntrinsics {
            cx: 2.0,
            cy: 2.0,
            ..camera(5, 5, 10.0)
        };
        let mut depths = vec![NO_HIT; 25];
        depths[2 * 5 + 2] = 2.0;
        let frame = DepthFrame {
            depths,
            pose: Pose::identity(),
            intrinsics: k,
        };
        let pts = frame_to_points(&frame);
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0], Point3::new(0.0, 0.0, 2.0), epsilon = 1e-15);
    }

    #[test]
    fn rendered_points_lie_on_surface_and_round_trip() {
        let mesh = shapes::torus(Point3::origin(), 0.15, 0.05, 32, 16);
        let scene = Scene::new(mesh.clone());
        let pose =
            Pose::look_at(Point3::new(0.5, 0.2, 0.4), Point3::origin(), Vector3::z()).unwrap();
        let k = camera(80, 60, 70.0);
        let frame = render_depth(&scene, &pose, &k);
        assert!(frame.hit_count() > 100);
        assert_eq!(render_depth(&scene, &pose, &k), frame);
        let pts = frame_to_points(&frame);
        for p in &pts {
            assert!(mesh.distance_to(p) < 1e-6);
        }
        let mut it = pts.iter();
        for (i, d) in frame.depths.iter().enumerate() {
            if !d.is_finite() {
                continue;
            }
            let cam = pose.world_to_camera(it.next().unwrap());
            let (u, v) = k.project(&cam).unwrap();
            assert!((u - (i as u32 % k.width) as f64).abs() < 0.5);
            assert!((v - (i as u32 / k.width) as f64).abs() < 0.5);
            assert!((cam.coords.norm() - d).abs() < 1e-6);
        }
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let scene = Scene::new(shapes::cuboid(
            Point3::new(0.0, 0.0, 1.0),
            Vector3::repeat(0.2),
        ));
        let clean = render_depth(&scene, &Pose::identity(), &camera(40, 30, 40.0));
        let mut a = clean.clone();
        let mut b = clean.clone();
        add_depth_noise(&mut a, 0.001, 9).unwrap();
        add_depth_noise(&mut b, 0.001, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, clean);
        let mut c = clean.clone();
        add_depth_noise(&mut c, 0.0, 1).unwrap();
        assert_eq!(c, clean);
    }

    #[test]
    fn exported_cloud_is_ascii_ply() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        write_point_cloud_ply(&path, &[Point3::new(1.0, 2.0, 3.0)]).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x"));
        assert!(text.ends_with("1 2 3\n"));
    }
}
