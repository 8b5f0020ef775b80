//! Triangle meshes: ASCII OBJ/PLY loading, procedural desk objects and
//! area-uniform surface sampling.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NbvError, Result};
use crate::geometry::Aabb;

/// Triangles with a doubled area at or below this are dropped at load time.
const DEGENERATE_AREA: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, validating indices and filtering zero-area faces.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(bad) = triangles.iter().flatten().find(|&&i| i as usize >= n) {
            return Err(NbvError::InvalidArgument(format!(
                "triangle index {bad} out of range for {n} vertices"
            )));
        }
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA
            })
            .collect();
        if triangles.is_empty() {
            return Err(NbvError::EmptyInput(
                "mesh has no non-degenerate triangles".into(),
            ));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices).expect("mesh is nonempty")
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| triangle_area(&self.triangle(i)))
            .sum()
    }

    pub fn translated(mut self, offset: Vector3<f64>) -> Self {
        for v in &mut self.vertices {
            *v += offset;
        }
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for v in &mut self.vertices {
            v.coords *= factor;
        }
        self
    }

    /// Merges disjoint parts into one mesh.
    pub fn merged(parts: &[TriangleMesh]) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for part in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&part.vertices);
            triangles.extend(part.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        Self::new(vertices, triangles)
    }

    /// Unsigned distance from `p` to the closest point on the surface (brute force).
    pub fn distance_to(&self, p: &Point3<f64>) -> f64 {
        (0..self.triangles.len())
            .map(|i| point_triangle_distance(p, &self.triangle(i)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Area-weighted triangle choice followed by uniform barycentric sampling.
    pub fn sample_surface(&self, count: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for i in 0..self.triangles.len() {
            total += triangle_area(&self.triangle(i));
            cumulative.push(total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let target = rng.random::<f64>() * total;
                let idx = cumulative
                    .partition_point(|&c| c < target)
                    .min(self.triangles.len() - 1);
                let [a, b, c] = self.triangle(idx);
                let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                a + (b - a) * r1 + (c - a) * r2
            })
            .collect()
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        let mut file = fs::File::create(path).map_err(|e| NbvError::io(path, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| NbvError::io(path, e))
    }
}

pub fn triangle_area(t: &[Point3<f64>; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

/// Closest-point distance (Ericson, region classification).
pub fn point_triangle_distance(p: &Point3<f64>, tri: &[Point3<f64>; 3]) -> f64 {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

// ── Loading ────────────────────────────────────────────────────────────────

/// Loads an ASCII OBJ or ASCII PLY mesh, dispatching on the file extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path).map_err(|e| NbvError::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("obj") => parse_obj(&text),
        Some("ply") => parse_ply(&text),
        other => Err(NbvError::UnsupportedFormat(format!(
            "{} (extension {:?})",
            path.display(),
            other
        ))),
    }
}

fn parse_f64(tok: Option<&str>, line: usize, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| NbvError::Format {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse::<f64>().map_err(|_| NbvError::Format {
        line,
        message: format!("cannot parse {what} from {tok:?}"),
    })
}

/// Fan-triangulates a polygon given as vertex indices.
fn fan(poly: &[u32], out: &mut Vec<[u32; 3]>) {
    for k in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[k], poly[k + 1]]);
    }
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line, "x")?;
                let y = parse_f64(toks.next(), line, "y")?;
                let z = parse_f64(toks.next(), line, "z")?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| NbvError::Format {
                        line,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(NbvError::Format {
                            line,
                            message: format!("face index {idx} out of range"),
                        });
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(NbvError::Format {
                        line,
                        message: "face with fewer than 3 vertices".into(),
                    });
                }
                fan(&poly, &mut triangles);
            }
            _ => {}
        }
    }
    if vertices.is_empty() || triangles.is_empty() {
        return Err(NbvError::EmptyInput("OBJ file has no faces".into()));
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn parse_ply(text: &str) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let fmt_err = |line: usize, message: &str| NbvError::Format {
        line,
        message: message.to_string(),
    };

    match lines.next() {
        Some((_, "ply")) => {}
        Some((l, _)) => return Err(fmt_err(l, "missing 'ply' magic")),
        None => return Err(NbvError::EmptyInput("empty PLY file".into())),
    }

    let mut n_vertices = None;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current: Option<&str> = None;
    let mut last_line = 1;
    loop {
        let (line, l) = lines
            .next()
            .ok_or_else(|| fmt_err(last_line + 1, "unterminated header"))?;
        last_line = line;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(NbvError::UnsupportedFormat(format!("PLY format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                n_vertices = Some(n.parse().map_err(|_| fmt_err(line, "bad vertex count"))?);
                current = Some("vertex");
            }
            ["element", "face", n] => {
                n_faces = n.parse().map_err(|_| fmt_err(line, "bad face count"))?;
                current = Some("face");
            }
            ["element", ..] => current = Some("other"),
            ["property", "list", ..] => {}
            ["property", _, name] => {
                if current == Some("vertex") {
                    vertex_props.push(name.to_string());
                }
            }
            ["end_header"] => break,
            _ => return Err(fmt_err(line, "unrecognized header line")),
        }
    }
    let n_vertices = n_vertices.ok_or_else(|| fmt_err(last_line, "no vertex element"))?;
    let axis = |name: &str| {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| fmt_err(last_line, &format!("vertex property {name} missing")))
    };
    let (ix, iy, iz) = (axis("x")?, axis("y")?, axis("z")?);

    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (line, l) = lines
            .next()
            .ok_or_else(|| fmt_err(last_line + 1, "truncated vertex list"))?;
        last_line = line;
        let vals: Vec<&str> = l.split_whitespace().collect();
        if vals.len() < vertex_props.len() {
            return Err(fmt_err(line, "too few vertex properties"));
        }
        let x = parse_f64(vals.get(ix).copied(), line, "x")?;
        let y = parse_f64(vals.get(iy).copied(), line, "y")?;
        let z = parse_f64(vals.get(iz).copied(), line, "z")?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (line, l) = lines
            .next()
            .ok_or_else(|| fmt_err(last_line + 1, "truncated face list"))?;
        last_line = line;
        let vals: Vec<usize> = l
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| fmt_err(line, "bad face entry"))
            })
            .collect::<Result<_>>()?;
        let (&count, rest) = vals
            .split_first()
            .ok_or_else(|| fmt_err(line, "empty face line"))?;
        if count < 3 || rest.len() < count {
            return Err(fmt_err(line, "malformed face"));
        }
        if rest[..count].iter().any(|&i| i >= n_vertices) {
            return Err(fmt_err(line, "face index out of range"));
        }
        let poly: Vec<u32> = rest[..count].iter().map(|&i| i as u32).collect();
        fan(&poly, &mut triangles);
    }
    if vertices.is_empty() || triangles.is_empty() {
        return Err(NbvError::EmptyInput("PLY file has no faces".into()));
    }
    TriangleMesh::new(vertices, triangles)
}

// ── Procedural desk objects ────────────────────────────────────────────────

pub mod shapes {
    //! Watertight procedural meshes used by tests, benchmarks and the CLI.

    use std::f64::consts::PI;

    use super::*;

    /// Latitude/longitude sphere.
    pub fn uv_sphere(center: Point3<f64>, radius: f64, rings: u32, segments: u32) -> TriangleMesh {
        let mut vertices = vec![center + Vector3::z() * radius];
        for i in 1..rings {
            let theta = PI * i as f64 / rings as f64;
            for j in 0..segments {
                let phi = 2.0 * PI * j as f64 / segments as f64;
                vertices.push(
                    center
                        + Vector3::new(
                            theta.sin() * phi.cos(),
                            theta.sin() * phi.sin(),
                            theta.cos(),
                        ) * radius,
                );
            }
        }
        vertices.push(center - Vector3::z() * radius);
        let south = vertices.len() as u32 - 1;
        let ring = |i: u32, j: u32| 1 + (i - 1) * segments + (j % segments);
        let mut tris = Vec::new();
        for j in 0..segments {
            tris.push([0, ring(1, j), ring(1, j + 1)]);
            tris.push([south, ring(rings - 1, j + 1), ring(rings - 1, j)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                let (a, b, c, d) = (
                    ring(i, j),
                    ring(i, j + 1),
                    ring(i + 1, j),
                    ring(i + 1, j + 1),
                );
                tris.push([a, c, d]);
                tris.push([a, d, b]);
            }
        }
        TriangleMesh::new(vertices, tris).expect("sphere is well formed")
    }

    /// Axis-aligned box, 12 triangles.
    pub fn cuboid(center: Point3<f64>, half: Vector3<f64>) -> TriangleMesh {
        let mut vertices = Vec::with_capacity(8);
        for k in 0..8u32 {
            let s = |bit: u32| if k & bit != 0 { 1.0 } else { -1.0 };
            vertices.push(center + Vector3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z));
        }
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let mut tris = Vec::new();
        for q in quads {
            fan(&q, &mut tris);
        }
        TriangleMesh::new(vertices, tris).expect("cuboid is well formed")
    }

    /// Torus around the z axis.
    pub fn torus(
        center: Point3<f64>,
        major: f64,
        minor: f64,
        major_segments: u32,
        minor_segments: u32,
    ) -> TriangleMesh {
        let mut vertices = Vec::new();
        for i in 0..major_segments {
            let u = 2.0 * PI * i as f64 / major_segments as f64;
            for j in 0..minor_segments {
                let v = 2.0 * PI * j as f64 / minor_segments as f64;
                let r = major + minor * v.cos();
                vertices.push(center + Vector3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
            }
        }
        let idx = |i: u32, j: u32| (i % major_segments) * minor_segments + (j % minor_segments);
        let mut tris = Vec::new();
        for i in 0..major_segments {
            for j in 0..minor_segments {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
        }
        TriangleMesh::new(vertices, tris).expect("torus is well formed")
    }

    /// Extrudes a simple counter-clockwise polygon in the xy plane between
    /// `z0` and `z1`. Caps are ear-clipped, so concave outlines are fine.
    pub fn extrude_polygon(outline: &[[f64; 2]], z0: f64, z1: f64) -> Result<TriangleMesh> {
        let n = outline.len();
        if n < 3 {
            return Err(NbvError::InvalidArgument("outline needs 3 vertices".into()));
        }
        let cap = ear_clip(outline)?;
        let mut vertices: Vec<Point3<f64>> = outline
            .iter()
            .map(|p| Point3::new(p[0], p[1], z0))
            .collect();
        vertices.extend(outline.iter().map(|p| Point3::new(p[0], p[1], z1)));
        let n = n as u32;
        let mut tris = Vec::new();
        for t in &cap {
            // bottom faces -z, top faces +z
            tris.push([t[0], t[2], t[1]]);
            tris.push([t[0] + n, t[1] + n, t[2] + n]);
        }
        for i in 0..n {
            let j = (i + 1) % n;
            tris.push([i, j, j + n]);
            tris.push([i, j + n, i + n]);
        }
        TriangleMesh::new(vertices, tris)
    }

    fn ear_clip(poly: &[[f64; 2]]) -> Result<Vec<[u32; 3]>> {
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
            (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
        };
        let mut idx: Vec<usize> = (0..poly.len()).collect();
        let mut out = Vec::new();
        while idx.len() > 3 {
            let m = idx.len();
            let ear = (0..m).find(|&k| {
                let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
                let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
                if cross(a, b, c) <= 0.0 {
                    return false;
                }
                idx.iter().all(|&ip| {
                    if ip == ia || ip == ib || ip == ic {
                        return true;
                    }
                    let p = poly[ip];
                    !(cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0)
                })
            });
            let k = ear.ok_or_else(|| {
                NbvError::InvalidArgument("outline is not a simple CCW polygon".into())
            })?;
            let m = idx.len();
            out.push([
                idx[(k + m - 1) % m] as u32,
                idx[k] as u32,
                idx[(k + 1) % m] as u32,
            ]);
            idx.remove(k);
        }
        out.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
        Ok(out)
    }

    /// L-shaped bracket centered near the origin, overall size ≈ `size`.
    pub fn l_bracket(size: f64) -> TriangleMesh {
        let s = size / 2.0;
        let t = size * 0.35;
        let outline = [
            [-s, -s],
            [s, -s],
            [s, -s + t],
            [-s + t, -s + t],
            [-s + t, s],
            [-s, s],
        ];
        extrude_polygon(&outline, -s * 0.6, s * 0.6).expect("L outline is simple")
    }

    /// U-shaped channel centered near the origin, overall size ≈ `size`.
    pub fn u_channel(size: f64) -> TriangleMesh {
        let s = size / 2.0;
        let t = size * 0.3;
        let outline = [
            [-s, -s],
            [s, -s],
            [s, s],
            [s - t, s],
            [s - t, -s + t],
            [-s + t, -s + t],
            [-s + t, s],
            [-s, s],
        ];
        extrude_polygon(&outline, -s * 0.5, s * 0.5).expect("U outline is simple")
    }

    /// Named desk objects of roughly `size` meters across.
    pub fn desk_object(name: &str, size: f64) -> Option<TriangleMesh> {
        let c = Point3::origin();
        Some(match name {
            "sphere" => uv_sphere(c, size / 2.0, 48, 96),
            "cube" => cuboid(c, Vector3::repeat(size / 2.0)),
            "torus" => torus(c, size * 0.34, size * 0.16, 64, 32),
            "l_bracket" => l_bracket(size),
            "u_channel" => u_channel(size),
            _ => return None,
        })
    }

    pub const DESK_OBJECTS: [&str; 5] = ["sphere", "cube", "torus", "l_bracket", "u_channel"];
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_OBJ: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

    #[test]
    fn parses_unit_cube_obj() {
        let m = parse_obj(CUBE_OBJ).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.triangles().len(), 12);
        assert!((m.surface_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn quad_face_is_fan_split() {
        let m =
            parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn negative_obj_indices_resolve() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn obj_errors_name_the_line() {
        match parse_obj("v 0 0 0\nv 1 0\n") {
            Err(NbvError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n") {
            Err(NbvError::Format { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_obj("# nothing\n"),
            Err(NbvError::EmptyInput(_))
        ));
    }

    const PLY_QUAD: &str = "ply
format ascii 1.0
comment test
element vertex 4
property float x
property float y
property float z
property uchar red
element face 1
property list uchar int vertex_indices
end_header
0 0 0 255
1 0 0 255
1 1 0 255
0 1 0 255
4 0 1 2 3
";

    #[test]
    fn parses_ascii_ply() {
        let m = parse_ply(PLY_QUAD).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles().len(), 2);
    }

    #[test]
    fn truncated_ply_is_format_error() {
        let truncated: String = PLY_QUAD.lines().take(13).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            parse_ply(&truncated),
            Err(NbvError::Format { .. })
        ));
        assert!(matches!(
            parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n"),
            Err(NbvError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn load_mesh_round_trips_through_obj() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.obj");
        let mesh = shapes::torus(Point3::origin(), 0.1, 0.03, 12, 8);
        mesh.write_obj(&path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.triangles(), mesh.triangles());
        assert!(load_mesh(&dir.path().join("x.stl")).is_err());
    }

    #[test]
    fn degenerate_triangles_are_filtered() {
        let m = TriangleMesh::new(
            vec![
                Point3::origin(),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        assert_eq!(m.triangles().len(), 1);
    }

    #[test]
    fn procedural_shapes_are_closed() {
        // closed 2-manifold: every edge is shared by exactly two faces
        for name in shapes::DESK_OBJECTS {
            let m = shapes::desk_object(name, 0.3).unwrap();
            let mut edges = std::collections::HashMap::new();
            for t in m.triangles() {
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            assert!(edges.values().all(|&c| c == 2), "{name} is not closed");
        }
    }

    #[test]
    fn surface_samples_lie_on_mesh() {
        let m = shapes::cuboid(Point3::origin(), Vector3::new(0.1, 0.2, 0.3));
        let pts = m.sample_surface(500, 3);
        assert!(pts.iter().all(|p| m.distance_to(p) < 1e-12));
        assert_eq!(pts, m.sample_surface(500, 3));
        // area weighting: faces normal to x have area 0.4·0.6 of the 2.2 total (×2 sides)
        let on_x = pts
            .iter()
            .filter(|p| (p.x.abs() - 0.1).abs() < 1e-12)
            .count() as f64;
        let expected = 500.0 * (2.0 * 0.24) / (2.0 * (0.08 + 0.12 + 0.24));
        assert!((on_x - expected).abs() < 40.0, "{on_x} vs {expected}");
    }
}
