//! Conforming, shape-regular 2-D triangulations.
//!
//! Provides the structured start meshes for the built-in experiment
//! domains, uniform midpoint refinement, the center-graded refinement of
//! the square (-1,1)^2, geometric queries, and a plain-text mesh format.
//!
//! Faces are stored as vertex pairs (min, max) and indexed by the rank of
//! that pair in lexicographic order, so identical inputs always produce
//! identical orderings.

use crate::elements::Triangle;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("unknown domain descriptor: {0}")]
    UnknownDomain(String),
    #[error("triangle {0} has non-positive signed area")]
    NonPositiveArea(usize),
    #[error("face ({0}, {1}) is shared by more than two triangles")]
    NonConforming(usize, usize),
    #[error("triangle {tri} references vertex {vertex} out of range")]
    VertexOutOfRange { tri: usize, vertex: usize },
    #[error("mesh is not in the center-graded family (no marked central square)")]
    NotGraded,
    #[error("mesh io: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh format: {0}")]
    Format(String),
}

/// A face, stored with its vertex pair sorted ascending.
#[derive(Clone, Debug)]
pub struct Face {
    pub vertices: (usize, usize),
    /// Adjacent triangle indices; interior faces have two, boundary one.
    pub tris: Vec<usize>,
    pub boundary: bool,
    pub length: f64,
}

/// Built-in structured domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// (0,1)^2, two triangles.
    UnitSquare,
    /// Three unit squares: (-1,0)x(0,1), (0,1)x(0,1), (0,1)x(-1,0).
    LShape,
    /// (-1,1)^2 as four unit quadrants; start mesh of the graded family.
    CenteredSquare,
}

impl Domain {
    pub fn parse(s: &str) -> Result<Self, MeshError> {
        match s {
            "unit-square" | "unitsquare" => Ok(Domain::UnitSquare),
            "l-shape" | "lshape" => Ok(Domain::LShape),
            "centered-square" | "square2" => Ok(Domain::CenteredSquare),
            other => Err(MeshError::UnknownDomain(other.to_string())),
        }
    }
}

/// Conforming triangulation with face adjacency and per-element diameters.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Faces in lexicographic order of their sorted vertex pair.
    pub faces: Vec<Face>,
    /// Per triangle, the global face index of local edge e = (v_e, v_{e+1}).
    pub tri_faces: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
    /// Per-triangle diameter h_T.
    pub h: Vec<f64>,
    /// Refinement generation index.
    pub level: usize,
    /// Half-side of the marked central square for the graded family.
    pub graded_center: Option<f64>,
}

impl Mesh {
    /// Builds the connectivity from raw vertices and CCW triangles,
    /// validating orientation and conformity.
    pub fn from_raw(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange { tri: t, vertex: v });
                }
            }
            let geo = Triangle::new([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if geo.signed_area() <= 0.0 {
                return Err(MeshError::NonPositiveArea(t));
            }
        }
        let mut face_map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                face_map.entry(key).or_default().push(t);
            }
        }
        let mut faces = Vec::with_capacity(face_map.len());
        let mut face_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (key, tris) in face_map {
            if tris.len() > 2 {
                return Err(MeshError::NonConforming(key.0, key.1));
            }
            let boundary = tris.len() == 1;
            let (a, b) = (vertices[key.0], vertices[key.1]);
            let length = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            face_index.insert(key, faces.len());
            faces.push(Face { vertices: key, tris, boundary, length });
        }
        let tri_faces = triangles
            .iter()
            .map(|tri| {
                let mut out = [0usize; 3];
                for e in 0..3 {
                    let a = tri[e];
                    let b = tri[(e + 1) % 3];
                    out[e] = face_index[&(a.min(b), a.max(b))];
                }
                out
            })
            .collect();
        let mut boundary_vertex = vec![false; vertices.len()];
        for f in &faces {
            if f.boundary {
                boundary_vertex[f.vertices.0] = true;
                boundary_vertex[f.vertices.1] = true;
            }
        }
        let h = triangles
            .iter()
            .map(|tri| {
                Triangle::new([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]).diameter()
            })
            .collect();
        Ok(Self {
            vertices,
            triangles,
            faces,
            tri_faces,
            boundary_vertex,
            h,
            level: 0,
            graded_center: None,
        })
    }

    pub fn triangle(&self, t: usize) -> Triangle {
        let tri = self.triangles[t];
        Triangle::new([self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]])
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_h(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Interior vertex indices in ascending order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| !self.boundary_vertex[v]).collect()
    }

    /// Writes the plain-text mesh format.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), MeshError> {
        writeln!(w, "mesh 2d")?;
        writeln!(w, "vertices {}", self.n_vertices())?;
        for v in &self.vertices {
            writeln!(w, "{} {}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.n_triangles())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("mesh text is ascii")
    }

    /// Parses the plain-text mesh format and rebuilds connectivity.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self, MeshError> {
        let mut lines = r.lines();
        let mut next_line = || -> Result<String, MeshError> {
            loop {
                match lines.next() {
                    Some(l) => {
                        let l = l?;
                        let t = l.trim().to_string();
                        if !t.is_empty() {
                            return Ok(t);
                        }
                    }
                    None => return Err(MeshError::Format("unexpected end of input".into())),
                }
            }
        };
        let header = next_line()?;
        if header != "mesh 2d" {
            return Err(MeshError::Format(format!("bad header: {header:?}")));
        }
        let vline = next_line()?;
        let n_vertices = parse_count(&vline, "vertices")?;
        let mut vertices = Vec::with_capacity(n_vertices);
        for _ in 0..n_vertices {
            let l = next_line()?;
            let mut it = l.split_whitespace();
            let x = parse_f64(it.next(), "vertex x")?;
            let y = parse_f64(it.next(), "vertex y")?;
            if it.next().is_some() {
                return Err(MeshError::Format(format!("trailing tokens in vertex line {l:?}")));
            }
            vertices.push([x, y]);
        }
        let tline = next_line()?;
        let n_triangles = parse_count(&tline, "triangles")?;
        let mut triangles = Vec::with_capacity(n_triangles);
        for _ in 0..n_triangles {
            let l = next_line()?;
            let mut it = l.split_whitespace();
            let a = parse_usize(it.next(), "triangle index")?;
            let b = parse_usize(it.next(), "triangle index")?;
            let c = parse_usize(it.next(), "triangle index")?;
            if it.next().is_some() {
                return Err(MeshError::Format(format!("trailing tokens in triangle line {l:?}")));
            }
            triangles.push([a, b, c]);
        }
        Mesh::from_raw(vertices, triangles)
    }

    pub fn from_text(s: &str) -> Result<Self, MeshError> {
        Self::read_text(s.as_bytes())
    }
}

fn parse_count(line: &str, keyword: &str) -> Result<usize, MeshError> {
    let mut it = line.split_whitespace();
    match it.next() {
        Some(w) if w == keyword => {}
        other => return Err(MeshError::Format(format!("expected {keyword:?}, got {other:?}"))),
    }
    let n = parse_usize(it.next(), keyword)?;
    if it.next().is_some() {
        return Err(MeshError::Format(format!("trailing tokens after {keyword} count")));
    }
    // cap so hostile inputs cannot trigger huge allocations
    if n > 50_000_000 {
        return Err(MeshError::Format(format!("{keyword} count {n} too large")));
    }
    Ok(n)
}

fn parse_usize(tok: Option<&str>, what: &str) -> Result<usize, MeshError> {
    tok.ok_or_else(|| MeshError::Format(format!("missing {what}")))?
        .parse()
        .map_err(|e| MeshError::Format(format!("bad {what}: {e}")))
}

fn parse_f64(tok: Option<&str>, what: &str) -> Result<f64, MeshError> {
    let v: f64 = tok
        .ok_or_else(|| MeshError::Format(format!("missing {what}")))?
        .parse()
        .map_err(|e| MeshError::Format(format!("bad {what}: {e}")))?;
    if !v.is_finite() {
        return Err(MeshError::Format(format!("non-finite {what}")));
    }
    Ok(v)
}

/// Regularity parameter max over T of h_T^2 / |T|.
pub fn shape_regularity(mesh: &Mesh) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| {
            let tri = mesh.triangle(t);
            mesh.h[t] * mesh.h[t] / tri.area()
        })
        .fold(0.0, f64::max)
}

/// Builds the start mesh of one of the structured domains.
///
/// Each axis-aligned unit cell is split by one diagonal. The unit square
/// and the L-shape cells use the negative-slope diagonal; the quadrants of
/// (-1,1)^2 use the diagonal not incident to the origin, which makes the
/// whole square the marked central square of the graded family.
pub fn build_structured(domain: Domain) -> Mesh {
    match domain {
        Domain::UnitSquare => {
            let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
            let triangles = vec![[0, 1, 2], [1, 3, 2]];
            Mesh::from_raw(vertices, triangles).expect("structured mesh is valid")
        }
        Domain::LShape => {
            let vertices = vec![
                [0.0, -1.0], // 0
                [1.0, -1.0], // 1
                [-1.0, 0.0], // 2
                [0.0, 0.0],  // 3
                [1.0, 0.0],  // 4
                [-1.0, 1.0], // 5
                [0.0, 1.0],  // 6
                [1.0, 1.0],  // 7
            ];
            // negative-slope diagonal in every unit square
            let triangles = vec![
                // (0,1)x(-1,0): diagonal (0,0)-(1,-1)
                [0, 1, 3],
                [1, 4, 3],
                // (-1,0)x(0,1): diagonal (-1,1)-(0,0)
                [2, 3, 5],
                [3, 6, 5],
                // (0,1)x(0,1): diagonal (0,1)-(1,0)
                [3, 4, 6],
                [4, 7, 6],
            ];
            Mesh::from_raw(vertices, triangles).expect("structured mesh is valid")
        }
        Domain::CenteredSquare => {
            let mut mesh = graded_core_mesh(1.0);
            mesh.graded_center = Some(1.0);
            mesh
        }
    }
}

/// The 8-triangle pattern filling [-c,c]^2: four quadrant squares, each
/// split by the diagonal away from the origin.
fn graded_core_mesh(c: f64) -> Mesh {
    let vertices = vec![
        [-c, -c], // 0
        [0.0, -c], // 1
        [c, -c],  // 2
        [-c, 0.0], // 3
        [0.0, 0.0], // 4
        [c, 0.0], // 5
        [-c, c],  // 6
        [0.0, c], // 7
        [c, c],   // 8
    ];
    let triangles = vec![
        // Q3 [-c,0]x[-c,0]: away diagonal (0,-c)-(-c,0)
        [0, 1, 3],
        [1, 4, 3],
        // Q4 [0,c]x[-c,0]: away diagonal (0,-c)-(c,0)
        [1, 2, 5],
        [1, 5, 4],
        // Q2 [-c,0]x[0,c]: away diagonal (-c,0)-(0,c)
        [3, 4, 7],
        [3, 7, 6],
        // Q1 [0,c]x[0,c]: away diagonal (c,0)-(0,c)
        [4, 5, 7],
        [5, 8, 7],
    ];
    Mesh::from_raw(vertices, triangles).expect("graded core mesh is valid")
}

/// Where a refined vertex came from: a coarse vertex or a face midpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeOrigin {
    Vertex(usize),
    EdgeMidpoint(usize, usize),
}

/// Connectivity of one uniform refinement step.
#[derive(Clone, Debug)]
pub struct RefinementMaps {
    /// For each fine vertex, its origin in the coarse mesh.
    pub node_origin: Vec<NodeOrigin>,
    /// For each fine triangle, its parent coarse triangle.
    pub tri_parent: Vec<usize>,
}

/// Uniform midpoint refinement: every triangle is replaced by the four
/// similar children obtained by connecting its edge midpoints.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    refine_uniform_with_maps(mesh).0
}

/// Uniform refinement together with the parent/child and node-origin maps
/// needed for nested hierarchies.
pub fn refine_uniform_with_maps(mesh: &Mesh) -> (Mesh, RefinementMaps) {
    let mut vertices = mesh.vertices.clone();
    let mut node_origin: Vec<NodeOrigin> =
        (0..mesh.n_vertices()).map(NodeOrigin::Vertex).collect();
    // midpoint vertex per face, appended in face order
    let mut midpoint = vec![0usize; mesh.n_faces()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let (a, b) = face.vertices;
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        midpoint[f] = vertices.len();
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        node_origin.push(NodeOrigin::EdgeMidpoint(a, b));
    }
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut tri_parent = Vec::with_capacity(4 * mesh.n_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = *tri;
        let mab = midpoint[mesh.tri_faces[t][0]];
        let mbc = midpoint[mesh.tri_faces[t][1]];
        let mca = midpoint[mesh.tri_faces[t][2]];
        triangles.push([a, mab, mca]);
        triangles.push([b, mbc, mab]);
        triangles.push([c, mca, mbc]);
        triangles.push([mab, mbc, mca]);
        tri_parent.extend_from_slice(&[t, t, t, t]);
    }
    let mut out = Mesh::from_raw(vertices, triangles).expect("refined mesh is valid");
    out.level = mesh.level + 1;
    out.graded_center = mesh.graded_center.map(|c| 0.5 * c);
    (out, RefinementMaps { node_origin, tri_parent })
}

/// One center-graded refinement step of the marked central square
/// [-c,c]^2: its interior is re-meshed as the half-size central square
/// pattern plus two transition triangles per flank of the annulus.
/// All previously created vertices stay fixed.
pub fn refine_graded_center(mesh: &Mesh) -> Result<Mesh, MeshError> {
    let c = mesh.graded_center.ok_or(MeshError::NotGraded)?;
    let inside = |v: [f64; 2]| v[0].abs() <= c && v[1].abs() <= c;
    let mut vertices = mesh.vertices.clone();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for tri in &mesh.triangles {
        let keep = !tri.iter().all(|&v| inside(mesh.vertices[v]));
        if keep {
            triangles.push(*tri);
        }
    }
    // locate the old ring vertices of the central square
    let find = |p: [f64; 2]| -> usize {
        mesh.vertices
            .iter()
            .position(|v| v[0] == p[0] && v[1] == p[1])
            .expect("graded family vertex present")
    };
    let m = c / 2.0;
    let add_vertex = |vertices: &mut Vec<[f64; 2]>, p: [f64; 2]| -> usize {
        vertices.push(p);
        vertices.len() - 1
    };
    // new inner ring: axis points then corners, counterclockwise from +x
    let ax_e = add_vertex(&mut vertices, [m, 0.0]);
    let ax_n = add_vertex(&mut vertices, [0.0, m]);
    let ax_w = add_vertex(&mut vertices, [-m, 0.0]);
    let ax_s = add_vertex(&mut vertices, [0.0, -m]);
    let c_ne = add_vertex(&mut vertices, [m, m]);
    let c_nw = add_vertex(&mut vertices, [-m, m]);
    let c_sw = add_vertex(&mut vertices, [-m, -m]);
    let c_se = add_vertex(&mut vertices, [m, -m]);
    let origin = find([0.0, 0.0]);
    let o_e = find([c, 0.0]);
    let o_n = find([0.0, c]);
    let o_w = find([-c, 0.0]);
    let o_s = find([0.0, -c]);
    let o_ne = find([c, c]);
    let o_nw = find([-c, c]);
    let o_sw = find([-c, -c]);
    let o_se = find([c, -c]);
    let emit = |verts: &[[f64; 2]], tris: &mut Vec<[usize; 3]>, a: usize, b: usize, cc: usize| {
        let geo = Triangle::new([verts[a], verts[b], verts[cc]]);
        if geo.signed_area() > 0.0 {
            tris.push([a, b, cc]);
        } else {
            tris.push([a, cc, b]);
        }
    };
    // inner pattern: per quadrant an origin triangle and an away triangle
    for (ea, eb, corner) in [
        (ax_e, ax_n, c_ne),
        (ax_n, ax_w, c_nw),
        (ax_w, ax_s, c_sw),
        (ax_s, ax_e, c_se),
    ] {
        emit(&vertices, &mut triangles, origin, ea, eb);
        emit(&vertices, &mut triangles, ea, corner, eb);
    }
    // transition annulus: per quadrant, a fan of four triangles from the
    // new corner (two per flank)
    for (corner, ax_a, o_a, o_corner, o_b, ax_b) in [
        (c_ne, ax_e, o_e, o_ne, o_n, ax_n),
        (c_nw, ax_n, o_n, o_nw, o_w, ax_w),
        (c_sw, ax_w, o_w, o_sw, o_s, ax_s),
        (c_se, ax_s, o_s, o_se, o_e, ax_e),
    ] {
        emit(&vertices, &mut triangles, corner, ax_a, o_a);
        emit(&vertices, &mut triangles, corner, o_a, o_corner);
        emit(&vertices, &mut triangles, corner, o_corner, o_b);
        emit(&vertices, &mut triangles, corner, o_b, ax_b);
    }
    let mut out = Mesh::from_raw(vertices, triangles)?;
    out.level = mesh.level + 1;
    out.graded_center = Some(m);
    Ok(out)
}

/// An ordered list of meshes from coarsest to finest. For uniform
/// hierarchies the node-origin maps drive piecewise-linear interpolation
/// between consecutive levels.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    pub meshes: Vec<Mesh>,
    /// maps\[l\] connects meshes\[l\] to meshes\[l+1\].
    pub maps: Vec<RefinementMaps>,
}

impl MeshHierarchy {
    /// Uniformly refines `base` the given number of times.
    pub fn uniform(base: Mesh, refinements: usize) -> Self {
        let mut meshes = vec![base];
        let mut maps = Vec::new();
        for _ in 0..refinements {
            let (fine, map) = refine_uniform_with_maps(meshes.last().unwrap());
            meshes.push(fine);
            maps.push(map);
        }
        Self { meshes, maps }
    }

    pub fn finest(&self) -> &Mesh {
        self.meshes.last().unwrap()
    }

    pub fn depth(&self) -> usize {
        self.meshes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conformity_ok(mesh: &Mesh) {
        for f in &mesh.faces {
            assert!(!f.tris.is_empty() && f.tris.len() <= 2);
            assert_eq!(f.boundary, f.tris.len() == 1);
        }
        for t in 0..mesh.n_triangles() {
            assert!(mesh.triangle(t).signed_area() > 0.0);
        }
    }

    #[test]
    fn unit_square_counts() {
        let m = build_structured(Domain::UnitSquare);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.n_faces(), 5);
        conformity_ok(&m);
    }

    #[test]
    fn l_shape_counts() {
        // Euler: V - E + F = 2 with 6 triangles + outer face gives E = 13
        let m = build_structured(Domain::LShape);
        assert_eq!(m.n_vertices(), 8);
        assert_eq!(m.n_triangles(), 6);
        assert_eq!(m.n_faces(), 13);
        conformity_ok(&m);
    }

    #[test]
    fn centered_square_counts() {
        let m = build_structured(Domain::CenteredSquare);
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.graded_center, Some(1.0));
        conformity_ok(&m);
    }

    #[test]
    fn uniform_refinement_counts_and_halving() {
        let m = build_structured(Domain::UnitSquare);
        let r = refine_uniform(&m);
        assert_eq!(r.n_vertices(), 9);
        assert_eq!(r.n_triangles(), 8);
        assert!((r.max_h() - 0.5 * m.max_h()).abs() < 1e-15);
        assert!((shape_regularity(&r) - shape_regularity(&m)).abs() < 1e-12);
        conformity_ok(&r);
    }

    #[test]
    fn shape_regularity_values() {
        let reference =
            Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        assert!((shape_regularity(&reference) - 4.0).abs() < 1e-14);
        let h = 0.5f64 * 3.0f64.sqrt();
        let eq = Mesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((shape_regularity(&eq) - 4.0 / 3.0f64.sqrt()).abs() < 1e-12);
        assert!((shape_regularity(&eq) - 2.3094).abs() < 1e-4);
    }

    #[test]
    fn nested_vertices_under_uniform_refinement() {
        let m = build_structured(Domain::LShape);
        let (r, maps) = refine_uniform_with_maps(&m);
        assert_eq!(maps.node_origin.len(), r.n_vertices());
        for (v, origin) in maps.node_origin.iter().enumerate() {
            match origin {
                NodeOrigin::Vertex(i) => assert_eq!(r.vertices[v], m.vertices[*i]),
                NodeOrigin::EdgeMidpoint(a, b) => {
                    let pa = m.vertices[*a];
                    let pb = m.vertices[*b];
                    assert_eq!(r.vertices[v], [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                }
            }
        }
        assert_eq!(maps.tri_parent.len(), r.n_triangles());
    }

    #[test]
    fn graded_refinement_geometry() {
        let mut m = build_structured(Domain::CenteredSquare);
        let max0 = refine_graded_center(&m).unwrap().max_h();
        let mut mins = Vec::new();
        let mut ratios = Vec::new();
        for _ in 0..5 {
            m = refine_graded_center(&m).unwrap();
            conformity_ok(&m);
            mins.push(m.min_h());
            ratios.push(m.max_h() / m.min_h());
        }
        // max h stays fixed from the first graded step on
        assert!((m.max_h() - max0).abs() < 1e-15);
        // min h halves per application, so the ratio doubles
        for w in mins.windows(2) {
            assert!((w[1] - 0.5 * w[0]).abs() < 1e-15);
        }
        for w in ratios.windows(2) {
            assert!((w[1] - 2.0 * w[0]).abs() < 1e-12);
        }
        // regularity stays bounded (constant 4 for this family)
        assert!((shape_regularity(&m) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn graded_requires_marker() {
        let m = build_structured(Domain::UnitSquare);
        assert!(matches!(refine_graded_center(&m), Err(MeshError::NotGraded)));
    }

    #[test]
    fn graded_triangle_count_growth() {
        let mut m = build_structured(Domain::CenteredSquare);
        for j in 1..=4 {
            m = refine_graded_center(&m).unwrap();
            assert_eq!(m.n_triangles(), 8 + 16 * j);
            assert_eq!(m.n_vertices(), 9 + 8 * j);
        }
    }

    #[test]
    fn text_round_trip() {
        let m = build_structured(Domain::LShape);
        let s = m.to_text();
        let back = Mesh::from_text(&s).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.n_faces(), m.n_faces());
    }

    #[test]
    fn text_rejects_malformed() {
        assert!(Mesh::from_text("").is_err());
        assert!(Mesh::from_text("mesh 3d\n").is_err());
        assert!(Mesh::from_text("mesh 2d\nvertices 1\n0 0\ntriangles 1\n0 0 0\n").is_err());
        assert!(Mesh::from_text("mesh 2d\nvertices 2\n0 0\n1 0\ntriangles 1\n0 1 5\n").is_err());
        assert!(Mesh::from_text("mesh 2d\nvertices nope\n").is_err());
        // clockwise triangle
        assert!(
            Mesh::from_text("mesh 2d\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\n").is_err()
        );
    }

    #[test]
    fn determinism_of_face_ordering() {
        let a = build_structured(Domain::LShape);
        let b = build_structured(Domain::LShape);
        let fa: Vec<_> = a.faces.iter().map(|f| f.vertices).collect();
        let fb: Vec<_> = b.faces.iter().map(|f| f.vertices).collect();
        assert_eq!(fa, fb);
        let mut sorted = fa.clone();
        sorted.sort();
        assert_eq!(fa, sorted, "faces are stored in lexicographic order");
    }

    #[test]
    fn unknown_domain_descriptor() {
        assert!(Domain::parse("dodecahedron").is_err());
    }
}
