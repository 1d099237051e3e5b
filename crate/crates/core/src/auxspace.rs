//! The conforming piecewise-linear auxiliary space: its stiffness
//! operator, the prolongation into the trace space, and the Galerkin
//! coarse operator.
//!
//! Auxiliary-space vectors are nodal values at interior vertices scaled
//! by the square root of the exact lumped P1 mass, so that the Euclidean
//! pairing of coefficient vectors is the lumped L^2 pairing and operator
//! adjoints are plain matrix transposes, matching the trace-side
//! convention.

use crate::elements::{edge_quadrature, face_mode, triangle_quadrature};
use crate::hdg::{CoefficientField, TraceSpace};
use crate::mesh::Mesh;
use crate::sparse::{CooBuilder, CsrMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Interior-node P1 space with its stiffness operator.
pub struct AuxiliarySpace {
    /// Interior vertex ids, ascending; the coordinate order of the space.
    pub interior: Vec<usize>,
    /// vertex id -> interior rank.
    pub interior_rank: Vec<Option<usize>>,
    /// Stiffness in scaled coordinates (lumped-mass congruence of the
    /// nodal stiffness).
    pub stiffness: CsrMatrix,
    /// Nodal stiffness (interior rows/columns only).
    pub nodal_stiffness: CsrMatrix,
    /// Exact lumped P1 mass per interior node.
    pub lumped_mass: Vec<f64>,
    /// Node coordinates per interior rank.
    pub coords: Vec<[f64; 2]>,
}

/// P1 hat-function gradients on a triangle, one per vertex.
fn p1_gradients(mesh: &Mesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let tri = mesh.triangle(t);
    let [a, b, c] = tri.v;
    let area2 = 2.0 * tri.signed_area();
    let grads = [
        [(b[1] - c[1]) / area2, (c[0] - b[0]) / area2],
        [(c[1] - a[1]) / area2, (a[0] - c[0]) / area2],
        [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2],
    ];
    (grads, tri.area())
}

/// Assembles the P1 stiffness with the given diffusion tensor on interior
/// nodes (homogeneous Dirichlet rows and columns eliminated). Exact for
/// piecewise-constant coefficients; quadrature of degree six otherwise.
pub fn assemble_p1(mesh: &Mesh, coef: &CoefficientField) -> AuxiliarySpace {
    let interior = mesh.interior_vertices();
    let mut interior_rank = vec![None; mesh.n_vertices()];
    for (r, &v) in interior.iter().enumerate() {
        interior_rank[v] = Some(r);
    }
    let n = interior.len();
    let mut coo = CooBuilder::new(n, n);
    let mut lumped = vec![0.0; n];
    let var_rule = triangle_quadrature(6).expect("degree 6 rule");
    for t in 0..mesh.n_triangles() {
        let (grads, area) = p1_gradients(mesh, t);
        let tri = mesh.triangle(t);
        // element stiffness: exact one-point rule for constant tensors
        let mut local = [[0.0; 3]; 3];
        match coef {
            CoefficientField::PiecewiseConstant(_) => {
                let c = tri.centroid();
                let a = coef.at(t, c[0], c[1]);
                for i in 0..3 {
                    let ag = a.apply(grads[i]);
                    for j in 0..3 {
                        local[i][j] = area * (ag[0] * grads[j][0] + ag[1] * grads[j][1]);
                    }
                }
            }
            CoefficientField::Variable(_) => {
                let jac = 2.0 * area;
                for (p, w) in var_rule.points.iter().zip(&var_rule.weights) {
                    let q = tri.map(*p);
                    let a = coef.at(t, q[0], q[1]);
                    for i in 0..3 {
                        let ag = a.apply(grads[i]);
                        for j in 0..3 {
                            local[i][j] += w * jac * (ag[0] * grads[j][0] + ag[1] * grads[j][1]);
                        }
                    }
                }
            }
        }
        let verts = mesh.triangles[t];
        for i in 0..3 {
            let Some(ri) = interior_rank[verts[i]] else { continue };
            lumped[ri] += area / 3.0;
            for j in 0..3 {
                if let Some(rj) = interior_rank[verts[j]] {
                    coo.push(ri, rj, local[i][j]);
                }
            }
        }
    }
    let nodal = coo.build();
    // scaled stiffness: M^{-1/2} K M^{-1/2}
    let mut scaled = CooBuilder::new(n, n);
    for r in 0..n {
        let (cols, vals) = nodal.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            scaled.push(r, c, v / (lumped[r].sqrt() * lumped[c].sqrt()));
        }
    }
    AuxiliarySpace {
        coords: interior.iter().map(|&v| mesh.vertices[v]).collect(),
        interior,
        interior_rank,
        stiffness: scaled.build(),
        nodal_stiffness: nodal,
        lumped_mass: lumped,
    }
}

impl AuxiliarySpace {
    pub fn n_nodes(&self) -> usize {
        self.interior.len()
    }

    /// Scaled coordinates of the P1 function with the given nodal values.
    pub fn scale_nodal(&self, nodal: &[f64]) -> Vec<f64> {
        nodal
            .iter()
            .zip(&self.lumped_mass)
            .map(|(v, m)| v * m.sqrt())
            .collect()
    }

    /// Nodal values from scaled coordinates.
    pub fn unscale(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .zip(&self.lumped_mass)
            .map(|(v, m)| v / m.sqrt())
            .collect()
    }
}

/// Sparse prolongation from the auxiliary space into the trace space:
/// face-wise L^2 projection of the P1 trace, in the scaled coordinates of
/// both spaces.
pub struct ProlongationMap {
    pub matrix: CsrMatrix,
    pub transpose: CsrMatrix,
}

/// Builds the prolongation for the trace layout of degree k.
pub fn build_prolongation(mesh: &Mesh, trace: &TraceSpace, aux: &AuxiliarySpace) -> ProlongationMap {
    let k = trace.k;
    let rule = edge_quadrature(2 * k as usize + 2).expect("edge rule");
    let mut coo = CooBuilder::new(trace.n_dofs(), aux.n_nodes());
    for &f in &trace.dof_faces {
        let (va, vb) = mesh.faces[f].vertices;
        let len = mesh.faces[f].length;
        let s = trace.scale(f);
        let base = trace.face_base[f].unwrap();
        // the two P1 hats supported on this face: 1 - t at the smaller
        // vertex, t at the larger
        for (vert, hat_is_t) in [(va, false), (vb, true)] {
            let Some(rank) = aux.interior_rank[vert] else { continue };
            let ms = aux.lumped_mass[rank].sqrt();
            for m in 0..=k {
                let mut acc = 0.0;
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let t = p[0];
                    let hat = if hat_is_t { t } else { 1.0 - t };
                    acc += w * len * hat * face_mode(m, t, len);
                }
                coo.push(base + m, rank, s * acc / ms);
            }
        }
    }
    let matrix = coo.build();
    let transpose = matrix.transpose();
    ProlongationMap { matrix, transpose }
}

/// Galerkin coarse operator I^t A I, computed sparsely; roundoff
/// asymmetry is checked and symmetrized away.
pub struct GalerkinCoarse {
    pub matrix: CsrMatrix,
    /// Relative asymmetry found before symmetrization.
    pub asymmetry: f64,
}

pub fn galerkin_coarse(a: &CsrMatrix, prol: &ProlongationMap) -> Result<GalerkinCoarse, AuxError> {
    if a.ncols() != prol.matrix.nrows() {
        return Err(AuxError::DimensionMismatch { expected: a.ncols(), got: prol.matrix.nrows() });
    }
    let ai = a.matmul(&prol.matrix);
    let coarse = prol.transpose.matmul(&ai);
    let asymmetry = coarse.asymmetry();
    Ok(GalerkinCoarse { matrix: coarse.symmetrized(), asymmetry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{ElementFamily, FamilyKind};
    use crate::hdg::{assemble_condensed, SymMat2};
    use crate::mesh::{build_structured, refine_uniform, Domain};
    use std::sync::Arc;

    #[test]
    fn five_point_stencil_diagonal() {
        // unit square refined once: 9 nodes, 1 interior; diagonal entry 4
        let mesh = refine_uniform(&build_structured(Domain::UnitSquare));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        assert_eq!(aux.n_nodes(), 1);
        assert!((aux.nodal_stiffness.get(0, 0) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_symmetric_and_scales_linearly() {
        let mesh = refine_uniform(&refine_uniform(&build_structured(Domain::LShape)));
        let coef1 = CoefficientField::identity(&mesh);
        let coef10 = CoefficientField::piecewise_scalar(&mesh, |_, _| 10.0);
        let a1 = assemble_p1(&mesh, &coef1);
        let a10 = assemble_p1(&mesh, &coef10);
        assert!(a1.stiffness.asymmetry() < 1e-13);
        let d1 = a1.nodal_stiffness.to_dense();
        let d10 = a10.nodal_stiffness.to_dense();
        assert!((d10 - 10.0 * d1).abs().max() < 1e-12);
    }

    #[test]
    fn interior_row_sums_vanish_for_constant_coefficient() {
        // rows whose stencil excludes boundary nodes sum to zero
        let mesh = refine_uniform(&refine_uniform(&refine_uniform(&build_structured(
            Domain::UnitSquare,
        ))));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let k = &aux.nodal_stiffness;
        // find an interior node all of whose mesh neighbors are interior
        let mut checked = 0;
        for (r, &v) in aux.interior.iter().enumerate() {
            let mut all_interior = true;
            for f in &mesh.faces {
                if f.vertices.0 == v && mesh.boundary_vertex[f.vertices.1] {
                    all_interior = false;
                }
                if f.vertices.1 == v && mesh.boundary_vertex[f.vertices.0] {
                    all_interior = false;
                }
            }
            if all_interior {
                let (_, vals) = k.row(r);
                let sum: f64 = vals.iter().sum();
                assert!(sum.abs() < 1e-13, "row sum {sum}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn prolongation_k0_entries() {
        let mesh = refine_uniform(&build_structured(Domain::UnitSquare));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let sys = assemble_condensed(&Arc::new(mesh.clone()), &fam, &coef, None).unwrap();
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        // the single interior node is the square center; project its hat
        let center = aux.interior[0];
        let nodal = vec![1.0];
        let scaled = aux.scale_nodal(&nodal);
        let x = prol.matrix.mul_vec(&scaled);
        for &f in &sys.trace.dof_faces {
            let (a, b) = mesh.faces[f].vertices;
            let touches = a == center || b == center;
            let dof = sys.trace.dof(f, 0).unwrap();
            // mean value over the face: orthonormal coefficient / sqrt(len),
            // after undoing the trace scaling
            let mean = x[dof] / sys.trace.scale(f) / mesh.faces[f].length.sqrt();
            if touches {
                assert!((mean - 0.5).abs() < 1e-13, "hat edge mean {mean}");
            } else {
                assert!(mean.abs() < 1e-14, "disjoint face mean {mean}");
            }
        }
    }

    #[test]
    fn prolongation_reproduces_p1_traces_for_k1() {
        let mesh = refine_uniform(&refine_uniform(&build_structured(Domain::UnitSquare)));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 1).unwrap();
        let sys = assemble_condensed(&Arc::new(mesh.clone()), &fam, &coef, None).unwrap();
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        // a P1 function: v(x, y) = x - 2y nodally, zero on boundary nodes
        let nodal: Vec<f64> = aux.coords.iter().map(|p| p[0] - 2.0 * p[1]).collect();
        let x = prol.matrix.mul_vec(&aux.scale_nodal(&nodal));
        // compare against the direct projection of the continuous trace
        let vfun = {
            let interior_rank = aux.interior_rank.clone();
            let vertices = mesh.vertices.clone();
            move |f: usize, t: f64| -> f64 {
                let (a, b) = mesh.faces[f].vertices;
                let pa = vertices[a];
                let pb = vertices[b];
                let va = if interior_rank[a].is_some() { pa[0] - 2.0 * pa[1] } else { 0.0 };
                let vb = if interior_rank[b].is_some() { pb[0] - 2.0 * pb[1] } else { 0.0 };
                va * (1.0 - t) + vb * t
            }
        };
        let rule = edge_quadrature(4).unwrap();
        let direct = sys.trace.project_function(&sys.mesh, vfun, &rule);
        for (a, b) in x.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn prolongation_injective_on_desk_meshes() {
        let mesh = refine_uniform(&refine_uniform(&build_structured(Domain::LShape)));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        for k in 0..2 {
            let trace = TraceSpace::interior(&mesh, k);
            let prol = build_prolongation(&mesh, &trace, &aux);
            let d = prol.matrix.to_dense();
            let svd = nalgebra::SVD::new(d, false, false);
            let min_sv = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min_sv > 1e-8, "k={k}: smallest singular value {min_sv}");
        }
    }

    #[test]
    fn adjoint_consistency_in_scaled_coordinates() {
        let mesh = refine_uniform(&build_structured(Domain::LShape));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 1).unwrap();
        let sys = assemble_condensed(&Arc::new(mesh.clone()), &fam, &coef, None).unwrap();
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let v: Vec<f64> = (0..aux.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mu: Vec<f64> = (0..sys.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let iv = prol.matrix.mul_vec(&v);
            let itm = prol.transpose.mul_vec(&mu);
            let lhs = crate::sparse::dot(&iv, &mu);
            let rhs = crate::sparse::dot(&itm, &v);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn galerkin_identity_and_coarse_spd() {
        let mesh = refine_uniform(&build_structured(Domain::LShape));
        let coef = CoefficientField::piecewise_scalar(&mesh, |x, _| if x > 0.0 { 2.0 } else { 1.0 });
        let aux = assemble_p1(&mesh, &coef);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let sys = assemble_condensed(&Arc::new(mesh.clone()), &fam, &coef, None).unwrap();
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        let coarse = galerkin_coarse(&sys.matrix, &prol).unwrap();
        assert!(coarse.asymmetry <= 1e-12);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..aux.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q = crate::sparse::dot(&coarse.matrix.mul_vec(&v), &v);
            assert!(q > 0.0);
            // Galerkin identity: (coarse v, v) = a_h(I v, I v)
            let iv = prol.matrix.mul_vec(&v);
            let ah = crate::sparse::dot(&sys.matrix.mul_vec(&iv), &iv);
            assert!((q - ah).abs() <= 1e-11 * ah.abs().max(1.0));
        }
    }

    #[test]
    fn coarse_equals_p1_stiffness_for_gradient_reproducing_families() {
        // piecewise-constant coefficients: the Galerkin coarse operator of
        // Rt, Bdm, Stab k=1 and Raised families is the P1 stiffness
        let base = build_structured(Domain::LShape);
        let jump = |x: f64, y: f64| {
            if x < 0.0 {
                1.0
            } else if y > 0.0 {
                5.0
            } else {
                10.0
            }
        };
        for lvl in 0..2 {
            let mut mesh = base.clone();
            for _ in 0..=lvl {
                mesh = refine_uniform(&mesh);
            }
            let coef = CoefficientField::piecewise_scalar(&mesh, jump);
            let aux = assemble_p1(&mesh, &coef);
            let meshrc = Arc::new(mesh.clone());
            for (kind, k) in [
                (FamilyKind::Rt, 0),
                (FamilyKind::Bdm, 1),
                (FamilyKind::Stab, 1),
                (FamilyKind::Raised, 0),
            ] {
                let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
                let sys = assemble_condensed(&meshrc, &fam, &coef, None).unwrap();
                let prol = build_prolongation(&mesh, &sys.trace, &aux);
                let coarse = galerkin_coarse(&sys.matrix, &prol).unwrap();
                let d = (coarse.matrix.to_dense() - aux.stiffness.to_dense()).abs().max();
                let scale = aux.stiffness.to_dense().abs().max();
                assert!(d / scale <= 1e-10, "{kind:?} level {lvl}: relative gap {}", d / scale);
            }
        }
    }

    #[test]
    fn anisotropic_constant_tensor_also_exact() {
        let mesh = refine_uniform(&build_structured(Domain::UnitSquare));
        let tensor = SymMat2 { xx: 3.0, xy: 0.5, yy: 1.2 };
        let coef = CoefficientField::PiecewiseConstant(Arc::new(vec![
            tensor;
            mesh.n_triangles()
        ]));
        let aux = assemble_p1(&mesh, &coef);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Rt, 0).unwrap();
        let sys = assemble_condensed(&Arc::new(mesh.clone()), &fam, &coef, None).unwrap();
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        let coarse = galerkin_coarse(&sys.matrix, &prol).unwrap();
        let d = (coarse.matrix.to_dense() - aux.stiffness.to_dense()).abs().max();
        assert!(d <= 1e-11 * aux.stiffness.to_dense().abs().max());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mesh = refine_uniform(&build_structured(Domain::UnitSquare));
        let coarse_mesh = build_structured(Domain::UnitSquare);
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let coarse_coef = CoefficientField::identity(&coarse_mesh);
        let sys =
            assemble_condensed(&Arc::new(coarse_mesh.clone()), &fam, &coarse_coef, None).unwrap();
        let prol = build_prolongation(&mesh, &TraceSpace::interior(&mesh, 0), &aux);
        assert!(galerkin_coarse(&sys.matrix, &prol).is_err());
    }
}
