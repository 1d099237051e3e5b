//! Numerical verification of the analytic machinery: mesh-dependent trace
//! norms, the energy-vs-seminorm equivalence ratios, the auxiliary-space
//! deviation and contraction numbers, the trace-averaging operator, and
//! smoother bounds.

use crate::auxspace::{AuxiliarySpace, GalerkinCoarse};
use crate::hdg::{CondensedSystem, TraceSpace};
use crate::mesh::Mesh;
use crate::solvers::{
    generalized_sym_eigvals, lanczos_extremes, power_iteration_a_norm, smoother_dense,
    AuxCorrector, PowerOpts, Smoother, SolverError,
};
use crate::sparse::{dot, CooBuilder, CsrMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trace norms of one vector: the weighted L^2 norm, the mean-deviation
/// seminorm, and their per-element pieces.
#[derive(Clone, Debug)]
pub struct MeshNorms {
    /// ||lambda||_h
    pub norm_h: f64,
    /// |lambda|_h
    pub seminorm_h: f64,
    pub per_element: Vec<ElementTraceNorms>,
}

#[derive(Clone, Copy, Debug)]
pub struct ElementTraceNorms {
    /// Boundary mean m_T(lambda).
    pub mean: f64,
    /// h_T^{-1} || lambda - m_T ||^2 on the element boundary.
    pub seminorm_sq: f64,
    /// h_T || lambda ||^2 on the element boundary.
    pub norm_sq: f64,
}

/// Per-face orthonormal coefficients of a DOF vector for one element,
/// plus geometric data; zero on faces without DOFs.
fn element_face_data(
    mesh: &Mesh,
    trace: &TraceSpace,
    x: &[f64],
    t: usize,
) -> ([f64; 3], Vec<f64>, f64) {
    let modes = trace.k + 1;
    let mut lens = [0.0; 3];
    let mut coefs = vec![0.0; 3 * modes];
    for l in 0..3 {
        let f = mesh.tri_faces[t][l];
        lens[l] = mesh.faces[f].length;
        if let Some(base) = trace.face_base[f] {
            let s = trace.scale(f);
            for m in 0..modes {
                coefs[l * modes + m] = x[base + m] / s;
            }
        }
    }
    let perimeter = lens.iter().sum();
    (lens, coefs, perimeter)
}

/// Evaluates the trace norms of a DOF vector; exact quadrature since the
/// traces are polynomials in an orthonormal basis.
pub fn mesh_norms(mesh: &Mesh, trace: &TraceSpace, x: &[f64]) -> MeshNorms {
    assert_eq!(x.len(), trace.n_dofs());
    let modes = trace.k + 1;
    let mut norm_h_sq = 0.0;
    let mut seminorm_sq_total = 0.0;
    let mut per_element = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let (lens, coefs, perimeter) = element_face_data(mesh, trace, x, t);
        let h = mesh.h[t];
        let l2_sq: f64 = coefs.iter().map(|c| c * c).sum();
        let integral: f64 = (0..3).map(|l| lens[l].sqrt() * coefs[l * modes]).sum();
        let mean = integral / perimeter;
        let dev_sq = (l2_sq - perimeter * mean * mean).max(0.0);
        let e = ElementTraceNorms {
            mean,
            seminorm_sq: dev_sq / h,
            norm_sq: h * l2_sq,
        };
        norm_h_sq += e.norm_sq;
        seminorm_sq_total += e.seminorm_sq;
        per_element.push(e);
    }
    MeshNorms {
        norm_h: norm_h_sq.sqrt(),
        seminorm_h: seminorm_sq_total.sqrt(),
        per_element,
    }
}

/// Sparse matrix of the squared seminorm sum_T h_T^{-1} ||lambda -
/// m_T(lambda)||^2 in the scaled DOF coordinates.
pub fn seminorm_matrix(mesh: &Mesh, trace: &TraceSpace) -> CsrMatrix {
    let modes = trace.k + 1;
    let n = trace.n_dofs();
    let mut coo = CooBuilder::new(n, n);
    for t in 0..mesh.n_triangles() {
        let h = mesh.h[t];
        let mut lens = [0.0; 3];
        for l in 0..3 {
            lens[l] = mesh.faces[mesh.tri_faces[t][l]].length;
        }
        let perimeter: f64 = lens.iter().sum();
        // local mean vector over (face, mode) coefficients
        let mut mvec = vec![0.0; 3 * modes];
        for l in 0..3 {
            mvec[l * modes] = lens[l].sqrt() / perimeter;
        }
        for l_i in 0..3 {
            let f_i = mesh.tri_faces[t][l_i];
            let Some(b_i) = trace.face_base[f_i] else { continue };
            let s_i = trace.scale(f_i);
            for m_i in 0..modes {
                let li = l_i * modes + m_i;
                for l_j in 0..3 {
                    let f_j = mesh.tri_faces[t][l_j];
                    let Some(b_j) = trace.face_base[f_j] else { continue };
                    let s_j = trace.scale(f_j);
                    for m_j in 0..modes {
                        let lj = l_j * modes + m_j;
                        let delta = if li == lj { 1.0 } else { 0.0 };
                        let val = (delta - perimeter * mvec[li] * mvec[lj]) / h;
                        if val != 0.0 {
                            coo.push(b_i + m_i, b_j + m_j, val / (s_i * s_j));
                        }
                    }
                }
            }
        }
    }
    coo.build()
}

/// Diagonal of sum_T h_T^{-2} ||.||^2_{h, boundary of T} in the scaled
/// coordinates (the right side of the smoother stability bound).
pub fn inverse_h_weighted_diagonal(mesh: &Mesh, trace: &TraceSpace) -> Vec<f64> {
    let modes = trace.k + 1;
    let mut inv_h = vec![0.0; mesh.n_faces()];
    for t in 0..mesh.n_triangles() {
        for l in 0..3 {
            inv_h[mesh.tri_faces[t][l]] += 1.0 / mesh.h[t];
        }
    }
    let mut d = vec![0.0; trace.n_dofs()];
    for &f in &trace.dof_faces {
        let base = trace.face_base[f].unwrap();
        for m in 0..modes {
            d[base + m] = inv_h[f] / trace.face_weight[f];
        }
    }
    d
}

/// Extreme Rayleigh ratios of the condensed form against the boundary
/// seminorm: dense generalized eigensolve up to 3000 DOFs, Lanczos with
/// conjugate-gradient inner solves beyond.
pub fn check_assumption1(sys: &CondensedSystem) -> Result<(f64, f64), SolverError> {
    let s = seminorm_matrix(&sys.mesh, &sys.trace);
    let n = sys.n_dofs();
    if n <= 3000 {
        let eigs = generalized_sym_eigvals(&sys.matrix.to_dense(), &s.to_dense())?;
        Ok((eigs[0], eigs[n - 1]))
    } else {
        let op = |v: &[f64]| -> Vec<f64> {
            let av = sys.matrix.mul_vec(v);
            cg_solve(&s, &av, 1e-12, 10 * n)
        };
        let ip = |x: &[f64], y: &[f64]| dot(&s.mul_vec(x), y);
        lanczos_extremes(op, ip, n, 1e-8, 300, 0x10a)
    }
}

/// Plain conjugate gradients for SPD sparse systems (inner solves of
/// large generalized eigenproblems).
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let b_norm = rs.sqrt().max(1e-300);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            break;
        }
        let ap = a.mul_vec(&p);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

/// Auxiliary-space deviation: the stiffness-norm distance between the
/// Galerkin coarse operator and the auxiliary stiffness. Dense
/// eigensolve up to 600 nodes, Lanczos above.
pub fn compute_nh(aux: &AuxiliarySpace, coarse: &GalerkinCoarse) -> Result<f64, SolverError> {
    let n = aux.n_nodes();
    if n == 0 {
        return Ok(0.0);
    }
    if n <= 600 {
        let eigs = generalized_sym_eigvals(&coarse.matrix.to_dense(), &aux.stiffness.to_dense())?;
        Ok(eigs.iter().fold(0.0f64, |m, v| m.max((1.0 - v).abs())))
    } else {
        let chol = nalgebra::Cholesky::new(aux.stiffness.to_dense())
            .ok_or(SolverError::NotPositiveDefinite)?;
        let op = |v: &[f64]| -> Vec<f64> {
            let cv = coarse.matrix.mul_vec(v);
            let sol = chol.solve(&DVector::from_column_slice(&cv));
            v.iter().zip(sol.as_slice()).map(|(a, b)| a - b).collect()
        };
        let ip = |x: &[f64], y: &[f64]| dot(&aux.stiffness.mul_vec(x), y);
        let (lo, hi) = lanczos_extremes(op, ip, n, 1e-8, 300, 0x20b)?;
        Ok(lo.abs().max(hi.abs()))
    }
}

/// Contraction of the auxiliary corrector in the stiffness norm,
/// measured by power iteration on the error operator.
pub fn compute_mh(
    corrector: &AuxCorrector,
    aux: &AuxiliarySpace,
    opts: PowerOpts,
) -> Result<f64, SolverError> {
    let op = |v: &[f64]| -> Vec<f64> {
        let av = aux.stiffness.mul_vec(v);
        let cv = corrector.apply(&av);
        v.iter().zip(&cv).map(|(a, b)| a - b).collect()
    };
    power_iteration_a_norm(op, &aux.stiffness, opts)
}

/// The admissibility expression sqrt((1+N)/(1-N)) [(1+N) M + N]; the
/// two-level theory wants it below one.
pub fn admissibility(nh: f64, mh: f64) -> f64 {
    (((1.0 + nh) / (1.0 - nh)).max(0.0)).sqrt() * ((1.0 + nh) * mh + nh)
}

// ---------------------------------------------------------------------------
// Averaging operator
// ---------------------------------------------------------------------------

/// Sparse map from trace DOFs to interior nodal values: each interior
/// node receives the arithmetic mean of the boundary means m_T over the
/// elements sharing it; boundary nodes are zero.
pub struct AveragingOperator {
    pub matrix: CsrMatrix,
}

pub fn build_averaging(mesh: &Mesh, trace: &TraceSpace, aux: &AuxiliarySpace) -> AveragingOperator {
    // patch sizes
    let mut patch = vec![0usize; mesh.n_vertices()];
    for tri in &mesh.triangles {
        for &v in tri {
            patch[v] += 1;
        }
    }
    let mut coo = CooBuilder::new(aux.n_nodes(), trace.n_dofs());
    for t in 0..mesh.n_triangles() {
        let mut perimeter = 0.0;
        for l in 0..3 {
            perimeter += mesh.faces[mesh.tri_faces[t][l]].length;
        }
        for &v in &mesh.triangles[t] {
            let Some(rank) = aux.interior_rank[v] else { continue };
            let w_patch = 1.0 / patch[v] as f64;
            for l in 0..3 {
                let f = mesh.tri_faces[t][l];
                let Some(base) = trace.face_base[f] else { continue };
                let len = mesh.faces[f].length;
                // only the constant mode contributes to the boundary mean
                coo.push(
                    rank,
                    base,
                    w_patch * len.sqrt() / (perimeter * trace.scale(f)),
                );
            }
        }
    }
    AveragingOperator { matrix: coo.build() }
}

impl AveragingOperator {
    /// Nodal values of the averaged function at interior nodes.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }
}

/// H^1 seminorm of an interior-node P1 function (zero on the boundary),
/// from the unit-coefficient nodal stiffness.
pub fn h1_seminorm(identity_aux: &AuxiliarySpace, nodal: &[f64]) -> f64 {
    dot(&identity_aux.nodal_stiffness.mul_vec(nodal), nodal).max(0.0).sqrt()
}

// ---------------------------------------------------------------------------
// Smoother bounds
// ---------------------------------------------------------------------------

/// Dense desk-scale report on the smoother assumptions: the eigenvalue
/// range of R A, the stability constant of the symmetrized inverse
/// against the h^{-2}-weighted trace norm, and the symmetrization
/// inequality samples.
#[derive(Clone, Debug)]
pub struct SmootherBounds {
    /// Largest eigenvalue of R A.
    pub omega: f64,
    /// Smallest eigenvalue of R A.
    pub eig_min: f64,
    /// max over samples of <Rbar^{-1} x, x> / sum_T h_T^{-2} ||x||^2.
    pub stability_constant: f64,
    /// Samples violating <Rbar^{-1} x, x> <= <R^{-1} x, x> beyond 1e-12.
    pub violations: usize,
    /// Largest relative excess seen in the inequality samples.
    pub max_excess: f64,
}

pub fn check_smoother_bounds(
    sys: &CondensedSystem,
    smoother: &Smoother,
    samples: usize,
    seed: u64,
) -> Result<SmootherBounds, SolverError> {
    let a = sys.matrix.to_dense();
    let n = a.nrows();
    let r = smoother_dense(smoother, &sys.matrix)?;
    let eigs = crate::solvers::eigvals_smoother_times_a(&r, &a)?;
    let omega = eigs[n - 1];
    let eig_min = eigs[0];
    // symmetrization Rbar = R^t + R - R^t A R
    let rbar = r.transpose() + &r - r.transpose() * &a * &r;
    let rbar_lu = rbar.clone().lu();
    let r_lu = r.clone().lu();
    let weight = inverse_h_weighted_diagonal(&sys.mesh, &sys.trace);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stability: f64 = 0.0;
    let mut violations = 0;
    let mut max_excess: f64 = 0.0;
    for _ in 0..samples {
        let x = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0)));
        let rbar_inv_x = rbar_lu.solve(&x).ok_or(SolverError::NotPositiveDefinite)?;
        let quad_bar = rbar_inv_x.dot(&x);
        let wsum: f64 = x.iter().zip(&weight).map(|(v, w)| v * v * w).sum();
        stability = stability.max(quad_bar / wsum);
        let r_inv_x = r_lu.solve(&x).ok_or(SolverError::NotPositiveDefinite)?;
        let quad_plain = r_inv_x.dot(&x);
        let excess = (quad_bar - quad_plain) / quad_plain.abs().max(1e-300);
        if excess > 1e-12 {
            violations += 1;
        }
        max_excess = max_excess.max(excess);
    }
    Ok(SmootherBounds { omega, eig_min, stability_constant: stability, violations, max_excess })
}

/// Largest eigenvalue of the condensed operator.
pub fn lambda_max(a: &CsrMatrix) -> Result<f64, SolverError> {
    let (_, hi) = lanczos_extremes(|v| a.mul_vec(v), dot, a.nrows(), 1e-8, 300, 0x30c)?;
    Ok(hi)
}

/// Dense norm of an error operator (given as a closure) in the inner
/// product of the SPD matrix `a`.
pub fn operator_a_norm_dense(
    error_op: impl Fn(&[f64]) -> Vec<f64>,
    a: &DMatrix<f64>,
) -> Result<f64, SolverError> {
    let n = a.nrows();
    let mut g = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = error_op(&e);
        for i in 0..n {
            g[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    let ag = a * &g;
    let ag = (&ag + ag.transpose()) * 0.5;
    let eigs = generalized_sym_eigvals(&ag, a)?;
    Ok(eigs.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxspace::{assemble_p1, build_prolongation, galerkin_coarse};
    use crate::elements::{ElementFamily, FamilyKind};
    use crate::hdg::{assemble_condensed, assemble_on, CoefficientField};
    use crate::mesh::{build_structured, refine_uniform, Domain};
    use crate::solvers::TwoLevelPreconditioner;
    use std::sync::Arc;

    fn reference_mesh() -> Arc<Mesh> {
        Arc::new(Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap())
    }

    #[test]
    fn norms_on_reference_triangle() {
        let mesh = reference_mesh();
        let trace = TraceSpace::all_faces(&mesh, 0);
        // lambda = 1 on the whole boundary
        let ones = trace.ones_function(&mesh);
        let norms = mesh_norms(&mesh, &trace, &ones);
        let s2 = 2.0f64.sqrt();
        assert!((norms.norm_h.powi(2) - s2 * (2.0 + s2)).abs() < 1e-12);
        assert!(norms.seminorm_h < 1e-13, "constants are in the seminorm kernel");
        // lambda = indicator of edge (0,0)-(1,0): face 0 in lexicographic
        // order; orthonormal coefficient 1
        let mut x = vec![0.0; 3];
        x[0] = trace.scale(0);
        let norms = mesh_norms(&mesh, &trace, &x);
        let m = 1.0 / (2.0 + s2);
        assert!((norms.per_element[0].mean - m).abs() < 1e-13);
        assert!((norms.per_element[0].seminorm_sq - 0.5).abs() < 1e-13);
        // and the seminorm matrix agrees
        let s = seminorm_matrix(&mesh, &trace);
        let q = dot(&s.mul_vec(&x), &x);
        assert!((q - 0.5).abs() < 1e-13);
    }

    #[test]
    fn norm_h_equals_euclidean_norm_of_scaled_coordinates() {
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::LShape)));
        let trace = TraceSpace::interior(&mesh, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..trace.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norms = mesh_norms(&mesh, &trace, &x);
        let eu = dot(&x, &x).sqrt();
        assert!((norms.norm_h - eu).abs() < 1e-12 * eu);
    }

    #[test]
    fn seminorm_kernel_is_trivial_on_interior_layout() {
        // on the standard layout the seminorm matrix is positive definite
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::UnitSquare)));
        let trace = TraceSpace::interior(&mesh, 0);
        let s = seminorm_matrix(&mesh, &trace).to_dense();
        let eigs = nalgebra::SymmetricEigen::new(s).eigenvalues;
        for v in eigs.iter() {
            assert!(*v > 1e-10, "seminorm eigenvalue {v}");
        }
    }

    #[test]
    fn assumption1_scales_with_the_coefficient() {
        // the condensed form is linear in the coefficient wherever the
        // stabilization weight scales along with it (or vanishes), so the
        // extreme ratios double exactly under a -> 2a
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::UnitSquare)));
        let c1 = CoefficientField::identity(&mesh);
        let c2 = CoefficientField::piecewise_scalar(&mesh, |_, _| 2.0);
        // zero-stabilization family: nothing else to scale
        let rt = ElementFamily::with_default_stabilization(FamilyKind::Rt, 0).unwrap();
        let s1 = assemble_condensed(&mesh, &rt, &c1, None).unwrap();
        let s2 = assemble_condensed(&mesh, &rt, &c2, None).unwrap();
        let (lo1, hi1) = check_assumption1(&s1).unwrap();
        let (lo2, hi2) = check_assumption1(&s2).unwrap();
        assert!(lo1 > 0.0);
        assert!((lo2 / lo1 - 2.0).abs() < 1e-9);
        assert!((hi2 / hi1 - 2.0).abs() < 1e-9);
        // stabilized family with the weight scaled alongside
        let st1 = ElementFamily::new(
            FamilyKind::Stab,
            0,
            crate::elements::Stabilization::Constant(1.0),
        )
        .unwrap();
        let st2 = ElementFamily::new(
            FamilyKind::Stab,
            0,
            crate::elements::Stabilization::Constant(2.0),
        )
        .unwrap();
        let s1 = assemble_condensed(&mesh, &st1, &c1, None).unwrap();
        let s2 = assemble_condensed(&mesh, &st2, &c2, None).unwrap();
        let (lo1, hi1) = check_assumption1(&s1).unwrap();
        let (lo2, hi2) = check_assumption1(&s2).unwrap();
        assert!(lo1 > 0.0);
        assert!((lo2 / lo1 - 2.0).abs() < 1e-9);
        assert!((hi2 / hi1 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn nh_zero_for_gradient_reproducing_family() {
        let mesh = refine_uniform(&build_structured(Domain::LShape));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 1).unwrap();
        let sys = assemble_condensed(&Arc::new(mesh.clone()), &fam, &coef, None).unwrap();
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        let coarse = galerkin_coarse(&sys.matrix, &prol).unwrap();
        let nh = compute_nh(&aux, &coarse).unwrap();
        assert!(nh <= 1e-9, "deviation {nh}");
    }

    #[test]
    fn mh_zero_for_exact_corrector() {
        let mesh = refine_uniform(&refine_uniform(&build_structured(Domain::UnitSquare)));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let corr = AuxCorrector::exact(&aux).unwrap();
        let mh = compute_mh(&corr, &aux, PowerOpts::default()).unwrap();
        assert!(mh <= 1e-10, "exact corrector contraction {mh}");
    }

    #[test]
    fn averaging_is_mean_of_equal_values_and_zero_on_boundary() {
        let mesh = Arc::new(refine_uniform(&refine_uniform(&build_structured(
            Domain::UnitSquare,
        ))));
        let coef = CoefficientField::identity(&mesh);
        let aux = assemble_p1(&mesh, &coef);
        let trace = TraceSpace::all_faces(&mesh, 0);
        let avg = build_averaging(&mesh, &trace, &aux);
        // the constant-one trace has m_T = 1 on every element
        let ones = trace.ones_function(&mesh);
        let nodal = avg.apply(&ones);
        for v in &nodal {
            assert!((v - 1.0).abs() < 1e-12, "patch mean {v}");
        }
        // rows are convex combinations: coefficients of each row against
        // the per-element mean functionals sum to one; checked via the
        // constant trace above
        let trace_i = TraceSpace::interior(&mesh, 0);
        let avg_i = build_averaging(&mesh, &trace_i, &aux);
        assert_eq!(avg_i.matrix.nrows(), aux.n_nodes());
    }

    #[test]
    fn smoother_bounds_on_desk_system() {
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::LShape)));
        let coef = CoefficientField::identity(&mesh);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
        let b = check_smoother_bounds(&sys, &Smoother::GsSymmetric { sweeps: 1 }, 50, 0xabc)
            .unwrap();
        assert!(b.omega <= 1.0 + 1e-10, "omega {}", b.omega);
        assert!(b.eig_min > 0.0);
        assert_eq!(b.violations, 0, "max excess {}", b.max_excess);
        assert!(b.stability_constant.is_finite() && b.stability_constant > 0.0);
    }

    #[test]
    fn representation_independence_under_diagonal_rescaling() {
        // rescaling the trace DOF basis must not move the spectral
        // quantities: the operators transform by similarity
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::UnitSquare)));
        let coef = CoefficientField::identity(&mesh);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
        let aux = assemble_p1(&mesh, &coef);
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        let n = sys.n_dofs();

        let p = TwoLevelPreconditioner::new(
            &sys,
            Smoother::GsSymmetric { sweeps: 1 },
            AuxCorrector::exact(&aux).unwrap(),
            &prol,
        )
        .unwrap();
        let a_dense = sys.matrix.to_dense();
        let base = operator_a_norm_dense(|v| p.error_apply(v), &a_dense).unwrap();

        // perturbed diagonal scaling d_i = 1 + 0.3 sin(3i + 1)
        let d: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * ((3 * i + 1) as f64).sin()).collect();
        let mut coo = CooBuilder::new(n, n);
        for rr in 0..n {
            let (cols, vals) = sys.matrix.row(rr);
            for (&c, &v) in cols.iter().zip(vals) {
                coo.push(rr, c, d[rr] * v * d[c]);
            }
        }
        let a_scaled = coo.build();
        // prolongation transforms on the trace side only
        let mut pcoo = CooBuilder::new(n, aux.n_nodes());
        let mut tcoo = CooBuilder::new(aux.n_nodes(), n);
        for rr in 0..n {
            let (cols, vals) = prol.matrix.row(rr);
            for (&c, &v) in cols.iter().zip(vals) {
                pcoo.push(rr, c, v / d[rr]);
                tcoo.push(c, rr, v / d[rr]);
            }
        }
        let prol_scaled =
            crate::auxspace::ProlongationMap { matrix: pcoo.build(), transpose: tcoo.build() };
        let sys_scaled = CondensedSystem {
            matrix: a_scaled,
            rhs: vec![0.0; n],
            trace: sys.trace.clone(),
            mesh: sys.mesh.clone(),
            family: sys.family.clone(),
            coefficient: sys.coefficient.clone(),
            locals: Vec::new(),
        };
        let p2 = TwoLevelPreconditioner::new(
            &sys_scaled,
            Smoother::GsSymmetric { sweeps: 1 },
            AuxCorrector::exact(&aux).unwrap(),
            &prol_scaled,
        )
        .unwrap();
        let scaled_norm =
            operator_a_norm_dense(|v| p2.error_apply(v), &sys_scaled.matrix.to_dense()).unwrap();
        assert!(
            (base - scaled_norm).abs() <= 1e-9,
            "contraction moved under rescaling: {base} vs {scaled_norm}"
        );
        // the deviation number is a congruence invariant as well
        let coarse = galerkin_coarse(&sys.matrix, &prol).unwrap();
        let coarse_scaled = galerkin_coarse(&sys_scaled.matrix, &prol_scaled).unwrap();
        let nh = compute_nh(&aux, &coarse).unwrap();
        let nh2 = compute_nh(&aux, &coarse_scaled).unwrap();
        assert!((nh - nh2).abs() <= 1e-9);
    }

    #[test]
    fn seminorm_vanishes_exactly_on_elementwise_constants() {
        let mesh = reference_mesh();
        let trace = TraceSpace::all_faces(&mesh, 1);
        let ones = trace.ones_function(&mesh);
        let s = seminorm_matrix(&mesh, &trace);
        let q = dot(&s.mul_vec(&ones), &ones);
        assert!(q.abs() < 1e-13);
    }

    #[test]
    fn assumption1_errors_surface_on_all_faces_layout_with_constants() {
        // with every face free, constants make the seminorm singular; the
        // dense path reports an error rather than panicking
        let mesh = reference_mesh();
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let coef = CoefficientField::identity(&mesh);
        let sys = assemble_on(TraceSpace::all_faces(&mesh, 0), &mesh, &fam, &coef, None).unwrap();
        assert!(check_assumption1(&sys).is_err());
    }
}
