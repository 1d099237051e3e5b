//! Local saddle-point solvers, static condensation to the face-based
//! trace system, element-by-element recovery, and the weak-Galerkin
//! variant of the local problems.
//!
//! Trace unknowns are face-wise polynomials of degree k on interior
//! faces (zero on the boundary). Each face carries an L^2-orthonormal
//! basis; globally, the degree of freedom for (face F, mode m) is scaled
//! by sqrt(sum of adjacent h_T) so that the Euclidean inner product of
//! coefficient vectors equals the mesh-dependent trace inner product.
//! In these coordinates every operator adjoint is a plain matrix
//! transpose.

use crate::elements::{
    edge_quadrature, face_mode, flux_basis, scalar_basis, ElementFamily, ElementError,
    QuadratureRule,
};
use crate::mesh::Mesh;
use crate::sparse::{CooBuilder, CsrMatrix};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HdgError {
    #[error("singular local saddle-point matrix on element {element}")]
    SingularLocal { element: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Element(#[from] ElementError),
}

/// Symmetric 2x2 coefficient matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat2 {
    pub fn identity() -> Self {
        Self { xx: 1.0, xy: 0.0, yy: 1.0 }
    }

    pub fn scalar(s: f64) -> Self {
        Self { xx: s, xy: 0.0, yy: s }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn inverse(&self) -> SymMat2 {
        let det = self.xx * self.yy - self.xy * self.xy;
        SymMat2 { xx: self.yy / det, xy: -self.xy / det, yy: self.xx / det }
    }

    pub fn is_spd(&self) -> bool {
        self.xx > 0.0 && self.xx * self.yy - self.xy * self.xy > 0.0
    }

    pub fn scale(&self, s: f64) -> SymMat2 {
        SymMat2 { xx: s * self.xx, xy: s * self.xy, yy: s * self.yy }
    }
}

/// Diffusion tensor: constant per element, or a coordinate function.
#[derive(Clone)]
pub enum CoefficientField {
    PiecewiseConstant(Arc<Vec<SymMat2>>),
    Variable(Arc<dyn Fn(f64, f64) -> SymMat2 + Send + Sync>),
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoefficientField::PiecewiseConstant(v) => {
                write!(f, "CoefficientField::PiecewiseConstant({} elements)", v.len())
            }
            CoefficientField::Variable(_) => write!(f, "CoefficientField::Variable"),
        }
    }
}

impl CoefficientField {
    pub fn identity(mesh: &Mesh) -> Self {
        Self::PiecewiseConstant(Arc::new(vec![SymMat2::identity(); mesh.n_triangles()]))
    }

    /// Piecewise-constant scalar field from a region function evaluated
    /// at element centroids.
    pub fn piecewise_scalar(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Self {
        let vals = (0..mesh.n_triangles())
            .map(|t| {
                let c = mesh.triangle(t).centroid();
                SymMat2::scalar(f(c[0], c[1]))
            })
            .collect();
        Self::PiecewiseConstant(Arc::new(vals))
    }

    pub fn variable(f: impl Fn(f64, f64) -> SymMat2 + Send + Sync + 'static) -> Self {
        Self::Variable(Arc::new(f))
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self, CoefficientField::PiecewiseConstant(_))
    }

    pub fn at(&self, element: usize, x: f64, y: f64) -> SymMat2 {
        match self {
            CoefficientField::PiecewiseConstant(v) => v[element],
            CoefficientField::Variable(f) => f(x, y),
        }
    }

    pub fn inverse_at(&self, element: usize, x: f64, y: f64) -> SymMat2 {
        self.at(element, x, y).inverse()
    }

    /// Checks SPD-ness at element centroids (and quadrature-like samples
    /// for variable fields).
    pub fn validate_spd(&self, mesh: &Mesh) -> bool {
        (0..mesh.n_triangles()).all(|t| {
            let tri = mesh.triangle(t);
            let c = tri.centroid();
            let mut ok = self.at(t, c[0], c[1]).is_spd();
            for v in tri.v {
                let p = [0.5 * (v[0] + c[0]), 0.5 * (v[1] + c[1])];
                ok &= self.at(t, p[0], p[1]).is_spd();
            }
            ok
        })
    }

    /// Element mean of c = a^{-1} under the given quadrature, as used by
    /// the mean-coefficient auxiliary operator variant.
    pub fn element_mean_inverse(&self, mesh: &Mesh, element: usize, rule: &QuadratureRule) -> SymMat2 {
        let tri = mesh.triangle(element);
        let jac = 2.0 * tri.area();
        let mut acc = SymMat2 { xx: 0.0, xy: 0.0, yy: 0.0 };
        let mut measure = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let q = tri.map(*p);
            let c = self.inverse_at(element, q[0], q[1]);
            acc.xx += w * jac * c.xx;
            acc.xy += w * jac * c.xy;
            acc.yy += w * jac * c.yy;
            measure += w * jac;
        }
        acc.scale(1.0 / measure)
    }
}

// ---------------------------------------------------------------------------
// Trace space layout
// ---------------------------------------------------------------------------

/// Face-based degree-of-freedom layout. DOF index = (rank of the face
/// among DOF faces) * (k+1) + mode; faces keep their global lexicographic
/// order.
#[derive(Clone, Debug)]
pub struct TraceSpace {
    pub k: usize,
    /// Faces carrying DOFs, ascending.
    pub dof_faces: Vec<usize>,
    /// face id -> first DOF index, None for faces without DOFs.
    pub face_base: Vec<Option<usize>>,
    /// Per face id: sum of adjacent element diameters (the trace-product
    /// weight), for every face of the mesh.
    pub face_weight: Vec<f64>,
}

impl TraceSpace {
    fn build(mesh: &Mesh, k: usize, include_boundary: bool) -> Self {
        let mut face_weight = vec![0.0; mesh.n_faces()];
        for (f, face) in mesh.faces.iter().enumerate() {
            face_weight[f] = face.tris.iter().map(|&t| mesh.h[t]).sum();
        }
        let mut dof_faces = Vec::new();
        let mut face_base = vec![None; mesh.n_faces()];
        for (f, face) in mesh.faces.iter().enumerate() {
            if include_boundary || !face.boundary {
                face_base[f] = Some(dof_faces.len() * (k + 1));
                dof_faces.push(f);
            }
        }
        Self { k, dof_faces, face_base, face_weight }
    }

    /// Standard layout: interior faces only (zero trace on the boundary).
    pub fn interior(mesh: &Mesh, k: usize) -> Self {
        Self::build(mesh, k, false)
    }

    /// Test layout treating every face as unknown.
    pub fn all_faces(mesh: &Mesh, k: usize) -> Self {
        Self::build(mesh, k, true)
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_faces.len() * (self.k + 1)
    }

    pub fn dof(&self, face: usize, mode: usize) -> Option<usize> {
        debug_assert!(mode <= self.k);
        self.face_base[face].map(|b| b + mode)
    }

    /// sqrt of the face weight, the scaling between orthonormal face
    /// coefficients and DOF coordinates.
    pub fn scale(&self, face: usize) -> f64 {
        self.face_weight[face].sqrt()
    }

    pub fn face_of_dof(&self, dof: usize) -> (usize, usize) {
        let rank = dof / (self.k + 1);
        (self.dof_faces[rank], dof % (self.k + 1))
    }

    /// DOF vector of a face-wise function given as g(face, t) with t the
    /// [0,1] parameter from the face's smaller to larger vertex index.
    pub fn project_function(
        &self,
        mesh: &Mesh,
        g: impl Fn(usize, f64) -> f64,
        rule: &QuadratureRule,
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.n_dofs()];
        for &f in &self.dof_faces {
            let len = mesh.faces[f].length;
            let s = self.scale(f);
            for m in 0..=self.k {
                let mut acc = 0.0;
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    acc += w * len * g(f, p[0]) * face_mode(m, p[0], len);
                }
                x[self.dof(f, m).unwrap()] = s * acc;
            }
        }
        x
    }

    /// DOF vector of the trace function that equals one on every DOF face.
    pub fn ones_function(&self, mesh: &Mesh) -> Vec<f64> {
        let mut x = vec![0.0; self.n_dofs()];
        for &f in &self.dof_faces {
            let len = mesh.faces[f].length;
            x[self.dof(f, 0).unwrap()] = self.scale(f) * len.sqrt();
        }
        x
    }
}

// ---------------------------------------------------------------------------
// Local solver
// ---------------------------------------------------------------------------

/// Per-element static condensation data: the factored saddle-point
/// system, the trace-driven local solutions, the local energy matrix and
/// the load map.
pub struct LocalSolve {
    pub element: usize,
    pub alpha: f64,
    /// Flux coefficients per local trace basis function (dim_W x n_trace).
    pub sigma: DMatrix<f64>,
    /// Potential coefficients per local trace basis (dim_V x n_trace).
    pub u: DMatrix<f64>,
    /// Local contribution to the condensed bilinear form (n_trace square).
    pub energy: DMatrix<f64>,
    /// Face projections of the potential basis: pi[(local face, mode)][p]
    /// = integral over the face of phi_p times the face mode.
    pub pi: DMatrix<f64>,
    /// Map from potential-space source coefficients to the local load
    /// vector (f, u_mu): load = u^t M_V.
    pub load: DMatrix<f64>,
    /// Potential-space mass matrix (for source projection).
    pub mass_v: DMatrix<f64>,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    dim_w: usize,
    dim_v: usize,
}

impl LocalSolve {
    pub fn n_trace(&self) -> usize {
        self.sigma.ncols()
    }

    /// Solves the local problem driven by raw face coefficients `lambda`
    /// plus a source with potential-space coefficients `f_coefs`,
    /// returning (sigma coefficients, u coefficients).
    pub fn solve(&self, lambda: &[f64], f_coefs: Option<&DVector<f64>>) -> (DVector<f64>, DVector<f64>) {
        let nt = self.n_trace();
        assert_eq!(lambda.len(), nt);
        let lam = DVector::from_column_slice(lambda);
        let mut s = &self.sigma * &lam;
        let mut uu = &self.u * &lam;
        if let Some(fc) = f_coefs {
            let mut rhs = DVector::zeros(self.dim_w + self.dim_v);
            let fv = &self.mass_v * fc;
            for p in 0..self.dim_v {
                rhs[self.dim_w + p] = -fv[p];
            }
            let sol = self.lu.solve(&rhs).expect("factorization already validated");
            for a in 0..self.dim_w {
                s[a] += sol[a];
            }
            for p in 0..self.dim_v {
                uu[p] += sol[self.dim_w + p];
            }
        }
        (s, uu)
    }
}

/// Quadrature degrees for the bilinear forms: exact for piecewise-constant
/// coefficients, two extra degrees for variable ones.
fn assembly_rules(
    fam: &ElementFamily,
    coef: &CoefficientField,
) -> Result<(QuadratureRule, QuadratureRule), ElementError> {
    let extra = if coef.is_piecewise_constant() { 0 } else { 2 };
    let tri = crate::elements::triangle_quadrature(2 * fam.k + 2 + extra)?;
    let edge = edge_quadrature(2 * fam.k + 2)?;
    Ok((tri, edge))
}

/// Solves the local problem family on one element: assembles the
/// saddle-point system in (sigma, u) block order, factors it by dense LU
/// with partial pivoting, and applies it to every local trace basis
/// function. A singular factorization is an explicit error.
pub fn local_solve(
    mesh: &Mesh,
    element: usize,
    fam: &ElementFamily,
    coef: &CoefficientField,
) -> Result<LocalSolve, HdgError> {
    let (tri_rule, edge_rule) = assembly_rules(fam, coef)?;
    local_solve_with_rules(mesh, element, fam, coef, &tri_rule, &edge_rule)
}

/// Weak-Galerkin local problem (lowest order): plain mass in the flux
/// equation and projected flux in the divergence terms.
pub fn wg_local_solve(
    mesh: &Mesh,
    element: usize,
    fam: &ElementFamily,
    coef: &CoefficientField,
) -> Result<LocalSolve, HdgError> {
    debug_assert!(fam.uses_weak_gradients());
    local_solve(mesh, element, fam, coef)
}

fn local_solve_with_rules(
    mesh: &Mesh,
    element: usize,
    fam: &ElementFamily,
    coef: &CoefficientField,
    tri_rule: &QuadratureRule,
    edge_rule: &QuadratureRule,
) -> Result<LocalSolve, HdgError> {
    let tri = mesh.triangle(element);
    let alpha = fam.stabilization.alpha(element, mesh.h[element]);
    let wg = fam.uses_weak_gradients();
    let v_basis = scalar_basis(fam.potential_degree(), &tri);
    let w_basis = flux_basis(fam, &tri);
    let dim_v = v_basis.len();
    let dim_w = w_basis.len();
    let modes = fam.modes_per_face();
    let n_trace = 3 * modes;
    let jac = 2.0 * tri.area();

    // volume quadrature tables
    let nq = tri_rule.points.len();
    let mut phys = Vec::with_capacity(nq);
    for p in &tri_rule.points {
        phys.push(tri.map(*p));
    }
    let w_vals: Vec<Vec<[f64; 2]>> = w_basis
        .iter()
        .map(|b| phys.iter().map(|q| b.eval(q[0], q[1])).collect())
        .collect();
    let w_divs: Vec<Poly2Vals> = w_basis
        .iter()
        .map(|b| {
            let d = b.divergence();
            phys.iter().map(|q| d.eval(q[0], q[1])).collect()
        })
        .collect();
    let v_vals: Vec<Poly2Vals> = v_basis
        .iter()
        .map(|b| phys.iter().map(|q| b.eval(q[0], q[1])).collect())
        .collect();
    // coefficient at quadrature points: c = a^{-1} for the flux mass
    let c_vals: Vec<SymMat2> = phys
        .iter()
        .map(|q| {
            if wg {
                SymMat2::identity()
            } else {
                coef.inverse_at(element, q[0], q[1])
            }
        })
        .collect();

    // flux mass with coefficient
    let mut mass_w = DMatrix::zeros(dim_w, dim_w);
    for a in 0..dim_w {
        for b in 0..dim_w {
            let mut acc = 0.0;
            for q in 0..nq {
                let cv = c_vals[q].apply(w_vals[b][q]);
                acc += tri_rule.weights[q] * jac * (cv[0] * w_vals[a][q][0] + cv[1] * w_vals[a][q][1]);
            }
            mass_w[(a, b)] = acc;
        }
    }

    // divergence coupling: D[p][b] = (phi_p, div w_b); zero for the
    // weak-Galerkin lowest order (div of constants)
    let mut div_vp = DMatrix::zeros(dim_v, dim_w);
    if !wg {
        for p in 0..dim_v {
            for b in 0..dim_w {
                let mut acc = 0.0;
                for q in 0..nq {
                    acc += tri_rule.weights[q] * jac * v_vals[p][q] * w_divs[b][q];
                }
                div_vp[(p, b)] = acc;
            }
        }
    }

    // potential mass
    let mut mass_v = DMatrix::zeros(dim_v, dim_v);
    for p in 0..dim_v {
        for r in 0..dim_v {
            let mut acc = 0.0;
            for q in 0..nq {
                acc += tri_rule.weights[q] * jac * v_vals[p][q] * v_vals[r][q];
            }
            mass_v[(p, r)] = acc;
        }
    }

    // face data: for local edge l the global parametrization runs from
    // the smaller to the larger vertex index
    let tri_idx = mesh.triangles[element];
    let mut face_lens = [0.0; 3];
    let mut pi = DMatrix::zeros(n_trace, dim_v);
    let mut g = DMatrix::zeros(n_trace, dim_w);
    for l in 0..3 {
        let va = tri_idx[l];
        let vb = tri_idx[(l + 1) % 3];
        let (pa, pb) = if va < vb {
            (mesh.vertices[va], mesh.vertices[vb])
        } else {
            (mesh.vertices[vb], mesh.vertices[va])
        };
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        face_lens[l] = len;
        let n = tri.outward_normal(l);
        for (p, w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            let t = p[0];
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            for m in 0..modes {
                let row = l * modes + m;
                let qv = face_mode(m, t, len);
                for (pidx, vb_) in v_basis.iter().enumerate() {
                    pi[(row, pidx)] += w * len * qv * vb_.eval(x[0], x[1]);
                }
                for (a, wb) in w_basis.iter().enumerate() {
                    let val = wb.eval(x[0], x[1]);
                    g[(row, a)] += w * len * qv * (val[0] * n[0] + val[1] * n[1]);
                }
            }
        }
    }

    // symmetric saddle-point matrix [[M, D^t], [D, -St]]
    let dim = dim_w + dim_v;
    let mut s_loc = DMatrix::zeros(dim, dim);
    for a in 0..dim_w {
        for b in 0..dim_w {
            s_loc[(a, b)] = mass_w[(a, b)];
        }
    }
    for p in 0..dim_v {
        for b in 0..dim_w {
            s_loc[(dim_w + p, b)] = div_vp[(p, b)];
            s_loc[(b, dim_w + p)] = div_vp[(p, b)];
        }
    }
    // stabilization: St[p][r] = alpha * sum over (face, mode) of pi pi
    for p in 0..dim_v {
        for r in 0..dim_v {
            let mut acc = 0.0;
            for row in 0..n_trace {
                acc += pi[(row, p)] * pi[(row, r)];
            }
            s_loc[(dim_w + p, dim_w + r)] = -alpha * acc;
        }
    }

    let lu = nalgebra::linalg::LU::new(s_loc.clone());
    // detect singular or numerically singular factorizations
    let u_diag: Vec<f64> = (0..dim).map(|i| lu.u()[(i, i)].abs()).collect();
    let max_d = u_diag.iter().cloned().fold(0.0, f64::max);
    let min_d = u_diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max_d > 0.0) || min_d <= 1e-13 * max_d {
        return Err(HdgError::SingularLocal { element });
    }

    // solve for every local trace basis function
    let mut rhs = DMatrix::zeros(dim, n_trace);
    for j in 0..n_trace {
        for a in 0..dim_w {
            rhs[(a, j)] = g[(j, a)];
        }
        for p in 0..dim_v {
            rhs[(dim_w + p, j)] = -alpha * pi[(j, p)];
        }
    }
    let sol = lu.solve(&rhs).ok_or(HdgError::SingularLocal { element })?;
    let sigma = sol.rows(0, dim_w).into_owned();
    let u = sol.rows(dim_w, dim_v).into_owned();

    // energy matrix: (c sigma_i, sigma_j) with c = a^{-1} (HDG) or the
    // coefficient itself (weak Galerkin), plus the stabilization term
    let e_vals: Vec<SymMat2> = phys
        .iter()
        .map(|q| {
            if wg {
                coef.at(element, q[0], q[1])
            } else {
                coef.inverse_at(element, q[0], q[1])
            }
        })
        .collect();
    let mut energy = DMatrix::zeros(n_trace, n_trace);
    for q in 0..nq {
        let wq = tri_rule.weights[q] * jac;
        // sigma_j at this point for all j
        let mut sig = vec![[0.0; 2]; n_trace];
        for j in 0..n_trace {
            let mut v = [0.0, 0.0];
            for a in 0..dim_w {
                v[0] += sigma[(a, j)] * w_vals[a][q][0];
                v[1] += sigma[(a, j)] * w_vals[a][q][1];
            }
            sig[j] = v;
        }
        for i in 0..n_trace {
            let ei = e_vals[q].apply(sig[i]);
            for j in i..n_trace {
                let v = wq * (ei[0] * sig[j][0] + ei[1] * sig[j][1]);
                energy[(i, j)] += v;
                if i != j {
                    energy[(j, i)] += v;
                }
            }
        }
    }
    if alpha != 0.0 {
        // deviation coefficients pi u_j - delta_j per (face, mode)
        let dev = &pi * &u
            - DMatrix::<f64>::identity(n_trace, n_trace);
        for i in 0..n_trace {
            for j in 0..n_trace {
                let mut acc = 0.0;
                for row in 0..n_trace {
                    acc += dev[(row, i)] * dev[(row, j)];
                }
                energy[(i, j)] += alpha * acc;
            }
        }
    }

    let load = u.transpose() * &mass_v;

    Ok(LocalSolve {
        element,
        alpha,
        sigma,
        u,
        energy,
        pi,
        load,
        mass_v,
        lu,
        dim_w,
        dim_v,
    })
}

type Poly2Vals = Vec<f64>;

// ---------------------------------------------------------------------------
// Condensed system
// ---------------------------------------------------------------------------

/// The condensed SPD trace system A x = b together with the cached local
/// solvers needed for recovery.
pub struct CondensedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub trace: TraceSpace,
    pub mesh: Arc<Mesh>,
    pub family: ElementFamily,
    pub coefficient: CoefficientField,
    pub locals: Vec<LocalSolve>,
}

impl CondensedSystem {
    pub fn n_dofs(&self) -> usize {
        self.trace.n_dofs()
    }

    pub fn energy_norm(&self, x: &[f64]) -> f64 {
        crate::sparse::dot(&self.matrix.mul_vec(x), x).max(0.0).sqrt()
    }

    /// Raw orthonormal face coefficients of a DOF vector restricted to one
    /// element, ordered (local face, mode); boundary faces contribute 0.
    pub fn local_trace(&self, element: usize, x: &[f64]) -> Vec<f64> {
        let modes = self.family.modes_per_face();
        let mut out = vec![0.0; 3 * modes];
        for l in 0..3 {
            let f = self.mesh.tri_faces[element][l];
            if let Some(base) = self.trace.face_base[f] {
                let s = self.trace.scale(f);
                for m in 0..modes {
                    out[l * modes + m] = x[base + m] / s;
                }
            }
        }
        out
    }
}

/// Source term for the right-hand side.
pub type SourceFn<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// Assembles the condensed system on the standard (interior-face) trace
/// space: A from the local energy matrices, b from the load maps with the
/// source projected into each potential space.
pub fn assemble_condensed(
    mesh: &Arc<Mesh>,
    fam: &ElementFamily,
    coef: &CoefficientField,
    f: Option<SourceFn>,
) -> Result<CondensedSystem, HdgError> {
    assemble_on(TraceSpace::interior(mesh, fam.k), mesh, fam, coef, f)
}

/// Assembly on an explicit trace layout (used by tests that keep boundary
/// faces as unknowns).
pub fn assemble_on(
    trace: TraceSpace,
    mesh: &Arc<Mesh>,
    fam: &ElementFamily,
    coef: &CoefficientField,
    f: Option<SourceFn>,
) -> Result<CondensedSystem, HdgError> {
    let n = trace.n_dofs();
    let modes = fam.modes_per_face();
    let mut coo = CooBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    let mut locals = Vec::with_capacity(mesh.n_triangles());
    let (tri_rule, edge_rule) = assembly_rules(fam, coef)?;
    for t in 0..mesh.n_triangles() {
        let ls = local_solve_with_rules(mesh, t, fam, coef, &tri_rule, &edge_rule)?;
        // global DOF and scale per local trace index
        let mut dof = vec![None; 3 * modes];
        let mut scale = vec![1.0; 3 * modes];
        for l in 0..3 {
            let fidx = mesh.tri_faces[t][l];
            for m in 0..modes {
                dof[l * modes + m] = trace.dof(fidx, m);
                scale[l * modes + m] = trace.scale(fidx);
            }
        }
        for i in 0..3 * modes {
            let Some(gi) = dof[i] else { continue };
            for j in 0..3 * modes {
                let Some(gj) = dof[j] else { continue };
                coo.push(gi, gj, ls.energy[(i, j)] / (scale[i] * scale[j]));
            }
        }
        if let Some(src) = f {
            let tri = mesh.triangle(t);
            let jac = 2.0 * tri.area();
            let v_basis = scalar_basis(fam.potential_degree(), &tri);
            let mut fr = DVector::zeros(v_basis.len());
            for (p, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                let q = tri.map(*p);
                let fv = src(q[0], q[1]);
                for (pi_, vb) in v_basis.iter().enumerate() {
                    fr[pi_] += w * jac * fv * vb.eval(q[0], q[1]);
                }
            }
            let f_coefs = ls
                .mass_v
                .clone()
                .lu()
                .solve(&fr)
                .expect("potential mass matrix is SPD");
            let local_b = &ls.load * &f_coefs;
            for i in 0..3 * modes {
                if let Some(gi) = dof[i] {
                    rhs[gi] += local_b[i] / scale[i];
                }
            }
        }
        locals.push(ls);
    }
    Ok(CondensedSystem {
        matrix: coo.build(),
        rhs,
        trace,
        mesh: mesh.clone(),
        family: fam.clone(),
        coefficient: coef.clone(),
        locals,
    })
}

/// Weak-Galerkin condensed system; same contract as `assemble_condensed`
/// with the weak-gradient local problems.
pub fn wg_assemble(
    mesh: &Arc<Mesh>,
    fam: &ElementFamily,
    coef: &CoefficientField,
    f: Option<SourceFn>,
) -> Result<CondensedSystem, HdgError> {
    debug_assert!(fam.uses_weak_gradients());
    assemble_condensed(mesh, fam, coef, f)
}

// ---------------------------------------------------------------------------
// Recovery
// ---------------------------------------------------------------------------

/// Element-by-element interior solution recovered from a trace vector.
pub struct FieldSolution {
    /// Per element, potential coefficients in the element's basis.
    pub u: Vec<DVector<f64>>,
    /// Per element, flux coefficients.
    pub sigma: Vec<DVector<f64>>,
}

/// Recovers (u_h, sigma_h) element by element from the trace vector and
/// the source term.
pub fn recover_interior(
    sys: &CondensedSystem,
    lambda: &[f64],
    f: Option<SourceFn>,
) -> Result<FieldSolution, HdgError> {
    if lambda.len() != sys.n_dofs() {
        return Err(HdgError::DimensionMismatch { expected: sys.n_dofs(), got: lambda.len() });
    }
    let (tri_rule, _) = assembly_rules(&sys.family, &sys.coefficient)?;
    let mut u = Vec::with_capacity(sys.mesh.n_triangles());
    let mut sigma = Vec::with_capacity(sys.mesh.n_triangles());
    for t in 0..sys.mesh.n_triangles() {
        let ls = &sys.locals[t];
        let local = sys.local_trace(t, lambda);
        let f_coefs = f.map(|src| {
            let tri = sys.mesh.triangle(t);
            let jac = 2.0 * tri.area();
            let v_basis = scalar_basis(sys.family.potential_degree(), &tri);
            let mut fr = DVector::zeros(v_basis.len());
            for (p, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                let q = tri.map(*p);
                let fv = src(q[0], q[1]);
                for (pi_, vb) in v_basis.iter().enumerate() {
                    fr[pi_] += w * jac * fv * vb.eval(q[0], q[1]);
                }
            }
            ls.mass_v.clone().lu().solve(&fr).expect("potential mass matrix is SPD")
        });
        let (s, uu) = ls.solve(&local, f_coefs.as_ref());
        sigma.push(s);
        u.push(uu);
    }
    Ok(FieldSolution { u, sigma })
}

impl FieldSolution {
    /// Evaluates the recovered potential at a physical point of an element.
    pub fn eval_u(&self, sys: &CondensedSystem, element: usize, x: f64, y: f64) -> f64 {
        let tri = sys.mesh.triangle(element);
        let v_basis = scalar_basis(sys.family.potential_degree(), &tri);
        v_basis
            .iter()
            .enumerate()
            .map(|(p, b)| self.u[element][p] * b.eval(x, y))
            .sum()
    }

    pub fn eval_sigma(&self, sys: &CondensedSystem, element: usize, x: f64, y: f64) -> [f64; 2] {
        let tri = sys.mesh.triangle(element);
        let w_basis = flux_basis(&sys.family, &tri);
        let mut out = [0.0, 0.0];
        for (a, b) in w_basis.iter().enumerate() {
            let v = b.eval(x, y);
            out[0] += self.sigma[element][a] * v[0];
            out[1] += self.sigma[element][a] * v[1];
        }
        out
    }

    /// L^2(Omega) distance between the recovered potential and a given
    /// function.
    pub fn l2_error_u(&self, sys: &CondensedSystem, exact: impl Fn(f64, f64) -> f64) -> f64 {
        let rule = crate::elements::triangle_quadrature(8).expect("degree 8 rule");
        let mut acc = 0.0;
        for t in 0..sys.mesh.n_triangles() {
            let tri = sys.mesh.triangle(t);
            let jac = 2.0 * tri.area();
            let v_basis = scalar_basis(sys.family.potential_degree(), &tri);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let q = tri.map(*p);
                let uh: f64 = v_basis
                    .iter()
                    .enumerate()
                    .map(|(pi_, b)| self.u[t][pi_] * b.eval(q[0], q[1]))
                    .sum();
                let d = uh - exact(q[0], q[1]);
                acc += w * jac * d * d;
            }
        }
        acc.sqrt()
    }
}

/// Largest residual of the full three-field system over all test
/// functions, for a trace vector and matching source. Zero (to roundoff)
/// exactly when `lambda` solves the condensed system.
pub fn full_system_residual(
    sys: &CondensedSystem,
    lambda: &[f64],
    f: Option<SourceFn>,
) -> Result<f64, HdgError> {
    let fam = &sys.family;
    let mesh = &sys.mesh;
    let (tri_rule, edge_rule) = assembly_rules(fam, &sys.coefficient)?;
    let fields = recover_interior(sys, lambda, f)?;
    let modes = fam.modes_per_face();
    let wg = fam.uses_weak_gradients();
    let mut max_res: f64 = 0.0;
    // flux continuity accumulates per interior face and mode
    let mut eq3 = vec![0.0; sys.trace.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let jac = 2.0 * tri.area();
        let alpha = fam.stabilization.alpha(t, mesh.h[t]);
        let v_basis = scalar_basis(fam.potential_degree(), &tri);
        let w_basis = flux_basis(fam, &tri);
        let local_lambda = sys.local_trace(t, lambda);
        let ls = &sys.locals[t];
        let su = &fields.u[t];
        let ss = &fields.sigma[t];
        // effective flux for the divergence/continuity terms: the flux
        // itself, or its projection applied to the coefficient for WG
        let eff_sigma: Vec<f64> = if wg {
            // project a*sigma onto W(T) with the plain mass matrix
            let mut rhs = DVector::zeros(w_basis.len());
            for (p, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                let q = tri.map(*p);
                let mut val = [0.0, 0.0];
                for (a, b) in w_basis.iter().enumerate() {
                    let v = b.eval(q[0], q[1]);
                    val[0] += ss[a] * v[0];
                    val[1] += ss[a] * v[1];
                }
                let av = sys.coefficient.at(t, q[0], q[1]).apply(val);
                for (a, b) in w_basis.iter().enumerate() {
                    let v = b.eval(q[0], q[1]);
                    rhs[a] += w * jac * (av[0] * v[0] + av[1] * v[1]);
                }
            }
            let mut mass = DMatrix::zeros(w_basis.len(), w_basis.len());
            for (p, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                let q = tri.map(*p);
                for (a, ba) in w_basis.iter().enumerate() {
                    let va = ba.eval(q[0], q[1]);
                    for (b, bb) in w_basis.iter().enumerate() {
                        let vb = bb.eval(q[0], q[1]);
                        mass[(a, b)] += w * jac * (va[0] * vb[0] + va[1] * vb[1]);
                    }
                }
            }
            mass.lu().solve(&rhs).expect("flux mass is SPD").iter().cloned().collect()
        } else {
            ss.iter().cloned().collect()
        };
        // equation 1: (c sigma, tau) + (u, div tau) - <lambda, tau.n>
        for (_a, ba) in w_basis.iter().enumerate() {
            let mut acc = 0.0;
            for (p, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                let q = tri.map(*p);
                let mut sig = [0.0, 0.0];
                for (b, bb) in w_basis.iter().enumerate() {
                    let v = bb.eval(q[0], q[1]);
                    sig[0] += ss[b] * v[0];
                    sig[1] += ss[b] * v[1];
                }
                let cval = if wg { sig } else { sys.coefficient.inverse_at(t, q[0], q[1]).apply(sig) };
                let ta = ba.eval(q[0], q[1]);
                let mut uv = 0.0;
                for (pp, vb) in v_basis.iter().enumerate() {
                    uv += su[pp] * vb.eval(q[0], q[1]);
                }
                let dv = ba.divergence().eval(q[0], q[1]);
                acc += w * jac * (cval[0] * ta[0] + cval[1] * ta[1] + uv * dv);
            }
            // boundary term
            let tri_idx = mesh.triangles[t];
            for l in 0..3 {
                let va = tri_idx[l];
                let vb2 = tri_idx[(l + 1) % 3];
                let (pa, pb) = if va < vb2 {
                    (mesh.vertices[va], mesh.vertices[vb2])
                } else {
                    (mesh.vertices[vb2], mesh.vertices[va])
                };
                let len = mesh.faces[mesh.tri_faces[t][l]].length;
                let nrm = tri.outward_normal(l);
                for (p, w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                    let tpar = p[0];
                    let x = [pa[0] + tpar * (pb[0] - pa[0]), pa[1] + tpar * (pb[1] - pa[1])];
                    let lam: f64 = (0..modes)
                        .map(|m| local_lambda[l * modes + m] * face_mode(m, tpar, len))
                        .sum();
                    let tv = ba.eval(x[0], x[1]);
                    acc -= w * len * lam * (tv[0] * nrm[0] + tv[1] * nrm[1]);
                }
            }
            max_res = max_res.max(acc.abs());
        }
        // equation 2: -(v, div sigma_eff) + alpha<P u - lambda, v> - (f, v)
        for (pp, vb) in v_basis.iter().enumerate() {
            let mut acc = 0.0;
            for (p, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                let q = tri.map(*p);
                let mut div = 0.0;
                for (b, bb) in w_basis.iter().enumerate() {
                    div += eff_sigma[b] * bb.divergence().eval(q[0], q[1]);
                }
                let mut fv = 0.0;
                if let Some(src) = f {
                    fv = src(q[0], q[1]);
                }
                acc += w * jac * (-vb.eval(q[0], q[1]) * div - fv * vb.eval(q[0], q[1]));
            }
            // stabilization: alpha sum over (face, mode) of (pi u - lambda) pi_v
            for row in 0..3 * modes {
                let pu: f64 = (0..v_basis.len()).map(|r| ls.pi[(row, r)] * su[r]).sum();
                acc += alpha * (pu - local_lambda[row]) * ls.pi[(row, pp)];
            }
            max_res = max_res.max(acc.abs());
        }
        // equation 3 accumulation: <sigma_eff . n - alpha (P u - lambda), mode>
        let tri_idx = mesh.triangles[t];
        for l in 0..3 {
            let fidx = mesh.tri_faces[t][l];
            let Some(base) = sys.trace.face_base[fidx] else { continue };
            let va = tri_idx[l];
            let vb2 = tri_idx[(l + 1) % 3];
            let (pa, pb) = if va < vb2 {
                (mesh.vertices[va], mesh.vertices[vb2])
            } else {
                (mesh.vertices[vb2], mesh.vertices[va])
            };
            let len = mesh.faces[fidx].length;
            let nrm = tri.outward_normal(l);
            for m in 0..modes {
                let mut acc = 0.0;
                for (p, w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                    let tpar = p[0];
                    let x = [pa[0] + tpar * (pb[0] - pa[0]), pa[1] + tpar * (pb[1] - pa[1])];
                    let mut sig = [0.0, 0.0];
                    for (b, bb) in w_basis.iter().enumerate() {
                        let v = bb.eval(x[0], x[1]);
                        sig[0] += eff_sigma[b] * v[0];
                        sig[1] += eff_sigma[b] * v[1];
                    }
                    acc += w * len * (sig[0] * nrm[0] + sig[1] * nrm[1]) * face_mode(m, tpar, len);
                }
                let row = l * modes + m;
                let pu: f64 = (0..v_basis.len()).map(|r| ls.pi[(row, r)] * su[r]).sum();
                acc -= alpha * (pu - local_lambda[row]);
                eq3[base + m] += acc;
            }
        }
    }
    for v in eq3 {
        max_res = max_res.max(v.abs());
    }
    Ok(max_res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::FamilyKind;
    use crate::mesh::{build_structured, refine_uniform, Domain};

    fn single_reference_mesh() -> Arc<Mesh> {
        Arc::new(
            Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap(),
        )
    }

    fn stab_family(k: usize) -> ElementFamily {
        ElementFamily::with_default_stabilization(FamilyKind::Stab, k).unwrap()
    }

    #[test]
    fn constant_trace_gives_constant_state() {
        let mesh = single_reference_mesh();
        let coef = CoefficientField::identity(&mesh);
        for (kind, k) in [
            (FamilyKind::Stab, 0),
            (FamilyKind::Stab, 1),
            (FamilyKind::Raised, 0),
            (FamilyKind::Wg, 0),
        ] {
            let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
            let ls = local_solve(&mesh, 0, &fam, &coef).unwrap();
            // lambda = 1 on all faces: orthonormal coefficient sqrt(len) per face
            let modes = fam.modes_per_face();
            let mut lam = vec![0.0; 3 * modes];
            let lens = [1.0, 2.0f64.sqrt(), 1.0];
            for l in 0..3 {
                lam[l * modes] = lens[l].sqrt();
            }
            let (s, u) = ls.solve(&lam, None);
            for v in s.iter() {
                assert!(v.abs() < 1e-12, "{kind:?}: sigma should vanish, got {v}");
            }
            // u should be the constant 1: P(u) = lambda
            let pu = &ls.pi * &u;
            for row in 0..3 * modes {
                assert!((pu[row] - lam[row]).abs() < 1e-12, "{kind:?} trace of u mismatch");
            }
        }
        // Rt/Bdm: only sigma = 0 is claimed
        for (kind, k) in [(FamilyKind::Rt, 0), (FamilyKind::Bdm, 1)] {
            let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
            let ls = local_solve(&mesh, 0, &fam, &coef).unwrap();
            let modes = fam.modes_per_face();
            let mut lam = vec![0.0; 3 * modes];
            let lens = [1.0, 2.0f64.sqrt(), 1.0];
            for l in 0..3 {
                lam[l * modes] = lens[l].sqrt();
            }
            let (s, _) = ls.solve(&lam, None);
            for v in s.iter() {
                assert!(v.abs() < 1e-12, "{kind:?}: sigma should vanish, got {v}");
            }
        }
    }

    #[test]
    fn stab_k0_hand_solved_local_problem() {
        let mesh = single_reference_mesh();
        let coef = CoefficientField::identity(&mesh);
        let fam = stab_family(0);
        let ls = local_solve(&mesh, 0, &fam, &coef).unwrap();
        // lambda = 1 on edge (0,0)-(1,0) (local face 0), 0 elsewhere:
        // orthonormal coefficient is sqrt(1) = 1
        let lam = vec![1.0, 0.0, 0.0];
        let (s, u) = ls.solve(&lam, None);
        // sigma = (0, -2)
        let tri = mesh.triangle(0);
        let basis = flux_basis(&fam, &tri);
        let mut sig = [0.0, 0.0];
        for (a, b) in basis.iter().enumerate() {
            let v = b.eval(0.25, 0.25);
            sig[0] += s[a] * v[0];
            sig[1] += s[a] * v[1];
        }
        assert!((sig[0] - 0.0).abs() < 1e-12);
        assert!((sig[1] + 2.0).abs() < 1e-12);
        // u = (2 - sqrt(2))/2 as a function value
        let v_basis = scalar_basis(0, &tri);
        let uv = u[0] * v_basis[0].eval(0.25, 0.25);
        assert!((uv - (2.0 - 2.0f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rt_reproduces_gradients_of_linears() {
        let mesh = single_reference_mesh();
        let coef = CoefficientField::identity(&mesh);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Rt, 0).unwrap();
        let ls = local_solve(&mesh, 0, &fam, &coef).unwrap();
        // lambda = face projection of w(x, y) = x
        let rule = edge_quadrature(4).unwrap();
        let tri = mesh.triangle(0);
        let tri_idx = mesh.triangles[0];
        let mut lam = vec![0.0; 3];
        for l in 0..3 {
            let va = tri_idx[l];
            let vb = tri_idx[(l + 1) % 3];
            let (pa, pb) = if va < vb {
                (mesh.vertices[va], mesh.vertices[vb])
            } else {
                (mesh.vertices[vb], mesh.vertices[va])
            };
            let len = tri.edge_length(l);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let t = p[0];
                let x = pa[0] + t * (pb[0] - pa[0]);
                lam[l] += w * len * x * face_mode(0, t, len);
            }
        }
        let (s, _) = ls.solve(&lam, None);
        let basis = flux_basis(&fam, &tri);
        for q in [[0.2, 0.3], [0.5, 0.1]] {
            let mut sig = [0.0, 0.0];
            for (a, b) in basis.iter().enumerate() {
                let v = b.eval(q[0], q[1]);
                sig[0] += s[a] * v[0];
                sig[1] += s[a] * v[1];
            }
            assert!((sig[0] - 1.0).abs() < 1e-11, "sigma_x = {}", sig[0]);
            assert!(sig[1].abs() < 1e-11, "sigma_y = {}", sig[1]);
        }
    }

    #[test]
    fn gradient_reproduction_all_families() {
        // for lambda the projected trace of w in P_1 and piecewise-constant
        // coefficients, the local flux is a * grad w
        let mesh = Arc::new(
            Mesh::from_raw(
                vec![[0.1, -0.2], [1.4, 0.3], [0.2, 1.1]],
                vec![[0, 1, 2]],
            )
            .unwrap(),
        );
        let a = SymMat2 { xx: 2.0, xy: 0.3, yy: 1.5 };
        let coef = CoefficientField::PiecewiseConstant(Arc::new(vec![a]));
        let w = |x: f64, y: f64| 0.7 * x - 1.3 * y + 0.25;
        let grad = [0.7, -1.3];
        let want = a.apply(grad);
        let rule = edge_quadrature(6).unwrap();
        for (kind, k) in [
            (FamilyKind::Rt, 0),
            (FamilyKind::Bdm, 1),
            (FamilyKind::Stab, 1),
            (FamilyKind::Raised, 0),
        ] {
            let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
            let ls = local_solve(&mesh, 0, &fam, &coef).unwrap();
            let modes = fam.modes_per_face();
            let tri = mesh.triangle(0);
            let tri_idx = mesh.triangles[0];
            let mut lam = vec![0.0; 3 * modes];
            for l in 0..3 {
                let va = tri_idx[l];
                let vb = tri_idx[(l + 1) % 3];
                let (pa, pb) = if va < vb {
                    (mesh.vertices[va], mesh.vertices[vb])
                } else {
                    (mesh.vertices[vb], mesh.vertices[va])
                };
                let len = tri.edge_length(l);
                for m in 0..modes {
                    for (p, wq) in rule.points.iter().zip(&rule.weights) {
                        let t = p[0];
                        let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                        lam[l * modes + m] += wq * len * w(x[0], x[1]) * face_mode(m, t, len);
                    }
                }
            }
            let (s, _) = ls.solve(&lam, None);
            let basis = flux_basis(&fam, &tri);
            let q = tri.centroid();
            let mut sig = [0.0, 0.0];
            for (aa, b) in basis.iter().enumerate() {
                let v = b.eval(q[0], q[1]);
                sig[0] += s[aa] * v[0];
                sig[1] += s[aa] * v[1];
            }
            assert!(
                (sig[0] - want[0]).abs() < 1e-11 && (sig[1] - want[1]).abs() < 1e-11,
                "{kind:?}: sigma {sig:?} vs {want:?}"
            );
        }
    }

    #[test]
    fn local_solver_is_linear() {
        let mesh = single_reference_mesh();
        let coef = CoefficientField::identity(&mesh);
        let fam = stab_family(1);
        let ls = local_solve(&mesh, 0, &fam, &coef).unwrap();
        let l1 = vec![0.3, -0.2, 0.9, 0.0, -1.1, 0.4];
        let l2 = vec![-0.5, 0.7, 0.1, 0.2, 0.3, -0.9];
        let combo: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (s1, u1) = ls.solve(&l1, None);
        let (s2, u2) = ls.solve(&l2, None);
        let (sc, uc) = ls.solve(&combo, None);
        for i in 0..sc.len() {
            assert!((sc[i] - (2.0 * s1[i] - 0.5 * s2[i])).abs() < 1e-12);
        }
        for i in 0..uc.len() {
            assert!((uc[i] - (2.0 * u1[i] - 0.5 * u2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_matrix_symmetric_and_psd() {
        let mesh = single_reference_mesh();
        let coef = CoefficientField::identity(&mesh);
        for (kind, k) in [
            (FamilyKind::Rt, 0),
            (FamilyKind::Bdm, 1),
            (FamilyKind::Stab, 0),
            (FamilyKind::Stab, 1),
            (FamilyKind::Raised, 0),
            (FamilyKind::Wg, 0),
        ] {
            let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
            let ls = local_solve(&mesh, 0, &fam, &coef).unwrap();
            let e = &ls.energy;
            let mut max_abs: f64 = 0.0;
            let mut max_asym: f64 = 0.0;
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    max_abs = max_abs.max(e[(i, j)].abs());
                    max_asym = max_asym.max((e[(i, j)] - e[(j, i)]).abs());
                }
            }
            assert!(max_asym <= 1e-12 * max_abs.max(1.0), "{kind:?}");
            let eig = nalgebra::SymmetricEigen::new(e.clone());
            for v in eig.eigenvalues.iter() {
                assert!(*v > -1e-10 * max_abs, "{kind:?}: negative eigenvalue {v}");
            }
        }
    }

    #[test]
    fn single_triangle_condensed_matrix_value() {
        // all faces treated as unknowns; a_h(lambda, lambda) = 2 + sqrt(2)/2
        // for lambda the indicator of edge (0,0)-(1,0)
        let mesh = single_reference_mesh();
        let coef = CoefficientField::identity(&mesh);
        let fam = stab_family(0);
        let trace = TraceSpace::all_faces(&mesh, 0);
        let sys = assemble_on(trace, &mesh, &fam, &coef, None).unwrap();
        // faces in lexicographic order: (0,1), (0,2), (1,2); edge
        // (0,0)-(1,0) is face (0,1), dof 0
        let mut x = vec![0.0; 3];
        x[0] = sys.trace.scale(0) * 1.0; // len 1, orthonormal coefficient 1
        let ax = sys.matrix.mul_vec(&x);
        let val = crate::sparse::dot(&ax, &x);
        assert!((val - (2.0 + 2.0f64.sqrt() / 2.0)).abs() < 1e-11, "a_h = {val}");
    }

    #[test]
    fn zero_source_gives_zero_rhs() {
        let mesh = Arc::new(build_structured(Domain::UnitSquare));
        let coef = CoefficientField::identity(&mesh);
        let fam = stab_family(0);
        let zero = |_x: f64, _y: f64| 0.0;
        let sys = assemble_condensed(&mesh, &fam, &coef, Some(&zero)).unwrap();
        assert!(sys.rhs.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn assembled_matrix_is_spd() {
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::LShape)));
        let coef = CoefficientField::piecewise_scalar(&mesh, |x, y| {
            if x < 0.0 {
                1.0
            } else if y > 0.0 {
                5.0
            } else {
                10.0
            }
        });
        for (kind, k) in [(FamilyKind::Stab, 0), (FamilyKind::Stab, 1), (FamilyKind::Rt, 0)] {
            let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
            let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
            assert!(sys.matrix.asymmetry() < 1e-12);
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            for _ in 0..20 {
                let x: Vec<f64> = (0..sys.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let q = crate::sparse::dot(&sys.matrix.mul_vec(&x), &x);
                assert!(q > 0.0, "{kind:?}: Rayleigh quotient {q}");
            }
        }
    }

    #[test]
    fn sparse_assembly_matches_dense_oracle() {
        // two-element mesh: evaluate a_h(e_i, e_j) from the local solves
        // element by element without going through the sparse scatter
        let mesh = Arc::new(build_structured(Domain::UnitSquare));
        let coef = CoefficientField::piecewise_scalar(&mesh, |x, _| if x > 0.5 { 3.0 } else { 1.0 });
        for (kind, k) in [(FamilyKind::Stab, 0), (FamilyKind::Stab, 1), (FamilyKind::Rt, 0), (FamilyKind::Bdm, 1)] {
            let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
            let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
            let n = sys.n_dofs();
            let modes = fam.modes_per_face();
            let mut dense = DMatrix::<f64>::zeros(n, n);
            for t in 0..mesh.n_triangles() {
                let ls = local_solve(&mesh, t, &fam, &coef).unwrap();
                for i in 0..3 * modes {
                    let fi = mesh.tri_faces[t][i / modes];
                    let Some(bi) = sys.trace.face_base[fi] else { continue };
                    for j in 0..3 * modes {
                        let fj = mesh.tri_faces[t][j / modes];
                        let Some(bj) = sys.trace.face_base[fj] else { continue };
                        dense[(bi + i % modes, bj + j % modes)] += ls.energy[(i, j)]
                            / (sys.trace.scale(fi) * sys.trace.scale(fj));
                    }
                }
            }
            let sparse = sys.matrix.to_dense();
            let diff = (&dense - &sparse).abs().max();
            assert!(diff <= 1e-12 * dense.abs().max().max(1.0), "{kind:?}: diff {diff}");
        }
    }

    #[test]
    fn wg_weak_gradient_examples() {
        let mesh = single_reference_mesh();
        let coef = CoefficientField::identity(&mesh);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Wg, 0).unwrap();
        let ls = wg_local_solve(&mesh, 0, &fam, &coef).unwrap();
        // constant trace: weak gradient of 1 is the closed-surface normal
        // integral, zero
        let lam1 = vec![1.0, 2.0f64.powf(0.25), 1.0];
        let (s, _) = ls.solve(&lam1, None);
        assert!(s[0].abs() < 1e-13 && s[1].abs() < 1e-13);
        // indicator of edge (0,0)-(1,0): weak gradient (0, -2)
        let (s, _) = ls.solve(&[1.0, 0.0, 0.0], None);
        let tri = mesh.triangle(0);
        let basis = flux_basis(&fam, &tri);
        let mut sig = [0.0, 0.0];
        for (a, b) in basis.iter().enumerate() {
            let v = b.eval(0.3, 0.3);
            sig[0] += s[a] * v[0];
            sig[1] += s[a] * v[1];
        }
        assert!(sig[0].abs() < 1e-12 && (sig[1] + 2.0).abs() < 1e-12, "{sig:?}");
    }

    #[test]
    fn wg_matches_stab_k0_for_piecewise_constant() {
        let base = build_structured(Domain::LShape);
        let mesh = Arc::new(refine_uniform(&base));
        let coef = CoefficientField::piecewise_scalar(&mesh, |x, y| {
            if x < 0.0 {
                1.0
            } else if y > 0.0 {
                5.0
            } else {
                10.0
            }
        });
        let hdg = assemble_condensed(
            &mesh,
            &stab_family(0),
            &coef,
            None,
        )
        .unwrap();
        let wg = wg_assemble(
            &mesh,
            &ElementFamily::with_default_stabilization(FamilyKind::Wg, 0).unwrap(),
            &coef,
            None,
        )
        .unwrap();
        let a = hdg.matrix.to_dense();
        let b = wg.matrix.to_dense();
        let scale = a.abs().max();
        assert!((a - b).abs().max() <= 1e-11 * scale);
    }

    #[test]
    fn recovery_residual_and_trivial_case() {
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::UnitSquare)));
        let coef = CoefficientField::identity(&mesh);
        let fam = stab_family(1);
        let src = |x: f64, y: f64| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
        let sys = assemble_condensed(&mesh, &fam, &coef, Some(&src)).unwrap();
        // zero data: zero fields
        let zero = vec![0.0; sys.n_dofs()];
        let sol = recover_interior(&sys, &zero, None).unwrap();
        for t in 0..mesh.n_triangles() {
            assert!(sol.u[t].amax() < 1e-14 && sol.sigma[t].amax() < 1e-14);
        }
        // solve the condensed system densely and check the full residual
        let a = sys.matrix.to_dense();
        let b = DVector::from_column_slice(&sys.rhs);
        let x = a.lu().solve(&b).unwrap();
        let lam: Vec<f64> = x.iter().cloned().collect();
        let res = full_system_residual(&sys, &lam, Some(&src)).unwrap();
        assert!(res < 1e-10, "full-system residual {res}");
    }

    #[test]
    fn manufactured_solution_second_order() {
        let pi = std::f64::consts::PI;
        let exact = move |x: f64, y: f64| (pi * x).sin() * (pi * y).sin();
        let src = move |x: f64, y: f64| 2.0 * pi * pi * (pi * x).sin() * (pi * y).sin();
        let fam = stab_family(1);
        let mut mesh = build_structured(Domain::UnitSquare);
        let mut errors = Vec::new();
        for _ in 0..4 {
            mesh = refine_uniform(&mesh);
            let m = Arc::new(mesh.clone());
            let coef = CoefficientField::identity(&m);
            let sys = assemble_condensed(&m, &fam, &coef, Some(&src)).unwrap();
            let a = sys.matrix.to_dense();
            let b = DVector::from_column_slice(&sys.rhs);
            let x = a.clone().cholesky().expect("spd").solve(&b);
            let lam: Vec<f64> = x.iter().cloned().collect();
            let sol = recover_interior(&sys, &lam, Some(&src)).unwrap();
            errors.push(sol.l2_error_u(&sys, exact));
        }
        for w in errors.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(
                (1.8..=2.2).contains(&rate),
                "convergence rate {rate} outside [1.8, 2.2]; errors {errors:?}"
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mesh = Arc::new(build_structured(Domain::UnitSquare));
        let coef = CoefficientField::identity(&mesh);
        let sys = assemble_condensed(&mesh, &stab_family(0), &coef, None).unwrap();
        assert!(matches!(
            recover_interior(&sys, &[0.0; 3], None),
            Err(HdgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_inverse_coefficient() {
        let mesh = single_reference_mesh();
        let coef = CoefficientField::variable(|x, y| SymMat2::scalar(1.0 + 0.5 * (x * x + y * y)));
        let rule = crate::elements::triangle_quadrature(6).unwrap();
        let m = coef.element_mean_inverse(&mesh, 0, &rule);
        // mean of 1/(1 + (x^2+y^2)/2) over the reference triangle, computed
        // directly with the same rule
        let tri = mesh.triangle(0);
        let jac = 2.0 * tri.area();
        let mut acc = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let q = tri.map(*p);
            acc += w * jac / (1.0 + 0.5 * (q[0] * q[0] + q[1] * q[1]));
        }
        acc /= tri.area();
        assert!((m.xx - acc).abs() < 1e-14 && m.xy.abs() < 1e-15);
    }
}
