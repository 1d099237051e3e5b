//! Smoothers, the geometric V-cycle on the auxiliary hierarchy, the
//! four-step two-level preconditioner, the stationary solve, and the
//! spectral estimation utilities shared by the diagnostics.
//!
//! All operators act on assembled forms: right-hand sides and residuals
//! are covectors, so every adjoint below is a plain matrix transpose and
//! spectral quantities do not depend on the DOF scaling.

use crate::auxspace::{assemble_p1, AuxiliarySpace};
use crate::hdg::{CoefficientField, CondensedSystem};
use crate::mesh::{MeshHierarchy, NodeOrigin};
use crate::sparse::{axpy, dot, CooBuilder, CsrMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Sparse(#[from] crate::sparse::SparseError),
    #[error("power iteration stagnated after {iterations} iterations; last estimate {last}, last change {interval}")]
    PowerStagnation { iterations: usize, last: f64, interval: f64 },
    #[error("hierarchy of depth 0")]
    EmptyHierarchy,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

// ---------------------------------------------------------------------------
// Smoothers
// ---------------------------------------------------------------------------

/// Point smoother acting on a sparse SPD matrix with the fixed ascending
/// DOF ordering. `sweeps` composes the base iteration that many times
/// starting from zero.
#[derive(Clone, Debug)]
pub enum Smoother {
    GsForward { sweeps: usize },
    GsBackward { sweeps: usize },
    /// Forward then backward sweep per iteration.
    GsSymmetric { sweeps: usize },
    Richardson { damping: f64, sweeps: usize },
    /// Exact solve; test mode. The owning preconditioner caches the
    /// factorization.
    Exact,
}

impl Smoother {
    pub fn transpose(&self) -> Smoother {
        match self {
            Smoother::GsForward { sweeps } => Smoother::GsBackward { sweeps: *sweeps },
            Smoother::GsBackward { sweeps } => Smoother::GsForward { sweeps: *sweeps },
            other => other.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Smoother::GsForward { sweeps } => format!("gs-forward x{sweeps}"),
            Smoother::GsBackward { sweeps } => format!("gs-backward x{sweeps}"),
            Smoother::GsSymmetric { sweeps } => format!("gs-symmetric x{sweeps}"),
            Smoother::Richardson { damping, sweeps } => {
                format!("richardson({damping}) x{sweeps}")
            }
            Smoother::Exact => "exact".to_string(),
        }
    }
}

/// Applies the configured smoother to the residual covector `r` for the
/// system `a`, i.e. runs the iteration on a z = r starting from zero.
pub fn smoother_apply(s: &Smoother, a: &CsrMatrix, r: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = a.nrows();
    if r.len() != n {
        return Err(SolverError::DimensionMismatch { expected: n, got: r.len() });
    }
    let mut x = vec![0.0; n];
    match s {
        Smoother::GsForward { sweeps } => {
            for _ in 0..*sweeps {
                a.gs_forward_sweep(&mut x, r)?;
            }
        }
        Smoother::GsBackward { sweeps } => {
            for _ in 0..*sweeps {
                a.gs_backward_sweep(&mut x, r)?;
            }
        }
        Smoother::GsSymmetric { sweeps } => {
            for _ in 0..*sweeps {
                a.gs_forward_sweep(&mut x, r)?;
                a.gs_backward_sweep(&mut x, r)?;
            }
        }
        Smoother::Richardson { damping, sweeps } => {
            for _ in 0..*sweeps {
                let ax = a.mul_vec(&x);
                for i in 0..n {
                    x[i] += damping * (r[i] - ax[i]);
                }
            }
        }
        Smoother::Exact => {
            let chol =
                nalgebra::Cholesky::new(a.to_dense()).ok_or(SolverError::NotPositiveDefinite)?;
            let sol = chol.solve(&DVector::from_column_slice(r));
            x.copy_from_slice(sol.as_slice());
        }
    }
    Ok(x)
}

/// Dense matrix of a smoother as a covector-to-vector map (desk scale).
pub fn smoother_dense(s: &Smoother, a: &CsrMatrix) -> Result<DMatrix<f64>, SolverError> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = smoother_apply(s, a, &e)?;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Geometric V-cycle on the auxiliary hierarchy
// ---------------------------------------------------------------------------

/// How the cycle smooths: forward sweeps descending and backward sweeps
/// ascending (the default; the whole cycle is then self-adjoint), or full
/// symmetric Gauss-Seidel iterations on both legs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CycleSmoothing {
    ForwardDownBackwardUp,
    SymmetricBothLegs,
}

struct VCycleLevel {
    stiffness: CsrMatrix,
}

/// Standard geometric V(m1, m1) cycle on the piecewise-linear spaces of a
/// nested uniform hierarchy, with an exact solve on the coarsest level.
pub struct VCycle {
    levels: Vec<VCycleLevel>,
    /// prolongations[l]: level l -> level l+1 (nodal coordinates).
    prolongations: Vec<CsrMatrix>,
    coarse: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    pub m1: usize,
    pub smoothing: CycleSmoothing,
    /// sqrt lumped mass on the finest level (scaled-coordinate wrapper).
    top_mass_sqrt: Vec<f64>,
}

impl VCycle {
    /// Builds the cycle from a uniform hierarchy, assembling the level
    /// stiffness matrices with `make_coef` on every mesh.
    pub fn new(
        hier: &MeshHierarchy,
        make_coef: impl Fn(&crate::mesh::Mesh) -> CoefficientField,
        m1: usize,
        smoothing: CycleSmoothing,
    ) -> Result<Self, SolverError> {
        if hier.meshes.is_empty() {
            return Err(SolverError::EmptyHierarchy);
        }
        let aux_spaces: Vec<AuxiliarySpace> =
            hier.meshes.iter().map(|m| assemble_p1(m, &make_coef(m))).collect();
        let mut prolongations = Vec::new();
        for l in 0..hier.meshes.len() - 1 {
            let coarse = &aux_spaces[l];
            let fine = &aux_spaces[l + 1];
            let map = &hier.maps[l];
            let mut coo = CooBuilder::new(fine.n_nodes(), coarse.n_nodes());
            for (rank, &v) in fine.interior.iter().enumerate() {
                match map.node_origin[v] {
                    NodeOrigin::Vertex(cv) => {
                        if let Some(cr) = coarse.interior_rank[cv] {
                            coo.push(rank, cr, 1.0);
                        }
                    }
                    NodeOrigin::EdgeMidpoint(a, b) => {
                        for cv in [a, b] {
                            if let Some(cr) = coarse.interior_rank[cv] {
                                coo.push(rank, cr, 0.5);
                            }
                        }
                    }
                }
            }
            prolongations.push(coo.build());
        }
        let coarse = if aux_spaces[0].n_nodes() > 0 {
            Some(
                nalgebra::Cholesky::new(aux_spaces[0].nodal_stiffness.to_dense())
                    .ok_or(SolverError::NotPositiveDefinite)?,
            )
        } else {
            None
        };
        let top_mass_sqrt =
            aux_spaces.last().unwrap().lumped_mass.iter().map(|m| m.sqrt()).collect();
        let levels =
            aux_spaces.into_iter().map(|a| VCycleLevel { stiffness: a.nodal_stiffness }).collect();
        Ok(Self { levels, prolongations, coarse, m1, smoothing, top_mass_sqrt })
    }

    pub fn n_finest(&self) -> usize {
        self.levels.last().unwrap().stiffness.nrows()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn cycle(&self, level: usize, rhs: &[f64]) -> Vec<f64> {
        if level == 0 {
            return match &self.coarse {
                Some(chol) if !rhs.is_empty() => {
                    chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
                }
                _ => Vec::new(),
            };
        }
        let a = &self.levels[level].stiffness;
        let n = a.nrows();
        let mut x = vec![0.0; n];
        for _ in 0..self.m1 {
            a.gs_forward_sweep(&mut x, rhs).expect("positive diagonal");
            if self.smoothing == CycleSmoothing::SymmetricBothLegs {
                a.gs_backward_sweep(&mut x, rhs).expect("positive diagonal");
            }
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let rc = self.prolongations[level - 1].mul_transpose_vec(&r);
        let xc = self.cycle(level - 1, &rc);
        let corr = self.prolongations[level - 1].mul_vec(&xc);
        axpy(&mut x, 1.0, &corr);
        for _ in 0..self.m1 {
            if self.smoothing == CycleSmoothing::SymmetricBothLegs {
                a.gs_forward_sweep(&mut x, rhs).expect("positive diagonal");
            }
            a.gs_backward_sweep(&mut x, rhs).expect("positive diagonal");
        }
        x
    }

    /// One cycle applied to a nodal covector on the finest level.
    pub fn apply_nodal(&self, rhs: &[f64]) -> Vec<f64> {
        self.cycle(self.levels.len() - 1, rhs)
    }

    /// One cycle in the scaled (lumped-mass) coordinates of the finest
    /// auxiliary space.
    pub fn apply_scaled(&self, rhs: &[f64]) -> Vec<f64> {
        let nodal_rhs: Vec<f64> = rhs.iter().zip(&self.top_mass_sqrt).map(|(r, m)| r * m).collect();
        let x = self.apply_nodal(&nodal_rhs);
        x.iter().zip(&self.top_mass_sqrt).map(|(v, m)| v * m).collect()
    }
}

/// The auxiliary corrector: an exact solve of the scaled stiffness or a
/// V-cycle. Both variants are self-adjoint, so the transpose application
/// coincides with the forward one; `apply_transpose` exists because the
/// preconditioner performs two distinct correction steps.
pub enum AuxCorrector {
    Exact { chol: nalgebra::Cholesky<f64, nalgebra::Dyn>, n: usize },
    VCycle(VCycle),
}

impl AuxCorrector {
    /// Exact corrector: a dense Cholesky factorization of the scaled
    /// auxiliary stiffness.
    pub fn exact(aux: &AuxiliarySpace) -> Result<Self, SolverError> {
        let n = aux.n_nodes();
        let chol = nalgebra::Cholesky::new(aux.stiffness.to_dense())
            .ok_or(SolverError::NotPositiveDefinite)?;
        Ok(AuxCorrector::Exact { chol, n })
    }

    pub fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            AuxCorrector::Exact { chol, .. } => {
                if rhs.is_empty() {
                    Vec::new()
                } else {
                    chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
                }
            }
            AuxCorrector::VCycle(v) => v.apply_scaled(rhs),
        }
    }

    pub fn apply_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        self.apply(rhs)
    }

    pub fn n(&self) -> usize {
        match self {
            AuxCorrector::Exact { n, .. } => *n,
            AuxCorrector::VCycle(v) => v.n_finest(),
        }
    }
}

// ---------------------------------------------------------------------------
// Two-level preconditioner
// ---------------------------------------------------------------------------

/// The four-step two-level operator: pre-smooth, auxiliary correction,
/// adjoint auxiliary correction, adjoint post-smooth.
pub struct TwoLevelPreconditioner {
    pub a: CsrMatrix,
    pub smoother: Smoother,
    pub corrector: AuxCorrector,
    /// Prolongation from the auxiliary space into the trace space
    /// (scaled coordinates on both sides).
    pub prolongation: CsrMatrix,
    pub prolongation_t: CsrMatrix,
    exact_smoother: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl TwoLevelPreconditioner {
    pub fn new(
        sys: &CondensedSystem,
        smoother: Smoother,
        corrector: AuxCorrector,
        prolongation: &crate::auxspace::ProlongationMap,
    ) -> Result<Self, SolverError> {
        let a = sys.matrix.clone();
        if prolongation.matrix.nrows() != a.nrows() {
            return Err(SolverError::DimensionMismatch {
                expected: a.nrows(),
                got: prolongation.matrix.nrows(),
            });
        }
        if prolongation.matrix.ncols() != corrector.n() {
            return Err(SolverError::DimensionMismatch {
                expected: corrector.n(),
                got: prolongation.matrix.ncols(),
            });
        }
        let exact_smoother = if matches!(smoother, Smoother::Exact) {
            Some(nalgebra::Cholesky::new(a.to_dense()).ok_or(SolverError::NotPositiveDefinite)?)
        } else {
            None
        };
        Ok(Self {
            a,
            smoother,
            corrector,
            prolongation: prolongation.matrix.clone(),
            prolongation_t: prolongation.transpose.clone(),
            exact_smoother,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    fn smooth(&self, s: &Smoother, r: &[f64]) -> Vec<f64> {
        if let Some(chol) = &self.exact_smoother {
            return chol.solve(&DVector::from_column_slice(r)).as_slice().to_vec();
        }
        smoother_apply(s, &self.a, r).expect("assembled matrix has positive diagonal")
    }

    fn residual(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let ax = self.a.mul_vec(x);
        b.iter().zip(&ax).map(|(bi, v)| bi - v).collect()
    }

    /// Applies the four steps to a residual covector.
    pub fn apply(&self, eta: &[f64]) -> Vec<f64> {
        // 1. pre-smooth
        let mut x = self.smooth(&self.smoother, eta);
        // 2. auxiliary correction
        let r = self.residual(eta, &x);
        let corr = self.corrector.apply(&self.prolongation_t.mul_vec(&r));
        axpy(&mut x, 1.0, &self.prolongation.mul_vec(&corr));
        // 3. adjoint auxiliary correction
        let r = self.residual(eta, &x);
        let corr = self.corrector.apply_transpose(&self.prolongation_t.mul_vec(&r));
        axpy(&mut x, 1.0, &self.prolongation.mul_vec(&corr));
        // 4. adjoint post-smooth
        let r = self.residual(eta, &x);
        let post = self.smooth(&self.smoother.transpose(), &r);
        axpy(&mut x, 1.0, &post);
        x
    }

    /// The error-propagation map v -> (I - B A) v on elements.
    pub fn error_apply(&self, v: &[f64]) -> Vec<f64> {
        let av = self.a.mul_vec(v);
        let bv = self.apply(&av);
        v.iter().zip(&bv).map(|(a, b)| a - b).collect()
    }
}

// ---------------------------------------------------------------------------
// Stationary iteration
// ---------------------------------------------------------------------------

pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Energy error (b = 0) or preconditioned-residual proxy per iterate,
    /// starting with the initial value.
    pub history: Vec<f64>,
}

/// Runs the stationary iteration x <- x + B(b - A x) until the energy
/// error drops below `reduction` times its initial value.
///
/// With b = 0 the error is the iterate itself and the energy error is
/// exact; otherwise the B-weighted residual norm serves as the error
/// measure.
pub fn solve_two_level(
    sys: &CondensedSystem,
    p: &TwoLevelPreconditioner,
    x0: &[f64],
    reduction: f64,
    max_iter: usize,
) -> Result<SolveOutcome, SolverError> {
    if x0.len() != p.n() {
        return Err(SolverError::DimensionMismatch { expected: p.n(), got: x0.len() });
    }
    let b = &sys.rhs;
    let zero_rhs = b.iter().all(|v| *v == 0.0);
    let error_measure = |x: &[f64], r: &[f64]| -> f64 {
        if zero_rhs {
            dot(&p.a.mul_vec(x), x).max(0.0).sqrt()
        } else {
            dot(&p.apply(r), r).max(0.0).sqrt()
        }
    };
    let mut x = x0.to_vec();
    let mut r = p.residual(b, &x);
    let e0 = error_measure(&x, &r);
    let mut history = vec![e0];
    if e0 == 0.0 {
        return Ok(SolveOutcome { x, iterations: 0, converged: true, history });
    }
    let target = reduction * e0;
    for j in 1..=max_iter {
        let dx = p.apply(&r);
        axpy(&mut x, 1.0, &dx);
        r = p.residual(b, &x);
        let e = error_measure(&x, &r);
        history.push(e);
        if e <= target {
            return Ok(SolveOutcome { x, iterations: j, converged: true, history });
        }
    }
    Ok(SolveOutcome { x, iterations: max_iter, converged: false, history })
}

// ---------------------------------------------------------------------------
// Spectral estimation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct PowerOpts {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerOpts {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-9, seed: 0x5eed }
    }
}

/// Dominant absolute eigenvalue of an operator that is self-adjoint in
/// the inner product induced by the SPD matrix `a`, via power iteration
/// with a fixed-seed start vector.
pub fn power_iteration_a_norm(
    op: impl Fn(&[f64]) -> Vec<f64>,
    a: &CsrMatrix,
    opts: PowerOpts,
) -> Result<f64, SolverError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm0 = dot(&a.mul_vec(&v), &v).max(0.0).sqrt();
    if norm0 == 0.0 {
        return Ok(0.0);
    }
    for vi in &mut v {
        *vi /= norm0;
    }
    let mut theta = 0.0;
    let mut change = f64::INFINITY;
    for it in 0..opts.max_iter {
        let w = op(&v);
        let aw = a.mul_vec(&w);
        let new_theta = dot(&aw, &v);
        let wnorm = dot(&aw, &w).max(0.0).sqrt();
        if wnorm <= 1e-15 {
            return Ok(0.0);
        }
        change = (new_theta - theta).abs();
        theta = new_theta;
        if it > 0 && change <= opts.tol * theta.abs().max(1e-12) {
            return Ok(theta.abs());
        }
        v = w.iter().map(|x| x / wnorm).collect();
    }
    Err(SolverError::PowerStagnation {
        iterations: opts.max_iter,
        last: theta.abs(),
        interval: change,
    })
}

/// Same as `power_iteration_a_norm` but returning the last estimate on
/// stagnation instead of failing.
pub fn power_iteration_lenient(
    op: impl Fn(&[f64]) -> Vec<f64>,
    a: &CsrMatrix,
    opts: PowerOpts,
) -> f64 {
    match power_iteration_a_norm(op, a, opts) {
        Ok(v) => v,
        Err(SolverError::PowerStagnation { last, .. }) => last,
        Err(_) => f64::NAN,
    }
}

/// A-norm of I - B A measured by power iteration; the operator is
/// A-self-adjoint (and positive semidefinite by the palindromic step
/// structure), so the dominant eigenvalue is the norm.
pub fn estimate_contraction(
    p: &TwoLevelPreconditioner,
    opts: PowerOpts,
) -> Result<f64, SolverError> {
    power_iteration_a_norm(|v| p.error_apply(v), &p.a, opts)
}

/// Dense cross-check of the contraction factor: generalized symmetric
/// eigenvalues of (A - A B A, A).
pub fn contraction_dense(p: &TwoLevelPreconditioner) -> Result<f64, SolverError> {
    let n = p.n();
    let a = p.a.to_dense();
    let mut g = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = p.error_apply(&e);
        for i in 0..n {
            g[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    let ag = &a * &g;
    let ag = (&ag + ag.transpose()) * 0.5;
    let eigs = generalized_sym_eigvals(&ag, &a)?;
    Ok(eigs.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Eigenvalues of the symmetric pencil M x = lambda B x with B SPD, via
/// the Cholesky congruence, ascending.
pub fn generalized_sym_eigvals(
    m: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<Vec<f64>, SolverError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let chol = nalgebra::Cholesky::new(b.clone()).ok_or(SolverError::NotPositiveDefinite)?;
    let l = chol.l();
    // C = L^{-1} M L^{-T}
    let x = l.solve_lower_triangular(m).ok_or(SolverError::NotPositiveDefinite)?;
    let xt = x.transpose();
    let c = l.solve_lower_triangular(&xt).ok_or(SolverError::NotPositiveDefinite)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(c);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

/// Eigenvalues of R A for symmetric R and SPD A, ascending (R A is
/// similar to the symmetric matrix L^t R L where A = L L^t).
pub fn eigvals_smoother_times_a(
    r: &DMatrix<f64>,
    a: &DMatrix<f64>,
) -> Result<Vec<f64>, SolverError> {
    let chol = nalgebra::Cholesky::new(a.clone()).ok_or(SolverError::NotPositiveDefinite)?;
    let l = chol.l();
    let m = l.transpose() * r * &l;
    let m = (&m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

/// Extreme eigenvalues of an operator self-adjoint in the `ip` inner
/// product, by the Lanczos iteration with full reorthogonalization and a
/// residual check on the extreme pairs.
pub fn lanczos_extremes(
    op: impl Fn(&[f64]) -> Vec<f64>,
    ip: impl Fn(&[f64], &[f64]) -> f64,
    n: usize,
    tol: f64,
    max_steps: usize,
    seed: u64,
) -> Result<(f64, f64), SolverError> {
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = ip(&v, &v).sqrt();
    for x in &mut v {
        *x /= nv;
    }
    let mut basis = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let steps = max_steps.min(n);
    for j in 0..steps {
        let mut w = op(&basis[j]);
        let alpha = ip(&w, &basis[j]);
        alphas.push(alpha);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for q in &basis {
                let c = ip(&w, q);
                axpy(&mut w, -c, q);
            }
        }
        let beta = ip(&w, &w).max(0.0).sqrt();
        let (lo, hi, res_lo, res_hi) = tridiag_extremes(&alphas, &betas, beta);
        if (res_lo <= tol && res_hi <= tol) || beta <= 1e-14 || j + 1 == steps {
            return Ok((lo, hi));
        }
        betas.push(beta);
        for x in &mut w {
            *x /= beta;
        }
        basis.push(w);
    }
    unreachable!("loop returns on its last step")
}

/// Extreme eigenvalues of the Lanczos tridiagonal matrix together with
/// the residual bounds beta * |last eigenvector component|.
fn tridiag_extremes(alphas: &[f64], betas: &[f64], beta_next: f64) -> (f64, f64, f64, f64) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let lo = idx[0];
    let hi = idx[k - 1];
    let res_lo = beta_next * eig.eigenvectors[(k - 1, lo)].abs();
    let res_hi = beta_next * eig.eigenvectors[(k - 1, hi)].abs();
    (eig.eigenvalues[lo], eig.eigenvalues[hi], res_lo, res_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{ElementFamily, FamilyKind};
    use crate::hdg::assemble_condensed;
    use crate::mesh::{build_structured, refine_uniform, Domain};
    use std::sync::Arc;

    fn two_by_two() -> CsrMatrix {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 2.0);
        b.push(0, 1, -1.0);
        b.push(1, 0, -1.0);
        b.push(1, 1, 2.0);
        b.build()
    }

    #[test]
    fn gs_hand_values() {
        let a = two_by_two();
        let r = [1.0, 1.0];
        let fwd = smoother_apply(&Smoother::GsForward { sweeps: 1 }, &a, &r).unwrap();
        assert_eq!(fwd, vec![0.5, 0.75]);
        let sym = smoother_apply(&Smoother::GsSymmetric { sweeps: 1 }, &a, &r).unwrap();
        assert!((sym[0] - 0.875).abs() < 1e-15);
        assert!((sym[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn richardson_diagonal_example() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 1, 2.0);
        let a = b.build();
        let x = smoother_apply(&Smoother::Richardson { damping: 0.5, sweeps: 1 }, &a, &[1.0, 1.0])
            .unwrap();
        assert_eq!(x, vec![0.5, 0.5]);
    }

    #[test]
    fn smoother_transposes_match_dense_transpose() {
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::UnitSquare)));
        let coef = CoefficientField::identity(&mesh);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let a = assemble_condensed(&mesh, &fam, &coef, None).unwrap().matrix;
        for s in [
            Smoother::GsForward { sweeps: 2 },
            Smoother::GsSymmetric { sweeps: 2 },
            Smoother::Richardson { damping: 0.1, sweeps: 3 },
        ] {
            let d = smoother_dense(&s, &a).unwrap();
            let dt = smoother_dense(&s.transpose(), &a).unwrap();
            assert!((d.transpose() - dt).abs().max() < 1e-13, "{}", s.label());
        }
    }

    #[test]
    fn sym_gs_eigenvalues_in_unit_interval() {
        let mesh = Arc::new(refine_uniform(&build_structured(Domain::LShape)));
        let coef = CoefficientField::identity(&mesh);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
        let r = smoother_dense(&Smoother::GsSymmetric { sweeps: 1 }, &sys.matrix).unwrap();
        let eigs = eigvals_smoother_times_a(&r, &sys.matrix.to_dense()).unwrap();
        for v in &eigs {
            assert!(*v > 0.0 && *v <= 1.0 + 1e-10, "eigenvalue {v}");
        }
    }

    #[test]
    fn generalized_eigs_simple_pencil() {
        // M = diag(2, 6), B = diag(1, 2): eigenvalues 2 and 3
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 6.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let e = generalized_sym_eigvals(&m, &b).unwrap();
        assert!((e[0] - 2.0).abs() < 1e-13 && (e[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn lanczos_matches_dense_extremes() {
        let mesh = Arc::new(refine_uniform(&refine_uniform(&build_structured(
            Domain::UnitSquare,
        ))));
        let coef = CoefficientField::identity(&mesh);
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
        let n = sys.n_dofs();
        let eig = nalgebra::SymmetricEigen::new(sys.matrix.to_dense());
        let mut exact: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) =
            lanczos_extremes(|v| sys.matrix.mul_vec(v), dot, n, 1e-8, 200, 42).unwrap();
        assert!((lo - exact[0]).abs() < 1e-6 * exact[n - 1]);
        assert!((hi - exact[n - 1]).abs() < 1e-6 * exact[n - 1]);
    }

    #[test]
    fn richardson_contraction_hand_value() {
        // A = diag(1,2), B = I/2: eigenvalues of I - BA are 1/2 and 0
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 1, 2.0);
        let a = b.build();
        let op = |v: &[f64]| -> Vec<f64> {
            let av = a.mul_vec(v);
            (0..2).map(|i| v[i] - 0.5 * av[i]).collect()
        };
        let norm = power_iteration_a_norm(op, &a, PowerOpts::default()).unwrap();
        assert!((norm - 0.5).abs() < 1e-9);
    }
}
