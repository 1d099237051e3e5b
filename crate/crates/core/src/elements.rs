//! Polynomial bases, quadrature and element-family definitions.
//!
//! Each family fixes three local spaces on a triangle `T`: a scalar
//! potential space `V(T)`, a vector flux space `W(T)`, and the face trace
//! space of degree `k` on `∂T`, together with a per-element stabilization
//! weight. Bases are built as monomials orthogonalized on the reference
//! element and mapped affinely; flux bases live directly in physical
//! coordinates (no Piola transform).

use thiserror::Error;

/// Supported element families.
///
/// * `Rt` — hybridized Raviart-Thomas: V = P_k, W = [P_k]^2 + P_k x, no
///   stabilization (k = 0 supported).
/// * `Bdm` — hybridized Brezzi-Douglas-Marini: V = P_{k-1}, W = [P_k]^2,
///   no stabilization (k = 1 supported).
/// * `Stab` — equal-order stabilized: V = P_k, W = [P_k]^2, constant
///   per-element stabilization (k = 0, 1).
/// * `Raised` — raised potential: V = P_{k+1}, W = [P_k]^2, stabilization
///   scaling like 1/h_T (k = 0).
/// * `Wg` — lowest-order weak Galerkin: V = P_0, W = [P_0]^2, constant
///   stabilization; the local problem uses weak gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Rt,
    Bdm,
    Stab,
    Raised,
    Wg,
}

impl FamilyKind {
    pub fn label(&self) -> &'static str {
        match self {
            FamilyKind::Rt => "rt",
            FamilyKind::Bdm => "bdm",
            FamilyKind::Stab => "stab",
            FamilyKind::Raised => "raised",
            FamilyKind::Wg => "wg",
        }
    }
}

/// Rule producing the stabilization weight `α_T ≥ 0` for an element.
#[derive(Clone, Debug)]
pub enum Stabilization {
    /// α_T = 0 (Rt, Bdm).
    Zero,
    /// α_T = c on every element.
    Constant(f64),
    /// α_T = c / h_T.
    OverDiameter(f64),
    /// Explicit per-element values, indexed by triangle.
    PerElement(std::sync::Arc<Vec<f64>>),
}

impl Stabilization {
    pub fn alpha(&self, element: usize, h: f64) -> f64 {
        match self {
            Stabilization::Zero => 0.0,
            Stabilization::Constant(c) => *c,
            Stabilization::OverDiameter(c) => *c / h,
            Stabilization::PerElement(v) => v[element],
        }
    }
}

/// An element family instance: kind, trace degree and stabilization rule.
#[derive(Clone, Debug)]
pub struct ElementFamily {
    pub kind: FamilyKind,
    pub k: usize,
    pub stabilization: Stabilization,
}

#[derive(Debug, Error)]
pub enum ElementError {
    #[error("unsupported family/degree combination: {kind:?} with k = {k}")]
    UnsupportedFamily { kind: FamilyKind, k: usize },
    #[error("quadrature degree {0} out of supported range (max 10)")]
    QuadratureDegree(usize),
    #[error("stabilization must be nonnegative, got {0}")]
    NegativeStabilization(f64),
}

impl ElementFamily {
    /// Builds a family, validating the supported (kind, k) combinations.
    pub fn new(kind: FamilyKind, k: usize, stabilization: Stabilization) -> Result<Self, ElementError> {
        let supported = match kind {
            FamilyKind::Rt => k == 0,
            FamilyKind::Bdm => k == 1,
            FamilyKind::Stab => k <= 1,
            FamilyKind::Raised => k == 0,
            FamilyKind::Wg => k == 0,
        };
        if !supported {
            return Err(ElementError::UnsupportedFamily { kind, k });
        }
        if let Stabilization::Constant(c) | Stabilization::OverDiameter(c) = stabilization {
            if c < 0.0 {
                return Err(ElementError::NegativeStabilization(c));
            }
        }
        Ok(Self { kind, k, stabilization })
    }

    /// Family with its default stabilization (1 where stabilized).
    pub fn with_default_stabilization(kind: FamilyKind, k: usize) -> Result<Self, ElementError> {
        let stab = match kind {
            FamilyKind::Rt | FamilyKind::Bdm => Stabilization::Zero,
            FamilyKind::Stab | FamilyKind::Wg => Stabilization::Constant(1.0),
            FamilyKind::Raised => Stabilization::OverDiameter(1.0),
        };
        Self::new(kind, k, stab)
    }

    /// Degree of the potential space V(T).
    pub fn potential_degree(&self) -> usize {
        match self.kind {
            FamilyKind::Rt | FamilyKind::Stab => self.k,
            FamilyKind::Bdm => self.k - 1,
            FamilyKind::Raised => self.k + 1,
            FamilyKind::Wg => 0,
        }
    }

    pub fn dim_potential(&self) -> usize {
        dim_pk(self.potential_degree())
    }

    pub fn dim_flux(&self) -> usize {
        match self.kind {
            FamilyKind::Rt => 2 * dim_pk(self.k) + dim_pk_homogeneous_tail(self.k),
            FamilyKind::Bdm | FamilyKind::Stab => 2 * dim_pk(self.k),
            FamilyKind::Raised | FamilyKind::Wg => 2 * dim_pk(0),
        }
    }

    /// Trace modes per face.
    pub fn modes_per_face(&self) -> usize {
        self.k + 1
    }

    pub fn uses_weak_gradients(&self) -> bool {
        self.kind == FamilyKind::Wg
    }
}

pub fn dim_pk(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// dim(P_k x) modulo [P_k]^2, i.e. the RT tail: homogeneous degree-k count.
fn dim_pk_homogeneous_tail(k: usize) -> usize {
    k + 1
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Quadrature points and weights on the reference triangle
/// (0,0)-(1,0)-(0,1) or the reference edge [0,1], with a declared
/// polynomial exactness degree.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Gauss-Legendre nodes/weights on [0,1], exact through degree 2n-1.
/// Nodes are found by Newton iteration on P_n.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // initial guess on [-1,1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_value_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_value_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_value_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = pj;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Rule on the reference edge [0,1] exact for the given degree.
pub fn edge_quadrature(degree: usize) -> Result<QuadratureRule, ElementError> {
    if degree > 10 {
        return Err(ElementError::QuadratureDegree(degree));
    }
    let n = degree / 2 + 1; // 2n-1 >= degree
    let (nodes, weights) = gauss_legendre_unit(n);
    Ok(QuadratureRule {
        points: nodes.iter().map(|&t| [t, 0.0]).collect(),
        weights,
        degree,
    })
}

/// Rule on the reference triangle exact for the given degree.
///
/// Degree <= 1 uses the one-point centroid rule; higher degrees use a
/// collapsed tensor Gauss rule, which is exact by construction.
pub fn triangle_quadrature(degree: usize) -> Result<QuadratureRule, ElementError> {
    if degree > 10 {
        return Err(ElementError::QuadratureDegree(degree));
    }
    if degree <= 1 {
        return Ok(QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            degree,
        });
    }
    // Duffy collapse x = s, y = t(1-s): the extra factor (1-s) raises the
    // s-degree by one.
    let ns = (degree + 1) / 2 + 1;
    let nt = degree / 2 + 1;
    let (xs, ws) = gauss_legendre_unit(ns);
    let (xt, wt) = gauss_legendre_unit(nt);
    let mut points = Vec::with_capacity(ns * nt);
    let mut weights = Vec::with_capacity(ns * nt);
    for (s, wa) in xs.iter().zip(&ws) {
        for (t, wb) in xt.iter().zip(&wt) {
            points.push([*s, t * (1.0 - s)]);
            weights.push(wa * wb * (1.0 - s));
        }
    }
    Ok(QuadratureRule { points, weights, degree })
}

// ---------------------------------------------------------------------------
// Bivariate polynomials
// ---------------------------------------------------------------------------

/// Dense bivariate polynomial in monomials x^i y^j, i + j <= degree.
/// Only small degrees appear (the supported spaces live in P_1).
#[derive(Clone, Debug)]
pub struct Poly2 {
    pub degree: usize,
    /// coefficient of x^i y^j at index `monomial_index(i, j)`
    pub coeffs: Vec<f64>,
}

pub fn monomial_index(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

impl Poly2 {
    pub fn zero(degree: usize) -> Self {
        Self { degree, coeffs: vec![0.0; dim_pk(degree)] }
    }

    pub fn monomial(i: usize, j: usize) -> Self {
        let mut p = Self::zero(i + j);
        p.coeffs[monomial_index(i, j)] = 1.0;
        p
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for d in 0..=self.degree {
            for j in 0..=d {
                let c = self.coeffs[d * (d + 1) / 2 + j];
                if c != 0.0 {
                    acc += c * x.powi((d - j) as i32) * y.powi(j as i32);
                }
            }
        }
        acc
    }

    pub fn dx(&self) -> Poly2 {
        let deg = self.degree.saturating_sub(1);
        let mut out = Poly2::zero(deg);
        for d in 1..=self.degree {
            for j in 0..=d {
                let i = d - j;
                if i >= 1 {
                    let c = self.coeffs[d * (d + 1) / 2 + j];
                    out.coeffs[monomial_index(i - 1, j)] += c * i as f64;
                }
            }
        }
        out
    }

    pub fn dy(&self) -> Poly2 {
        let deg = self.degree.saturating_sub(1);
        let mut out = Poly2::zero(deg);
        for d in 1..=self.degree {
            for j in 1..=d {
                let i = d - j;
                let c = self.coeffs[d * (d + 1) / 2 + j];
                out.coeffs[monomial_index(i, j - 1)] += c * j as f64;
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Poly2 {
        Poly2 { degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add_scaled(&mut self, s: f64, other: &Poly2) {
        assert!(other.degree <= self.degree);
        for d in 0..=other.degree {
            for j in 0..=d {
                let idx = d * (d + 1) / 2 + j;
                self.coeffs[idx] += s * other.coeffs[idx];
            }
        }
    }

    /// Substitutes the affine map (x, y) = o + x̂ u + ŷ v, producing a
    /// polynomial in (x̂, ŷ) of the same degree.
    pub fn compose_affine(&self, o: [f64; 2], u: [f64; 2], v: [f64; 2]) -> Poly2 {
        let mut out = Poly2::zero(self.degree);
        // expand (o0 + u0 x + v0 y)^i (o1 + u1 x + v1 y)^j by repeated products
        let lin_x = [o[0], u[0], v[0]]; // 1, x, y coefficients
        let lin_y = [o[1], u[1], v[1]];
        for d in 0..=self.degree {
            for j in 0..=d {
                let i = d - j;
                let c = self.coeffs[d * (d + 1) / 2 + j];
                if c == 0.0 {
                    continue;
                }
                let mut term = Poly2::zero(self.degree);
                term.coeffs[0] = c;
                for _ in 0..i {
                    term = term.mul_linear(lin_x);
                }
                for _ in 0..j {
                    term = term.mul_linear(lin_y);
                }
                out.add_scaled(1.0, &term);
            }
        }
        out
    }

    /// Multiplies by a + b x + c y, truncation-free (degree grows within
    /// the preallocated bound).
    fn mul_linear(&self, lin: [f64; 3]) -> Poly2 {
        let mut out = Poly2::zero(self.degree);
        for d in 0..=self.degree {
            for j in 0..=d {
                let i = d - j;
                let c0 = self.coeffs[d * (d + 1) / 2 + j];
                if c0 == 0.0 {
                    continue;
                }
                out.coeffs[monomial_index(i, j)] += c0 * lin[0];
                if i + j + 1 <= self.degree {
                    out.coeffs[monomial_index(i + 1, j)] += c0 * lin[1];
                    out.coeffs[monomial_index(i, j + 1)] += c0 * lin[2];
                }
            }
        }
        out
    }
}

/// Exact integral of x^i y^j over the reference triangle: i! j! / (i+j+2)!.
pub fn reference_monomial_integral(i: usize, j: usize) -> f64 {
    fn fact(n: usize) -> f64 {
        (1..=n).map(|v| v as f64).product()
    }
    fact(i) * fact(j) / fact(i + j + 2)
}

// ---------------------------------------------------------------------------
// Triangle geometry
// ---------------------------------------------------------------------------

/// Geometry of one physical triangle, vertices counterclockwise.
#[derive(Clone, Debug)]
pub struct Triangle {
    pub v: [[f64; 2]; 3],
}

impl Triangle {
    pub fn new(v: [[f64; 2]; 3]) -> Self {
        Self { v }
    }

    pub fn reference() -> Self {
        Self { v: [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn signed_area(&self) -> f64 {
        let [a, b, c] = self.v;
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let [a, b, c] = self.v;
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn diameter(&self) -> f64 {
        let mut h: f64 = 0.0;
        for e in 0..3 {
            let a = self.v[e];
            let b = self.v[(e + 1) % 3];
            h = h.max(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
        }
        h
    }

    /// Maps a reference point to physical coordinates.
    pub fn map(&self, p: [f64; 2]) -> [f64; 2] {
        let [a, b, c] = self.v;
        [
            a[0] + (b[0] - a[0]) * p[0] + (c[0] - a[0]) * p[1],
            a[1] + (b[1] - a[1]) * p[0] + (c[1] - a[1]) * p[1],
        ]
    }

    /// Local edge `e` runs from vertex e to vertex e+1 (mod 3).
    pub fn edge(&self, e: usize) -> ([f64; 2], [f64; 2]) {
        (self.v[e], self.v[(e + 1) % 3])
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let (a, b) = self.edge(e);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Outward unit normal of local edge `e` (CCW orientation).
    pub fn outward_normal(&self, e: usize) -> [f64; 2] {
        let (a, b) = self.edge(e);
        let len = self.edge_length(e);
        [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
    }

    pub fn perimeter(&self) -> f64 {
        (0..3).map(|e| self.edge_length(e)).sum()
    }
}

// ---------------------------------------------------------------------------
// Scalar and flux bases
// ---------------------------------------------------------------------------

/// Scalar basis of P_k on a physical triangle: monomials orthonormalized
/// on the reference element (exact Gram) and composed with the inverse
/// affine map. Divergence-free of any mapping headaches since everything
/// stays polynomial in physical coordinates.
pub fn scalar_basis(k: usize, tri: &Triangle) -> Vec<Poly2> {
    // reference monomials in graded order
    let mut mons = Vec::new();
    for d in 0..=k {
        for j in 0..=d {
            mons.push(Poly2::monomial(d - j, j));
        }
    }
    // Gram-Schmidt with exact reference integrals
    let gram_ip = |p: &Poly2, q: &Poly2| -> f64 {
        let mut acc = 0.0;
        for d1 in 0..=p.degree {
            for j1 in 0..=d1 {
                let c1 = p.coeffs[d1 * (d1 + 1) / 2 + j1];
                if c1 == 0.0 {
                    continue;
                }
                for d2 in 0..=q.degree {
                    for j2 in 0..=d2 {
                        let c2 = q.coeffs[d2 * (d2 + 1) / 2 + j2];
                        if c2 == 0.0 {
                            continue;
                        }
                        acc += c1 * c2 * reference_monomial_integral(d1 - j1 + d2 - j2, j1 + j2);
                    }
                }
            }
        }
        acc
    };
    let mut ortho: Vec<Poly2> = Vec::new();
    for m in mons {
        let mut p = {
            let mut q = Poly2::zero(k);
            q.add_scaled(1.0, &m);
            q
        };
        for o in &ortho {
            let c = gram_ip(&p, o);
            p.add_scaled(-c, o);
        }
        let n = gram_ip(&p, &p).sqrt();
        ortho.push(p.scaled(1.0 / n));
    }
    // map to physical coordinates: p(x) = p̂(B^{-1}(x - v0))
    let [a, b, c] = tri.v;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    // rows of B^{-1}
    let r0 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
    let r1 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
    // x̂ = r0 · (x - v0), ŷ = r1 · (x - v0): affine in (x, y)
    let o = [
        -(r0[0] * a[0] + r0[1] * a[1]),
        -(r1[0] * a[0] + r1[1] * a[1]),
    ];
    ortho
        .into_iter()
        .map(|p| p.compose_affine(o, [r0[0], r1[0]], [r0[1], r1[1]]))
        .collect()
}

/// One component-wise flux basis function: a polynomial 2-vector.
#[derive(Clone, Debug)]
pub struct VectorPoly {
    pub x: Poly2,
    pub y: Poly2,
}

impl VectorPoly {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        [self.x.eval(x, y), self.y.eval(x, y)]
    }

    pub fn divergence(&self) -> Poly2 {
        let dx = self.x.dx();
        let dy = self.y.dy();
        let deg = dx.degree.max(dy.degree);
        let mut out = Poly2::zero(deg);
        out.add_scaled(1.0, &dx);
        out.add_scaled(1.0, &dy);
        out
    }
}

/// Flux basis W(T) for a family on a physical triangle.
pub fn flux_basis(fam: &ElementFamily, tri: &Triangle) -> Vec<VectorPoly> {
    let scalar_deg = match fam.kind {
        FamilyKind::Rt | FamilyKind::Bdm | FamilyKind::Stab => fam.k,
        FamilyKind::Raised | FamilyKind::Wg => 0,
    };
    let scal = scalar_basis(scalar_deg, tri);
    let mut basis = Vec::new();
    for p in &scal {
        basis.push(VectorPoly { x: p.clone(), y: Poly2::zero(p.degree) });
    }
    for p in &scal {
        basis.push(VectorPoly { x: Poly2::zero(p.degree), y: p.clone() });
    }
    if fam.kind == FamilyKind::Rt {
        // RT tail (x - x_c) * (homogeneous degree-k scalars); k = 0 here
        let cen = tri.centroid();
        let shift_x = {
            let mut p = Poly2::zero(fam.k + 1);
            p.coeffs[monomial_index(1, 0)] = 1.0;
            p.coeffs[0] = -cen[0];
            p
        };
        let shift_y = {
            let mut p = Poly2::zero(fam.k + 1);
            p.coeffs[monomial_index(0, 1)] = 1.0;
            p.coeffs[0] = -cen[1];
            p
        };
        for m in homogeneous_scalars(fam.k) {
            let mut vx = Poly2::zero(fam.k + 1);
            let mut vy = Poly2::zero(fam.k + 1);
            vx.add_scaled(1.0, &poly_product(&shift_x, &m, fam.k + 1));
            vy.add_scaled(1.0, &poly_product(&shift_y, &m, fam.k + 1));
            basis.push(VectorPoly { x: vx, y: vy });
        }
    }
    basis
}

fn homogeneous_scalars(k: usize) -> Vec<Poly2> {
    (0..=k).map(|j| Poly2::monomial(k - j, j)).collect()
}

fn poly_product(a: &Poly2, b: &Poly2, out_degree: usize) -> Poly2 {
    let mut out = Poly2::zero(out_degree);
    for d1 in 0..=a.degree {
        for j1 in 0..=d1 {
            let c1 = a.coeffs[d1 * (d1 + 1) / 2 + j1];
            if c1 == 0.0 {
                continue;
            }
            for d2 in 0..=b.degree {
                for j2 in 0..=d2 {
                    let c2 = b.coeffs[d2 * (d2 + 1) / 2 + j2];
                    if c2 == 0.0 {
                        continue;
                    }
                    out.coeffs[monomial_index(d1 - j1 + d2 - j2, j1 + j2)] += c1 * c2;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Face (trace) basis
// ---------------------------------------------------------------------------

/// L^2(F)-orthonormal Legendre basis on a face of length `len`,
/// parametrized by t in [0,1] from the face's first vertex to its second.
/// Mode m has values `face_mode(m, t, len)`.
pub fn face_mode(m: usize, t: f64, len: f64) -> f64 {
    match m {
        0 => 1.0 / len.sqrt(),
        1 => (3.0 / len).sqrt() * (2.0 * t - 1.0),
        _ => panic!("trace modes above degree 1 are not supported"),
    }
}

/// L^2(F) projection of a scalar function given on the face (as a function
/// of the [0,1] parameter) onto the span of modes 0..=k. Returns the
/// orthonormal-basis coefficients.
pub fn face_project_fn(
    k: usize,
    len: f64,
    rule: &QuadratureRule,
    g: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut coefs = vec![0.0; k + 1];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let t = p[0];
        let gv = g(t);
        for (m, c) in coefs.iter_mut().enumerate() {
            *c += w * len * gv * face_mode(m, t, len);
        }
    }
    coefs
}

/// Evaluates a projected face polynomial from its orthonormal coefficients.
pub fn face_eval(coefs: &[f64], t: f64, len: f64) -> f64 {
    coefs
        .iter()
        .enumerate()
        .map(|(m, c)| c * face_mode(m, t, len))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_rule_integrates_area() {
        let r = triangle_quadrature(1).unwrap();
        assert_eq!(r.points.len(), 1);
        let total: f64 = r.weights.iter().sum();
        assert!((total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn edge_one_point_is_exact_for_linears() {
        let r = edge_quadrature(1).unwrap();
        assert_eq!(r.points.len(), 1);
        let int: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * (2.0 * p[0] + 1.0)).sum();
        assert!((int - 2.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_rules_integrate_monomials_exactly() {
        for degree in 0..=10 {
            let r = triangle_quadrature(degree).unwrap();
            for i in 0..=degree {
                for j in 0..=(degree - i) {
                    let num: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(i as i32) * p[1].powi(j as i32))
                        .sum();
                    let exact = reference_monomial_integral(i, j);
                    assert!(
                        (num - exact).abs() <= 1e-13 * exact.abs().max(1.0),
                        "degree {degree} monomial x^{i} y^{j}: {num} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree_4_rule_handles_x2y2_under_affine_map() {
        // map reference triangle to (0,0),(2,0),(1,1) and integrate x^2 y^2
        let tri = Triangle::new([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]]);
        let r = triangle_quadrature(4).unwrap();
        let jac = 2.0 * tri.area();
        let num: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| {
                let q = tri.map(*p);
                w * jac * q[0] * q[0] * q[1] * q[1]
            })
            .sum();
        // closed form via monomial integrals after substituting the map
        // x = s·2 + t, y = t on the reference element
        let mut exact = 0.0;
        // (2s + t)^2 t^2 = 4s^2 t^2 + 4s t^3 + t^4
        exact += 4.0 * reference_monomial_integral(2, 2);
        exact += 4.0 * reference_monomial_integral(1, 3);
        exact += reference_monomial_integral(0, 4);
        exact *= jac;
        assert!((num - exact).abs() < 1e-13 * exact.max(1.0));
    }

    #[test]
    fn quadrature_degree_out_of_range() {
        assert!(triangle_quadrature(11).is_err());
        assert!(edge_quadrature(11).is_err());
    }

    #[test]
    fn family_dimensions() {
        let rt = ElementFamily::with_default_stabilization(FamilyKind::Rt, 0).unwrap();
        assert_eq!(rt.dim_flux(), 3);
        assert_eq!(rt.dim_potential(), 1);
        let bdm = ElementFamily::with_default_stabilization(FamilyKind::Bdm, 1).unwrap();
        assert_eq!(bdm.dim_flux(), 6);
        assert_eq!(bdm.dim_potential(), 1);
        let s1 = ElementFamily::with_default_stabilization(FamilyKind::Stab, 1).unwrap();
        assert_eq!(s1.dim_flux(), 6);
        assert_eq!(s1.dim_potential(), 3);
        let t4 = ElementFamily::with_default_stabilization(FamilyKind::Raised, 0).unwrap();
        assert_eq!(t4.dim_flux(), 2);
        assert_eq!(t4.dim_potential(), 3);
    }

    #[test]
    fn unsupported_family_rejected() {
        assert!(ElementFamily::with_default_stabilization(FamilyKind::Rt, 1).is_err());
        assert!(ElementFamily::with_default_stabilization(FamilyKind::Bdm, 0).is_err());
        assert!(ElementFamily::with_default_stabilization(FamilyKind::Stab, 2).is_err());
    }

    #[test]
    fn rt_basis_divergences() {
        // constants have zero divergence, shifted position field has 2
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Rt, 0).unwrap();
        let tri = Triangle::new([[0.2, -0.1], [1.3, 0.4], [0.1, 1.2]]);
        let basis = flux_basis(&fam, &tri);
        assert_eq!(basis.len(), 3);
        let d0 = basis[0].divergence();
        let d1 = basis[1].divergence();
        let d2 = basis[2].divergence();
        assert!(d0.eval(0.5, 0.5).abs() < 1e-14);
        assert!(d1.eval(0.5, 0.5).abs() < 1e-14);
        assert!((d2.eval(0.5, 0.5) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let tris = [
            Triangle::reference(),
            Triangle::new([[0.0, 0.0], [2.0, 0.1], [0.3, 1.7]]),
        ];
        for tri in &tris {
            for (kind, k) in [
                (FamilyKind::Rt, 0),
                (FamilyKind::Bdm, 1),
                (FamilyKind::Stab, 1),
                (FamilyKind::Raised, 0),
            ] {
                let fam = ElementFamily::with_default_stabilization(kind, k).unwrap();
                let basis = flux_basis(&fam, tri);
                let eps = 1e-6;
                // a few interior points
                for p in [[0.3, 0.3], [0.2, 0.5], [0.45, 0.1]] {
                    let q = tri.map(p);
                    for b in &basis {
                        let fd = (b.x.eval(q[0] + eps, q[1]) - b.x.eval(q[0] - eps, q[1]))
                            / (2.0 * eps)
                            + (b.y.eval(q[0], q[1] + eps) - b.y.eval(q[0], q[1] - eps))
                                / (2.0 * eps);
                        let an = b.divergence().eval(q[0], q[1]);
                        assert!((fd - an).abs() < 1e-6, "{kind:?} fd {fd} vs {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_basis_is_orthonormal_on_reference() {
        let tri = Triangle::reference();
        let basis = scalar_basis(1, &tri);
        let rule = triangle_quadrature(4).unwrap();
        for (i, p) in basis.iter().enumerate() {
            for (j, q) in basis.iter().enumerate() {
                let ip: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(pt, w)| w * p.eval(pt[0], pt[1]) * q.eval(pt[0], pt[1]))
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn face_basis_gram_is_identity() {
        let rule = edge_quadrature(4).unwrap();
        for len in [1.0, 0.37, 2.9] {
            for m1 in 0..2 {
                for m2 in 0..2 {
                    let ip: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * len * face_mode(m1, p[0], len) * face_mode(m2, p[0], len))
                        .sum();
                    let expect = if m1 == m2 { 1.0 } else { 0.0 };
                    assert!((ip - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn face_projection_examples() {
        let rule = edge_quadrature(6).unwrap();
        // constant projects to itself for any k
        for k in 0..2 {
            let c = face_project_fn(k, 1.7, &rule, |_| 3.25);
            assert!((face_eval(&c, 0.3, 1.7) - 3.25).abs() < 1e-13);
        }
        // k = 0, g = x on the edge (0,0)-(1,0): mean is 1/2
        let c = face_project_fn(0, 1.0, &rule, |t| t);
        assert!((face_eval(&c, 0.9, 1.0) - 0.5).abs() < 1e-13);
        // k = 1 reproduces linears exactly
        let c = face_project_fn(1, 2.0, &rule, |t| 4.0 * t - 1.0);
        for t in [0.0, 0.25, 0.8] {
            assert!((face_eval(&c, t, 2.0) - (4.0 * t - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn face_projection_is_idempotent() {
        let rule = edge_quadrature(6).unwrap();
        let len = 1.3;
        let c1 = face_project_fn(1, len, &rule, |t| t * t + 0.5 * t - 2.0);
        let c2 = face_project_fn(1, len, &rule, |t| face_eval(&c1, t, len));
        for (a, b) in c1.iter().zip(&c2) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
