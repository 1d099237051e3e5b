// Which per-face k=1 basis for the Gauss-Seidel sweeps reproduces the
// paper's smoother-limited counts? Tested on configs where the corrector
// is exact (exp3) or saturated (exp2 k=1, flat across m1).
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::{coefficient_preset, graded_mesh};
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::{assemble_condensed, CondensedSystem};
use hdg2l::mesh::{build_structured, Domain, MeshHierarchy, NodeOrigin};
use hdg2l::sparse::{dot, CooBuilder, CsrMatrix};
use std::sync::Arc;

#[derive(Clone, Copy, Debug)]
enum Basis { Orth, Hats, Monomial01, MonomialPM }

// transform C: chosen-basis coefficients -> scaled orthonormal coords
fn transform(sys: &CondensedSystem, basis: Basis) -> CsrMatrix {
    let n = sys.n_dofs();
    let mut coo = CooBuilder::new(n, n);
    for &f in &sys.trace.dof_faces {
        let base = sys.trace.face_base[f].unwrap();
        let len = sys.mesh.faces[f].length;
        let s = sys.trace.scale(f);
        let sl = len.sqrt();
        let s3 = (3.0 * len).sqrt();
        match basis {
            Basis::Orth => {
                coo.push(base, base, 1.0);
                coo.push(base + 1, base + 1, 1.0);
            }
            Basis::Hats => {
                // hat at smaller vertex: (sqrt(l)/2, -sqrt(3l)/6)
                coo.push(base, base, s * sl / 2.0);
                coo.push(base + 1, base, -s * s3 / 6.0);
                coo.push(base, base + 1, s * sl / 2.0);
                coo.push(base + 1, base + 1, s * s3 / 6.0);
            }
            Basis::Monomial01 => {
                // {1, t}: 1 = sqrt(l) q0; t = sqrt(l)/2 q0 + sqrt(3l)/6 q1
                coo.push(base, base, s * sl);
                coo.push(base, base + 1, s * sl / 2.0);
                coo.push(base + 1, base + 1, s * s3 / 6.0);
            }
            Basis::MonomialPM => {
                // {1, 2t-1}
                coo.push(base, base, s * sl);
                coo.push(base + 1, base + 1, s * s3 / 3.0);
            }
        }
    }
    coo.build()
}

struct Setup {
    sys: CondensedSystem,
    prol: hdg2l::auxspace::ProlongationMap,
    corrector: Corr,
}

enum Corr {
    Exact(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    VC(hdg2l::solvers::VCycle),
}

impl Setup {
    fn correct(&self, r: &[f64]) -> Vec<f64> {
        let rc = self.prol.transpose.mul_vec(r);
        let z = match &self.corrector {
            Corr::Exact(c) => c.solve(&nalgebra::DVector::from_column_slice(&rc)).as_slice().to_vec(),
            Corr::VC(v) => v.apply_scaled(&rc),
        };
        self.prol.matrix.mul_vec(&z)
    }
}

fn count(setup: &Setup, m0: usize, basis: Basis, split: bool) -> usize {
    let sys = &setup.sys;
    let a = &sys.matrix;
    let c = transform(sys, basis);
    let ct = c.transpose();
    let a_b = ct.matmul(&a.matmul(&c));
    let smoother = |d: &[f64], post: bool| -> Vec<f64> {
        let dn = ct.mul_vec(d);
        let mut z = vec![0.0; dn.len()];
        for _ in 0..m0 {
            if split {
                if !post {
                    a_b.gs_forward_sweep(&mut z, &dn).unwrap();
                } else {
                    a_b.gs_backward_sweep(&mut z, &dn).unwrap();
                }
            } else {
                a_b.gs_forward_sweep(&mut z, &dn).unwrap();
                a_b.gs_backward_sweep(&mut z, &dn).unwrap();
            }
        }
        c.mul_vec(&z)
    };
    let apply_b = |eta: &[f64]| -> Vec<f64> {
        let mut x = smoother(eta, false);
        for _ in 0..2 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let corr = setup.correct(&r);
            for i in 0..x.len() { x[i] += corr[i]; }
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let post = smoother(&r, true);
        for i in 0..x.len() { x[i] += post[i]; }
        x
    };
    let mut x = sys.trace.ones_function(&sys.mesh);
    let e0 = dot(&a.mul_vec(&x), &x).sqrt();
    for j in 1..=200 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = ax.iter().map(|v| -v).collect();
        let dx = apply_b(&r);
        for i in 0..x.len() { x[i] += dx[i]; }
        let e = dot(&a.mul_vec(&x), &x).sqrt();
        if e <= 1e-8 * e0 { return j; }
    }
    200
}

fn main() {
    // exp3 T5 k=1 exact corrector: paper 30 / 16 / 12
    let mesh = Arc::new(graded_mesh(5).unwrap());
    let coef = coefficient_preset("exp3", &mesh).unwrap();
    let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 1).unwrap();
    let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
    let aux = assemble_p1(&mesh, &coef);
    let prol = build_prolongation(&mesh, &sys.trace, &aux);
    let chol = nalgebra::Cholesky::new(aux.stiffness.to_dense()).unwrap();
    let setup = Setup { sys, prol, corrector: Corr::Exact(chol) };
    println!("exp3 T5 k=1 sym-GS (paper 30/16/12):");
    for basis in [Basis::Orth, Basis::Hats, Basis::Monomial01, Basis::MonomialPM] {
        let cs: Vec<usize> = [1, 2, 3].iter().map(|&m0| count(&setup, m0, basis, false)).collect();
        println!("  {basis:?}: {cs:?}");
    }

    // exp2 k=1 T3, V(1,1) corrector, single fwd sweep: paper 34
    let base = build_structured(Domain::LShape);
    let hier = MeshHierarchy::uniform(base, 3);
    let mesh = Arc::new(hier.meshes[3].clone());
    let coef = coefficient_preset("exp1", &mesh).unwrap();
    let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
    let aux = assemble_p1(&mesh, &coef);
    let prol = build_prolongation(&mesh, &sys.trace, &aux);
    let vc = hdg2l::solvers::VCycle::new(
        &hier,
        |m| coefficient_preset("exp1", m).unwrap(),
        1,
        hdg2l::solvers::CycleSmoothing::ForwardDownBackwardUp,
    )
    .unwrap();
    let setup = Setup { sys, prol, corrector: Corr::VC(vc) };
    println!("exp2 T3 k=1 single fwd sweep (paper 34):");
    for basis in [Basis::Orth, Basis::Hats, Basis::Monomial01, Basis::MonomialPM] {
        println!("  {basis:?}: {}", count(&setup, 1, basis, true));
    }
}
