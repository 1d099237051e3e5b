// exp3 k=1: basis and ordering search on the graded family.
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::{coefficient_preset, graded_mesh};
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::{assemble_condensed, CondensedSystem};
use hdg2l::sparse::{dot, CooBuilder, CsrMatrix};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::sync::Arc;

fn sweep_basis(sys: &CondensedSystem, perm: &[usize], kind: u8) -> CsrMatrix {
    let n = sys.n_dofs();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &f in &sys.trace.dof_faces {
        let base = sys.trace.face_base[f].unwrap();
        let len = sys.mesh.faces[f].length;
        let s = sys.trace.scale(f);
        if sys.trace.k == 0 {
            cols[base].push((base, 1.0));
        } else {
            let sl = len.sqrt();
            let s3 = (3.0 * len).sqrt();
            match kind {
                0 => {
                    cols[base].push((base, 1.0));
                    cols[base + 1].push((base + 1, 1.0));
                }
                1 => {
                    cols[base].push((base, s * sl / 2.0));
                    cols[base].push((base + 1, -s * s3 / 6.0));
                    cols[base + 1].push((base, s * sl / 2.0));
                    cols[base + 1].push((base + 1, s * s3 / 6.0));
                }
                _ => {
                    cols[base].push((base, s * sl / 2.0));
                    cols[base].push((base + 1, -s * sl / 2.0));
                    cols[base + 1].push((base, s * sl / 2.0));
                    cols[base + 1].push((base + 1, s * sl / 2.0));
                }
            }
        }
    }
    let mut coo = CooBuilder::new(n, n);
    for (j, &src) in perm.iter().enumerate() {
        for &(r, v) in &cols[src] {
            coo.push(r, j, v);
        }
    }
    coo.build()
}

fn count(sys: &CondensedSystem, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, prol: &hdg2l::auxspace::ProlongationMap, perm: &[usize], kind: u8, m0: usize, one_sided: bool) -> usize {
    let a = &sys.matrix;
    let c = sweep_basis(sys, perm, kind);
    let ct = c.transpose();
    let a_b = ct.matmul(&a.matmul(&c));
    let smoother = |d: &[f64]| -> Vec<f64> {
        let dn = ct.mul_vec(d);
        let mut z = vec![0.0; dn.len()];
        for _ in 0..m0 {
            a_b.gs_forward_sweep(&mut z, &dn).unwrap();
            a_b.gs_backward_sweep(&mut z, &dn).unwrap();
        }
        c.mul_vec(&z)
    };
    let apply_b = |eta: &[f64]| -> Vec<f64> {
        let mut x = if one_sided { vec![0.0; eta.len()] } else { smoother(eta) };
        for _ in 0..2 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let rc = prol.transpose.mul_vec(&r);
            let z = chol.solve(&nalgebra::DVector::from_column_slice(&rc));
            let corr = prol.matrix.mul_vec(z.as_slice());
            for i in 0..x.len() {
                x[i] += corr[i];
            }
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let post = smoother(&r);
        for i in 0..x.len() {
            x[i] += post[i];
        }
        x
    };
    let mut x = sys.trace.ones_function(&sys.mesh);
    let e0 = dot(&a.mul_vec(&x), &x).sqrt();
    for j in 1..=300 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = ax.iter().map(|v| -v).collect();
        let dx = apply_b(&r);
        for i in 0..x.len() {
            x[i] += dx[i];
        }
        let e = dot(&a.mul_vec(&x), &x).sqrt();
        if e <= 1e-8 * e0 {
            return j;
        }
    }
    300
}

fn main() {
    let mesh = Arc::new(graded_mesh(5).unwrap());
    let coef = coefficient_preset("exp3", &mesh).unwrap();
    let aux = assemble_p1(&mesh, &coef);
    let chol = nalgebra::Cholesky::new(aux.stiffness.to_dense()).unwrap();
    for k in [0usize, 1] {
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, k).unwrap();
        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
        let prol = build_prolongation(&mesh, &sys.trace, &aux);
        let n = sys.n_dofs();
        let natural: Vec<usize> = (0..n).collect();
        let mut rev = natural.clone();
        rev.reverse();
        let kinds: &[u8] = if k == 0 { &[0] } else { &[0, 1, 2] };
        for &kind in kinds {
            for one_sided in [false, true] {
                let mut line = format!("T5 k={k} basis={kind} one_sided={one_sided}:");
                for m0 in [1usize, 2, 3] {
                    let nat = count(&sys, &chol, &prol, &natural, kind, m0, one_sided);
                    let rv = count(&sys, &chol, &prol, &rev, kind, m0, one_sided);
                    line += &format!(" m0={m0}[nat {nat} rev {rv}]");
                }
                println!("{line}");
            }
        }
    }
    println!("paper T5: k0 [15 12 12], k1 [30 16 12]");
}
