// Graded family with a diamond (rotated square) center: quadrisect the
// four triangles of the central diamond, bisect the flank neighbors.
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::coefficient_preset;
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::{assemble_condensed, CondensedSystem};
use hdg2l::mesh::Mesh;
use hdg2l::sparse::{dot, CooBuilder, CsrMatrix};
use std::sync::Arc;

fn diamond_graded(level: usize) -> Mesh {
    let mut vertices: Vec<[f64; 2]> = vec![
        [-1.0, -1.0], [0.0, -1.0], [1.0, -1.0],
        [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
        [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
    ];
    // away-diagonal quadrant squares
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 1, 3], [1, 4, 3],      // Q3: away diag (0,-1)-(-1,0)
        [1, 2, 5], [1, 5, 4],      // Q4
        [3, 4, 7], [3, 7, 6],      // Q2
        [4, 5, 7], [5, 8, 7],      // Q1
    ];
    let mut c = 1.0f64;
    for _ in 0..level {
        let m = c / 2.0;
        let fop = |vs: &mut Vec<[f64; 2]>, p: [f64; 2]| -> usize {
            if let Some(i) = vs.iter().position(|v| *v == p) {
                return i;
            }
            vs.push(p);
            vs.len() - 1
        };
        // remove the 4 origin triangles (inside the diamond |x|+|y| <= c)
        // and the 4 flank neighbors (inside [-c,c]^2)
        let vclone = vertices.clone();
        triangles.retain(|t| {
            !t.iter().all(|&v| vclone[v][0].abs() <= c && vclone[v][1].abs() <= c)
        });
        let origin = fop(&mut vertices, [0.0, 0.0]);
        let e = fop(&mut vertices, [c, 0.0]);
        let n = fop(&mut vertices, [0.0, c]);
        let w = fop(&mut vertices, [-c, 0.0]);
        let s = fop(&mut vertices, [0.0, -c]);
        let ne = fop(&mut vertices, [c, c]);
        let nw = fop(&mut vertices, [-c, c]);
        let sw = fop(&mut vertices, [-c, -c]);
        let se = fop(&mut vertices, [c, -c]);
        let he = fop(&mut vertices, [m, 0.0]);
        let hn = fop(&mut vertices, [0.0, m]);
        let hw = fop(&mut vertices, [-m, 0.0]);
        let hs = fop(&mut vertices, [0.0, -m]);
        let dne = fop(&mut vertices, [m, m]);
        let dnw = fop(&mut vertices, [-m, m]);
        let dsw = fop(&mut vertices, [-m, -m]);
        let dse = fop(&mut vertices, [m, -m]);
        let mut emit = |tris: &mut Vec<[usize; 3]>, vs: &Vec<[f64; 2]>, a: usize, b: usize, cc: usize| {
            let ar = 0.5
                * ((vs[b][0] - vs[a][0]) * (vs[cc][1] - vs[a][1])
                    - (vs[b][1] - vs[a][1]) * (vs[cc][0] - vs[a][0]));
            if ar > 0.0 { tris.push([a, b, cc]); } else { tris.push([a, cc, b]); }
        };
        // per quadrant (outer axis a, outer axis b, half points, diag midpoint, corner)
        for (oa, ob, ha, hb, dm, corner) in [
            (e, n, he, hn, dne, ne),
            (n, w, hn, hw, dnw, nw),
            (w, s, hw, hs, dsw, sw),
            (s, e, hs, he, dse, se),
        ] {
            // quadrisection of the origin triangle (origin, oa, ob)
            emit(&mut triangles, &vertices, origin, ha, hb);
            emit(&mut triangles, &vertices, ha, oa, dm);
            emit(&mut triangles, &vertices, hb, dm, ob);
            emit(&mut triangles, &vertices, ha, dm, hb);
            // bisection of the flank neighbor (oa, corner, ob) through dm
            emit(&mut triangles, &vertices, oa, corner, dm);
            emit(&mut triangles, &vertices, dm, corner, ob);
        }
        c = m;
    }
    Mesh::from_raw(vertices, triangles).unwrap()
}

fn sweep_basis(sys: &CondensedSystem, kind: u8) -> CsrMatrix {
    let n = sys.n_dofs();
    let mut coo = CooBuilder::new(n, n);
    for &f in &sys.trace.dof_faces {
        let base = sys.trace.face_base[f].unwrap();
        let len = sys.mesh.faces[f].length;
        let s = sys.trace.scale(f);
        if sys.trace.k == 0 || kind == 0 {
            coo.push(base, base, 1.0);
            if sys.trace.k == 1 {
                coo.push(base + 1, base + 1, 1.0);
            }
        } else {
            let sl = len.sqrt();
            let s3 = (3.0 * len).sqrt();
            coo.push(base, base, s * sl / 2.0);
            coo.push(base + 1, base, -s * s3 / 6.0);
            coo.push(base, base + 1, s * sl / 2.0);
            coo.push(base + 1, base + 1, s * s3 / 6.0);
        }
    }
    coo.build()
}

fn count(sys: &CondensedSystem, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, prol: &hdg2l::auxspace::ProlongationMap, kind: u8, m0: usize) -> usize {
    let a = &sys.matrix;
    let c = sweep_basis(sys, kind);
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
        let mut x = smoother(eta);
        for _ in 0..2 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let rc = prol.transpose.mul_vec(&r);
            let z = chol.solve(&nalgebra::DVector::from_column_slice(&rc));
            let corr = prol.matrix.mul_vec(z.as_slice());
            for i in 0..x.len() { x[i] += corr[i]; }
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let post = smoother(&r);
        for i in 0..x.len() { x[i] += post[i]; }
        x
    };
    let mut x = sys.trace.ones_function(&sys.mesh);
    let e0 = dot(&a.mul_vec(&x), &x).sqrt();
    for j in 1..=300 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = ax.iter().map(|v| -v).collect();
        let dx = apply_b(&r);
        for i in 0..x.len() { x[i] += dx[i]; }
        let e = dot(&a.mul_vec(&x), &x).sqrt();
        if e <= 1e-8 * e0 { return j; }
    }
    300
}

fn main() {
    for level in [5usize, 10] {
        let mesh = Arc::new(diamond_graded(level));
        let coef = coefficient_preset("exp3", &mesh).unwrap();
        let aux = assemble_p1(&mesh, &coef);
        let chol = nalgebra::Cholesky::new(aux.stiffness.to_dense()).unwrap();
        for (k, kind) in [(0usize, 0u8), (1, 0), (1, 1)] {
            let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, k).unwrap();
            let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
            let prol = build_prolongation(&mesh, &sys.trace, &aux);
            let cs: Vec<usize> = [1, 2, 3].iter().map(|&m0| count(&sys, &chol, &prol, kind, m0)).collect();
            println!("diamond T{level} k={k} basis={kind}: {cs:?}");
        }
    }
    println!("paper: k0 [15 12 12], k1 [30 16 12]");
}
