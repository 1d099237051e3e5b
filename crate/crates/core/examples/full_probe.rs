// Full reproduction probe with criss-cross start meshes and hat-basis
// sweeps for k = 1.
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::coefficient_preset;
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::{assemble_condensed, CondensedSystem};
use hdg2l::mesh::{Mesh, MeshHierarchy};
use hdg2l::solvers::{CycleSmoothing, VCycle};
use hdg2l::sparse::{dot, CooBuilder, CsrMatrix};
use std::sync::Arc;

fn cross_square(vertices: &mut Vec<[f64; 2]>, triangles: &mut Vec<[usize; 3]>, corners: [usize; 4]) {
    let [bl, br, tr, tl] = corners;
    let c = [
        (vertices[bl][0] + vertices[tr][0]) / 2.0,
        (vertices[bl][1] + vertices[tr][1]) / 2.0,
    ];
    let ci = vertices.len();
    vertices.push(c);
    triangles.push([bl, br, ci]);
    triangles.push([br, tr, ci]);
    triangles.push([tr, tl, ci]);
    triangles.push([tl, bl, ci]);
}

fn lshape_cross() -> Mesh {
    let mut vertices = vec![
        [0.0, -1.0], [1.0, -1.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
        [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
    ];
    let mut triangles = Vec::new();
    for sq in [[0usize, 1, 4, 3], [2, 3, 6, 5], [3, 4, 7, 6]] {
        cross_square(&mut vertices, &mut triangles, sq);
    }
    Mesh::from_raw(vertices, triangles).unwrap()
}

// X-pattern graded family on (-1,1)^2
fn graded_cross(level: usize) -> Mesh {
    // start: 4 quadrant squares, X-split
    let mut vertices = vec![
        [-1.0, -1.0], [0.0, -1.0], [1.0, -1.0],
        [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
        [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
    ];
    let mut triangles = Vec::new();
    for sq in [[0usize, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]] {
        cross_square(&mut vertices, &mut triangles, sq);
    }
    let mut c = 1.0f64;
    for _ in 0..level {
        // remove triangles inside [-c, c]^2
        let inside = |v: [f64; 2]| v[0].abs() <= c && v[1].abs() <= c;
        triangles.retain(|t| !t.iter().all(|&v| inside(vertices[v])));
        let m = c / 2.0;
        let find = |vs: &Vec<[f64; 2]>, p: [f64; 2]| vs.iter().position(|v| (v[0] - p[0]).abs() + (v[1] - p[1]).abs() == 0.0).unwrap();
        let o_e = find(&vertices, [c, 0.0]);
        let o_n = find(&vertices, [0.0, c]);
        let o_w = find(&vertices, [-c, 0.0]);
        let o_s = find(&vertices, [0.0, -c]);
        let o_ne = find(&vertices, [c, c]);
        let o_nw = find(&vertices, [-c, c]);
        let o_sw = find(&vertices, [-c, -c]);
        let o_se = find(&vertices, [c, -c]);
        let origin = find(&vertices, [0.0, 0.0]);
        let push = |vs: &mut Vec<[f64; 2]>, p: [f64; 2]| {
            if let Some(i) = vs.iter().position(|v| *v == p) {
                return i;
            }
            vs.push(p);
            vs.len() - 1
        };
        let ax_e = push(&mut vertices, [m, 0.0]);
        let ax_n = push(&mut vertices, [0.0, m]);
        let ax_w = push(&mut vertices, [-m, 0.0]);
        let ax_s = push(&mut vertices, [0.0, -m]);
        let c_ne = push(&mut vertices, [m, m]);
        let c_nw = push(&mut vertices, [-m, m]);
        let c_sw = push(&mut vertices, [-m, -m]);
        let c_se = push(&mut vertices, [m, -m]);
        // inner: 4 quadrant squares X-split
        for sq in [
            [origin, ax_e, c_ne, ax_n],
            [ax_w, origin, ax_n, c_nw],
            [c_sw, ax_s, origin, ax_w],
            [ax_s, c_se, ax_e, origin],
        ] {
            cross_square(&mut vertices, &mut triangles, sq);
        }
        // transition fans (CCW per quadrant)
        let mut emit = |tris: &mut Vec<[usize; 3]>, vs: &Vec<[f64; 2]>, a: usize, b: usize, cc: usize| {
            let ar = 0.5
                * ((vs[b][0] - vs[a][0]) * (vs[cc][1] - vs[a][1])
                    - (vs[b][1] - vs[a][1]) * (vs[cc][0] - vs[a][0]));
            if ar > 0.0 {
                tris.push([a, b, cc]);
            } else {
                tris.push([a, cc, b]);
            }
        };
        for (corner, ax_a, o_a, o_corner, o_b, ax_b) in [
            (c_ne, ax_e, o_e, o_ne, o_n, ax_n),
            (c_nw, ax_n, o_n, o_nw, o_w, ax_w),
            (c_sw, ax_w, o_w, o_sw, o_s, ax_s),
            (c_se, ax_s, o_s, o_se, o_e, ax_e),
        ] {
            emit(&mut triangles, &vertices, corner, ax_a, o_a);
            emit(&mut triangles, &vertices, corner, o_a, o_corner);
            emit(&mut triangles, &vertices, corner, o_corner, o_b);
            emit(&mut triangles, &vertices, corner, o_b, ax_b);
        }
        c = m;
    }
    Mesh::from_raw(vertices, triangles).unwrap()
}

fn sweep_basis(sys: &CondensedSystem, hats: bool) -> CsrMatrix {
    let n = sys.n_dofs();
    let mut coo = CooBuilder::new(n, n);
    for &f in &sys.trace.dof_faces {
        let base = sys.trace.face_base[f].unwrap();
        let len = sys.mesh.faces[f].length;
        let s = sys.trace.scale(f);
        if sys.trace.k == 0 || !hats {
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

enum Corr {
    Exact(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    VC(VCycle),
}

fn count(
    sys: &CondensedSystem,
    prol: &hdg2l::auxspace::ProlongationMap,
    corr: &Corr,
    m0: usize,
    split: u8,
    hats: bool,
) -> usize {
    let a = &sys.matrix;
    let c = sweep_basis(sys, hats);
    let ct = c.transpose();
    let a_b = ct.matmul(&a.matmul(&c));
    let smoother = |d: &[f64], post: bool| -> Vec<f64> {
        let dn = ct.mul_vec(d);
        let mut z = vec![0.0; dn.len()];
        for _ in 0..m0 {
            match (split, post) {
                (0, _) => {
                    a_b.gs_forward_sweep(&mut z, &dn).unwrap();
                    a_b.gs_backward_sweep(&mut z, &dn).unwrap();
                }
                (1, false) | (2, _) => {
                    a_b.gs_forward_sweep(&mut z, &dn).unwrap();
                }
                (1, true) => {
                    a_b.gs_backward_sweep(&mut z, &dn).unwrap();
                }
                _ => unreachable!(),
            }
        }
        c.mul_vec(&z)
    };
    let correct = |r: &[f64]| -> Vec<f64> {
        let rc = prol.transpose.mul_vec(r);
        let z = match corr {
            Corr::Exact(ch) => ch.solve(&nalgebra::DVector::from_column_slice(&rc)).as_slice().to_vec(),
            Corr::VC(v) => v.apply_scaled(&rc),
        };
        prol.matrix.mul_vec(&z)
    };
    let apply_b = |eta: &[f64]| -> Vec<f64> {
        let mut x = smoother(eta, false);
        for _ in 0..2 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let cv = correct(&r);
            for i in 0..x.len() {
                x[i] += cv[i];
            }
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let post = smoother(&r, true);
        for i in 0..x.len() {
            x[i] += post[i];
        }
        x
    };
    let mut x = sys.trace.ones_function(&sys.mesh);
    let e0 = dot(&a.mul_vec(&x), &x).sqrt();
    for j in 1..=200 {
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
    200
}

fn main() {
    // experiments 1 and 2 on the criss-cross L-shape
    let hier = MeshHierarchy::uniform(lshape_cross(), 5);
    for (k, hats) in [(0usize, true), (1, true), (1, false)] {
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, k).unwrap();
        for (label, split, m0s, m1s) in [
            ("exp1", 0u8, vec![1usize, 2, 3], vec![1usize]),
            ("exp2", 1u8, vec![1], vec![1usize]),
        ] {
            for m1 in &m1s {
                for m0 in &m0s {
                    let mut counts = Vec::new();
                    for level in 1..=5usize {
                        let mesh = Arc::new(hier.meshes[level].clone());
                        let coef = coefficient_preset("exp1", &mesh).unwrap();
                        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
                        let aux = assemble_p1(&mesh, &coef);
                        let prol = build_prolongation(&mesh, &sys.trace, &aux);
                        let prefix = MeshHierarchy {
                            meshes: hier.meshes[..=level].to_vec(),
                            maps: hier.maps[..level].to_vec(),
                        };
                        let vc = VCycle::new(
                            &prefix,
                            |m| coefficient_preset("exp1", m).unwrap(),
                            *m1,
                            CycleSmoothing::ForwardDownBackwardUp,
                        )
                        .unwrap();
                        counts.push(count(&sys, &prol, &Corr::VC(vc), *m0, split, hats));
                    }
                    println!("{label} k={k} hats={hats} m0={m0} m1={m1}: {counts:?}");
                }
            }
        }
    }
    // experiment 3 on the X-pattern graded family
    for (k, hats) in [(0usize, true), (1, true), (1, false)] {
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, k).unwrap();
        for m0 in [1usize, 2, 3] {
            let mut counts = Vec::new();
            for level in [5usize, 10, 15] {
                let mesh = Arc::new(graded_cross(level));
                let coef = coefficient_preset("exp3", &mesh).unwrap();
                let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
                let aux = assemble_p1(&mesh, &coef);
                let prol = build_prolongation(&mesh, &sys.trace, &aux);
                let chol = nalgebra::Cholesky::new(aux.stiffness.to_dense()).unwrap();
                counts.push(count(&sys, &prol, &Corr::Exact(chol), m0, 0, hats));
            }
            println!("exp3-cross k={k} hats={hats} m0={m0}: {counts:?} (T5, T10, T15)");
        }
    }
    println!("--- paper ---");
    println!("exp1 k0: m1=1 [19 18 19 19 19][13 13 14 14 15][10 12 13 13 14]");
    println!("         m1=2 [17 18 17 17 17][12 12 12 12 12][10 10 10 11 11]");
    println!("         m1=3 [17 17 17 17 17][12 11 11 11 11][10 9 10 10 10]");
    println!("exp1 k1: m1=1 [20 21 21 20 20][13 14 14 15 15][11 12 13 13 14]");
    println!("         m1=2 [20 20 20 20 19][12 13 13 13 12][10 10 11 11 11]");
    println!("         m1=3 [20 20 20 19 19][12 13 12 12 12][10 10 10 10 10]");
    println!("exp2 k0: m1=1 [22 24 24 23 23] m1=2 [22 23 23 23 22] m1=3 [21 23 23 22 22]");
    println!("exp2 k1: 34 everywhere");
    println!("exp3 k0: [15 12 12] k1: [30 16 12]");
}
