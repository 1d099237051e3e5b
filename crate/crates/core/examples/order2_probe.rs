// Ordering sensitivity of the single-sweep smoother on the criss-cross
// L-shape meshes for both trace degrees.
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::coefficient_preset;
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::{assemble_condensed, CondensedSystem};
use hdg2l::mesh::{Mesh, MeshHierarchy};
use hdg2l::solvers::{CycleSmoothing, VCycle};
use hdg2l::sparse::{dot, CooBuilder, CsrMatrix};
use rand::seq::SliceRandom;
use rand::SeedableRng;
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

fn sweep_basis_kind(sys: &CondensedSystem, perm: &[usize], kind: u8) -> CsrMatrix {
    // columns ordered by perm: C[:, j] = basis vector of sweep-DOF j
    let n = sys.n_dofs();
    let mut coo = CooBuilder::new(n, n);
    // first build the unpermuted hat/orth transform columns, then permute
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
                    // Lagrange at the two Gauss points of the face
                    cols[base].push((base, s * sl / 2.0));
                    cols[base].push((base + 1, -s * sl / 2.0));
                    cols[base + 1].push((base, s * sl / 2.0));
                    cols[base + 1].push((base + 1, s * sl / 2.0));
                }
            }
        }
    }
    for (j, &src) in perm.iter().enumerate() {
        for &(r, v) in &cols[src] {
            coo.push(r, j, v);
        }
    }
    coo.build()
}

fn count(sys: &CondensedSystem, vc: &VCycle, prol: &hdg2l::auxspace::ProlongationMap, perm: &[usize], kind: u8) -> usize {
    let a = &sys.matrix;
    let c = sweep_basis_kind(sys, perm, kind);
    let ct = c.transpose();
    let a_b = ct.matmul(&a.matmul(&c));
    let smoother = |d: &[f64], post: bool| -> Vec<f64> {
        let dn = ct.mul_vec(d);
        let mut z = vec![0.0; dn.len()];
        if !post {
            a_b.gs_forward_sweep(&mut z, &dn).unwrap();
        } else {
            a_b.gs_backward_sweep(&mut z, &dn).unwrap();
        }
        c.mul_vec(&z)
    };
    let apply_b = |eta: &[f64]| -> Vec<f64> {
        let mut x = smoother(eta, false);
        for _ in 0..2 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let rc = prol.transpose.mul_vec(&r);
            let z = vc.apply_scaled(&rc);
            let corr = prol.matrix.mul_vec(&z);
            for i in 0..x.len() {
                x[i] += corr[i];
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
    let hier = MeshHierarchy::uniform(lshape_cross(), 3);
    let level = 3;
    for (k, kind) in [(0usize, 0u8), (1, 0), (1, 1), (1, 2)] {
        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, k).unwrap();
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
            1,
            CycleSmoothing::ForwardDownBackwardUp,
        )
        .unwrap();
        let n = sys.n_dofs();
        let natural: Vec<usize> = (0..n).collect();
        print!("exp2-crisscross T3 k={k} basis={kind}: natural {} ", count(&sys, &vc, &prol, &natural, kind));
        let mut rev = natural.clone();
        rev.reverse();
        print!("reversed {} ", count(&sys, &vc, &prol, &rev, kind));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut counts = Vec::new();
        for _ in 0..6 {
            let mut p = natural.clone();
            p.shuffle(&mut rng);
            counts.push(count(&sys, &vc, &prol, &p, kind));
        }
        print!("random {counts:?} ");
        if k == 1 {
            // within-face swapped: (mode1, mode0) per face
            let mut swapped = Vec::new();
            for f in 0..n / 2 {
                swapped.push(2 * f + 1);
                swapped.push(2 * f);
            }
            print!("face-swapped {} ", count(&sys, &vc, &prol, &swapped, kind));
            // mode-major: all mode-0 DOFs then all mode-1 DOFs
            let mut mode_major = Vec::new();
            for f in 0..n / 2 {
                mode_major.push(2 * f);
            }
            for f in 0..n / 2 {
                mode_major.push(2 * f + 1);
            }
            print!("mode-major {} ", count(&sys, &vc, &prol, &mode_major, kind));
            // vertex-clustered: DOF (face, endpoint) ordered by (endpoint vertex, face)
            let mut keyed: Vec<(usize, usize, usize)> = Vec::new(); // (vertex, face, dof)
            for (rank, &f) in sys.trace.dof_faces.iter().enumerate() {
                let (a, b) = sys.mesh.faces[f].vertices;
                keyed.push((a, f, 2 * rank));
                keyed.push((b, f, 2 * rank + 1));
            }
            keyed.sort();
            let vertex_clustered: Vec<usize> = keyed.iter().map(|kv| kv.2).collect();
            print!("vertex-clustered {} ", count(&sys, &vc, &prol, &vertex_clustered, kind));
        }
        println!();
    }
    println!("paper: k0 ~24 (T3, m1=1), k1 34");
}
