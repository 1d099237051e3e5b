// Sensitivity of exp1 k=0 sym-GS counts to the T_0 diagonal pattern and
// the Gauss-Seidel ordering.
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

fn lshape_with(diag_pos_slope: bool, alternate: bool) -> Mesh {
    let vertices = vec![
        [0.0, -1.0], [1.0, -1.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
        [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
    ];
    // squares: (0,1)x(-1,0) corners (0=bl,1=br,4=tr,3=tl);
    //          (-1,0)x(0,1) corners (2,3,6,5); (0,1)x(0,1) corners (3,4,7,6)
    let squares = [[0usize, 1, 4, 3], [2, 3, 6, 5], [3, 4, 7, 6]];
    let mut triangles = Vec::new();
    for (i, sq) in squares.iter().enumerate() {
        let [bl, br, tr, tl] = *sq;
        let pos = if alternate { i % 2 == 0 } else { diag_pos_slope };
        if pos {
            // diagonal bl-tr
            triangles.push([bl, br, tr]);
            triangles.push([bl, tr, tl]);
        } else {
            // diagonal tl-br
            triangles.push([bl, br, tl]);
            triangles.push([br, tr, tl]);
        }
    }
    Mesh::from_raw(vertices, triangles).unwrap()
}

fn permuted(a: &CsrMatrix, perm: &[usize]) -> CsrMatrix {
    // B[p(i)][p(j)] = A[i][j]; GS on B in natural order = GS on A in perm order
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let mut coo = CooBuilder::new(a.nrows(), a.ncols());
    for r in 0..a.nrows() {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            coo.push(inv[r], inv[c], v);
        }
    }
    coo.build()
}

fn count(sys: &CondensedSystem, hier: &MeshHierarchy, level: usize, m0: usize, perm: Option<&[usize]>) -> usize {
    let mesh = &sys.mesh;
    let coef = &sys.coefficient;
    let aux = assemble_p1(mesh, coef);
    let prol = build_prolongation(mesh, &sys.trace, &aux);
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
    let a = &sys.matrix;
    let n = sys.n_dofs();
    let identity: Vec<usize> = (0..n).collect();
    let perm = perm.unwrap_or(&identity);
    let a_p = permuted(a, perm);
    let smoother = |d: &[f64]| -> Vec<f64> {
        // permute covector, sweep, permute back
        let mut inv = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let dp: Vec<f64> = (0..n).map(|i| d[perm[i]]).collect();
        let mut z = vec![0.0; n];
        for _ in 0..m0 {
            a_p.gs_forward_sweep(&mut z, &dp).unwrap();
            a_p.gs_backward_sweep(&mut z, &dp).unwrap();
        }
        (0..n).map(|i| z[inv[i]]).collect()
    };
    let apply_b = |eta: &[f64]| -> Vec<f64> {
        let mut x = smoother(eta);
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
        let post = smoother(&r);
        for i in 0..x.len() {
            x[i] += post[i];
        }
        x
    };
    let mut x = sys.trace.ones_function(mesh);
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
    let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
    for (name, base) in [
        ("negative-slope", lshape_with(false, false)),
        ("positive-slope", lshape_with(true, false)),
        ("alternating", lshape_with(false, true)),
    ] {
        let hier = MeshHierarchy::uniform(base, 3);
        let level = 3;
        let mesh = Arc::new(hier.meshes[level].clone());
        let coef = coefficient_preset("exp1", &mesh).unwrap();
        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
        let cs: Vec<usize> = [1, 2, 3].iter().map(|&m0| count(&sys, &hier, level, m0, None)).collect();
        println!("T3 geometry {name}: m0=1..3 {cs:?}");
    }
    // ordering sensitivity on the standard geometry
    let base = lshape_with(false, false);
    let hier = MeshHierarchy::uniform(base, 3);
    let level = 3;
    let mesh = Arc::new(hier.meshes[level].clone());
    let coef = coefficient_preset("exp1", &mesh).unwrap();
    let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
    let n = sys.n_dofs();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.reverse();
    println!(
        "T3 reversed order: m0=1..3 {:?}",
        [1, 2, 3].map(|m0| count(&sys, &hier, level, m0, Some(&perm)))
    );
    for seed in [1u64, 2, 3] {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        println!(
            "T3 random order seed {seed}: m0=1..3 {:?}",
            [1, 2, 3].map(|m0| count(&sys, &hier, level, m0, Some(&perm)))
        );
    }
    println!("paper T3 m1=1 k=0: m0=1:19 m0=2:14 m0=3:13");
}
