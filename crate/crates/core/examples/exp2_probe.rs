// exp2 variants on the criss-cross meshes: arrangements of the
// single-sweep smoother across steps 1/4, and SOR weighting.
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::coefficient_preset;
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::{assemble_condensed, CondensedSystem};
use hdg2l::mesh::{Mesh, MeshHierarchy};
use hdg2l::solvers::{CycleSmoothing, VCycle};
use hdg2l::sparse::{dot, CsrMatrix};
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

fn sor_forward(a: &CsrMatrix, x: &mut [f64], b: &[f64], omega: f64) {
    for r in 0..a.nrows() {
        let (cols, vals) = a.row(r);
        let mut acc = b[r];
        let mut diag = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == r { diag = v; } else { acc -= v * x[c]; }
        }
        let gs = acc / diag;
        x[r] = (1.0 - omega) * x[r] + omega * gs;
    }
}

fn sor_backward(a: &CsrMatrix, x: &mut [f64], b: &[f64], omega: f64) {
    for r in (0..a.nrows()).rev() {
        let (cols, vals) = a.row(r);
        let mut acc = b[r];
        let mut diag = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == r { diag = v; } else { acc -= v * x[c]; }
        }
        let gs = acc / diag;
        x[r] = (1.0 - omega) * x[r] + omega * gs;
    }
}

// arrangement: (pre, post) with 0=none 1=fwd 2=bwd 3=sym
fn count(sys: &CondensedSystem, vc: &VCycle, prol: &hdg2l::auxspace::ProlongationMap, pre: u8, post: u8, omega: f64) -> usize {
    let a = &sys.matrix;
    let sweep = |d: &[f64], what: u8| -> Vec<f64> {
        let mut z = vec![0.0; d.len()];
        match what {
            0 => {}
            1 => sor_forward(a, &mut z, d, omega),
            2 => sor_backward(a, &mut z, d, omega),
            3 => {
                sor_forward(a, &mut z, d, omega);
                sor_backward(a, &mut z, d, omega);
            }
            _ => unreachable!(),
        }
        z
    };
    let apply_b = |eta: &[f64]| -> Vec<f64> {
        let mut x = sweep(eta, pre);
        for _ in 0..2 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let rc = prol.transpose.mul_vec(&r);
            let z = vc.apply_scaled(&rc);
            let corr = prol.matrix.mul_vec(&z);
            for i in 0..x.len() { x[i] += corr[i]; }
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let p = sweep(&r, post);
        for i in 0..x.len() { x[i] += p[i]; }
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
    let hier = MeshHierarchy::uniform(lshape_cross(), 3);
    let level = 3;
    for k in [0usize, 1] {
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
        println!(
            "T3 k={k}: fwd/bwd {} | sym/none {} | none/sym {} | sym/fwd {} | sor1.3 f/b {} | sor1.5 f/b {} | sor1.5 f/f {}",
            count(&sys, &vc, &prol, 1, 2, 1.0),
            count(&sys, &vc, &prol, 3, 0, 1.0),
            count(&sys, &vc, &prol, 0, 3, 1.0),
            count(&sys, &vc, &prol, 3, 1, 1.0),
            count(&sys, &vc, &prol, 1, 2, 1.3),
            count(&sys, &vc, &prol, 1, 2, 1.5),
            count(&sys, &vc, &prol, 1, 1, 1.5),
        );
    }
    println!("paper T3: k0 ~24, k1 34");
}
