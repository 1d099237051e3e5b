// Criss-cross (X-pattern) start mesh for the L-shape, and deeper levels
// of the single-diagonal pattern.
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::coefficient_preset;
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::assemble_condensed;
use hdg2l::mesh::{build_structured, Domain, Mesh, MeshHierarchy};
use hdg2l::solvers::*;
use std::sync::Arc;

fn lshape_crisscross() -> Mesh {
    let mut vertices = vec![
        [0.0, -1.0], [1.0, -1.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
        [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
    ];
    let squares = [[0usize, 1, 4, 3], [2, 3, 6, 5], [3, 4, 7, 6]];
    let mut triangles = Vec::new();
    for sq in squares {
        let [bl, br, tr, tl] = sq;
        let c = [
            ( vertices[bl][0] + vertices[tr][0]) / 2.0,
            ( vertices[bl][1] + vertices[tr][1]) / 2.0,
        ];
        let ci = vertices.len();
        vertices.push(c);
        triangles.push([bl, br, ci]);
        triangles.push([br, tr, ci]);
        triangles.push([tr, tl, ci]);
        triangles.push([tl, bl, ci]);
    }
    Mesh::from_raw(vertices, triangles).unwrap()
}

fn run(hier: &MeshHierarchy, level: usize, k: usize, m0: usize, m1: usize) -> (usize, usize) {
    let mesh = Arc::new(hier.meshes[level].clone());
    let coef = coefficient_preset("exp1", &mesh).unwrap();
    let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, k).unwrap();
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
        m1,
        CycleSmoothing::ForwardDownBackwardUp,
    )
    .unwrap();
    let p = TwoLevelPreconditioner::new(
        &sys,
        Smoother::GsSymmetric { sweeps: m0 },
        AuxCorrector::VCycle(vc),
        &prol,
    )
    .unwrap();
    let x0 = sys.trace.ones_function(&mesh);
    let out = solve_two_level(&sys, &p, &x0, 1e-8, 200).unwrap();
    (out.iterations, sys.n_dofs())
}

fn main() {
    println!("single-diagonal pattern, deeper levels (paper k0 m0=1: 19 18 19 19 19):");
    let hier = MeshHierarchy::uniform(build_structured(Domain::LShape), 5);
    for m0 in [1usize, 2, 3] {
        let counts: Vec<usize> = (1..=5).map(|l| run(&hier, l, 0, m0, 1).0).collect();
        println!("  k=0 m0={m0} m1=1: {counts:?}");
    }
    println!("criss-cross pattern (paper k0: m0=1 [19 18 19 19 19] m0=2 [13 13 14 14 15] m0=3 [10 12 13 13 14]):");
    let hier = MeshHierarchy::uniform(lshape_crisscross(), 4);
    for m0 in [1usize, 2, 3] {
        let mut counts = Vec::new();
        let mut dofs = Vec::new();
        for l in 1..=4 {
            let (c, d) = run(&hier, l, 0, m0, 1);
            counts.push(c);
            dofs.push(d);
        }
        println!("  k=0 m0={m0} m1=1: {counts:?} (dofs {dofs:?})");
    }
}
