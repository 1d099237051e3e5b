// Search smoother/cycle interpretation combinations against Table 1 cells.
use hdg2l::auxspace::{assemble_p1, build_prolongation};
use hdg2l::cli::coefficient_preset;
use hdg2l::elements::{ElementFamily, FamilyKind};
use hdg2l::hdg::{assemble_condensed, CondensedSystem};
use hdg2l::mesh::{build_structured, Domain, MeshHierarchy, NodeOrigin};
use hdg2l::sparse::{dot, CooBuilder, CsrMatrix};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Sm { SymEach, SplitPair }
#[derive(Clone, Copy, Debug, PartialEq)]
enum Vc { FwdBwd, SymBoth, SymPreOnly, FwdBoth }

struct Cycle {
    levels: Vec<CsrMatrix>,
    prols: Vec<CsrMatrix>,
    coarse: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    m1: usize,
    kind: Vc,
    mass_sqrt: Vec<f64>,
}

impl Cycle {
    fn smooth_pre(&self, a: &CsrMatrix, x: &mut [f64], rhs: &[f64], reversed: bool) {
        for _ in 0..self.m1 {
            match (self.kind, reversed) {
                (Vc::FwdBwd, false) => { a.gs_forward_sweep(x, rhs).unwrap(); }
                (Vc::FwdBwd, true) => { a.gs_forward_sweep(x, rhs).unwrap(); }
                (Vc::SymBoth, _) => {
                    a.gs_forward_sweep(x, rhs).unwrap();
                    a.gs_backward_sweep(x, rhs).unwrap();
                }
                (Vc::SymPreOnly, false) => {
                    a.gs_forward_sweep(x, rhs).unwrap();
                    a.gs_backward_sweep(x, rhs).unwrap();
                }
                (Vc::SymPreOnly, true) => {}
                (Vc::FwdBoth, false) => { a.gs_forward_sweep(x, rhs).unwrap(); }
                (Vc::FwdBoth, true) => { a.gs_backward_sweep(x, rhs).unwrap(); }
            }
        }
    }
    fn smooth_post(&self, a: &CsrMatrix, x: &mut [f64], rhs: &[f64], reversed: bool) {
        for _ in 0..self.m1 {
            match (self.kind, reversed) {
                (Vc::FwdBwd, false) => { a.gs_backward_sweep(x, rhs).unwrap(); }
                (Vc::FwdBwd, true) => { a.gs_backward_sweep(x, rhs).unwrap(); }
                (Vc::SymBoth, _) => {
                    a.gs_forward_sweep(x, rhs).unwrap();
                    a.gs_backward_sweep(x, rhs).unwrap();
                }
                (Vc::SymPreOnly, false) => {}
                (Vc::SymPreOnly, true) => {
                    a.gs_forward_sweep(x, rhs).unwrap();
                    a.gs_backward_sweep(x, rhs).unwrap();
                }
                (Vc::FwdBoth, false) => { a.gs_forward_sweep(x, rhs).unwrap(); }
                (Vc::FwdBoth, true) => { a.gs_backward_sweep(x, rhs).unwrap(); }
            }
        }
    }
    fn cycle(&self, level: usize, rhs: &[f64], reversed: bool) -> Vec<f64> {
        if level == 0 {
            return match &self.coarse {
                Some(c) if !rhs.is_empty() => c.solve(&nalgebra::DVector::from_column_slice(rhs)).as_slice().to_vec(),
                _ => Vec::new(),
            };
        }
        let a = &self.levels[level];
        let mut x = vec![0.0; a.nrows()];
        self.smooth_pre(a, &mut x, rhs, reversed);
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let rc = self.prols[level - 1].mul_transpose_vec(&r);
        let xc = self.cycle(level - 1, &rc, reversed);
        let corr = self.prols[level - 1].mul_vec(&xc);
        for i in 0..x.len() { x[i] += corr[i]; }
        self.smooth_post(a, &mut x, rhs, reversed);
        x
    }
    fn apply(&self, d: &[f64], reversed: bool) -> Vec<f64> {
        let dn: Vec<f64> = d.iter().zip(&self.mass_sqrt).map(|(v, m)| v * m).collect();
        let x = self.cycle(self.levels.len() - 1, &dn, reversed);
        x.iter().zip(&self.mass_sqrt).map(|(v, m)| v * m).collect()
    }
}

fn build_cycle(hier: &MeshHierarchy, level: usize, m1: usize, kind: Vc) -> Cycle {
    let auxes: Vec<_> = hier.meshes[..=level]
        .iter()
        .map(|m| assemble_p1(m, &coefficient_preset("exp1", m).unwrap()))
        .collect();
    let mut prols = Vec::new();
    for l in 0..level {
        let coarse = &auxes[l];
        let fine = &auxes[l + 1];
        let mut coo = CooBuilder::new(fine.n_nodes(), coarse.n_nodes());
        for (rank, &v) in fine.interior.iter().enumerate() {
            match hier.maps[l].node_origin[v] {
                NodeOrigin::Vertex(cv) => {
                    if let Some(cr) = coarse.interior_rank[cv] { coo.push(rank, cr, 1.0); }
                }
                NodeOrigin::EdgeMidpoint(a, b) => {
                    for cv in [a, b] {
                        if let Some(cr) = coarse.interior_rank[cv] { coo.push(rank, cr, 0.5); }
                    }
                }
            }
        }
        prols.push(coo.build());
    }
    let coarse = if auxes[0].n_nodes() > 0 {
        Some(nalgebra::Cholesky::new(auxes[0].nodal_stiffness.to_dense()).unwrap())
    } else { None };
    Cycle {
        levels: auxes.iter().map(|a| a.nodal_stiffness.clone()).collect(),
        prols,
        coarse,
        m1,
        kind,
        mass_sqrt: auxes[level].lumped_mass.iter().map(|m| m.sqrt()).collect(),
    }
}

fn count(sys: &CondensedSystem, cyc: &Cycle, prol: &hdg2l::auxspace::ProlongationMap, m0: usize, sm: Sm) -> usize {
    let a = &sys.matrix;
    let smoother = |d: &[f64], post: bool| -> Vec<f64> {
        let mut z = vec![0.0; d.len()];
        match sm {
            Sm::SymEach => {
                for _ in 0..m0 {
                    a.gs_forward_sweep(&mut z, d).unwrap();
                    a.gs_backward_sweep(&mut z, d).unwrap();
                }
            }
            Sm::SplitPair => {
                for _ in 0..m0 {
                    if !post { a.gs_forward_sweep(&mut z, d).unwrap(); }
                    else { a.gs_backward_sweep(&mut z, d).unwrap(); }
                }
            }
        }
        z
    };
    let apply_b = |eta: &[f64]| -> Vec<f64> {
        let mut x = smoother(eta, false);
        for rev in [false, true] {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = eta.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let rc = prol.transpose.mul_vec(&r);
            let z = cyc.apply(&rc, rev);
            let corr = prol.matrix.mul_vec(&z);
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
    let base = build_structured(Domain::LShape);
    let hier = MeshHierarchy::uniform(base, 3);
    // paper Table 1, k=0: m1=1 rows m0=1..3: [19 18 19],[13 13 14],[10 12 13]
    //                     m1=2 rows: [17 18 17],[12 12 12],[10 10 10(11?)]
    println!("paper m1=1: m0=1:[19 18 19] m0=2:[13 13 14] m0=3:[10 12 13]");
    println!("paper m1=2: m0=1:[17 18 17] m0=2:[12 12 12] m0=3:[10 10 10]");
    for sm in [Sm::SymEach, Sm::SplitPair] {
        for vc in [Vc::FwdBwd, Vc::SymBoth, Vc::SymPreOnly, Vc::FwdBoth] {
            for m1 in [1usize, 2] {
                let mut line = format!("{sm:?}/{vc:?} m1={m1}:");
                for m0 in [1usize, 2, 3] {
                    let mut counts = Vec::new();
                    for level in 1..=3 {
                        let mesh = Arc::new(hier.meshes[level].clone());
                        let coef = coefficient_preset("exp1", &mesh).unwrap();
                        let fam = ElementFamily::with_default_stabilization(FamilyKind::Stab, 0).unwrap();
                        let sys = assemble_condensed(&mesh, &fam, &coef, None).unwrap();
                        let aux = assemble_p1(&mesh, &coef);
                        let prol = build_prolongation(&mesh, &sys.trace, &aux);
                        let cyc = build_cycle(&hier, level, m1, vc);
                        counts.push(count(&sys, &cyc, &prol, m0, sm));
                    }
                    line += &format!(" m0={m0}:{counts:?}");
                }
                println!("{line}");
            }
        }
    }
}
