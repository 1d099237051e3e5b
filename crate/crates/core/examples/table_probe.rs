use hdg2l::cli::*;

fn main() {
    // exp3: exact aux corrector, graded meshes; paper k=0: m0=1:15, m0=2:12, m0=3:12
    //       k=1: m0=1:30, m0=2:16, m0=3:12
    let mut cfg = ExperimentConfig::preset(ExperimentId::Exp3);
    cfg.levels = 10;
    cfg.diagnostics = false;
    let rep = run_experiment(&cfg).unwrap();
    println!("exp3 (paper k0: 15/12/12, k1: 30/16/12):");
    for line in rep.pivot_lines() {
        println!("  {line}");
    }

    // exp1 with exact corrector instead of the V-cycle, k=0 only
    let mut cfg = ExperimentConfig::preset(ExperimentId::Exp1);
    cfg.k = Some(0);
    cfg.levels = 3;
    cfg.corrector = CorrectorKind::Exact;
    cfg.diagnostics = false;
    let rep = run_experiment(&cfg).unwrap();
    println!("exp1 with exact aux corrector:");
    for line in rep.pivot_lines() {
        println!("  {line}");
    }

    // exp2 probe: forward GS; paper k=0 m1=1: 22 24 24; k=1: 34 ...
    let mut cfg = ExperimentConfig::preset(ExperimentId::Exp2);
    cfg.levels = 3;
    cfg.m1 = Some(1);
    cfg.diagnostics = false;
    let rep = run_experiment(&cfg).unwrap();
    println!("exp2 m1=1 (paper k0: 22 24 24, k1: 34 34 34):");
    for line in rep.pivot_lines() {
        println!("  {line}");
    }
}
