use catsync::coupling::bidirectional_spec;
use catsync::grid::GridSpec;
use catsync::series::{assemble_manifold, build_bundle, conjugation_residual};

fn main() {
    let dt = std::f64::consts::PI / 1024.0;
    for &nt in &[256usize, 512] {
        for &eps in &[0.04f64, 0.02] {
            let spec = bidirectional_spec(eps);
            let grid = GridSpec::new(32, nt);
            let mut rs = vec![];
            for nmax in 1..=3 {
                let b = build_bundle(&spec, grid, 40, nmax).unwrap();
                let r = conjugation_residual(&assemble_manifold(&b, eps), &spec, dt, 16);
                rs.push(r);
                if nmax == 3 {
                    println!("nt={nt} eps={eps:.3} sup_norms={:?}", b.diagnostics.order_sup_norms.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>());
                }
            }
            println!("nt={nt:4} eps={eps:.3} r1={:.3e} r2={:.3e} r3={:.3e}  r2/r3={:.2} (1/eps={:.0})", rs[0], rs[1], rs[2], rs[1]/rs[2], 1.0/eps);
        }
    }
}
