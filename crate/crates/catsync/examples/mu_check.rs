use catsync::constants::solve_w0;
use catsync::coupling::clock_only_spec;
use catsync::grid::GridSpec;
use catsync::series::{assemble_manifold, SeriesBundle};

fn main() {
    let grid = GridSpec::new(32, 128);
    for &eps in &[0.05f64, 0.025] {
        let spec = clock_only_spec(eps);
        let (c0, _) = solve_w0(&spec.g, grid).unwrap();
        let tied = SeriesBundle::build(&spec, c0.at_mu(eps), grid, 40, 2);
        let fixed = SeriesBundle::build(&spec, c0.at_mu(2.0 * eps), grid, 40, 2);
        let wa = assemble_manifold(&tied, eps);
        let wb = assemble_manifold(&fixed, eps);
        let sup: f64 = wa
            .u
            .data
            .iter()
            .zip(wb.u.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            .max(
                wa.h1.data.iter().zip(wb.h1.data.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            );
        println!("eps={eps}: sup |W_mu=2eps - W_mu=eps| = {sup:.4e}  (eps^2 = {:.3e})", eps * eps);
    }
}
