use catsync::coupling::clock_only_spec;
use catsync::grid::GridSpec;
use catsync::lyapunov::{attractor_cloud, w_iqr};
use catsync::series::{assemble_manifold, build_bundle};
use catsync::trig::TWO_PI;

fn main() {
    let spec = clock_only_spec(0.0);
    for &eps in &[0.02, 0.05, 0.1, 0.153] {
        // route 1: direct cloud
        let cloud = attractor_cloud(&spec, eps, 20_000, 2_000, TWO_PI / 512.0, 17);
        let iqr_cloud = w_iqr(&cloud, std::f64::consts::PI);
        // route 2: series manifold graph amplitude over the lattice (Lebesgue in φ)
        let bundle = build_bundle(&spec.with_epsilon(eps), GridSpec::new(64, 256), 40, 3).unwrap();
        let m = assemble_manifold(&bundle, eps);
        let pts: Vec<[f64; 3]> = (0..64)
            .flat_map(|i| (0..64).map(move |j| (i, j)))
            .map(|(i, j)| { let (_, w) = m.at_site(i, j); [0.0, 0.0, w] })
            .collect();
        let iqr_series = w_iqr(&pts, std::f64::consts::PI);
        let (lo, hi) = m.u.min_max();
        println!("eps={eps:<6} cloud IQR={iqr_cloud:.4}  series IQR={iqr_series:.4}  u range=[{lo:.4},{hi:.4}]");
    }
}
