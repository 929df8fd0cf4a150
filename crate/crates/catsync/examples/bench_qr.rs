use catsync::coupling::clock_only_spec;
use catsync::lyapunov::{spectrum_qr, SpectrumOpts};
use std::time::Instant;

fn main() {
    for (eps, n) in [(0.0, 20_000usize), (0.02, 20_000)] {
        let spec = clock_only_spec(eps);
        let opts = SpectrumOpts { n_iter: n, n_transient: 200, ..Default::default() };
        let t0 = Instant::now();
        let rec = spectrum_qr(&spec, eps, opts).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "eps={eps} n={n}: {:.2}s ({:.1} us/iter)  L=({:.6}, {:.6}, {:.6})",
            dt, dt / n as f64 * 1e6, rec.lambda_plus, rec.lambda_zero, rec.lambda_minus
        );
    }
}
