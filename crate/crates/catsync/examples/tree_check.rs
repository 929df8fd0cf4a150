use catsync::catmap::Sign;
use catsync::constants::solve_w0;
use catsync::coupling::bidirectional_spec;
use catsync::grid::GridSpec;
use catsync::series::{SeriesBundle, DEFAULT_M_SUM};
use catsync::trees::*;

fn main() {
    let grid = GridSpec::new(16, 64);
    let spec = bidirectional_spec(0.05);
    let constants = solve_w0(&spec.g, grid).unwrap().0.at_mu(0.05);
    let ctx = TreeEvalCtx::new(&spec, constants, grid, DEFAULT_M_SUM);
    let bundle = SeriesBundle::build(&spec, constants, grid, DEFAULT_M_SUM, 3);
    for n in [2usize, 3] {
        let od = &bundle.orders[n - 1];
        let (i, j) = (10i64, 4i64);
        if let NodeValue::Scalar(s) = eval_target_sum(n, NodeType::UCap, None, &ctx, (i, j), 6).unwrap() {
            println!("n={n} U: tree={s:.10e} rec={:.10e}", od.u_cap.at(10, 4));
        }
        if let NodeValue::Scalar(s) = eval_target_sum(n, NodeType::HComp, Some(Sign::Plus), &ctx, (i, j), 6).unwrap() {
            println!("n={n} h+: tree={s:.10e} rec={:.10e}", od.h_plus.at(10, 4));
        }
        if let NodeValue::Row(r) = eval_target_sum(n, NodeType::Xi, None, &ctx, (i, j), 6).unwrap() {
            println!("n={n} xi(2pi): tree={:.10e} rec={:.10e}", r[64], od.xi.at(10, 4, 64));
        }
        if let NodeValue::Row(r) = eval_target_sum(n, NodeType::AComp, Some(Sign::Minus), &ctx, (i, j), 6).unwrap() {
            println!("n={n} a-(pi): tree={:.10e} rec={:.10e}", r[32], od.a_minus.at(10, 4, 32));
        }
    }
}
