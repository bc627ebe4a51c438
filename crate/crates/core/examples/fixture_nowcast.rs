//! Runs the full pipeline on the bundled synthetic fixture and prints a
//! summary of the backtest and the live nowcasts.

use std::time::Instant;

use nowcast::config::RunConfig;
use nowcast::fixture::{build_fixture, FIXTURE_SEED};
use nowcast::pipeline::{run_comparators, run_nowcast, Inputs};

fn main() {
    env_logger::init();
    let fx = build_fixture(FIXTURE_SEED);
    let inputs = Inputs::from_fixture(&fx);
    let cfg = RunConfig::default();
    let t0 = Instant::now();
    let run = run_nowcast(&inputs, &cfg, None).expect("pipeline");
    println!("nowcast run: {:.1?}", t0.elapsed());
    let sel = run.prepared.selection.as_ref().map(|s| s.selected_ids.clone()).unwrap_or_default();
    println!("selected topics: {sel:?}");
    println!("factors: {}, series: {}", run.factor.r, run.prepared.final_ids.len());
    let bt = &run.backtest;
    println!(
        "best {:?}  mae {:.3}  coverage {:.3}  survivors {}",
        bt.best_order(),
        bt.mae(bt.best_index),
        bt.coverage[bt.best_index],
        bt.survivors.len()
    );
    let c = &run.combined_backtest;
    println!("combined mae {:.3}  median ae {:.3}  coverage {:.3}", c.mae, c.median_ae, c.coverage);
    for (nc, m) in run.final_nowcasts.iter().zip(run.open_months()) {
        println!("{m}: {:.2} [{:.2}, {:.2}]", nc.point, nc.ci_low, nc.ci_high);
    }
    let t1 = Instant::now();
    for row in run_comparators(&inputs, &cfg, &run).expect("comparators") {
        println!("{:<14} mae {:.3}", row.model, row.mae);
    }
    println!("comparators: {:.1?}", t1.elapsed());
}
