use std::time::Instant;
use kfino_core::filter::{kfino_filter, Tracking};
use kfino_core::sim::simulate_series;
use kfino_core::wow::{build_steps, WowParams};
use kfino_core::scalar_obs;

fn main() {
    let params = WowParams::default();
    let series = simulate_series(&params, 1.0, 100.0, 2).unwrap();
    let steps = build_steps(&params, &series.times).unwrap();
    let ys = scalar_obs(&series.observed);
    let init = params.init_belief();
    let t0 = Instant::now();
    let run = kfino_filter(&ys, &steps, &init, 1 << 20, 20, Tracking::NONE).unwrap();
    println!("N={} beam=2^20: {:?} loglik={:.3} final_live={}",
        series.times.len(), t0.elapsed(), run.loglik, run.final_set.len());
}
