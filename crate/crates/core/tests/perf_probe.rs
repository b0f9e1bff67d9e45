//! Timing probes (ignored by default; run with --ignored --nocapture).

use std::time::Instant;

use kfino_core::bench::{run_sweep, BenchConfig, Method, SweepVar};
use kfino_core::filter::{kfino_filter, Tracking};
use kfino_core::sim::simulate_series;
use kfino_core::wow::{build_steps, WowParams};
use kfino_core::scalar_obs;

#[test]
#[ignore]
fn probe_filter_throughput() {
    let params = WowParams::default();
    let series = simulate_series(&params, 10.0, 100.0, 1).unwrap();
    let n = series.times.len().min(1000);
    let times = &series.times[..n];
    let ys = scalar_obs(&series.observed[..n]);
    let steps = build_steps(&params, times).unwrap();
    let init = params.init_belief();

    let t0 = Instant::now();
    let run = kfino_filter(&ys, &steps, &init, 1 << 10, 10, Tracking::NONE).unwrap();
    println!(
        "filter N={} beam=1024: {:?} (loglik {:.3})",
        n,
        t0.elapsed(),
        run.loglik
    );

    let t0 = Instant::now();
    let run = kfino_filter(&ys, &steps, &init, 1 << 15, 15, Tracking::NONE).unwrap();
    println!(
        "filter N={} beam=32768: {:?} (loglik {:.3})",
        n,
        t0.elapsed(),
        run.loglik
    );

    // One replicate at kappa = 20 scale, horizon 100.
    let series = simulate_series(&params, 1.0, 100.0, 2).unwrap();
    let steps = build_steps(&params, &series.times).unwrap();
    let ys = scalar_obs(&series.observed);
    let t0 = Instant::now();
    let run = kfino_filter(&ys, &steps, &init, 1 << 20, 20, Tracking::NONE).unwrap();
    println!(
        "filter N={} beam=2^20: {:?} (loglik {:.3})",
        series.times.len(),
        t0.elapsed(),
        run.loglik
    );
}

#[test]
#[ignore]
fn probe_small_sweep() {
    let cfg = BenchConfig {
        replicates: 10,
        ..BenchConfig::default()
    };
    let t0 = Instant::now();
    let report = run_sweep(
        SweepVar::Kappa,
        &[10.0, 12.0, 15.0],
        &cfg,
        &[Method::Kfino, Method::ClassicKalman],
    )
    .unwrap();
    println!("kappa {{10,12,15}} x10 replicates: {:?}", t0.elapsed());
    for row in &report.rows {
        println!(
            "  {} {}={} {}: median {:.4}",
            row.method.name(),
            report.var.name(),
            row.value,
            row.metric.name(),
            row.median
        );
    }
}
