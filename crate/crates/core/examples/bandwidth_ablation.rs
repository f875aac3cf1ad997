//! Trains the classifier on 8 GHz and 4 GHz captures with matched seeds and
//! compares held-out accuracy.
//!
//! cargo run --release --example bandwidth_ablation -- [seeds] [epochs]

use std::time::Instant;

use isarxai::config::ExperimentConfig;
use isarxai::pipeline::{simulate_dataset, train_on_dataset};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> isarxai::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);

    println!("seed  acc_8ghz  acc_4ghz");
    let mut wins = 0;
    for seed in 0..seeds {
        let mut accs = Vec::new();
        for mut cfg in [ExperimentConfig::band_8ghz(), ExperimentConfig::band_4ghz()] {
            cfg.dataset.per_class = 100;
            cfg.dataset.seed = 1000 + seed;
            cfg.train.seed = seed;
            cfg.train.epochs = epochs;
            cfg.train.eval_every = 0;
            let start = Instant::now();
            let dataset = simulate_dataset(&cfg)?;
            let simulated = start.elapsed();
            let model = train_on_dataset(&cfg, &dataset, |_| {})?;
            eprintln!(
                "  {:.0} GHz: simulate {:.1}s, train {:.1}s, final train loss {:.4}",
                cfg.radar.bandwidth() / 1e9,
                simulated.as_secs_f64(),
                (start.elapsed() - simulated).as_secs_f64(),
                model.history.last().map_or(f64::NAN, |e| e.train_loss)
            );
            accs.push(model.test.accuracy);
        }
        let ok = accs[0] >= accs[1] && accs[0] >= 0.9;
        wins += usize::from(ok);
        println!("{seed:>4}  {:>8.4}  {:>8.4}{}", accs[0], accs[1], if ok { "" } else { "  (trend not met)" });
    }
    println!("trend held in {wins}/{seeds} seeds");
    Ok(())
}
