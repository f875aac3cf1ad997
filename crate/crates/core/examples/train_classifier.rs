//! Simulates a small 8 GHz dataset, trains the CNN and saves a checkpoint.
//!
//! cargo run --release --example train_classifier -- [per_class] [epochs] [out_dir]

use std::path::PathBuf;

use isarxai::config::ExperimentConfig;
use isarxai::formats::CheckpointFile;
use isarxai::pipeline::{simulate_dataset, train_on_dataset};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> isarxai::Result<()> {
    let mut args = std::env::args().skip(1);
    let per_class: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "trained".into()));

    let mut cfg = ExperimentConfig::band_8ghz();
    cfg.dataset.per_class = per_class;
    cfg.dataset.train_per_class = per_class / 2;
    cfg.train.epochs = epochs;
    cfg.train.eval_every = 5;

    let dataset = simulate_dataset(&cfg)?;
    println!("{} images of {}×{}", dataset.len(), dataset.height, dataset.width);
    let model = train_on_dataset(&cfg, &dataset, |e| {
        print!("epoch {:>3}  loss {:.4}  train acc {:.3}", e.epoch, e.train_loss, e.train_accuracy);
        if let Some(acc) = e.test_accuracy {
            print!("  test acc {acc:.3}");
        }
        println!();
    })?;
    println!("confusion (rows true, columns predicted):");
    for row in model.test.confusion {
        println!("  {row:?}");
    }
    dataset.write(&out.join("dataset.isards"))?;
    CheckpointFile::from_network(&model.network, cfg.train.seed, epochs as u64).write(&out.join("model.isarnn"))?;
    println!("dataset and checkpoint written to {}", out.display());
    Ok(())
}
