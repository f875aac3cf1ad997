//! Layer-wise relevance of a trained classifier: per-layer conservation,
//! heatmaps and re-injection of the maps into the network.
//!
//! cargo run --release --example explain_relevance -- [dataset checkpoint] [out_dir]
//!
//! Without a dataset and checkpoint a small model is trained first.

use std::path::PathBuf;

use isarxai::config::ExperimentConfig;
use isarxai::formats::{CheckpointFile, DatasetFile};
use isarxai::nn::{softmax, Network};
use isarxai::pipeline::{record_tensor, simulate_dataset, train_on_dataset};
use isarxai::raster::GrayImage;
use isarxai::xai::{explain_traced, reinject, render_heatmap, ClassChoice, LrpConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> isarxai::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (dataset, net) = if args.len() >= 2 {
        (DatasetFile::read(args[0].as_ref())?, CheckpointFile::read(args[1].as_ref())?.network()?)
    } else {
        let mut cfg = ExperimentConfig::band_8ghz();
        cfg.dataset.per_class = 20;
        cfg.dataset.train_per_class = 10;
        cfg.train.epochs = 15;
        cfg.train.eval_every = 0;
        let dataset = simulate_dataset(&cfg)?;
        let model = train_on_dataset(&cfg, &dataset, |_| {})?;
        println!("trained a small model, test accuracy {:.3}", model.test.accuracy);
        (dataset, model.network)
    };
    let out = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "relevance".into()));
    let net: Network<f64> = net.cast();
    let lrp = LrpConfig::default();

    let per_class = dataset.len() / 3;
    for index in [0, per_class, 2 * per_class] {
        let input = record_tensor::<f64>(&dataset, index)?;
        let (map, trace) = explain_traced(&net, &input, ClassChoice::Predicted, &lrp)?;
        let p = softmax(&net.logits(&input)?.to_f64_vec());
        let (re_class, re_prob) = reinject(&net, &map)?;
        println!(
            "image {index}: true {} predicted {} (p {:.3}), logit {:.4}, relevance sum {:.4}, re-injected as {re_class} (p {re_prob:.3})",
            dataset.records[index].class_id,
            map.target_class,
            p[map.target_class],
            map.seed_logit,
            map.total()
        );
        for t in &trace {
            println!(
                "    {:<8} out {:>10.5}  in {:>10.5}  rel. error {:.1e}{}",
                t.layer,
                t.relevance_out,
                t.relevance_in,
                t.relative_error(),
                if t.vanishing_denominator { "  (vanishing denominator)" } else { "" }
            );
        }
        let gray = GrayImage::from_unit(&dataset.records[index].pixels, dataset.width, dataset.height)?;
        let path = out.join(format!("{index:04}_pair.ppm"));
        gray.to_rgb().beside(&render_heatmap(&map)).write_ppm(&path)?;
    }
    println!("heatmaps written to {}", out.display());
    Ok(())
}
