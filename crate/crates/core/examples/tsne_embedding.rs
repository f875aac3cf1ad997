//! t-SNE of three noisy clusters in a 3-D "logit" space, with cluster scores
//! and a scatter raster.
//!
//! cargo run --release --example tsne_embedding -- [out.ppm]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use isarxai::embed::{nearest_centroid_purity, render_scatter, silhouette_score, tsne, TsneConfig};

fn main() -> isarxai::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "tsne.ppm".into());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.8).expect("valid sigma");
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        for _ in 0..60 {
            let mut v: Vec<f64> = (0..3).map(|_| noise.sample(&mut rng)).collect();
            v[class] += 4.0;
            x.push(v);
            labels.push(class);
        }
    }
    let config = TsneConfig::default();
    let emb = tsne(&x, &labels, &config)?;
    println!(
        "KL after {} iterations: {:.4} (first {:.4})",
        emb.kl_history.len(),
        emb.kl_history.last().copied().unwrap_or(f64::NAN),
        emb.kl_history[0]
    );
    println!("silhouette {:.3}", silhouette_score(&emb.points, &labels)?);
    println!("nearest-centroid purity {:.3}", nearest_centroid_purity(&emb.points, &labels)?);
    render_scatter(&emb.points, &labels, 400).write_ppm(out.as_ref())?;
    println!("scatter written to {out}");
    Ok(())
}
