//! Back-projection images of the three archetypes at one pose, written as PGM.
//!
//! cargo run --release --example backprojection -- [out_dir]

use std::path::PathBuf;

use isarxai::config::ExperimentConfig;
use isarxai::pipeline::{capture_image, grid};
use isarxai::raster::GrayImage;
use isarxai::scene::standard_targets;

fn main() -> isarxai::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "bp_images".into()));
    let cfg = ExperimentConfig::band_8ghz();
    let g = grid(&cfg)?;
    println!(
        "{}×{} grid, {:.2} mm pixels, {} pulses over {:.2}°",
        g.n_x,
        g.n_y,
        1e3 * g.pixel_spacing,
        cfg.scene.n_pulses,
        (cfg.scene.rotation_rate * cfg.radar.pri * (cfg.scene.n_pulses - 1) as f64).to_degrees()
    );
    for target in standard_targets(cfg.scene.target_scale)? {
        let image = capture_image(&cfg, &target, 0.6, cfg.scene.snr_db, 7)?;
        let path = out.join(format!("{}.pgm", target.name.to_lowercase()));
        GrayImage::from_unit(&image.pixels, image.width, image.height)?.write_pgm(&path)?;
        let mean = image.pixels.iter().sum::<f32>() / image.pixels.len() as f32;
        println!(
            "{:>5}: {} scatterers, brightest pixel {:?}, mean level {mean:.3} -> {}",
            target.name,
            target.scatterers.len(),
            image.argmax(),
            path.display()
        );
    }
    Ok(())
}
