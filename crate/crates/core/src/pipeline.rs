//! End-to-end steps shared by the command line and the examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::angle::{angle_range_report, build_library, mark_angle, AngleMark, AngleReport};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::formats::{DatasetFile, DatasetRecord};
use crate::imaging::{back_projection_with, resample_to, BpOptions, ImageGrid, IsarImage};
use crate::nn::{
    argmax, evaluate, softmax, train, EpochStats, Evaluation, LabeledSet, Network, NetworkSpec, Scalar, Tensor,
    TrainHistory,
};
use crate::scene::{make_archetype, plan_dataset, standard_targets, synthesize_echoes, AnglePolicy, Archetype, MotionState, TargetModel};

pub fn motion(cfg: &ExperimentConfig, initial_angle: f64) -> MotionState {
    MotionState {
        rotation_rate: cfg.scene.rotation_rate,
        initial_angle,
        standoff_range: cfg.scene.standoff_range,
        scene_radius: cfg.scene.scene_radius,
    }
}

pub fn grid(cfg: &ExperimentConfig) -> Result<ImageGrid> {
    ImageGrid::new(cfg.grid.size, cfg.grid.size, cfg.grid.pixel_spacing)
}

pub fn bp_options(cfg: &ExperimentConfig) -> BpOptions {
    BpOptions {
        upsample: cfg.grid.upsample,
        exact_range: cfg.grid.exact_range,
        reference_angle: None,
        hamming: cfg.grid.hamming,
    }
}

pub fn network_spec(cfg: &ExperimentConfig) -> NetworkSpec {
    NetworkSpec {
        input: [1, cfg.grid.image_size, cfg.grid.image_size],
        ..NetworkSpec::standard()
    }
}

/// Echoes → back-projection → resampled image of one capture.
pub fn capture_image(
    cfg: &ExperimentConfig,
    target: &TargetModel,
    initial_angle: f64,
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<IsarImage> {
    let echoes = synthesize_echoes(
        target,
        &motion(cfg, initial_angle),
        &cfg.radar,
        cfg.scene.n_pulses,
        snr_db,
        noise_seed,
    )?;
    let image = back_projection_with(&echoes, &grid(cfg)?, &bp_options(cfg))?;
    let mut image = resample_to(&image, cfg.grid.image_size, cfg.grid.image_size)?;
    image.meta.class_id = Some(target.class_id);
    Ok(image)
}

/// `per_class` random-pose captures of every archetype, target-major.
pub fn simulate_dataset(cfg: &ExperimentConfig) -> Result<DatasetFile> {
    cfg.validate()?;
    let targets = standard_targets(cfg.scene.target_scale)?;
    let plan = plan_dataset(&targets, cfg.dataset.per_class, AnglePolicy::Random, cfg.dataset.seed)?;
    let records = plan
        .par_iter()
        .map(|item| {
            let image = capture_image(
                cfg,
                &targets[item.target_index],
                item.initial_angle,
                cfg.scene.snr_db,
                item.noise_seed,
            )?;
            Ok(DatasetRecord {
                class_id: item.class_id as u32,
                initial_angle: item.initial_angle as f32,
                bandwidth: cfg.radar.bandwidth() as f32,
                pixels: image.pixels,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DatasetFile {
        height: cfg.grid.image_size,
        width: cfg.grid.image_size,
        class_names: Archetype::ALL.iter().map(|a| a.name().to_owned()).collect(),
        records,
    })
}

/// First `train_per_class` records of each class train; the rest test.
pub fn split(dataset: &DatasetFile, train_per_class: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut seen = vec![0usize; dataset.class_names.len()];
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for (i, r) in dataset.records.iter().enumerate() {
        let k = r.class_id as usize;
        if seen[k] < train_per_class {
            train_idx.push(i);
        } else {
            test_idx.push(i);
        }
        seen[k] += 1;
    }
    if seen.iter().any(|&n| n <= train_per_class) {
        return Err(Error::config(format!(
            "every class needs more than {train_per_class} records to leave a test set (counts {seen:?})"
        )));
    }
    Ok((train_idx, test_idx))
}

pub fn record_tensor<T: Scalar>(dataset: &DatasetFile, index: usize) -> Result<Tensor<T>> {
    let r = dataset
        .records
        .get(index)
        .ok_or_else(|| Error::param(format!("record {index} out of range (dataset has {})", dataset.len())))?;
    Tensor::new(
        &[1, dataset.height, dataset.width],
        r.pixels.iter().map(|&v| T::from_f64(v as f64)).collect(),
    )
}

pub fn labeled_set<T: Scalar>(dataset: &DatasetFile, indices: &[usize]) -> Result<LabeledSet<T>> {
    let inputs = indices.iter().map(|&i| record_tensor(dataset, i)).collect::<Result<_>>()?;
    let labels = indices.iter().map(|&i| dataset.records[i].class_id as usize).collect();
    LabeledSet::new(inputs, labels)
}

pub struct TrainedModel {
    pub network: Network<f32>,
    pub history: TrainHistory,
    pub test: Evaluation,
    pub test_indices: Vec<usize>,
}

/// Splits, trains from a seeded init and evaluates on the held-out records.
pub fn train_on_dataset(
    cfg: &ExperimentConfig,
    dataset: &DatasetFile,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedModel> {
    let (train_idx, test_idx) = split(dataset, cfg.dataset.train_per_class)?;
    let train_set = labeled_set::<f32>(dataset, &train_idx)?;
    let test_set = labeled_set::<f32>(dataset, &test_idx)?;
    let spec = network_spec(cfg);
    if spec.input != [1, dataset.height, dataset.width] {
        return Err(Error::config(format!(
            "dataset images are {}×{} but the network expects {:?}",
            dataset.height, dataset.width, spec.input
        )));
    }
    let mut network = Network::<f32>::new(spec, cfg.train.seed)?;
    let history = train(&mut network, &train_set, &test_set, &cfg.train, on_epoch)?;
    let test = evaluate(&network, &test_set)?;
    Ok(TrainedModel {
        network,
        history,
        test,
        test_indices: test_idx,
    })
}

/// One capture of the angle experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleCapture {
    pub true_angle_deg: f64,
    pub mark: AngleMark,
    pub true_class: usize,
    pub predicted: usize,
    pub probability: f64,
}

pub struct AngleExperiment {
    pub captures: Vec<AngleCapture>,
    pub report: AngleReport,
}

/// Marks, images and classifies `n_images` random-pose captures of one archetype.
pub fn angle_experiment<T: Scalar>(cfg: &ExperimentConfig, net: &Network<T>) -> Result<AngleExperiment> {
    let kind = Archetype::from_name(&cfg.angle.target)
        .ok_or_else(|| Error::config(format!("unknown target `{}`", cfg.angle.target)))?;
    let target = make_archetype(kind, cfg.scene.target_scale)?;
    let library = build_library(&target, &cfg.radar, &motion(cfg, 0.0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.angle.seed);
    let poses: Vec<(f64, u64)> = (0..cfg.angle.n_images)
        .map(|_| (rng.random::<f64>() * std::f64::consts::TAU, rng.random::<u64>()))
        .collect();
    let captures: Vec<AngleCapture> = poses
        .par_iter()
        .map(|&(angle, seed)| {
            let m = motion(cfg, angle);
            let echoes = synthesize_echoes(&target, &m, &cfg.radar, cfg.scene.n_pulses, cfg.angle.snr_db, seed)?;
            let mark = mark_angle(&echoes.row_series(0), &library, &cfg.radar)?;
            let image = back_projection_with(&echoes, &grid(cfg)?, &bp_options(cfg))?;
            let image = resample_to(&image, cfg.grid.image_size, cfg.grid.image_size)?;
            let input = image_tensor::<T>(&image)?;
            let p = softmax(&net.logits(&input)?.to_f64_vec());
            let predicted = argmax(&p);
            Ok(AngleCapture {
                true_angle_deg: angle.to_degrees(),
                mark,
                true_class: target.class_id,
                predicted,
                probability: p[predicted],
            })
        })
        .collect::<Result<_>>()?;
    let marks: Vec<f64> = captures.iter().map(|c| c.mark.angle_deg).collect();
    let preds: Vec<(usize, usize)> = captures.iter().map(|c| (c.true_class, c.predicted)).collect();
    let ranges: Vec<(f64, f64)> = cfg.angle.ranges.iter().map(|r| (r[0], r[1])).collect();
    let report = angle_range_report(&marks, &preds, &ranges)?;
    Ok(AngleExperiment { captures, report })
}

pub fn image_tensor<T: Scalar>(image: &IsarImage) -> Result<Tensor<T>> {
    Tensor::new(
        &[1, image.height, image.width],
        image.pixels.iter().map(|&v| T::from_f64(v as f64)).collect(),
    )
}

/// Smallest angular distance between two angles in degrees.
pub fn angle_error_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::band_8ghz();
        cfg.grid.size = 64;
        cfg.grid.image_size = 32;
        cfg.dataset.per_class = 3;
        cfg.dataset.train_per_class = 2;
        cfg.scene.n_pulses = 24;
        cfg
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = tiny();
        let ds = simulate_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 9);
        assert_eq!((ds.height, ds.width), (32, 32));
        assert_eq!(ds.class_names, vec!["Plane", "UAV", "Y20"]);
        assert!(ds.records.iter().all(|r| r.pixels.iter().cloned().fold(0.0f32, f32::max) == 1.0));
        assert_eq!(ds.to_bytes().unwrap(), simulate_dataset(&cfg).unwrap().to_bytes().unwrap());
        let (tr, te) = split(&ds, 2).unwrap();
        assert_eq!((tr.len(), te.len()), (6, 3));
        assert!(split(&ds, 3).is_err());
    }

    #[test]
    fn angle_errors_wrap() {
        assert_eq!(angle_error_deg(359.0, 1.0), 2.0);
        assert_eq!(angle_error_deg(10.0, 370.0), 0.0);
    }
}
