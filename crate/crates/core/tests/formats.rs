//! File round trips through the filesystem and rejection of damaged files.

use isarxai::config::ExperimentConfig;
use isarxai::formats::{CheckpointFile, DatasetFile, DatasetRecord};
use isarxai::nn::{Network, NetworkSpec};
use isarxai::pipeline::simulate_dataset;
use isarxai::Error;
use proptest::prelude::*;

fn small_dataset() -> DatasetFile {
    let mut cfg = ExperimentConfig::band_4ghz();
    cfg.dataset.per_class = 2;
    cfg.dataset.train_per_class = 1;
    simulate_dataset(&cfg).unwrap()
}

#[test]
fn simulated_dataset_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/d.isards");
    let ds = small_dataset();
    ds.write(&path).unwrap();
    let back = DatasetFile::read(&path).unwrap();
    assert_eq!(back, ds);
    for (a, b) in ds.records.iter().zip(&back.records) {
        assert!(a.pixels.iter().zip(&b.pixels).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.bandwidth, 4e9);
    }
    assert_eq!(std::fs::read(&path).unwrap(), ds.to_bytes().unwrap());
    assert_eq!(&std::fs::read(&path).unwrap()[..7], b"ISARDS1");
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.isarnn");
    for spec in [NetworkSpec::reduced(), NetworkSpec::standard()] {
        let net = Network::<f32>::new(spec, 11).unwrap();
        let ckpt = CheckpointFile::from_network(&net, 11, 50);
        ckpt.write(&path).unwrap();
        let back = CheckpointFile::read(&path).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!((back.seed, back.epoch), (11, 50));
        assert_eq!(back.network().unwrap(), net);
    }
}

#[test]
fn damaged_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds_bytes = small_dataset().to_bytes().unwrap();
    let net = Network::<f32>::new(NetworkSpec::reduced(), 1).unwrap();
    let ck_bytes = CheckpointFile::from_network(&net, 1, 1).to_bytes().unwrap();
    let path = dir.path().join("x");

    for cut in [0, 5, 11, 40, ds_bytes.len() / 2, ds_bytes.len() - 1] {
        std::fs::write(&path, &ds_bytes[..cut]).unwrap();
        assert!(matches!(DatasetFile::read(&path), Err(Error::Format { .. })), "dataset cut at {cut}");
    }
    for cut in [0, 7, 20, ck_bytes.len() / 2, ck_bytes.len() - 1] {
        std::fs::write(&path, &ck_bytes[..cut]).unwrap();
        assert!(matches!(CheckpointFile::read(&path), Err(Error::Format { .. })), "checkpoint cut at {cut}");
    }
    let mut extra = ds_bytes.clone();
    extra.push(0);
    std::fs::write(&path, &extra).unwrap();
    assert!(matches!(DatasetFile::read(&path), Err(Error::Format { .. })));

    std::fs::write(&path, &ck_bytes).unwrap();
    assert!(matches!(DatasetFile::read(&path), Err(Error::Format { .. })));
    std::fs::write(&path, &ds_bytes).unwrap();
    assert!(matches!(CheckpointFile::read(&path), Err(Error::Format { .. })));

    assert!(matches!(DatasetFile::read(&dir.path().join("missing")), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_datasets_round_trip(
        h in 1usize..5,
        w in 1usize..5,
        items in prop::collection::vec((0u32..3, any::<f32>(), 1e9f32..1e10), 0..6),
        seed in any::<u64>(),
    ) {
        let records: Vec<DatasetRecord> = items
            .iter()
            .enumerate()
            .map(|(i, &(class_id, angle, bandwidth))| DatasetRecord {
                class_id,
                initial_angle: angle,
                bandwidth,
                pixels: (0..h * w).map(|k| ((seed >> (k % 60)) as f32 + i as f32).fract()).collect(),
            })
            .collect();
        let ds = DatasetFile {
            height: h,
            width: w,
            class_names: vec!["Plane".into(), "UAV".into(), "Y20".into()],
            records,
        };
        let bytes = ds.to_bytes().unwrap();
        let back = DatasetFile::from_bytes(&bytes, "mem".as_ref()).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back.records.len(), ds.records.len());
    }
}
