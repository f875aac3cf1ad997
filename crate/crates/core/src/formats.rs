//! Binary dataset and checkpoint files (little-endian, binary32 floats).

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec, Tensor};
use crate::raster::write_bytes;

const DATASET_MAGIC: &[u8; 7] = b"ISARDS1";
const CHECKPOINT_MAGIC: &[u8; 7] = b"ISARNN1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub class_id: u32,
    /// Pose at the first pulse, rad.
    pub initial_angle: f32,
    /// Chirp bandwidth, Hz.
    pub bandwidth: f32,
    /// Row-major `H × W` image in `[0, 1]`.
    pub pixels: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub height: usize,
    pub width: usize,
    pub class_names: Vec<String>,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointFile {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub epoch: u64,
    pub params: Vec<Tensor<f32>>,
}

impl CheckpointFile {
    pub fn from_network(net: &Network<f32>, seed: u64, epoch: u64) -> Self {
        CheckpointFile {
            spec: net.spec().clone(),
            seed,
            epoch,
            params: net.params().to_vec(),
        }
    }

    pub fn network(&self) -> Result<Network<f32>> {
        Network::from_params(self.spec.clone(), self.params.clone())
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::param(format!("{v} does not fit in 32 bits")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, values: &[f32]) {
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.path, "length overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 7]) -> Result<()> {
        if self.take(7)? != magic {
            return Err(Error::format(self.path, "bad magic"));
        }
        let version = self.u32()?;
        if version != VERSION as usize {
            return Err(Error::format(self.path, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.path, "trailing bytes after the last record"));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

impl DatasetFile {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.height * self.width;
        for (i, r) in self.records.iter().enumerate() {
            if r.pixels.len() != n {
                return Err(Error::param(format!("record {i} has {} pixels, expected {n}", r.pixels.len())));
            }
            if r.class_id as usize >= self.class_names.len() {
                return Err(Error::param(format!("record {i} has unknown class {}", r.class_id)));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut w = Writer(DATASET_MAGIC.to_vec());
        w.u32(VERSION as usize)?;
        w.u32(self.records.len())?;
        w.u32(self.height)?;
        w.u32(self.width)?;
        w.u32(self.class_names.len())?;
        for name in &self.class_names {
            w.u32(name.len())?;
            w.0.extend_from_slice(name.as_bytes());
        }
        for r in &self.records {
            w.u32(r.class_id as usize)?;
            w.f32s(&[r.initial_angle, r.bandwidth]);
            w.f32s(&r.pixels);
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        r.header(DATASET_MAGIC)?;
        let count = r.u32()?;
        let (height, width) = (r.u32()?, r.u32()?);
        let n_classes = r.u32()?;
        let mut class_names = Vec::with_capacity(n_classes.min(1024));
        for _ in 0..n_classes {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(path, "class name is not UTF-8"))?;
            class_names.push(name.to_owned());
        }
        let per = height * width;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let class_id = r.u32()? as u32;
            if class_id as usize >= n_classes {
                return Err(Error::format(path, format!("class id {class_id} outside the header's {n_classes}")));
            }
            records.push(DatasetRecord {
                class_id,
                initial_angle: r.f32()?,
                bandwidth: r.f32()?,
                pixels: r.f32s(per)?,
            });
        }
        r.finish()?;
        Ok(DatasetFile {
            height,
            width,
            class_names,
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

impl CheckpointFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Network::from_params(self.spec.clone(), self.params.clone())?;
        let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
        w.u32(VERSION as usize)?;
        for d in self.spec.input {
            w.u32(d)?;
        }
        for widths in [&self.spec.conv_maps, &self.spec.dense] {
            w.u32(widths.len())?;
            for &m in widths.iter() {
                w.u32(m)?;
            }
        }
        w.u64(self.seed);
        w.u64(self.epoch);
        w.u32(self.params.len())?;
        for p in &self.params {
            w.u32(p.len())?;
            w.f32s(p.data());
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        r.header(CHECKPOINT_MAGIC)?;
        let input = [r.u32()?, r.u32()?, r.u32()?];
        let list = |r: &mut Reader| -> Result<Vec<usize>> {
            let n = r.u32()?;
            if n > 64 {
                return Err(Error::format(path, "implausible layer count"));
            }
            (0..n).map(|_| r.u32()).collect()
        };
        let conv_maps = list(&mut r)?;
        let dense = list(&mut r)?;
        let spec = NetworkSpec {
            input,
            conv_maps,
            dense,
        };
        spec.validate().map_err(|e| Error::format(path, e.to_string()))?;
        let seed = r.u64()?;
        let epoch = r.u64()?;
        let shapes = spec.param_shapes();
        if r.u32()? != shapes.len() {
            return Err(Error::format(path, "tensor count does not match the network spec"));
        }
        let mut params = Vec::with_capacity(shapes.len());
        for shape in &shapes {
            let len = r.u32()?;
            if len != shape.iter().product::<usize>() {
                return Err(Error::format(path, format!("tensor of {len} values cannot have shape {shape:?}")));
            }
            params.push(Tensor::new(shape, r.f32s(len)?)?);
        }
        r.finish()?;
        Ok(CheckpointFile {
            spec,
            seed,
            epoch,
            params,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dataset() -> DatasetFile {
        DatasetFile {
            height: 2,
            width: 3,
            class_names: vec!["Plane".into(), "UAV".into(), "Y20".into()],
            records: (0..4)
                .map(|i| DatasetRecord {
                    class_id: i % 3,
                    initial_angle: 0.1 * i as f32,
                    bandwidth: 8e9,
                    pixels: (0..6).map(|p| (p * i) as f32 / 30.0).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn dataset_round_trip() {
        let ds = sample_dataset();
        let bytes = ds.to_bytes().unwrap();
        assert!(bytes.starts_with(b"ISARDS1"));
        assert_eq!(DatasetFile::from_bytes(&bytes, Path::new("mem")).unwrap(), ds);
    }

    #[test]
    fn corrupt_dataset_is_rejected() {
        let bytes = sample_dataset().to_bytes().unwrap();
        let p = Path::new("mem");
        assert!(matches!(DatasetFile::from_bytes(&bytes[..bytes.len() - 1], p), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(DatasetFile::from_bytes(&bad, p).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(DatasetFile::from_bytes(&extra, p).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Network::<f32>::new(NetworkSpec::reduced(), 3).unwrap();
        let ckpt = CheckpointFile::from_network(&net, 3, 17);
        let bytes = ckpt.to_bytes().unwrap();
        let back = CheckpointFile::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.network().unwrap(), net);
        assert!(CheckpointFile::from_bytes(&bytes[..bytes.len() - 4], Path::new("mem")).is_err());
    }
}
