//! Versioned binary container for trained driver sensors.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header, then the float blocks listed in the header as little-endian
//! `f64` values, in order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cvae::{Cvae, CvaeSensor, CvaeShape};
use crate::driver_models::{
    DriverSensor, DriverSensorOutput, FeatureFrame, Gmm, GmmSensor, KMeans, KMeansSensor, OccupancyTable,
    SensorKind, Standardizer, Trajectory,
};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub const MAGIC: [u8; 8] = *b"GGRIDMDL";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: u32 = 1 << 24;

/// Any trained driver sensor.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum SensorModel<T> {
    KMeans(KMeansSensor<T>),
    Gmm(GmmSensor<T>),
    Cvae(CvaeSensor<T>),
}

impl<T: Real> DriverSensor<T> for SensorModel<T> {
    fn kind(&self) -> SensorKind {
        match self {
            SensorModel::KMeans(s) => s.kind(),
            SensorModel::Gmm(s) => s.kind(),
            SensorModel::Cvae(s) => s.kind(),
        }
    }

    fn k(&self) -> usize {
        match self {
            SensorModel::KMeans(s) => s.k(),
            SensorModel::Gmm(s) => s.k(),
            SensorModel::Cvae(s) => s.k(),
        }
    }

    fn infer(&self, trajectory: &Trajectory) -> Result<DriverSensorOutput<T>> {
        match self {
            SensorModel::KMeans(s) => s.infer(trajectory),
            SensorModel::Gmm(s) => s.infer(trajectory),
            SensorModel::Cvae(s) => s.infer(trajectory),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: SensorKind,
    k: usize,
    frame: FeatureFrame,
    resolution: f64,
    feature_dim: usize,
    /// Driver grid `(height, width)`.
    grid: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cvae: Option<CvaeShape>,
    blocks: Vec<BlockInfo>,
}

#[derive(Default)]
struct Blocks {
    info: Vec<BlockInfo>,
    data: Vec<f64>,
}

impl Blocks {
    fn push<T: Real>(&mut self, name: &str, shape: Vec<usize>, values: impl IntoIterator<Item = T>) {
        let before = self.data.len();
        self.data
            .extend(values.into_iter().map(|v| v.to_f64().expect("real scalar converts to f64")));
        debug_assert_eq!(self.data.len() - before, shape.iter().product::<usize>());
        self.info.push(BlockInfo {
            name: name.to_string(),
            shape,
        });
    }

    fn push_standardizer<T: Real>(&mut self, s: &Standardizer<T>) {
        self.push("standardizer.mean", vec![s.dim()], s.mean().iter().copied());
        self.push("standardizer.std", vec![s.dim()], s.std().iter().copied());
    }

    fn push_table<T: Real>(&mut self, t: &OccupancyTable<T>) {
        let (h, w) = t.dims();
        self.push("table.rows", vec![t.k(), h * w], t.rows().iter().flatten().copied());
        self.push(
            "table.empty",
            vec![t.k()],
            t.empty_flags().iter().map(|&e| if e { T::one() } else { T::zero() }),
        );
    }
}

fn matrix<T: Copy>(rows: &[Vec<T>]) -> (Vec<usize>, impl Iterator<Item = T> + '_) {
    let cols = rows.first().map_or(0, Vec::len);
    (vec![rows.len(), cols], rows.iter().flatten().copied())
}

fn unfitted() -> Error {
    Error::Unfitted
}

/// Serializes a sensor into the container format.
pub fn write_model<T: Real, W: Write>(model: &SensorModel<T>, mut out: W) -> Result<()> {
    let mut blocks = Blocks::default();
    let (frame, resolution, feature_dim, grid, cvae) = match model {
        SensorModel::KMeans(s) => {
            let (frame, st, km, table, res) = s.parts().ok_or_else(unfitted)?;
            blocks.push_standardizer(st);
            let (shape, values) = matrix(km.centroids());
            blocks.push("kmeans.centroids", shape, values);
            blocks.push_table(table);
            (frame, res, st.dim(), table.dims(), None)
        }
        SensorModel::Gmm(s) => {
            let (frame, st, gmm, table, res) = s.parts().ok_or_else(unfitted)?;
            blocks.push_standardizer(st);
            blocks.push("gmm.weights", vec![gmm.k()], gmm.weights().iter().copied());
            let (shape, values) = matrix(gmm.means());
            blocks.push("gmm.means", shape, values);
            let (shape, values) = matrix(gmm.variances());
            blocks.push("gmm.variances", shape, values);
            blocks.push_table(table);
            (frame, res, st.dim(), table.dims(), None)
        }
        SensorModel::Cvae(s) => {
            blocks.push_standardizer(s.standardizer());
            let m = s.model();
            for slot in m.layout().slots() {
                blocks.push(
                    &format!("cvae.{}", slot.name),
                    slot.shape.clone(),
                    m.params()[slot.offset..slot.offset + slot.len()].iter().copied(),
                );
            }
            let shape = *m.shape();
            (
                s.frame(),
                s.resolution(),
                s.standardizer().dim(),
                (shape.grid_height, shape.grid_width),
                Some(shape),
            )
        }
    };
    let header = Header {
        kind: model.kind(),
        k: model.k(),
        frame,
        resolution: resolution.to_f64().unwrap_or(f64::NAN),
        feature_dim,
        grid,
        cvae,
        blocks: blocks.info,
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(&MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for v in &blocks.data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Float blocks of a parsed container, consumed by name.
struct Loaded {
    blocks: Vec<(BlockInfo, Vec<f64>)>,
}

impl Loaded {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let pos = self
            .blocks
            .iter()
            .position(|(b, _)| b.name == name)
            .ok_or_else(|| Error::Format(format!("missing block {name}")))?;
        let (info, data) = self.blocks.remove(pos);
        if info.shape != shape {
            return Err(Error::Format(format!(
                "block {name} has shape {:?}, expected {shape:?}",
                info.shape
            )));
        }
        Ok(data)
    }

    fn take_vec<T: Real>(&mut self, name: &str, len: usize) -> Result<Vec<T>> {
        Ok(self.take(name, &[len])?.into_iter().map(lit).collect())
    }

    fn take_rows<T: Real>(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<Vec<T>>> {
        let flat = self.take(name, &[rows, cols])?;
        Ok(flat
            .chunks(cols.max(1))
            .take(rows)
            .map(|c| c.iter().copied().map(lit).collect())
            .collect())
    }

    fn standardizer<T: Real>(&mut self, dim: usize) -> Result<Standardizer<T>> {
        let mean = self.take_vec("standardizer.mean", dim)?;
        let std = self.take_vec("standardizer.std", dim)?;
        Standardizer::from_parts(mean, std)
    }

    fn table<T: Real>(&mut self, k: usize, (h, w): (usize, usize)) -> Result<OccupancyTable<T>> {
        let rows = self.take_rows("table.rows", k, h * w)?;
        let empty = self.take("table.empty", &[k])?.into_iter().map(|v| v != 0.0).collect();
        OccupancyTable::from_rows(h, w, rows, empty)
    }
}

/// Parses a container written by [`write_model`].
pub fn read_model<T: Real, R: Read>(mut input: R) -> Result<SensorModel<T>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format("not a model file".into()));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let len = read_u32(&mut input)?;
    if len > MAX_HEADER {
        return Err(Error::Format(format!("header length {len} too large")));
    }
    let mut json = vec![0u8; len as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for info in &header.blocks {
        let n: usize = info.shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        input.read_exact(&mut bytes)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("block {} holds non-finite values", info.name)));
        }
        blocks.push((info.clone(), data));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    let mut loaded = Loaded { blocks };
    let (k, d, res) = (header.k, header.feature_dim, lit::<T>(header.resolution));
    let standardizer = loaded.standardizer::<T>(d)?;
    let model = match header.kind {
        SensorKind::KMeans => {
            let centroids = loaded.take_rows("kmeans.centroids", k, d)?;
            let table = loaded.table(k, header.grid)?;
            SensorModel::KMeans(KMeansSensor::from_parts(
                header.frame,
                standardizer,
                KMeans::from_centroids(centroids)?,
                table,
                res,
            )?)
        }
        SensorKind::Gmm => {
            let weights = loaded.take_vec("gmm.weights", k)?;
            let means = loaded.take_rows("gmm.means", k, d)?;
            let variances = loaded.take_rows("gmm.variances", k, d)?;
            let table = loaded.table(k, header.grid)?;
            SensorModel::Gmm(GmmSensor::from_parts(
                header.frame,
                standardizer,
                Gmm::from_parts(weights, means, variances)?,
                table,
                res,
            )?)
        }
        SensorKind::Cvae => {
            let shape = header
                .cvae
                .ok_or_else(|| Error::Format("cvae model without a layer table".into()))?;
            let layout = Cvae::<T>::layout_for(shape)?;
            let mut params = vec![T::zero(); layout.len()];
            for slot in layout.slots() {
                let data = loaded.take(&format!("cvae.{}", slot.name), &slot.shape)?;
                for (dst, v) in params[slot.offset..slot.offset + slot.len()].iter_mut().zip(data) {
                    *dst = lit(v);
                }
            }
            if shape.k != k {
                return Err(Error::Format("layer table disagrees with K".into()));
            }
            SensorModel::Cvae(CvaeSensor::from_parts(
                header.frame,
                standardizer,
                Cvae::from_params(shape, params)?,
                res,
            )?)
        }
    };
    if let Some((info, _)) = loaded.blocks.first() {
        return Err(Error::Format(format!("unexpected block {}", info.name)));
    }
    Ok(model)
}

pub fn save_model<T: Real>(model: &SensorModel<T>, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model<T: Real>(path: &Path) -> Result<SensorModel<T>> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::TrainConfig;
    use crate::driver_models::{DriverState, GmmConfig, KMeansConfig, HISTORY_LEN};
    use crate::ogm::{GridPose, OccupancyGrid};

    fn data() -> (Vec<Trajectory>, Vec<OccupancyGrid<f64>>) {
        let trajs = (0..12)
            .map(|i| {
                let v = 2.0 + (i % 3) as f64 * 4.0;
                Trajectory::new(
                    (0..HISTORY_LEN)
                        .map(|t| DriverState::new(v * 0.1 * t as f64, 0.1 * i as f64, 0.0, v, 0.0, 0.0, 0.0))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let grids = (0..12)
            .map(|i| {
                let cells = (0..600).map(|c| ((c + i % 3) % 4 == 0) as u8 as f64).collect();
                OccupancyGrid::new(20, 30, 1.0, GridPose::identity(), cells).unwrap()
            })
            .collect();
        (trajs, grids)
    }

    fn roundtrip(model: &SensorModel<f64>, probe: &Trajectory) {
        let mut bytes = Vec::new();
        write_model(model, &mut bytes).unwrap();
        let back: SensorModel<f64> = read_model(bytes.as_slice()).unwrap();
        // Fitting traces are not stored; everything else reproduces bit for bit.
        let mut again = Vec::new();
        write_model(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
        assert_eq!(back.infer(probe).unwrap(), model.infer(probe).unwrap());

        // Corruptions are reported, not panics.
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_model::<f64, _>(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(read_model::<f64, _>(bad.as_slice()), Err(Error::Format(_))));
        assert!(read_model::<f64, _>(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_model::<f64, _>(long.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn kmeans_roundtrip() {
        let (t, g) = data();
        let refs: Vec<&Trajectory> = t.iter().collect();
        let cfg = KMeansConfig { k: 3, ..Default::default() };
        let s = KMeansSensor::fit(&refs, &g, &cfg, FeatureFrame::DriverRelative).unwrap();
        roundtrip(&SensorModel::KMeans(s), &t[4]);
    }

    #[test]
    fn gmm_roundtrip() {
        let (t, g) = data();
        let refs: Vec<&Trajectory> = t.iter().collect();
        let cfg = GmmConfig { k: 3, ..Default::default() };
        let s = GmmSensor::fit(&refs, &g, &cfg, FeatureFrame::World).unwrap();
        roundtrip(&SensorModel::Gmm(s), &t[1]);
    }

    #[test]
    fn cvae_roundtrip() {
        let (t, g) = data();
        let refs: Vec<&Trajectory> = t.iter().collect();
        let cfg = TrainConfig { batch_size: 6, epochs: 1, ..Default::default() };
        let (s, _) = CvaeSensor::fit(&refs, &g, 3, &cfg, FeatureFrame::DriverRelative).unwrap();
        roundtrip(&SensorModel::Cvae(s), &t[2]);
    }

    #[test]
    fn unfitted_sensor_cannot_be_written() {
        let m = SensorModel::<f64>::KMeans(KMeansSensor::default());
        assert!(matches!(write_model(&m, Vec::new()), Err(Error::Unfitted)));
    }

    #[test]
    fn file_roundtrip_and_f32_load() {
        let (t, g) = data();
        let refs: Vec<&Trajectory> = t.iter().collect();
        let s = KMeansSensor::fit(&refs, &g, &KMeansConfig { k: 2, ..Default::default() }, FeatureFrame::World).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = SensorModel::KMeans(s);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model::<f64>(&path).unwrap().infer(&t[0]).unwrap(), m.infer(&t[0]).unwrap());
        let small: SensorModel<f32> = load_model(&path).unwrap();
        assert_eq!(small.k(), 2);
    }
}
