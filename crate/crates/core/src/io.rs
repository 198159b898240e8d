//! TNSR tensor files, label manifests and model files.
//!
//! TNSR layout, all little-endian: `b"TNSR"`, `u32` version (1), `u32` scalar
//! code (1 = f64), `u32` order, `order x u64` dims, then the f64 payload in
//! storage order (mode 1 fastest).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classify::TrainedModel;
use crate::discriminant::{Conditioning, DiscriminantModel, MatrixLdaModel, Method};
use crate::error::{Error, Result};
use crate::robust::RobustParams;
use crate::tensor::DenseTensor;
use crate::transforms::TransformSpec;

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u32 = 1;
pub const SCALAR_F64: u32 = 1;

const CHUNK: usize = 1 << 16;

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

/// Reads exactly `buf.len()` bytes, returning how many arrived before EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

struct HeaderReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> HeaderReader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        let got = read_full(&mut self.inner, &mut buf)?;
        if got < N {
            return Err(format_err(
                self.offset + got as u64,
                format!("unexpected end of file reading {what}"),
            ));
        }
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>(what)?))
    }
}

pub fn read_tensor_from(reader: impl Read) -> Result<DenseTensor> {
    let mut h = HeaderReader {
        inner: reader,
        offset: 0,
    };
    let magic = h.bytes::<4>("magic")?;
    if &magic != MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}, expected \"TNSR\"")));
    }
    let version = h.u32("version")?;
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let code = h.u32("scalar code")?;
    if code != SCALAR_F64 {
        return Err(format_err(8, format!("unsupported scalar code {code}")));
    }
    let order_at = h.offset;
    let order = h.u32("order")? as usize;
    if order < 2 {
        return Err(format_err(order_at, format!("tensor order {order} is below 2")));
    }
    let mut dims = Vec::with_capacity(order);
    let mut count: usize = 1;
    for k in 0..order {
        let at = h.offset;
        let d = h.u64("dims")?;
        let d = usize::try_from(d).map_err(|_| format_err(at, format!("dimension {d} too large")))?;
        if d == 0 && k != 1 {
            return Err(format_err(at, format!("mode {} has zero length", k + 1)));
        }
        count = count
            .checked_mul(d)
            .filter(|c| c.checked_mul(8).is_some())
            .ok_or_else(|| format_err(at, "element count overflows"))?;
        dims.push(d);
    }

    let header_len = h.offset;
    let expected = count as u64 * 8;
    let mut data = Vec::with_capacity(count.min(CHUNK * 16));
    let mut buf = vec![0u8; CHUNK * 8];
    let mut remaining = count;
    let mut inner = h.inner;
    while remaining > 0 {
        let want = remaining.min(CHUNK) * 8;
        let got = read_full(&mut inner, &mut buf[..want])?;
        data.extend(
            buf[..got - got % 8]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))),
        );
        if got < want {
            let actual = data.len() as u64 * 8 + (got % 8) as u64;
            return Err(format_err(
                header_len + actual,
                format!("truncated payload: expected {expected} bytes, found {actual}"),
            ));
        }
        remaining -= want / 8;
    }
    let mut probe = [0u8; 1];
    if read_full(&mut inner, &mut probe)? != 0 {
        return Err(format_err(
            header_len + expected,
            format!("trailing bytes after the {expected}-byte payload"),
        ));
    }
    DenseTensor::new(dims, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    read_tensor_from(BufReader::new(File::open(path)?))
}

pub fn write_tensor_to(mut w: impl Write, a: &DenseTensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&SCALAR_F64.to_le_bytes())?;
    w.write_all(&(a.order() as u32).to_le_bytes())?;
    for &d in a.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for chunk in a.data().chunks(CHUNK) {
        let bytes: Vec<u8> = chunk.iter().flat_map(|x| x.to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tensor(path: impl AsRef<Path>, a: &DenseTensor) -> Result<()> {
    write_tensor_to(BufWriter::new(File::create(path)?), a)
}

/// Parses `index,label` lines (optional header) into labels ordered by index.
pub fn parse_labels(reader: impl BufRead) -> Result<Vec<String>> {
    let mut by_index: BTreeMap<usize, String> = BTreeMap::new();
    let mut first = true;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Manifest(format!("line {}: expected \"index,label\"", lineno + 1)))?;
        let idx = match idx.trim().parse::<usize>() {
            Ok(i) => i,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(_) => {
                return Err(Error::Manifest(format!(
                    "line {}: bad index {:?}",
                    lineno + 1,
                    idx.trim()
                )))
            }
        };
        first = false;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::Manifest(format!("line {}: empty label", lineno + 1)));
        }
        if by_index.insert(idx, label.to_string()).is_some() {
            return Err(Error::Manifest(format!(
                "line {}: duplicate index {idx}",
                lineno + 1
            )));
        }
    }
    let n = by_index.len();
    if let Some((&last, _)) = by_index.last_key_value() {
        if last >= n {
            let missing = (0..n).find(|i| !by_index.contains_key(i)).unwrap_or(n);
            return Err(Error::Manifest(format!("missing index {missing}")));
        }
    }
    Ok(by_index.into_values().collect())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    parse_labels(BufReader::new(File::open(path)?))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()?;
    Ok(())
}

const MODEL_FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    format: u32,
    method: Method,
    p: usize,
    kappa_threshold: f64,
    energy: f64,
    lambda_floor_ratio: f64,
    class_ids: Vec<String>,
    train_labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transform: Option<TransformSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditioning: Option<Conditioning>,
}

/// Sidecar paths for a model written to `path`: training projections and
/// TOML metadata.
pub fn model_sidecars(path: &Path) -> (PathBuf, PathBuf) {
    let with = |suffix: &str| {
        let mut s = path.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with(".train.tnsr"), with(".meta.toml"))
}

fn matrix_to_tensor(m: &DMatrix<f64>) -> Result<DenseTensor> {
    DenseTensor::new(vec![m.nrows(), m.ncols()], m.as_slice().to_vec())
}

fn tensor_to_matrix(t: &DenseTensor, what: &str) -> Result<DMatrix<f64>> {
    if t.order() != 2 {
        return Err(Error::Metadata(format!("{what} must be a matrix, got dims {:?}", t.dims())));
    }
    Ok(DMatrix::from_column_slice(t.dims()[0], t.dims()[1], t.data()))
}

/// Writes the projection to `path` plus two sidecars (see [`model_sidecars`]).
pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    let (train_path, meta_path) = model_sidecars(path);
    let meta = match model {
        TrainedModel::Tensor(m) => {
            let params = m.robust.unwrap_or(RobustParams {
                kappa_threshold: m.conditioning.before.threshold,
                ..RobustParams::default()
            });
            write_tensor(path, &m.projection)?;
            write_tensor(&train_path, &m.train_projections)?;
            ModelMeta {
                format: MODEL_FORMAT,
                method: m.method,
                p: m.p,
                kappa_threshold: params.kappa_threshold,
                energy: params.energy,
                lambda_floor_ratio: params.lambda_floor_ratio,
                class_ids: m.class_ids.clone(),
                train_labels: m.train_labels.clone(),
                sample_dims: None,
                transform: Some(m.spec.clone()),
                conditioning: Some(m.conditioning.clone()),
            }
        }
        TrainedModel::Matrix(m) => {
            let params = RobustParams::default();
            write_tensor(path, &matrix_to_tensor(&m.projection)?)?;
            write_tensor(&train_path, &matrix_to_tensor(&m.train_projections)?)?;
            ModelMeta {
                format: MODEL_FORMAT,
                method: Method::MatrixLda,
                p: m.p,
                kappa_threshold: params.kappa_threshold,
                energy: params.energy,
                lambda_floor_ratio: params.lambda_floor_ratio,
                class_ids: m.class_ids.clone(),
                train_labels: m.train_labels.clone(),
                sample_dims: Some(m.sample_dims.clone()),
                transform: None,
                conditioning: None,
            }
        }
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Metadata(e.to_string()))?;
    std::fs::write(meta_path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let (train_path, meta_path) = model_sidecars(path);
    let text = std::fs::read_to_string(&meta_path)?;
    let meta: ModelMeta = toml::from_str(&text).map_err(|e| Error::Metadata(e.to_string()))?;
    if meta.format != MODEL_FORMAT {
        return Err(Error::Metadata(format!("unsupported model format {}", meta.format)));
    }
    let projection = read_tensor(path)?;
    let train = read_tensor(&train_path)?;
    if train.dims()[1] != meta.train_labels.len() {
        return Err(Error::Metadata(format!(
            "{} training labels for {} training projections",
            meta.train_labels.len(),
            train.dims()[1]
        )));
    }
    let missing = |field: &str| Error::Metadata(format!("missing field {field} for {}", meta.method));
    Ok(match meta.method {
        Method::Homlda | Method::Rhomlda => {
            let spec = meta.transform.ok_or_else(|| missing("transform"))?;
            let conditioning = meta.conditioning.ok_or_else(|| missing("conditioning"))?;
            if projection.dims()[1] != meta.p || train.dims()[0] != meta.p {
                return Err(Error::Metadata("projection shapes disagree with p".into()));
            }
            let robust = (meta.method == Method::Rhomlda).then_some(RobustParams {
                kappa_threshold: meta.kappa_threshold,
                energy: meta.energy,
                lambda_floor_ratio: meta.lambda_floor_ratio,
            });
            TrainedModel::Tensor(DiscriminantModel {
                projection,
                p: meta.p,
                spec,
                method: meta.method,
                class_ids: meta.class_ids,
                robust,
                conditioning,
                train_projections: train,
                train_labels: meta.train_labels,
            })
        }
        Method::MatrixLda => {
            let sample_dims = meta.sample_dims.ok_or_else(|| missing("sample_dims"))?;
            TrainedModel::Matrix(MatrixLdaModel {
                projection: tensor_to_matrix(&projection, "projection")?,
                p: meta.p,
                class_ids: meta.class_ids,
                sample_dims,
                train_projections: tensor_to_matrix(&train, "training projections")?,
                train_labels: meta.train_labels,
            })
        }
    })
}
