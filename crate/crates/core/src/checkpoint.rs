//! Versioned binary checkpoints.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "GCKPT"  u16 version (1)  u8 model kind  u8 dtype width (4 | 8)
//! u32 descriptor length, descriptor:
//!     u32 C, u32 H, u32 W, u8 input repr
//!     u16 class count, per class: str
//!     u64 seed, u64 config hash, u16 metric count, per metric: str, f64
//!     body: network → u16 layer count, per layer: u8 tag + hyperparameters
//!           logreg  → u32 classes, u32 features
//!           knn     → u32 k, u32 classes, u32 rows, u32 label per row
//! u32 tensor count, per tensor: u8 rank, u32 per dim, elements
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! `str` is a u16 byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use crate::classical::{KnnModel, LogRegModel};
use crate::error::{Error, Result};
use crate::layers::{Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, Relu, Sequential};
use crate::model::{Classifier, InputRepr, ModelBody, ModelKind, ModelMetadata};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"GCKPT";
pub const VERSION: u16 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_DROPOUT: u8 = 4;
const TAG_FLATTEN: u8 = 5;

/// Fixed prefix: magic, version, kind, dtype.
const PREFIX_LEN: usize = 5 + 2 + 1 + 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| corrupt(format!("{v} exceeds u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn count16(&mut self, n: usize) -> Result<()> {
        let n = u16::try_from(n).map_err(|_| corrupt(format!("count {n} exceeds u16")))?;
        self.u16(n);
        Ok(())
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.count16(s.len())?;
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    fn tensor<T: Scalar>(&mut self, t: &Tensor<T>) -> Result<()> {
        self.u8(u8::try_from(t.rank()).map_err(|_| corrupt("tensor rank exceeds u8"))?);
        for &d in t.shape() {
            self.u32(d)?;
        }
        for &v in t.data() {
            v.write_le(&mut self.buf);
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated: needed {n} bytes at offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }

    fn tensor<T: Scalar>(&mut self) -> Result<Tensor<T>> {
        let rank = self.u8()? as usize;
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt("tensor shape overflows"))?;
        let width = T::DTYPE.byte_width();
        let bytes_len = count.checked_mul(width).ok_or_else(|| corrupt("tensor size overflows"))?;
        let raw = self.take(bytes_len)?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        Tensor::from_vec(shape, data)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn write_layer<T: Scalar>(w: &mut Writer, layer: &Layer<T>) -> Result<()> {
    match layer {
        Layer::Dense(d) => {
            w.u8(TAG_DENSE);
            w.u32(d.inputs())?;
            w.u32(d.outputs())?;
        }
        Layer::Conv2D(c) => {
            w.u8(TAG_CONV);
            w.u32(c.in_channels())?;
            w.u32(c.filters())?;
            w.u32(c.kernel())?;
            w.u32(c.stride())?;
        }
        Layer::MaxPool2D(p) => {
            w.u8(TAG_POOL);
            w.u32(p.pool())?;
            w.u32(p.stride())?;
        }
        Layer::Relu(_) => w.u8(TAG_RELU),
        Layer::Dropout(d) => {
            w.u8(TAG_DROPOUT);
            w.f64(d.rate());
            w.u64(d.seed());
        }
        Layer::Flatten(_) => w.u8(TAG_FLATTEN),
    }
    Ok(())
}

/// Serialized bytes of `model`; identical models give identical bytes.
pub fn to_bytes<T: Scalar>(model: &Classifier<T>) -> Result<Vec<u8>> {
    let mut d = Writer::default();
    for &dim in &model.image_shape {
        d.u32(dim)?;
    }
    d.u8(model.repr.code());
    d.count16(model.class_names.len())?;
    for name in &model.class_names {
        d.str(name)?;
    }
    d.u64(model.metadata.seed);
    d.u64(model.metadata.config_hash);
    d.count16(model.metadata.metrics.len())?;
    for (name, value) in &model.metadata.metrics {
        d.str(name)?;
        d.f64(*value);
    }
    let tensors: Vec<&Tensor<T>> = match &model.body {
        ModelBody::Network(net) => {
            d.count16(net.layers().len())?;
            for layer in net.layers() {
                write_layer(&mut d, layer)?;
            }
            net.params()
        }
        ModelBody::LogReg(m) => {
            d.u32(m.classes())?;
            d.u32(m.features())?;
            vec![m.weight(), m.bias()]
        }
        ModelBody::Knn(m) => {
            d.u32(m.k())?;
            d.u32(m.classes())?;
            d.u32(m.labels().len())?;
            for &l in m.labels() {
                d.u32(l)?;
            }
            vec![m.features()]
        }
    };

    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u8(model.kind.code());
    w.u8(T::DTYPE.code());
    w.u32(d.buf.len())?;
    w.buf.extend_from_slice(&d.buf);
    w.u32(tensors.len())?;
    for t in tensors {
        w.tensor(t)?;
    }
    let crc = crc32fast::hash(&w.buf);
    w.buf.extend_from_slice(&crc.to_le_bytes());
    Ok(w.buf)
}

/// Verifies magic, version and CRC and returns the stored element type.
pub fn inspect(bytes: &[u8]) -> Result<(ModelKind, DType)> {
    if bytes.len() < PREFIX_LEN + 4 {
        return Err(corrupt(format!("truncated: {} bytes is shorter than any checkpoint", bytes.len())));
    }
    if &bytes[..5] != MAGIC {
        return Err(corrupt("bad magic: not a gradecore checkpoint"));
    }
    let version = u16::from_le_bytes([bytes[5], bytes[6]]);
    if version != VERSION {
        return Err(corrupt(format!(
            "unsupported checkpoint version {version} (this reader handles version {VERSION})"
        )));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(corrupt(format!(
            "CRC mismatch (stored {stored:08x}, computed {actual:08x}): file is corrupt or truncated"
        )));
    }
    let kind = ModelKind::from_code(bytes[7]).ok_or_else(|| corrupt(format!("unknown model kind {}", bytes[7])))?;
    let dtype = DType::from_code(bytes[8]).ok_or_else(|| corrupt(format!("unknown dtype width {}", bytes[8])))?;
    Ok((kind, dtype))
}

fn read_layer<T: Scalar>(r: &mut Reader, tensors: &mut impl Iterator<Item = Tensor<T>>) -> Result<Layer<T>> {
    let mut next = |what: &str| tensors.next().ok_or_else(|| corrupt(format!("missing {what} tensor")));
    let expect_shape = |t: &Tensor<T>, shape: &[usize], what: &str| {
        if t.shape() == shape {
            Ok(())
        } else {
            Err(corrupt(format!("{what} tensor {:?}, descriptor says {shape:?}", t.shape())))
        }
    };
    Ok(match r.u8()? {
        TAG_DENSE => {
            let (inputs, outputs) = (r.u32()?, r.u32()?);
            let weight = next("dense weight")?;
            let bias = next("dense bias")?;
            expect_shape(&weight, &[outputs, inputs], "dense weight")?;
            Layer::Dense(Dense::new(weight, bias)?)
        }
        TAG_CONV => {
            let (c, f, k, stride) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            let filters = next("conv filters")?;
            let bias = next("conv bias")?;
            expect_shape(&filters, &[f, c, k, k], "conv filters")?;
            Layer::Conv2D(Conv2D::new(filters, bias, stride)?)
        }
        TAG_POOL => Layer::MaxPool2D(MaxPool2D::new(r.u32()?, r.u32()?)?),
        TAG_RELU => Layer::Relu(Relu::new()),
        TAG_DROPOUT => Layer::Dropout(Dropout::new(r.f64()?, r.u64()?)?),
        TAG_FLATTEN => Layer::Flatten(Flatten::new()),
        tag => return Err(corrupt(format!("unknown layer tag {tag}"))),
    })
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Classifier<T>> {
    let (kind, dtype) = inspect(bytes)?;
    if dtype != T::DTYPE {
        return Err(corrupt(format!(
            "checkpoint stores {dtype:?} parameters, reader expects {:?}",
            T::DTYPE
        )));
    }
    let mut r = Reader {
        bytes: &bytes[..bytes.len() - 4],
        pos: PREFIX_LEN,
    };
    let desc_len = r.u32()?;
    let mut d = Reader {
        bytes: r.take(desc_len)?,
        pos: 0,
    };
    let count = r.u32()?;
    let tensors = (0..count).map(|_| r.tensor::<T>()).collect::<Result<Vec<_>>>()?;
    if !r.done() {
        return Err(corrupt("trailing bytes after parameter tensors"));
    }

    let image_shape = [d.u32()?, d.u32()?, d.u32()?];
    let repr_code = d.u8()?;
    let repr = InputRepr::from_code(repr_code).ok_or_else(|| corrupt(format!("unknown input repr {repr_code}")))?;
    let class_names = (0..d.u16()?).map(|_| d.str()).collect::<Result<Vec<_>>>()?;
    let seed = d.u64()?;
    let config_hash = d.u64()?;
    let metrics = (0..d.u16()?)
        .map(|_| Ok((d.str()?, d.f64()?)))
        .collect::<Result<Vec<_>>>()?;

    let mut tensors = tensors.into_iter();
    let body = match kind {
        ModelKind::Mlp | ModelKind::Cnn => {
            let layers = (0..d.u16()?)
                .map(|_| read_layer(&mut d, &mut tensors))
                .collect::<Result<Vec<_>>>()?;
            let net = Sequential::new(layers);
            let out = net.audit(&input_shape(kind, image_shape))?;
            if out != [class_names.len()] {
                return Err(corrupt(format!("network emits {out:?} for {} classes", class_names.len())));
            }
            ModelBody::Network(net)
        }
        ModelKind::LogReg => {
            let (_classes, _features) = (d.u32()?, d.u32()?);
            let weight = tensors.next().ok_or_else(|| corrupt("missing logreg weight"))?;
            let bias = tensors.next().ok_or_else(|| corrupt("missing logreg bias"))?;
            ModelBody::LogReg(LogRegModel::from_parts(weight, bias)?)
        }
        ModelKind::Knn => {
            let (k, classes, rows) = (d.u32()?, d.u32()?, d.u32()?);
            let labels = (0..rows).map(|_| d.u32()).collect::<Result<Vec<_>>>()?;
            let features = tensors.next().ok_or_else(|| corrupt("missing knn features"))?;
            ModelBody::Knn(KnnModel::fit(features, labels, k, classes)?)
        }
    };
    if tensors.next().is_some() {
        return Err(corrupt("more tensors than the descriptor uses"));
    }
    if !d.done() {
        return Err(corrupt("trailing bytes in descriptor"));
    }
    Ok(Classifier {
        kind,
        image_shape,
        repr,
        class_names,
        body,
        metadata: ModelMetadata {
            seed,
            config_hash,
            metrics,
        },
    })
}

fn input_shape(kind: ModelKind, image: [usize; 3]) -> Vec<usize> {
    match kind {
        ModelKind::Cnn => image.to_vec(),
        _ => vec![image.iter().product()],
    }
}

pub fn save<T: Scalar>(model: &Classifier<T>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Classifier<T>> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Kind and element type of the checkpoint at `path`.
pub fn peek(path: &Path) -> Result<(ModelKind, DType)> {
    inspect(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cnn_network, mlp_network};
    use crate::rng::Rng;
    use crate::tensor::rand_uniform;

    fn cnn_model() -> Classifier<f32> {
        let mut rng = Rng::new(4);
        Classifier {
            kind: ModelKind::Cnn,
            image_shape: [3, 16, 16],
            repr: InputRepr::Pixels,
            class_names: vec!["Good".into(), "Poor".into(), "Satisfactory".into(), "Very Poor".into()],
            body: ModelBody::Network(cnn_network(&mut rng, [3, 16, 16], 4, 77).unwrap()),
            metadata: ModelMetadata {
                seed: 4,
                config_hash: 0xdead_beef,
                metrics: vec![("test_accuracy".into(), 0.75)],
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = cnn_model();
        let bytes = to_bytes(&m).unwrap();
        assert_eq!(bytes, to_bytes(&m).unwrap());
        let back: Classifier<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(back.network().unwrap().snapshot(), m.network().unwrap().snapshot());
        assert_eq!(back.class_names, m.class_names);
        assert_eq!(back.metadata, m.metadata);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption_version_and_dtype() {
        let bytes = to_bytes(&cnn_model()).unwrap();
        let mut flipped = bytes.clone();
        flipped[bytes.len() / 2] ^= 0x10;
        let err = from_bytes::<f32>(&flipped).unwrap_err().to_string();
        assert!(err.contains("CRC"), "{err}");

        let mut v2 = bytes.clone();
        v2[5] = 2;
        let err = from_bytes::<f32>(&v2).unwrap_err().to_string();
        assert!(err.contains("version 2"), "{err}");

        let err = from_bytes::<f32>(&bytes[..bytes.len() - 9]).unwrap_err().to_string();
        assert!(err.contains("CRC"), "{err}");
        assert!(from_bytes::<f32>(&bytes[..6]).unwrap_err().to_string().contains("truncated"));
        assert!(from_bytes::<f32>(b"NOTACHECKPOINT").unwrap_err().to_string().contains("magic"));
        assert!(from_bytes::<f64>(&bytes).unwrap_err().to_string().contains("F32"));
    }

    #[test]
    fn mlp_predictions_survive_round_trip() {
        let mut rng = Rng::new(8);
        let mut m = Classifier::<f64> {
            kind: ModelKind::Mlp,
            image_shape: [3, 4, 4],
            repr: InputRepr::Pixels,
            class_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            body: ModelBody::Network(mlp_network(&mut rng, 48, 6, 4).unwrap()),
            metadata: ModelMetadata::default(),
        };
        let mut back: Classifier<f64> = from_bytes(&to_bytes(&m).unwrap()).unwrap();
        let imgs: Vec<Tensor<f64>> = (0..100)
            .map(|_| rand_uniform(&mut rng, [3, 4, 4], 0.0, 1.0).unwrap())
            .collect();
        let refs: Vec<&Tensor<f64>> = imgs.iter().collect();
        assert_eq!(m.predict_proba(&refs).unwrap(), back.predict_proba(&refs).unwrap());
    }
}
