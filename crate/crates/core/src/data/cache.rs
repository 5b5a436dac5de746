//! Preprocessed dataset cache.
//!
//! Layout (little-endian): `GDSET1`, u32 record count, then per record a u8
//! class index, u16 height, u16 width and `3·H·W` f32 pixels channel-first.
//! Class names are not stored; the reader takes them from the caller.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

pub const CACHE_MAGIC: &[u8; 6] = b"GDSET1";

pub fn write_cache<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    let count = u32::try_from(dataset.len()).map_err(|_| Error::Format("too many records".into()))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (img, &label) in dataset.images().iter().zip(dataset.labels()) {
        let label = u8::try_from(label).map_err(|_| Error::Format(format!("label {label} exceeds u8")))?;
        let (c, h, w) = (img.dim(0), img.dim(1), img.dim(2));
        if c != 3 {
            return Err(Error::Shape(format!("cache records are 3-channel, got {c}")));
        }
        let dims = (u16::try_from(h), u16::try_from(w));
        let (Ok(h), Ok(w)) = dims else {
            return Err(Error::Format(format!("image {h}×{w} exceeds u16 extents")));
        };
        buf.push(label);
        buf.extend_from_slice(&h.to_le_bytes());
        buf.extend_from_slice(&w.to_le_bytes());
        for v in img.data() {
            let v: f32 = v.to_f32().unwrap_or(f32::NAN);
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("cache truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}

pub fn read_cache<T: Scalar>(path: &Path, class_names: Vec<String>) -> Result<Dataset<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(6)? != CACHE_MAGIC {
        return Err(Error::Format(format!("{} is not a dataset cache", path.display())));
    }
    let count = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
    let mut images = Vec::with_capacity(count.min(1 << 16));
    let mut labels = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        labels.push(r.take(1)?[0] as usize);
        let (h, w) = (r.u16()? as usize, r.u16()? as usize);
        let raw = r.take(3 * h * w * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| cast::<T>(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
            .collect();
        images.push(Tensor::from_vec([3, h, w], data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after cache records".into()));
    }
    Dataset::new(images, labels, class_names)
}
