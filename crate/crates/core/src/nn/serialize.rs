//! Versioned little-endian weight files.
//!
//! Layout: magic `STEGSAN\0`, format version (u32), model kind (string),
//! metadata count (u32) then key/value strings, parameter count (u32) then
//! per parameter: name, rank (u32), dims (u32 each), f32 data. Strings are a
//! u32 byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STEGSAN\0";
pub const FORMAT_VERSION: u32 = 1;

/// A serialized model: kind tag, free-form metadata and named parameters.
#[derive(Clone, Debug)]
pub struct WeightFile {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore<f32>,
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::ModelFormat("truncated file".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::ModelFormat("string too long".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)
        .map_err(|_| Error::ModelFormat("truncated file".into()))?;
    String::from_utf8(b).map_err(|_| Error::ModelFormat("invalid utf-8".into()))
}

impl WeightFile {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, FORMAT_VERSION)?;
        put_str(w, &self.kind)?;
        put_u32(w, self.meta.len() as u32)?;
        for (k, v) in &self.meta {
            put_str(w, k)?;
            put_str(w, v)?;
        }
        put_u32(w, self.params.len() as u32)?;
        for id in self.params.ids() {
            let t = self.params.value(id);
            put_str(w, self.params.name(id))?;
            put_u32(w, t.shape().len() as u32)?;
            for &d in t.shape() {
                put_u32(w, d as u32)?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::ModelFormat("truncated file".into()))?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = get_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let kind = get_str(r)?;
        let mut meta = BTreeMap::new();
        for _ in 0..get_u32(r)? {
            let k = get_str(r)?;
            meta.insert(k, get_str(r)?);
        }
        let mut params = ParamStore::new();
        for _ in 0..get_u32(r)? {
            let name = get_str(r)?;
            let rank = get_u32(r)? as usize;
            if rank > 8 {
                return Err(Error::ModelFormat("tensor rank too large".into()));
            }
            let shape = (0..rank)
                .map(|_| get_u32(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::ModelFormat("truncated tensor data".into()))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.add(name, Tensor::new(shape, data));
        }
        Ok(Self { kind, meta, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::ModelFormat(format!("missing metadata key {key}")))?
            .parse()
            .map_err(|_| Error::ModelFormat(format!("bad metadata value for {key}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::ModelFormat(format!(
                "expected a {kind} model, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Copies stored parameters into `target`, matching by position and
    /// checking names and shapes.
    pub fn load_into(&self, target: &mut ParamStore<f32>) -> Result<()> {
        if self.params.len() != target.len() {
            return Err(Error::ModelFormat(format!(
                "expected {} tensors, found {}",
                target.len(),
                self.params.len()
            )));
        }
        for (src, dst) in self.params.ids().zip(target.ids().collect::<Vec<_>>()) {
            if self.params.name(src) != target.name(dst)
                || self.params.value(src).shape() != target.value(dst).shape()
            {
                return Err(Error::ModelFormat(format!(
                    "tensor {} does not match architecture",
                    self.params.name(src)
                )));
            }
            *target.value_mut(dst) = self.params.value(src).clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let mut params = ParamStore::new();
        params.add("a", Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, 0.0]));
        params.add("b", Tensor::new(vec![1], vec![f32::MIN_POSITIVE]));
        let mut meta = BTreeMap::new();
        meta.insert("T".to_string(), "200".to_string());
        let wf = WeightFile {
            kind: "denoiser".into(),
            meta,
            params,
        };
        let mut buf = Vec::new();
        wf.write_to(&mut buf).unwrap();
        let back = WeightFile::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.kind, "denoiser");
        assert_eq!(back.meta_parse::<usize>("T").unwrap(), 200);
        assert_eq!(back.params.value(back.params.ids().nth(1).unwrap()).data(), &[f32::MIN_POSITIVE]);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(WeightFile::read_from(&mut bad.as_slice()).is_err());
        let short = &buf[..buf.len() - 2];
        assert!(WeightFile::read_from(&mut &short[..]).is_err());
        let mut v2 = buf.clone();
        v2[8] = 2;
        assert!(WeightFile::read_from(&mut v2.as_slice()).is_err());
    }
}
