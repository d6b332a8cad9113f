//! OVAT checkpoints.
//!
//! ```text
//! "OVAT" | u32 version | u32 n | n bytes of key=value config text
//! u32 tensor count
//! per tensor: u32 name length | name | u32 rank | rank × u64 dims | f64 payload
//! ```
//!
//! Integers and floats are little-endian. Momentum buffers are stored as
//! `momentum/<name>`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Model, ModelParams, TrainConfig};
use crate::data::ByteReader;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const OVAT_MAGIC: &[u8; 4] = b"OVAT";
pub const OVAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, m: &Matrix) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, 2)?;
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

pub fn encode(model: &Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(OVAT_MAGIC);
    out.extend_from_slice(&OVAT_VERSION.to_le_bytes());
    let text = model.config.to_text();
    put_u32(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    let p = &model.params;
    let names = p.names();
    put_u32(&mut out, 2 * names.len())?;
    for (name, t) in names.iter().zip(p.tensors()) {
        put_tensor(&mut out, name, t)?;
    }
    for (name, b) in names.iter().zip(&p.momentum) {
        put_tensor(&mut out, &format!("momentum/{name}"), b)?;
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != OVAT_MAGIC {
        return Err(r.error_at(0, format!("bad magic {magic:?}, expected \"OVAT\"")));
    }
    let version = r.u32("version")?;
    if version != OVAT_VERSION {
        return Err(r.error_at(4, format!("unsupported version {version}")));
    }
    let len = r.u32("config length")? as usize;
    let at = r.pos() as u64;
    let text = std::str::from_utf8(r.take(len, "config")?).map_err(|e| r.error_at(at, format!("config is not UTF-8: {e}")))?;
    let config = TrainConfig::from_text(text).map_err(|e| r.error_at(at, format!("config block: {e}")))?;

    let count = r.u32("tensor count")? as usize;
    let mut found: HashMap<String, (u64, Matrix)> = HashMap::new();
    for _ in 0..count {
        let at = r.pos() as u64;
        let n = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(n, "name")?.to_vec()).map_err(|_| r.error_at(at, "tensor name is not UTF-8".into()))?;
        let rank = r.u32("rank")?;
        if rank != 2 {
            return Err(r.error_at(at, format!("{name}: rank {rank}, expected 2")));
        }
        let rows = r.u64("dims")? as usize;
        let cols = r.u64("dims")? as usize;
        let size = rows.checked_mul(cols).filter(|s| s.checked_mul(8).is_some_and(|b| b <= r.remaining()));
        let Some(size) = size else {
            return Err(r.error_at(r.pos() as u64, format!("{name}: {rows}x{cols} payload does not fit")));
        };
        let data = r
            .take(size * 8, "payload")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let m = Matrix::from_vec(rows, cols, data)?;
        if found.insert(name.clone(), (at, m)).is_some() {
            return Err(r.error_at(at, format!("duplicate tensor {name}")));
        }
    }
    if r.remaining() != 0 {
        return Err(r.error_at(r.pos() as u64, format!("{} trailing bytes", r.remaining())));
    }

    let mut params = ModelParams::init(&TrainConfig { seed: 0, ..config.clone() })?;
    let names = params.names();
    let mut take = |name: &str, like: &Matrix| -> Result<Matrix> {
        let (at, m) = found
            .remove(name)
            .ok_or_else(|| Error::Format { offset: bytes.len() as u64, message: format!("missing tensor {name}") })?;
        if m.shape() != like.shape() {
            return Err(Error::Format {
                offset: at,
                message: format!("{name}: shape {:?}, expected {:?}", m.shape(), like.shape()),
            });
        }
        Ok(m)
    };
    let values: Vec<Matrix> =
        names.iter().zip(params.tensors()).map(|(n, t)| take(n, t)).collect::<Result<_>>()?;
    let momentum: Vec<Matrix> =
        names.iter().zip(&params.momentum).map(|(n, b)| take(&format!("momentum/{n}"), b)).collect::<Result<_>>()?;
    if let Some((name, (at, _))) = found.into_iter().next() {
        return Err(Error::Format { offset: at, message: format!("unexpected tensor {name}") });
    }
    params = params.with_values(&values)?;
    params.momentum = momentum;
    Model::from_parts(config, params)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    decode(&fs::read(path)?)
}
