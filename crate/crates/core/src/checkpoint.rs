//! Model checkpoint file format.
//!
//! Layout: magic `MRCPCKPT`, format version u32, then one record per
//! parameter — name length u32, name bytes, rank u32, dims u32×rank,
//! f64 little-endian payload — and a trailing CRC32 of all prior bytes.
//! Records are written in sorted name order, so identical parameter stores
//! serialize to identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::ParamStore;
use crate::tensor::Tensor;
use crate::wire;

pub const MAGIC: &[u8; 8] = b"MRCPCKPT";
pub const VERSION: u32 = 1;

pub fn encode(store: &ParamStore<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    wire::put_u32(&mut buf, VERSION);
    for (name, tensor) in store.iter() {
        wire::put_u32(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        wire::put_u32(&mut buf, tensor.shape().len() as u32);
        for &d in tensor.shape() {
            wire::put_u32(&mut buf, d as u32);
        }
        for &v in tensor.data() {
            wire::put_f64(&mut buf, v);
        }
    }
    wire::seal_envelope(&mut buf);
    buf
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor<f64>)>> {
    let body = wire::open_envelope(bytes, MAGIC, VERSION)?;
    let mut r = wire::Reader::new(body);
    let mut records = Vec::new();
    while r.remaining() > 0 {
        let name_len = r.u32("parameter name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "parameter name")?.to_vec())
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let rank = r.u32("parameter rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("parameter dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64("parameter payload")?);
        }
        records.push((name, Tensor::from_vec(shape, data)?));
    }
    Ok(records)
}

pub fn save(store: &ParamStore<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(store))?;
    Ok(())
}

/// Load checkpoint records into an already-constructed store. Every record
/// must match an existing parameter by name and shape, and every parameter
/// must be covered; anything else is a configuration mismatch.
pub fn load_into(store: &mut ParamStore<f64>, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    let records = decode(&bytes)?;
    if records.len() != store.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} parameters, model expects {}",
            records.len(),
            store.len()
        )));
    }
    for (name, tensor) in records {
        let target = store.get_mut(&name).map_err(|_| {
            Error::Config(format!("checkpoint parameter {name} unknown to the model"))
        })?;
        if target.shape() != tensor.shape() {
            return Err(Error::Config(format!(
                "checkpoint parameter {name} has shape {:?}, model expects {:?}",
                tensor.shape(),
                target.shape()
            )));
        }
        target.data_mut().copy_from_slice(tensor.data());
    }
    Ok(())
}
