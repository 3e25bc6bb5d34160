//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TRIF1"
//! u32 config_len, config_len bytes of `key=value\n` lines
//! u32 record_count
//! record_count × { u32 name_len, name, u32 rank, rank × u64 dim, numel × f64 }
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{TriformerConfig, TriformerModel};
use crate::error::{Result, TriformerError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"TRIF1";

fn bad(msg: impl Into<String>) -> TriformerError {
    TriformerError::Checkpoint(msg.into())
}

fn io_err(e: std::io::Error) -> TriformerError {
    TriformerError::Checkpoint(e.to_string())
}

/// Serializes a config block and named tensors.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    config: &BTreeMap<String, String>,
    records: &[(&str, &Tensor)],
) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    let mut block = String::new();
    for (k, v) in config {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(bad(format!("config entry {k:?} cannot be serialized")));
        }
        block.push_str(k);
        block.push('=');
        block.push_str(v);
        block.push('\n');
    }
    w.write_all(&(block.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(block.as_bytes()).map_err(io_err)?;
    w.write_all(&(records.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, tensor) in records {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes()).map_err(io_err)?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes()).map_err(io_err)?;
        }
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(u64::from_le_bytes(buf))
}

/// Config block and named tensors of a checkpoint container.
pub type CheckpointContents = (BTreeMap<String, String>, Vec<(String, Tensor)>);

/// Parses a container into its config block and named tensors.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<CheckpointContents> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let len = read_u32(&mut r)? as usize;
    let mut block = vec![0u8; len];
    r.read_exact(&mut block).map_err(io_err)?;
    let block = String::from_utf8(block).map_err(|_| bad("config block is not UTF-8"))?;
    let mut config = BTreeMap::new();
    for line in block.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed config line {line:?}")))?;
        config.insert(k.to_string(), v.to_string());
    }

    let count = read_u32(&mut r)? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| bad("record name is not UTF-8"))?;
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > 8 {
            return Err(bad(format!("record {name} has unsupported rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 8];
        r.read_exact(&mut bytes).map_err(io_err)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| bad(format!("record {name}: {e}")))?;
        records.push((name, tensor));
    }
    Ok((config, records))
}

pub fn save_checkpoint(path: &Path, model: &TriformerModel) -> Result<()> {
    let file = File::create(path).map_err(|e| TriformerError::io(path, e))?;
    let records: Vec<(&str, &Tensor)> = model
        .params()
        .iter()
        .map(|p| (p.name.as_str(), &p.value))
        .collect();
    write_checkpoint(BufWriter::new(file), &model.config().to_kv(), &records)
}

/// Rebuilds the model described by the checkpoint's config and installs the
/// stored parameter values. Every parameter must be present with its exact
/// shape.
pub fn load_checkpoint(path: &Path) -> Result<TriformerModel> {
    let file = File::open(path).map_err(|e| TriformerError::io(path, e))?;
    let (config, records) = read_checkpoint(BufReader::new(file))?;
    let cfg = TriformerConfig::from_kv(&config)?;
    let mut model = TriformerModel::new(cfg)?;
    if records.len() != model.params().len() {
        return Err(bad(format!(
            "checkpoint has {} tensors, model expects {}",
            records.len(),
            model.params().len()
        )));
    }
    let store = model.params_mut();
    for (name, tensor) in records {
        let id = store
            .find(&name)
            .ok_or_else(|| bad(format!("unexpected tensor {name}")))?;
        let param = store.get_mut(id);
        if param.value.shape() != tensor.shape() {
            return Err(bad(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                tensor.shape(),
                param.value.shape()
            )));
        }
        param.value = tensor;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_is_bit_exact() {
        let t = Tensor::new(&[2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap();
        let mut cfg = BTreeMap::new();
        cfg.insert("h".to_string(), "12".to_string());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &[("w", &t)]).unwrap();
        assert_eq!(&buf[..5], b"TRIF1");
        let (back_cfg, records) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back_cfg, cfg);
        assert_eq!(records[0].0, "w");
        let bits: Vec<u64> = records[0].1.data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        assert!(read_checkpoint(&b"TRIF2\0\0\0\0"[..]).is_err());
        let t = Tensor::zeros(&[3]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &BTreeMap::new(), &[("x", &t)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
