//! Checkpoint container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic (8 bytes) | version | metadata length | metadata (JSON)
//! tensor count | per tensor: name length, name, rows, cols
//! tensor data as little-endian f32, row-major, in table order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GraspCvae, NetShape};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"FGCVAE\r\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    hand_id: String,
    shape: NetShape,
    hand_subsample: Vec<usize>,
}

fn put(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("truncated file".into())
    } else {
        Error::Io(e)
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("size {n} does not fit the format")))
}

pub fn write_checkpoint<W: Write>(mut w: W, net: &GraspCvae) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    put(&mut w, CHECKPOINT_VERSION)?;
    let meta = serde_json::to_vec(&Metadata {
        hand_id: net.hand_id.clone(),
        shape: net.shape.clone(),
        hand_subsample: net.hand_subsample.clone(),
    })?;
    put(&mut w, len_u32(meta.len())?)?;
    w.write_all(&meta)?;
    let layout = net.shape.layout();
    put(&mut w, len_u32(layout.len())?)?;
    for (name, (r, c)) in &layout {
        put(&mut w, len_u32(name.len())?)?;
        w.write_all(name.as_bytes())?;
        put(&mut w, len_u32(*r)?)?;
        put(&mut w, len_u32(*c)?)?;
    }
    for p in &net.params {
        for v in p.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<GraspCvae> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a grasp network checkpoint".into()));
    }
    let version = get(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "schema version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let meta_len = get(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta).map_err(truncated)?;
    let meta: Metadata =
        serde_json::from_slice(&meta).map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    let layout = meta.shape.layout();
    let count = get(&mut r)? as usize;
    if count != layout.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, the architecture needs {}",
            layout.len()
        )));
    }
    for (name, (rows, cols)) in &layout {
        let n = get(&mut r)? as usize;
        let mut stored = vec![0u8; n];
        r.read_exact(&mut stored).map_err(truncated)?;
        let (sr, sc) = (get(&mut r)? as usize, get(&mut r)? as usize);
        if stored != name.as_bytes() || (sr, sc) != (*rows, *cols) {
            return Err(Error::Checkpoint(format!(
                "tensor {:?} {sr}×{sc} does not match {name:?} {rows}×{cols}",
                String::from_utf8_lossy(&stored)
            )));
        }
    }
    let mut params = Vec::with_capacity(layout.len());
    let mut buf = [0u8; 4];
    for (_, (rows, cols)) in &layout {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf).map_err(truncated)?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        params.push(Array2::from_shape_vec((*rows, *cols), data).expect("shape from layout"));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(GraspCvae {
        shape: meta.shape,
        hand_id: meta.hand_id,
        hand_subsample: meta.hand_subsample,
        params,
    })
}

pub fn save_checkpoint(path: &Path, net: &GraspCvae) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
    write_checkpoint(std::io::BufWriter::new(f), net)
}

pub fn load_checkpoint(path: &Path) -> Result<GraspCvae> {
    let f = std::fs::File::open(path).map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
    read_checkpoint(std::io::BufReader::new(f))
}
