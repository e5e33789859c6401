//! Runtime files exchanged between pipeline stages.
//!
//! For superbatch `sb` with `S` batches the stages produce:
//!
//! | file                 | magic      | payload                                             |
//! |----------------------|------------|-----------------------------------------------------|
//! | `ids_{sb}_{i}.bin`   | `GXIDS001` | count u64, count x NodeId u64                       |
//! | `adj_{sb}_{i}.bin`   | `GXADJ001` | layers u64, per layer: edges u64, edges x (u32,u32) |
//! | `init_{sb}.bin`      | `GXINIT01` | count u64, count x NodeId u64 (admission order)     |
//! | `update_{sb}_{i}.bin`| `GXUPD001` | in_ids, out_ids, in_positions (each count u64 + u64s)|
//!
//! All integers are little-endian. Sampling writes `2 S` files, changeset
//! precomputation writes `S + 1`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::changeset::Changeset;
use crate::codec::{read_file, Decoder, Encoder};
use crate::{Error, NodeId, Result};

const IDS_MAGIC: &[u8; 8] = b"GXIDS001";
const ADJ_MAGIC: &[u8; 8] = b"GXADJ001";
const INIT_MAGIC: &[u8; 8] = b"GXINIT01";
const UPDATE_MAGIC: &[u8; 8] = b"GXUPD001";

/// Per-layer sampled edges as `(child_local, parent_local)` pairs.
pub type Adjacency = Vec<Vec<(u32, u32)>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FileKind {
    Ids,
    Adj,
    Init,
    Update,
}

/// Directory holding runtime files for one or more superbatches.
#[derive(Debug, Clone)]
pub struct RuntimeDir {
    root: PathBuf,
}

impl RuntimeDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids_path(&self, sb: u64, i: usize) -> PathBuf {
        self.root.join(format!("ids_{sb}_{i}.bin"))
    }

    pub fn adj_path(&self, sb: u64, i: usize) -> PathBuf {
        self.root.join(format!("adj_{sb}_{i}.bin"))
    }

    pub fn init_path(&self, sb: u64) -> PathBuf {
        self.root.join(format!("init_{sb}.bin"))
    }

    pub fn update_path(&self, sb: u64, i: usize) -> PathBuf {
        self.root.join(format!("update_{sb}_{i}.bin"))
    }

    /// Counts runtime files currently on disk, grouped by superbatch and kind.
    pub fn census(&self) -> Result<Census> {
        let mut census = Census::default();
        let entries = std::fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let name = entry.file_name();
            if let Some((kind, sb)) = name.to_str().and_then(parse_runtime_name) {
                *census.files.entry((sb, kind)).or_default() += 1;
            }
        }
        Ok(census)
    }

    /// Deletes every runtime file of superbatch `sb`; returns how many were removed.
    pub fn remove_superbatch(&self, sb: u64) -> Result<usize> {
        let mut removed = 0;
        let entries = std::fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let name = entry.file_name();
            if name
                .to_str()
                .and_then(parse_runtime_name)
                .is_some_and(|(_, s)| s == sb)
            {
                let path = entry.path();
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}

fn parse_runtime_name(name: &str) -> Option<(FileKind, u64)> {
    let stem = name.strip_suffix(".bin")?;
    let (kind, rest) = stem.split_once('_')?;
    let kind = match kind {
        "ids" => FileKind::Ids,
        "adj" => FileKind::Adj,
        "init" => FileKind::Init,
        "update" => FileKind::Update,
        _ => return None,
    };
    let sb = rest.split('_').next()?.parse().ok()?;
    Some((kind, sb))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Census {
    pub files: BTreeMap<(u64, FileKind), usize>,
}

impl Census {
    pub fn count(&self, sb: u64, kind: FileKind) -> usize {
        self.files.get(&(sb, kind)).copied().unwrap_or(0)
    }

    /// Superbatches with at least one file present.
    pub fn superbatches(&self) -> Vec<u64> {
        let mut sbs: Vec<u64> = self.files.keys().map(|&(sb, _)| sb).collect();
        sbs.dedup();
        sbs
    }

    pub fn total(&self) -> usize {
        self.files.values().sum()
    }
}

pub fn write_ids(path: &Path, ids: &[NodeId]) -> Result<()> {
    let mut enc = Encoder::create(path)?;
    enc.bytes(IDS_MAGIC)?;
    enc.u64_array(ids)?;
    enc.finish()
}

pub fn read_ids(path: &Path) -> Result<Vec<NodeId>> {
    let buf = read_file(path)?;
    let mut dec = Decoder::new(path, &buf);
    dec.magic(IDS_MAGIC)?;
    let ids = dec.u64_array()?;
    expect_end(&dec, buf.len())?;
    Ok(ids)
}

pub fn write_adj(path: &Path, adj: &[Vec<(u32, u32)>]) -> Result<()> {
    let mut enc = Encoder::create(path)?;
    enc.bytes(ADJ_MAGIC)?;
    enc.u64(adj.len() as u64)?;
    for layer in adj {
        enc.u64(layer.len() as u64)?;
        for &(src, dst) in layer {
            enc.u32(src)?;
            enc.u32(dst)?;
        }
    }
    enc.finish()
}

pub fn read_adj(path: &Path) -> Result<Adjacency> {
    let buf = read_file(path)?;
    let mut dec = Decoder::new(path, &buf);
    dec.magic(ADJ_MAGIC)?;
    let layers = dec.len(8)?;
    let mut adj = Vec::with_capacity(layers);
    for _ in 0..layers {
        let n = dec.len(8)?;
        let mut edges = Vec::with_capacity(n);
        for _ in 0..n {
            edges.push((dec.u32()?, dec.u32()?));
        }
        adj.push(edges);
    }
    expect_end(&dec, buf.len())?;
    Ok(adj)
}

pub fn write_init(path: &Path, init: &[NodeId]) -> Result<()> {
    let mut enc = Encoder::create(path)?;
    enc.bytes(INIT_MAGIC)?;
    enc.u64_array(init)?;
    enc.finish()
}

pub fn read_init(path: &Path) -> Result<Vec<NodeId>> {
    let buf = read_file(path)?;
    let mut dec = Decoder::new(path, &buf);
    dec.magic(INIT_MAGIC)?;
    let ids = dec.u64_array()?;
    expect_end(&dec, buf.len())?;
    Ok(ids)
}

pub fn write_update(path: &Path, cs: &Changeset) -> Result<()> {
    let mut enc = Encoder::create(path)?;
    enc.bytes(UPDATE_MAGIC)?;
    enc.u64_array(&cs.in_ids)?;
    enc.u64_array(&cs.out_ids)?;
    enc.u64_array(&cs.in_positions)?;
    enc.finish()
}

pub fn read_update(path: &Path) -> Result<Changeset> {
    let buf = read_file(path)?;
    let mut dec = Decoder::new(path, &buf);
    dec.magic(UPDATE_MAGIC)?;
    let in_ids = dec.u64_array()?;
    let out_ids = dec.u64_array()?;
    let in_positions = dec.u64_array()?;
    expect_end(&dec, buf.len())?;
    if in_positions.len() != in_ids.len() {
        return Err(dec.err("in_positions length differs from in_ids"));
    }
    Ok(Changeset {
        in_ids,
        out_ids,
        in_positions,
    })
}

fn expect_end(dec: &Decoder<'_>, len: usize) -> Result<()> {
    if dec.position() != len {
        return Err(dec.err("trailing bytes"));
    }
    Ok(())
}
