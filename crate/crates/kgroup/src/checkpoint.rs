//! Binary checkpoint format.
//!
//! Little-endian throughout: the magic `KGRP`, format version (u32), group
//! kind tag (u8), n_blocks (u32), entity count (u64), relation count (u64),
//! then the entity table and the relation table as row-major f64 arrays.
//! Files are written to a sibling temporary and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kgroup_core::group::GroupKind;
use kgroup_core::model::EmbeddingTables;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"KGRP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: GroupKind,
    pub n_blocks: usize,
    pub n_entities: usize,
    pub n_relations: usize,
}

impl Header {
    pub fn of(tables: &EmbeddingTables) -> Self {
        Self {
            kind: tables.kind(),
            n_blocks: tables.n_blocks(),
            n_entities: tables.n_entities(),
            n_relations: tables.n_relations(),
        }
    }

    fn body_len(&self) -> Option<usize> {
        let e = self.n_entities.checked_mul(self.n_blocks)?.checked_mul(self.kind.rep_dim())?;
        let r = self.n_relations.checked_mul(self.n_blocks)?.checked_mul(self.kind.param_count())?;
        e.checked_add(r)?.checked_mul(8)
    }

    /// Errors unless every field matches `expected`, naming each mismatch.
    pub fn check_compatible(&self, expected: &Header) -> Result<()> {
        let mut diffs = Vec::new();
        if self.kind != expected.kind {
            diffs.push(format!("kind {} (expected {})", self.kind, expected.kind));
        }
        if self.n_blocks != expected.n_blocks {
            diffs.push(format!("n_blocks {} (expected {})", self.n_blocks, expected.n_blocks));
        }
        if self.n_entities != expected.n_entities {
            diffs.push(format!("{} entities (expected {})", self.n_entities, expected.n_entities));
        }
        if self.n_relations != expected.n_relations {
            diffs.push(format!("{} relations (expected {})", self.n_relations, expected.n_relations));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::Incompatible(diffs.join(", ")))
        }
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8] = self.kind.tag();
        out[9..13].copy_from_slice(&(self.n_blocks as u32).to_le_bytes());
        out[13..21].copy_from_slice(&(self.n_entities as u64).to_le_bytes());
        out[21..29].copy_from_slice(&(self.n_relations as u64).to_le_bytes());
        out
    }

    fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
        }
        if bytes[0..4] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let kind = GroupKind::from_tag(bytes[8]).ok_or_else(|| bad(format!("unknown kind tag {}", bytes[8])))?;
        let n_blocks = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let size = |b: &[u8]| usize::try_from(u64::from_le_bytes(b.try_into().unwrap()));
        let n_entities = size(&bytes[13..21]).map_err(|_| bad("entity count overflows".into()))?;
        let n_relations = size(&bytes[21..29]).map_err(|_| bad("relation count overflows".into()))?;
        Ok(Self {
            kind,
            n_blocks,
            n_entities,
            n_relations,
        })
    }
}

pub fn encode(tables: &EmbeddingTables) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (tables.entity_data().len() + tables.relation_data().len()));
    out.extend_from_slice(&Header::of(tables).encode());
    for v in tables.entity_data().iter().chain(tables.relation_data()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a whole checkpoint; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<EmbeddingTables> {
    let header = Header::decode(bytes, path)?;
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let body = &bytes[HEADER_LEN..];
    let expected = header.body_len().ok_or_else(|| bad("table sizes overflow".into()))?;
    if body.len() != expected {
        return Err(bad(format!("body is {} bytes, header implies {expected}", body.len())));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let n_ent = header.n_entities * header.n_blocks * header.kind.rep_dim();
    let (ent, rel) = values.split_at(n_ent);
    EmbeddingTables::from_parts(
        header.kind,
        header.n_blocks,
        header.n_entities,
        header.n_relations,
        ent.to_vec(),
        rel.to_vec(),
    )
    .map_err(|e| bad(e.to_string()))
}

pub fn read_header(path: &Path) -> Result<Header> {
    use std::io::Read;
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    f.take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    Header::decode(&buf, path)
}

pub fn load(path: &Path) -> Result<EmbeddingTables> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Loads only if the header matches `expected`; nothing past the header is
/// read otherwise.
pub fn load_compatible(path: &Path, expected: &Header) -> Result<EmbeddingTables> {
    read_header(path)?.check_compatible(expected)?;
    load(path)
}

pub fn save(path: &Path, tables: &EmbeddingTables) -> Result<()> {
    write_atomic(path, &encode(tables))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp: PathBuf = path.to_path_buf();
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgroup_core::model::{init_tables, ModelConfig};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for kind in GroupKind::ALL {
            let t = init_tables(&ModelConfig::new(kind, 3), 7, 4, 1).unwrap();
            let p = dir.path().join(format!("{kind}.ckpt"));
            save(&p, &t).unwrap();
            assert_eq!(load(&p).unwrap(), t);
            assert_eq!(read_header(&p).unwrap(), Header::of(&t));
            assert!(!dir.path().join(format!("{kind}.ckpt.tmp")).exists());
        }
    }

    #[test]
    fn header_layout() {
        let t = init_tables(&ModelConfig::new(GroupKind::So3, 2), 5, 3, 0).unwrap();
        let b = encode(&t);
        assert_eq!(&b[..4], b"KGRP");
        assert_eq!(b[8], GroupKind::So3.tag());
        assert_eq!(u32::from_le_bytes(b[9..13].try_into().unwrap()), 2);
        assert_eq!(b.len(), HEADER_LEN + 8 * (5 * 2 * 3 + 3 * 2 * 3));
    }

    #[test]
    fn mismatched_blocks_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let t = init_tables(&ModelConfig::new(GroupKind::U1, 2), 5, 3, 0).unwrap();
        save(&p, &t).unwrap();
        let mut want = Header::of(&t);
        want.n_blocks = 4;
        let err = load_compatible(&p, &want).unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)));
        assert!(err.to_string().contains("n_blocks 2 (expected 4)"), "{err}");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let t = init_tables(&ModelConfig::new(GroupKind::U1, 1), 2, 1, 0).unwrap();
        let b = encode(&t);
        let p = Path::new("x");
        assert!(decode(&b[..b.len() - 1], p).is_err());
        assert!(decode(&b[..10], p).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode(&bad, p).is_err());
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(decode(&bad, p).is_err());
        let mut bad = b;
        bad[8] = 42;
        assert!(decode(&bad, p).is_err());
    }
}
