//! Binary snapshot format.
//!
//! ```text
//! header    "TRIPMEM\0" version:u32 provider:u8 dimension:u32 seed:u64
//!           fingerprint:u64 edit_mode:u8
//! entities  "ENTS" next_id:u64 count:u64 { id:u64 len:u32 name vector:f64*dim }
//! relations "RELS" (same layout)
//! triples   "TRPL" next_id:u64 count:u64 { id:u64 s:u64 r:u64 o:u64 flag:u8 [len:u32 prov] }
//! trailer   "END!" checksum:u64   (FNV-1a over every preceding byte)
//! ```
//!
//! All integers and floats are little-endian; floats are stored bit-exact.

use std::collections::HashSet;
use std::fs;
use std::hash::Hasher;
use std::io::{Cursor, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use fnv::FnvHasher;

use super::{
    EditMatchMode, EntityId, MemoryStore, NameTable, NamedRecord, RelationId, StoreError, Triple,
    TripleId,
};
use crate::embedding::{
    build_provider, EmbeddingProvider, EmbeddingProviderConfig, EmbeddingVector, ProviderKind,
};

const MAGIC: &[u8; 8] = b"TRIPMEM\0";
pub const SNAPSHOT_VERSION: u32 = 1;

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

impl MemoryStore {
    /// Serializes the store into the snapshot byte format.
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let cfg = self.provider.config();
        let mut out = Vec::new();
        // Writes into a Vec cannot fail.
        let w = &mut out;
        w.write_all(MAGIC).unwrap();
        w.write_u32::<LittleEndian>(SNAPSHOT_VERSION).unwrap();
        w.write_u8(match cfg.provider_kind {
            ProviderKind::ReferenceHash => 1,
            ProviderKind::External => 2,
        })
        .unwrap();
        w.write_u32::<LittleEndian>(cfg.dimension as u32).unwrap();
        w.write_u64::<LittleEndian>(cfg.seed).unwrap();
        w.write_u64::<LittleEndian>(cfg.fingerprint()).unwrap();
        w.write_u8(match self.edit_match_mode {
            EditMatchMode::SubjectRelation => 0,
            EditMatchMode::Strict => 1,
        })
        .unwrap();

        write_table(w, b"ENTS", &self.entities);
        write_table(w, b"RELS", &self.relations);

        w.write_all(b"TRPL").unwrap();
        w.write_u64::<LittleEndian>(self.next_triple_id).unwrap();
        w.write_u64::<LittleEndian>(self.triples.len() as u64)
            .unwrap();
        for t in self.triples.values() {
            for v in [t.id.0, t.subject.0, t.relation.0, t.object.0] {
                w.write_u64::<LittleEndian>(v).unwrap();
            }
            match &t.provenance {
                Some(p) => {
                    w.write_u8(1).unwrap();
                    w.write_u32::<LittleEndian>(p.len() as u32).unwrap();
                    w.write_all(p.as_bytes()).unwrap();
                }
                None => w.write_u8(0).unwrap(),
            }
        }

        w.write_all(b"END!").unwrap();
        let sum = checksum(w);
        w.write_u64::<LittleEndian>(sum).unwrap();
        out
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let bytes = self.to_snapshot_bytes();
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads a snapshot, rebuilding the embedding provider it was written with.
    /// Snapshots from external providers need [`MemoryStore::load_snapshot_with`].
    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        Self::from_snapshot_bytes(&bytes, None)
    }

    /// Loads a snapshot and checks it against `provider`.
    pub fn load_snapshot_with(
        path: impl AsRef<Path>,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        Self::from_snapshot_bytes(&bytes, Some(provider))
    }

    /// Replaces `self` with the snapshot at `path`. On any error `self` is
    /// left untouched.
    pub fn reload_from(&mut self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let bytes = fs::read(path)?;
        let loaded = Self::from_snapshot_bytes(&bytes, Some(self.provider.clone()))?;
        *self = loaded;
        Ok(())
    }

    pub fn from_snapshot_bytes(
        bytes: &[u8],
        provider: Option<Arc<dyn EmbeddingProvider>>,
    ) -> Result<Self, StoreError> {
        Reader::new(bytes).read_store(provider)
    }
}

fn write_table<Id>(w: &mut Vec<u8>, tag: &[u8; 4], table: &NameTable<Id>)
where
    Id: Copy + Ord + std::hash::Hash + From<u64> + Into<u64>,
{
    w.write_all(tag).unwrap();
    w.write_u64::<LittleEndian>(table.next_id).unwrap();
    w.write_u64::<LittleEndian>(table.rows.len() as u64)
        .unwrap();
    for row in table.rows.values() {
        w.write_u64::<LittleEndian>(row.id.into()).unwrap();
        w.write_u32::<LittleEndian>(row.name.len() as u32).unwrap();
        w.write_all(row.name.as_bytes()).unwrap();
        for v in row.vector.values() {
            w.write_f64::<LittleEndian>(*v).unwrap();
        }
    }
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            cur: Cursor::new(bytes),
        }
    }

    fn offset(&self) -> u64 {
        self.cur.position()
    }

    fn corrupt(&self, reason: impl Into<String>) -> StoreError {
        StoreError::CorruptSnapshot {
            offset: self.offset(),
            reason: reason.into(),
        }
    }

    fn truncated(&self, what: &str) -> impl FnOnce(std::io::Error) -> StoreError {
        let offset = self.offset();
        let what = what.to_string();
        move |_| StoreError::CorruptSnapshot {
            offset,
            reason: format!("truncated while reading {what}"),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8, StoreError> {
        let f = self.truncated(what);
        self.cur.read_u8().map_err(f)
    }

    fn u32(&mut self, what: &str) -> Result<u32, StoreError> {
        let f = self.truncated(what);
        self.cur.read_u32::<LittleEndian>().map_err(f)
    }

    fn u64(&mut self, what: &str) -> Result<u64, StoreError> {
        let f = self.truncated(what);
        self.cur.read_u64::<LittleEndian>().map_err(f)
    }

    fn f64(&mut self, what: &str) -> Result<f64, StoreError> {
        let f = self.truncated(what);
        self.cur.read_f64::<LittleEndian>().map_err(f)
    }

    fn bytes(&mut self, len: usize, what: &str) -> Result<Vec<u8>, StoreError> {
        let remaining = self.cur.get_ref().len() as u64 - self.offset();
        if len as u64 > remaining {
            return Err(self.corrupt(format!("truncated while reading {what}")));
        }
        let mut buf = vec![0; len];
        self.cur.read_exact(&mut buf).expect("length checked");
        Ok(buf)
    }

    fn string(&mut self, what: &str) -> Result<String, StoreError> {
        let len = self.u32(what)? as usize;
        let at = self.offset();
        let raw = self.bytes(len, what)?;
        String::from_utf8(raw).map_err(|_| StoreError::CorruptSnapshot {
            offset: at,
            reason: format!("{what} is not valid UTF-8"),
        })
    }

    fn tag(&mut self, expected: &[u8; 4]) -> Result<(), StoreError> {
        let at = self.offset();
        let got = self.bytes(4, "section tag")?;
        if got != expected {
            return Err(StoreError::CorruptSnapshot {
                offset: at,
                reason: format!(
                    "expected section {:?}, found {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(&got)
                ),
            });
        }
        Ok(())
    }

    fn read_store(
        mut self,
        provider: Option<Arc<dyn EmbeddingProvider>>,
    ) -> Result<MemoryStore, StoreError> {
        let magic = self.bytes(8, "magic")?;
        if magic != MAGIC {
            return Err(StoreError::CorruptSnapshot {
                offset: 0,
                reason: "not a snapshot file".into(),
            });
        }
        let version = self.u32("version")?;
        if version != SNAPSHOT_VERSION {
            return Err(StoreError::CorruptSnapshot {
                offset: 8,
                reason: format!("unsupported version {version}"),
            });
        }
        let kind = match self.u8("provider kind")? {
            1 => ProviderKind::ReferenceHash,
            2 => ProviderKind::External,
            k => return Err(self.corrupt(format!("unknown provider kind {k}"))),
        };
        let dimension = self.u32("dimension")? as usize;
        let seed = self.u64("seed")?;
        let fingerprint = self.u64("fingerprint")?;
        let cfg = EmbeddingProviderConfig {
            provider_kind: kind,
            dimension,
            seed,
        };
        if cfg.fingerprint() != fingerprint {
            return Err(self.corrupt("header fingerprint does not match provider fields"));
        }
        let edit_match_mode = match self.u8("edit mode")? {
            0 => EditMatchMode::SubjectRelation,
            1 => EditMatchMode::Strict,
            m => return Err(self.corrupt(format!("unknown edit mode {m}"))),
        };

        let provider: Arc<dyn EmbeddingProvider> = match provider {
            Some(p) => {
                let expected = p.config().fingerprint();
                if expected != fingerprint {
                    return Err(StoreError::ProviderMismatch {
                        expected,
                        found: fingerprint,
                    });
                }
                p
            }
            None => Arc::from(build_provider(&cfg).map_err(|e| self.corrupt(e.to_string()))?),
        };

        let mut store = MemoryStore::new(provider);
        store.edit_match_mode = edit_match_mode;

        self.tag(b"ENTS")?;
        self.read_table(&mut store.entities, dimension, "entity")?;
        self.tag(b"RELS")?;
        self.read_table(&mut store.relations, dimension, "relation")?;

        self.tag(b"TRPL")?;
        let next_id = self.u64("triple next id")?;
        let count = self.u64("triple count")?;
        for _ in 0..count {
            let at = self.offset();
            let id = TripleId(self.u64("triple id")?);
            let subject = EntityId(self.u64("triple subject")?);
            let relation = RelationId(self.u64("triple relation")?);
            let object = EntityId(self.u64("triple object")?);
            let provenance = match self.u8("provenance flag")? {
                0 => None,
                1 => Some(self.string("provenance")?),
                f => return Err(self.corrupt(format!("bad provenance flag {f}"))),
            };
            let bad = |reason: &str| StoreError::CorruptSnapshot {
                offset: at,
                reason: reason.to_string(),
            };
            if id.0 == 0 || id.0 >= next_id || store.triples.contains_key(&id) {
                return Err(bad("triple id out of order or duplicated"));
            }
            if store.entities.get(subject).is_none()
                || store.entities.get(object).is_none()
                || store.relations.get(relation).is_none()
            {
                return Err(bad("triple references a missing row"));
            }
            if store.keys.contains_key(&(subject, relation, object)) {
                return Err(bad("duplicate triple key"));
            }
            store.attach(Triple {
                id,
                subject,
                relation,
                object,
                provenance,
            });
        }
        store.next_triple_id = next_id;

        let trailer_at = self.offset() as usize;
        self.tag(b"END!")?;
        let stored = self.u64("checksum")?;
        let body = &self.cur.get_ref()[..trailer_at + 4];
        if checksum(body) != stored {
            return Err(StoreError::CorruptSnapshot {
                offset: trailer_at as u64 + 4,
                reason: "checksum mismatch".into(),
            });
        }
        if self.offset() != self.cur.get_ref().len() as u64 {
            return Err(self.corrupt("trailing bytes after snapshot"));
        }
        Ok(store)
    }

    fn read_table<Id>(
        &mut self,
        table: &mut NameTable<Id>,
        dimension: usize,
        what: &str,
    ) -> Result<(), StoreError>
    where
        Id: Copy + Ord + std::hash::Hash + From<u64> + Into<u64>,
    {
        let next_id = self.u64(&format!("{what} next id"))?;
        let count = self.u64(&format!("{what} count"))?;
        let mut names = HashSet::new();
        for _ in 0..count {
            let at = self.offset();
            let id = self.u64(&format!("{what} id"))?;
            let name = self.string(&format!("{what} name"))?;
            let mut values = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                values.push(self.f64(&format!("{what} vector"))?);
            }
            let bad = |reason: String| StoreError::CorruptSnapshot { offset: at, reason };
            if id == 0 || id >= next_id || table.get(Id::from(id)).is_some() {
                return Err(bad(format!("{what} id {id} out of range or duplicated")));
            }
            if name.trim().is_empty() || !names.insert(name.clone()) {
                return Err(bad(format!("{what} name {name:?} empty or duplicated")));
            }
            let vector = EmbeddingVector::from_unit(values)
                .map_err(|e| bad(format!("{what} vector: {e}")))?;
            table.restore(NamedRecord {
                id: Id::from(id),
                name,
                vector,
            });
        }
        table.next_id = next_id;
        Ok(())
    }
}
