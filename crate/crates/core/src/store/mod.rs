//! Triple memory.
//!
//! Three tables: entities and relations (each indexed by unique name and by
//! vector) and the triple table, which stores id combinations. A given
//! `(subject, relation, object)` id combination occurs at most once.
//!
//! Ids are assigned monotonically per table and are never reused. Removing a
//! triple leaves its entities and relations in place; [`MemoryStore::compact`]
//! drops unreferenced rows.

mod ingest;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::embedding::{
    normalize_text, EmbeddingError, EmbeddingProvider, EmbeddingVector, ReferenceEmbedder,
};
use crate::par::{IntoParallelRefIterator, ParallelIterator};
use crate::retrieval::index::{ExactScanIndex, VectorIndex};

pub use ingest::{parse_bulk_line, BulkRecord, IngestError, IngestOutcomeError, IngestReport};
pub use snapshot::SNAPSHOT_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt snapshot at byte {offset}: {reason}")]
    CorruptSnapshot { offset: u64, reason: String },
    #[error("snapshot was written with a different embedding provider (fingerprint {found:#x}, expected {expected:#x})")]
    ProviderMismatch { expected: u64, found: u64 },
}

macro_rules! id_type {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                Self(v)
            }
        }

        impl From<$name> for u64 {
            fn from(v: $name) -> u64 {
                v.0
            }
        }
    };
}

id_type!(EntityId);
id_type!(RelationId);
id_type!(TripleId);

/// A named, embedded row of the entity or relation table.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedRecord<Id> {
    pub id: Id,
    pub name: String,
    pub vector: EmbeddingVector,
}

pub type Entity = NamedRecord<EntityId>;
pub type Relation = NamedRecord<RelationId>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub id: TripleId,
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub provenance: Option<String>,
}

impl Triple {
    pub fn key(&self) -> (EntityId, RelationId, EntityId) {
        (self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub triple_count: usize,
    pub unique_entity_count: usize,
    pub unique_relation_count: usize,
    /// `(entities + relations) / triples`, capped at 1.0; 1.0 for an empty store.
    pub redundancy_fraction: f64,
}

impl MemoryStats {
    pub fn from_counts(triples: usize, entities: usize, relations: usize) -> Self {
        let redundancy_fraction = if triples == 0 {
            1.0
        } else {
            ((entities + relations) as f64 / triples as f64).min(1.0)
        };
        Self {
            triple_count: triples,
            unique_entity_count: entities,
            unique_relation_count: relations,
            redundancy_fraction,
        }
    }
}

/// How an edit finds the triple it replaces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMatchMode {
    /// Same subject and relation name (after normalization): the object is replaced.
    #[default]
    SubjectRelation,
    /// All three names must match; edits never replace anything.
    Strict,
}

/// Result of [`MemoryStore::upsert_edit_triple`].
#[derive(Debug, Clone, PartialEq)]
pub struct UpsertOutcome {
    pub triple: Triple,
    pub inserted: bool,
    pub replaced: Vec<Triple>,
}

/// One name-indexed table with its vector index.
#[derive(Debug, Clone)]
struct NameTable<Id> {
    rows: BTreeMap<Id, NamedRecord<Id>>,
    by_name: HashMap<String, Id>,
    by_normalized: HashMap<String, BTreeSet<Id>>,
    index: ExactScanIndex,
    next_id: u64,
}

impl<Id> NameTable<Id>
where
    Id: Copy + Ord + std::hash::Hash + From<u64> + Into<u64>,
{
    fn new(dimension: usize) -> Self {
        Self {
            rows: BTreeMap::new(),
            by_name: HashMap::new(),
            by_normalized: HashMap::new(),
            index: ExactScanIndex::new(dimension),
            next_id: 1,
        }
    }

    fn get(&self, id: Id) -> Option<&NamedRecord<Id>> {
        self.rows.get(&id)
    }

    fn lookup(&self, name: &str) -> Option<Id> {
        self.by_name.get(name).copied()
    }

    fn ids_normalized(&self, normalized: &str) -> impl Iterator<Item = Id> + '_ {
        self.by_normalized
            .get(normalized)
            .into_iter()
            .flat_map(|set| set.iter().copied())
    }

    fn push(&mut self, name: String, vector: EmbeddingVector) -> Id {
        let id = Id::from(self.next_id);
        self.next_id += 1;
        self.restore(NamedRecord { id, name, vector });
        id
    }

    /// Inserts a row with a pre-assigned id (snapshot loading).
    fn restore(&mut self, row: NamedRecord<Id>) {
        self.index.insert(row.id.into(), row.vector.values());
        self.by_name.insert(row.name.clone(), row.id);
        self.by_normalized
            .entry(normalize_text(&row.name))
            .or_default()
            .insert(row.id);
        self.rows.insert(row.id, row);
    }

    fn remove(&mut self, id: Id) {
        if let Some(row) = self.rows.remove(&id) {
            self.index.remove(id.into());
            self.by_name.remove(&row.name);
            let key = normalize_text(&row.name);
            if let Some(set) = self.by_normalized.get_mut(&key) {
                set.remove(&id);
                if set.is_empty() {
                    self.by_normalized.remove(&key);
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }
}

/// The triple memory. Mutation goes through `&mut self` (single writer);
/// queries and snapshots only need `&self`.
#[derive(Clone)]
pub struct MemoryStore {
    provider: Arc<dyn EmbeddingProvider>,
    entities: NameTable<EntityId>,
    relations: NameTable<RelationId>,
    triples: BTreeMap<TripleId, Triple>,
    keys: HashMap<(EntityId, RelationId, EntityId), TripleId>,
    by_subject: HashMap<EntityId, BTreeSet<TripleId>>,
    by_object: HashMap<EntityId, BTreeSet<TripleId>>,
    next_triple_id: u64,
    edit_match_mode: EditMatchMode,
}

impl fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryStore")
            .field("provider", &self.provider.config())
            .field("stats", &self.get_stats())
            .finish()
    }
}

fn clean_name(name: &str, role: &str) -> Result<String, StoreError> {
    let trimmed = name.trim();
    if trimmed.is_empty() {
        return Err(StoreError::InvalidTriple(format!("empty {role} name")));
    }
    Ok(trimmed.to_string())
}

impl MemoryStore {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        let dim = provider.dimension();
        Self {
            provider,
            entities: NameTable::new(dim),
            relations: NameTable::new(dim),
            triples: BTreeMap::new(),
            keys: HashMap::new(),
            by_subject: HashMap::new(),
            by_object: HashMap::new(),
            next_triple_id: 1,
            edit_match_mode: EditMatchMode::default(),
        }
    }

    /// Store backed by the reference n-gram embedder.
    ///
    /// # Panics
    /// If `dimension` is below the provider minimum.
    pub fn with_reference_embedder(dimension: usize, seed: u64) -> Self {
        let provider = ReferenceEmbedder::new(dimension, seed).expect("valid embedder dimension");
        Self::new(Arc::new(provider))
    }

    pub fn set_edit_match_mode(&mut self, mode: EditMatchMode) {
        self.edit_match_mode = mode;
    }

    pub fn edit_match_mode(&self) -> EditMatchMode {
        self.edit_match_mode
    }

    pub fn provider(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.provider
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension()
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        self.provider.embed(text)
    }

    fn entity_id_or_embed(&self, name: &str) -> Result<Option<EmbeddingVector>, StoreError> {
        match self.entities.lookup(name) {
            Some(_) => Ok(None),
            None => Ok(Some(self.provider.embed(name)?)),
        }
    }

    /// Inserts a triple, creating entity/relation rows on first sight.
    /// Returns the stored triple and whether it was newly inserted.
    pub fn insert_triple(
        &mut self,
        subject: &str,
        relation: &str,
        object: &str,
        provenance: Option<&str>,
    ) -> Result<(Triple, bool), StoreError> {
        let subject = clean_name(subject, "subject")?;
        let relation = clean_name(relation, "relation")?;
        let object = clean_name(object, "object")?;

        // Embed everything before touching the tables so a failure leaves
        // the store unchanged.
        let subject_vec = self.entity_id_or_embed(&subject)?;
        let object_vec = if object == subject {
            None
        } else {
            self.entity_id_or_embed(&object)?
        };
        let relation_vec = match self.relations.lookup(&relation) {
            Some(_) => None,
            None => Some(self.provider.embed(&relation)?),
        };

        let s = self.intern_entity(subject, subject_vec);
        let o = self.intern_entity(object, object_vec);
        let r = match relation_vec {
            Some(v) => self.relations.push(relation, v),
            None => self.relations.lookup(&relation).expect("relation exists"),
        };
        Ok(self.link(s, r, o, provenance.map(str::to_string)))
    }

    fn intern_entity(&mut self, name: String, vector: Option<EmbeddingVector>) -> EntityId {
        if let Some(id) = self.entities.lookup(&name) {
            return id;
        }
        let vector = vector.expect("vector computed for new entity");
        self.entities.push(name, vector)
    }

    fn link(
        &mut self,
        subject: EntityId,
        relation: RelationId,
        object: EntityId,
        provenance: Option<String>,
    ) -> (Triple, bool) {
        if let Some(id) = self.keys.get(&(subject, relation, object)) {
            return (self.triples[id].clone(), false);
        }
        let id = TripleId(self.next_triple_id);
        self.next_triple_id += 1;
        let triple = Triple {
            id,
            subject,
            relation,
            object,
            provenance,
        };
        self.attach(triple.clone());
        (triple, true)
    }

    fn attach(&mut self, triple: Triple) {
        self.keys.insert(triple.key(), triple.id);
        self.by_subject
            .entry(triple.subject)
            .or_default()
            .insert(triple.id);
        self.by_object
            .entry(triple.object)
            .or_default()
            .insert(triple.id);
        self.triples.insert(triple.id, triple);
    }

    /// Inserts many records, computing embeddings for unseen names in
    /// parallel first. Returns one `(triple, inserted)` per record.
    pub fn insert_batch(
        &mut self,
        records: &[BulkRecord],
    ) -> Result<Vec<(Triple, bool)>, StoreError> {
        for rec in records {
            for (name, role) in [
                (&rec.subject, "subject"),
                (&rec.relation, "relation"),
                (&rec.object, "object"),
            ] {
                clean_name(name, role)?;
            }
        }

        let mut new_entities: Vec<String> = Vec::new();
        let mut new_relations: Vec<String> = Vec::new();
        {
            let mut seen_e = std::collections::HashSet::new();
            let mut seen_r = std::collections::HashSet::new();
            for rec in records {
                for name in [rec.subject.trim(), rec.object.trim()] {
                    if self.entities.lookup(name).is_none() && seen_e.insert(name) {
                        new_entities.push(name.to_string());
                    }
                }
                let rel = rec.relation.trim();
                if self.relations.lookup(rel).is_none() && seen_r.insert(rel) {
                    new_relations.push(rel.to_string());
                }
            }
        }

        let provider = &self.provider;
        let embed_all = |names: &[String]| -> Result<Vec<EmbeddingVector>, EmbeddingError> {
            names.par_iter().map(|n| provider.embed(n)).collect()
        };
        let entity_vecs = embed_all(&new_entities)?;
        let relation_vecs = embed_all(&new_relations)?;

        for (name, vec) in new_entities.into_iter().zip(entity_vecs) {
            self.entities.push(name, vec);
        }
        for (name, vec) in new_relations.into_iter().zip(relation_vecs) {
            self.relations.push(name, vec);
        }

        Ok(records
            .iter()
            .map(|rec| {
                let s = self.entities.lookup(rec.subject.trim()).expect("interned");
                let o = self.entities.lookup(rec.object.trim()).expect("interned");
                let r = self
                    .relations
                    .lookup(rec.relation.trim())
                    .expect("interned");
                self.link(s, r, o, rec.provenance.clone())
            })
            .collect())
    }

    /// Edit-mode write. In [`EditMatchMode::SubjectRelation`] every stored
    /// triple whose subject and relation names match (after normalization)
    /// is replaced by the new triple; otherwise this is `insert_triple`.
    pub fn upsert_edit_triple(
        &mut self,
        subject: &str,
        relation: &str,
        object: &str,
    ) -> Result<UpsertOutcome, StoreError> {
        if self.edit_match_mode == EditMatchMode::Strict {
            let (triple, inserted) = self.insert_triple(subject, relation, object, None)?;
            return Ok(UpsertOutcome {
                triple,
                inserted,
                replaced: Vec::new(),
            });
        }

        let subject = clean_name(subject, "subject")?;
        let relation = clean_name(relation, "relation")?;
        let object = clean_name(object, "object")?;
        let subject_norm = normalize_text(&subject);
        let relation_norm = normalize_text(&relation);

        let matching: Vec<TripleId> = self
            .entities
            .ids_normalized(&subject_norm)
            .flat_map(|s| self.by_subject.get(&s).into_iter().flatten().copied())
            .filter(|t| {
                let rel = self.triples[t].relation;
                normalize_text(&self.relations.get(rel).expect("relation row").name)
                    == relation_norm
            })
            .collect();

        let (triple, inserted) = self.insert_triple(&subject, &relation, &object, None)?;
        let replaced = matching
            .into_iter()
            .filter(|id| *id != triple.id)
            .filter_map(|id| self.remove_triple(id))
            .collect();
        Ok(UpsertOutcome {
            triple,
            inserted,
            replaced,
        })
    }

    pub fn remove_triple(&mut self, id: TripleId) -> Option<Triple> {
        let triple = self.triples.remove(&id)?;
        self.keys.remove(&triple.key());
        for (map, key) in [
            (&mut self.by_subject, triple.subject),
            (&mut self.by_object, triple.object),
        ] {
            if let Some(set) = map.get_mut(&key) {
                set.remove(&id);
                if set.is_empty() {
                    map.remove(&key);
                }
            }
        }
        Some(triple)
    }

    /// Drops entities and relations no triple refers to. Remaining ids are
    /// unchanged. Returns `(entities_removed, relations_removed)`.
    pub fn compact(&mut self) -> (usize, usize) {
        let mut used_e = BTreeSet::new();
        let mut used_r = BTreeSet::new();
        for t in self.triples.values() {
            used_e.insert(t.subject);
            used_e.insert(t.object);
            used_r.insert(t.relation);
        }
        let dead_e: Vec<EntityId> = self
            .entities
            .rows
            .keys()
            .filter(|id| !used_e.contains(*id))
            .copied()
            .collect();
        let dead_r: Vec<RelationId> = self
            .relations
            .rows
            .keys()
            .filter(|id| !used_r.contains(*id))
            .copied()
            .collect();
        for id in &dead_e {
            self.entities.remove(*id);
        }
        for id in &dead_r {
            self.relations.remove(*id);
        }
        (dead_e.len(), dead_r.len())
    }

    pub fn get_stats(&self) -> MemoryStats {
        MemoryStats::from_counts(
            self.triples.len(),
            self.entities.len(),
            self.relations.len(),
        )
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.triples.values()
    }

    pub fn triple(&self, id: TripleId) -> Option<&Triple> {
        self.triples.get(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> + '_ {
        self.entities.rows.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> + '_ {
        self.relations.rows.values()
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn relation(&self, id: RelationId) -> Option<&Relation> {
        self.relations.get(id)
    }

    pub fn entity_by_name(&self, name: &str) -> Option<&Entity> {
        self.entities
            .lookup(name.trim())
            .and_then(|id| self.entities.get(id))
    }

    pub fn relation_by_name(&self, name: &str) -> Option<&Relation> {
        self.relations
            .lookup(name.trim())
            .and_then(|id| self.relations.get(id))
    }

    /// The stored triple with exactly these names, if any.
    pub fn find_triple(&self, subject: &str, relation: &str, object: &str) -> Option<&Triple> {
        let s = self.entities.lookup(subject.trim())?;
        let r = self.relations.lookup(relation.trim())?;
        let o = self.entities.lookup(object.trim())?;
        self.keys.get(&(s, r, o)).map(|id| &self.triples[id])
    }

    /// Triple rendered with names.
    pub fn resolve(&self, triple: &Triple) -> (&str, &str, &str) {
        (
            &self.entities.get(triple.subject).expect("subject row").name,
            &self
                .relations
                .get(triple.relation)
                .expect("relation row")
                .name,
            &self.entities.get(triple.object).expect("object row").name,
        )
    }

    pub fn triples_with_subject(&self, id: EntityId) -> impl Iterator<Item = &Triple> + '_ {
        self.by_subject
            .get(&id)
            .into_iter()
            .flatten()
            .map(|t| &self.triples[t])
    }

    pub fn triples_with_object(&self, id: EntityId) -> impl Iterator<Item = &Triple> + '_ {
        self.by_object
            .get(&id)
            .into_iter()
            .flatten()
            .map(|t| &self.triples[t])
    }

    pub(crate) fn entity_index(&self) -> &ExactScanIndex {
        &self.entities.index
    }

    pub(crate) fn relation_index(&self) -> &ExactScanIndex {
        &self.relations.index
    }

    /// Order-independent digest of all three tables, vectors included.
    pub fn state_hash(&self) -> u64 {
        let mut h = FnvHasher::default();
        for table in [
            self.entities
                .rows
                .values()
                .map(|r| (r.id.0, &r.name, &r.vector))
                .collect::<Vec<_>>(),
            self.relations
                .rows
                .values()
                .map(|r| (r.id.0, &r.name, &r.vector))
                .collect::<Vec<_>>(),
        ] {
            h.write(&(table.len() as u64).to_le_bytes());
            for (id, name, vector) in table {
                h.write(&id.to_le_bytes());
                h.write(name.as_bytes());
                for v in vector.values() {
                    h.write(&v.to_bits().to_le_bytes());
                }
            }
        }
        for t in self.triples.values() {
            for v in [t.id.0, t.subject.0, t.relation.0, t.object.0] {
                h.write(&v.to_le_bytes());
            }
            if let Some(p) = &t.provenance {
                h.write(p.as_bytes());
            }
        }
        h.write(&self.next_triple_id.to_le_bytes());
        h.finish()
    }
}
