//! Memory queries.
//!
//! A query binds one entity and a relation. Retrieval first collects
//! candidate entities (cosine >= `tau_e` with the bound entity) and candidate
//! relations (cosine >= `tau_t`), then keeps every triple that links a
//! candidate entity in the bound slot with a candidate relation and whose
//! averaged similarity `0.5 * (cos_e + cos_t)` reaches `tau_r`. The entity in
//! the open slot is returned, deduplicated with its best score.

mod ambiguity;
pub mod index;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingError, EmbeddingVector};
use crate::par::{IntoParallelRefIterator, ParallelIterator};
use crate::store::{EntityId, MemoryStore, RelationId};
use index::VectorIndex;

pub use ambiguity::{AmbiguityList, AmbiguityListError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryDirection {
    /// `<subject, relation, *>`: asks for objects.
    Object,
    /// `<*, relation, object>`: asks for subjects.
    Subject,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemoryQuery {
    pub direction: QueryDirection,
    /// The bound entity: the subject of an object query, the object of a subject query.
    pub entity: String,
    pub relation: String,
}

impl MemoryQuery {
    /// `<subject, relation, *>`
    pub fn object(subject: impl Into<String>, relation: impl Into<String>) -> Self {
        Self {
            direction: QueryDirection::Object,
            entity: subject.into(),
            relation: relation.into(),
        }
    }

    /// `<*, relation, object>`
    pub fn subject(relation: impl Into<String>, object: impl Into<String>) -> Self {
        Self {
            direction: QueryDirection::Subject,
            entity: object.into(),
            relation: relation.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalThresholds {
    pub tau_e: f64,
    pub tau_t: f64,
    pub tau_r: f64,
    pub q_thr: usize,
}

impl Default for RetrievalThresholds {
    /// Language-modeling profile.
    fn default() -> Self {
        Self {
            tau_e: 0.7,
            tau_t: 0.7,
            tau_r: 0.85,
            q_thr: 30,
        }
    }
}

impl RetrievalThresholds {
    /// Knowledge-editing profile: strict on entities, loose on relations.
    pub fn editing() -> Self {
        Self {
            tau_e: 0.85,
            tau_t: 0.2,
            tau_r: 0.6,
            q_thr: 30,
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        for (name, v) in [
            ("tau_e", self.tau_e),
            ("tau_t", self.tau_t),
            ("tau_r", self.tau_r),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RetrievalError::Thresholds(format!(
                    "{name} = {v} is outside [0, 1]"
                )));
            }
        }
        if self.q_thr == 0 {
            return Err(RetrievalError::Thresholds("q_thr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub id: EntityId,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Ordered by score descending, then entity id ascending.
    pub entities: Vec<ScoredEntity>,
    /// Distinct results before the `q_thr` cap was applied.
    pub raw_count: usize,
    /// `raw_count > q_thr`; `entities` is empty in that case.
    pub overflowed: bool,
    /// At least one query was skipped by the ambiguity filter.
    pub filtered_ambiguous: bool,
}

impl QueryResult {
    pub fn names(&self) -> Vec<&str> {
        self.entities.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    fn from_scores(
        store: &MemoryStore,
        best: HashMap<EntityId, f64>,
        thresholds: &RetrievalThresholds,
    ) -> Self {
        let mut entities: Vec<ScoredEntity> = best
            .into_iter()
            .map(|(id, score)| ScoredEntity {
                id,
                name: store.entity(id).expect("result entity").name.clone(),
                score,
            })
            .collect();
        sort_scored(&mut entities);
        let raw_count = entities.len();
        let overflowed = raw_count > thresholds.q_thr;
        if overflowed {
            entities.clear();
        }
        Self {
            entities,
            raw_count,
            overflowed,
            filtered_ambiguous: false,
        }
    }
}

fn sort_scored(entities: &mut [ScoredEntity]) {
    entities.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
}

fn check_dimension(store: &MemoryStore, v: &EmbeddingVector) -> Result<(), RetrievalError> {
    if v.dimension() != store.dimension() {
        return Err(EmbeddingError::Dimension {
            left: v.dimension(),
            right: store.dimension(),
        }
        .into());
    }
    Ok(())
}

/// Entities whose vector has cosine >= `tau_e` with `query`, ordered by id.
pub fn candidate_entities(
    store: &MemoryStore,
    query: &EmbeddingVector,
    tau_e: f64,
) -> Result<Vec<(EntityId, f64)>, RetrievalError> {
    check_dimension(store, query)?;
    Ok(store
        .entity_index()
        .range_search(query.values(), tau_e)
        .into_iter()
        .map(|(id, s)| (EntityId(id), s))
        .collect())
}

/// Relations whose vector has cosine >= `tau_t` with `query`, ordered by id.
pub fn candidate_relations(
    store: &MemoryStore,
    query: &EmbeddingVector,
    tau_t: f64,
) -> Result<Vec<(RelationId, f64)>, RetrievalError> {
    check_dimension(store, query)?;
    Ok(store
        .relation_index()
        .range_search(query.values(), tau_t)
        .into_iter()
        .map(|(id, s)| (RelationId(id), s))
        .collect())
}

/// Runs one query against already-embedded entity and relation vectors.
pub fn execute_query_vectors(
    store: &MemoryStore,
    direction: QueryDirection,
    entity: &EmbeddingVector,
    relation: &EmbeddingVector,
    thresholds: &RetrievalThresholds,
) -> Result<QueryResult, RetrievalError> {
    let entities = candidate_entities(store, entity, thresholds.tau_e)?;
    if entities.is_empty() {
        return Ok(QueryResult::default());
    }
    let relations: HashMap<RelationId, f64> =
        candidate_relations(store, relation, thresholds.tau_t)?
            .into_iter()
            .collect();
    if relations.is_empty() {
        return Ok(QueryResult::default());
    }

    let mut best: HashMap<EntityId, f64> = HashMap::new();
    for (bound, entity_sim) in entities {
        let linked: Box<dyn Iterator<Item = _>> = match direction {
            QueryDirection::Object => Box::new(store.triples_with_subject(bound)),
            QueryDirection::Subject => Box::new(store.triples_with_object(bound)),
        };
        for triple in linked {
            let Some(&relation_sim) = relations.get(&triple.relation) else {
                continue;
            };
            let score = 0.5 * (entity_sim + relation_sim);
            if score < thresholds.tau_r {
                continue;
            }
            let open = match direction {
                QueryDirection::Object => triple.object,
                QueryDirection::Subject => triple.subject,
            };
            best.entry(open)
                .and_modify(|s| *s = s.max(score))
                .or_insert(score);
        }
    }
    Ok(QueryResult::from_scores(store, best, thresholds))
}

/// Runs one query. No ambiguity filtering happens here.
pub fn execute_query(
    store: &MemoryStore,
    query: &MemoryQuery,
    thresholds: &RetrievalThresholds,
) -> Result<QueryResult, RetrievalError> {
    let entity = store.embed(&query.entity)?;
    let relation = store.embed(&query.relation)?;
    execute_query_vectors(store, query.direction, &entity, &relation, thresholds)
}

/// Runs independent queries, in parallel when the `parallel` feature is on.
pub fn execute_many(
    store: &MemoryStore,
    queries: &[MemoryQuery],
    thresholds: &RetrievalThresholds,
) -> Result<Vec<QueryResult>, RetrievalError> {
    queries
        .par_iter()
        .map(|q| execute_query(store, q, thresholds))
        .collect()
}

pub fn is_ambiguous_query(query: &MemoryQuery, list: &AmbiguityList) -> bool {
    list.is_ambiguous(query)
}

/// Runs a memory-read call's queries and merges their results.
///
/// Ambiguous queries are skipped; overflowing queries contribute nothing.
/// The union is deduplicated by entity id, keeping the best score. When the
/// merged set is larger than `q_thr`, `overflowed` is set but the entities
/// are kept so callers can inspect them.
pub fn execute_batch(
    store: &MemoryStore,
    queries: &[MemoryQuery],
    thresholds: &RetrievalThresholds,
    ambiguity: &AmbiguityList,
) -> Result<QueryResult, RetrievalError> {
    let mut filtered = false;
    let kept: Vec<MemoryQuery> = queries
        .iter()
        .filter(|q| {
            let ambiguous = ambiguity.is_ambiguous(q);
            filtered |= ambiguous;
            !ambiguous
        })
        .cloned()
        .collect();

    let mut best: HashMap<EntityId, f64> = HashMap::new();
    for result in execute_many(store, &kept, thresholds)? {
        for e in result.entities {
            best.entry(e.id)
                .and_modify(|s| *s = s.max(e.score))
                .or_insert(e.score);
        }
    }
    let mut entities: Vec<ScoredEntity> = best
        .into_iter()
        .map(|(id, score)| ScoredEntity {
            id,
            name: store.entity(id).expect("result entity").name.clone(),
            score,
        })
        .collect();
    sort_scored(&mut entities);
    Ok(QueryResult {
        raw_count: entities.len(),
        overflowed: entities.len() > thresholds.q_thr,
        entities,
        filtered_ambiguous: filtered,
    })
}
