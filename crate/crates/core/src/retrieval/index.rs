//! Threshold (range) search over unit vectors.
//!
//! The reference index is an exact linear scan. Any other implementation of
//! [`VectorIndex`] has to return the same sets on the equivalence suite.

use std::collections::HashMap;

use crate::embedding::dot;
#[cfg(feature = "parallel")]
use crate::par::MIN_PARALLEL_LEN;

pub trait VectorIndex: Send + Sync {
    fn dimension(&self) -> usize;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts or replaces the vector stored under `id`.
    fn insert(&mut self, id: u64, vector: &[f64]);

    fn remove(&mut self, id: u64) -> bool;

    /// Every `(id, cosine)` with `cosine >= threshold`, ordered by id.
    fn range_search(&self, query: &[f64], threshold: f64) -> Vec<(u64, f64)>;
}

/// Flat row-major storage scanned in full for every query.
#[derive(Debug, Clone)]
pub struct ExactScanIndex {
    dimension: usize,
    ids: Vec<u64>,
    data: Vec<f64>,
    slots: HashMap<u64, usize>,
}

impl ExactScanIndex {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "index dimension must be positive");
        Self {
            dimension,
            ids: Vec::new(),
            data: Vec::new(),
            slots: HashMap::new(),
        }
    }

    pub fn range_search_sequential(&self, query: &[f64], threshold: f64) -> Vec<(u64, f64)> {
        let mut hits: Vec<(u64, f64)> = self
            .data
            .chunks(self.dimension)
            .zip(&self.ids)
            .filter_map(|(row, &id)| {
                let score = dot(row, query);
                (score >= threshold).then_some((id, score))
            })
            .collect();
        hits.sort_unstable_by_key(|(id, _)| *id);
        hits
    }

    #[cfg(feature = "parallel")]
    pub fn range_search_parallel(&self, query: &[f64], threshold: f64) -> Vec<(u64, f64)> {
        use rayon::prelude::*;

        let mut hits: Vec<(u64, f64)> = self
            .data
            .par_chunks(self.dimension)
            .zip(self.ids.par_iter())
            .filter_map(|(row, &id)| {
                let score = dot(row, query);
                (score >= threshold).then_some((id, score))
            })
            .collect();
        hits.sort_unstable_by_key(|(id, _)| *id);
        hits
    }
}

impl VectorIndex for ExactScanIndex {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn insert(&mut self, id: u64, vector: &[f64]) {
        assert_eq!(vector.len(), self.dimension, "vector dimension");
        if let Some(&slot) = self.slots.get(&id) {
            let start = slot * self.dimension;
            self.data[start..start + self.dimension].copy_from_slice(vector);
            return;
        }
        self.slots.insert(id, self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
    }

    fn remove(&mut self, id: u64) -> bool {
        let Some(slot) = self.slots.remove(&id) else {
            return false;
        };
        let last = self.ids.len() - 1;
        if slot != last {
            let moved = self.ids[last];
            self.ids.swap(slot, last);
            let (head, tail) = self.data.split_at_mut(last * self.dimension);
            head[slot * self.dimension..(slot + 1) * self.dimension]
                .copy_from_slice(&tail[..self.dimension]);
            self.slots.insert(moved, slot);
        }
        self.ids.pop();
        self.data.truncate(last * self.dimension);
        true
    }

    fn range_search(&self, query: &[f64], threshold: f64) -> Vec<(u64, f64)> {
        assert_eq!(query.len(), self.dimension, "query dimension");
        #[cfg(feature = "parallel")]
        if self.ids.len() >= MIN_PARALLEL_LEN {
            return self.range_search_parallel(query, threshold);
        }
        self.range_search_sequential(query, threshold)
    }
}
