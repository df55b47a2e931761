use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::aggregation::{AggregationSpec, BoundAggregation, Operator};
use super::dataset::Dataset;
use super::request::RequestRecord;
use super::StoreError;
use crate::stats::{fnv1a, mix_seed, Moments};

/// Fisher–Yates steps materialized per extension.
pub const PERMUTATION_BLOCK: usize = 4096;

/// Permutation seed for one (feature, request) pair.
pub fn permutation_seed(seed: u64, feature_id: &str, request_id: u64) -> u64 {
    mix_seed(&[seed, fnv1a(feature_id.as_bytes()), request_id])
}

/// Fisher–Yates over `0..len`, materialized lazily. Displaced entries of the
/// virtual array live in a sparse map, so memory is proportional to the
/// drawn prefix rather than the partition size.
#[derive(Debug, Clone)]
pub struct LazyPermutation {
    len: usize,
    rng: ChaCha8Rng,
    displaced: HashMap<usize, usize>,
    order: Vec<usize>,
}

impl LazyPermutation {
    pub fn new(len: usize, seed: u64) -> Self {
        Self {
            len,
            rng: ChaCha8Rng::seed_from_u64(seed),
            displaced: HashMap::new(),
            order: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The materialized prefix.
    pub fn prefix(&self) -> &[usize] {
        &self.order
    }

    /// Materializes at least `count` entries (capped at `len`), one block at
    /// a time, so the sequence never depends on how callers batch requests.
    pub fn ensure(&mut self, count: usize) {
        let count = count.min(self.len);
        while self.order.len() < count {
            let stop = (self.order.len() + PERMUTATION_BLOCK).min(self.len);
            for i in self.order.len()..stop {
                let j = self.rng.random_range(i..self.len);
                let at_i = self.displaced.remove(&i).unwrap_or(i);
                let at_j = if j == i {
                    at_i
                } else {
                    let v = self.displaced.get(&j).copied().unwrap_or(j);
                    self.displaced.insert(j, at_i);
                    v
                };
                self.order.push(at_j);
            }
        }
    }
}

/// Per-request incremental sample of one aggregation feature.
///
/// The drawn rows are always the first `n` entries of the permutation, and
/// the streaming moments cover exactly the drawn rows that match the
/// predicate.
#[derive(Debug, Clone)]
pub struct FeatureSampleState<'d> {
    feature_id: String,
    bound: BoundAggregation<'d>,
    seed: u64,
    perm: LazyPermutation,
    values: Vec<f64>,
    matched: Vec<bool>,
    matched_values: Vec<f64>,
    moments: Moments,
}

impl<'d> FeatureSampleState<'d> {
    /// Opens an empty sample over the request-bound partition. An unknown
    /// partition key yields a state with `N = 0`.
    pub fn open(
        dataset: &'d Dataset,
        spec: &AggregationSpec,
        request: &RequestRecord,
        seed: u64,
    ) -> Result<Self, StoreError> {
        let bound = spec.bind(dataset, request)?;
        let seed = permutation_seed(seed, &spec.feature_id, request.id);
        let perm = LazyPermutation::new(bound.population(), seed);
        Ok(Self {
            feature_id: spec.feature_id.clone(),
            bound,
            seed,
            perm,
            values: Vec::new(),
            matched: Vec::new(),
            matched_values: Vec::new(),
            moments: Moments::default(),
        })
    }

    /// Grows the sample to `target` rows and returns how many rows were
    /// newly scanned. Targets above `N` are clamped; targets below the
    /// current size are a no-op.
    pub fn draw_to(&mut self, target: usize) -> usize {
        let population = self.population();
        let target = if target > population {
            log::debug!(
                "feature `{}`: draw target {target} clamped to N={population}",
                self.feature_id
            );
            population
        } else {
            target
        };
        let start = self.drawn();
        if target <= start {
            return 0;
        }
        self.perm.ensure(target);
        let base = self.bound.rows.start;
        for &offset in &self.perm.prefix()[start..target] {
            let row = base + offset;
            let v = self.bound.value(row);
            let hit = self.bound.matches(row);
            self.values.push(v);
            self.matched.push(hit);
            if hit {
                self.matched_values.push(v);
                self.moments.push(v);
            }
        }
        target - start
    }

    pub fn feature_id(&self) -> &str {
        &self.feature_id
    }

    pub fn op(&self) -> Operator {
        self.bound.op
    }

    pub fn has_predicate(&self) -> bool {
        self.bound.has_predicate()
    }

    /// Population size N.
    pub fn population(&self) -> usize {
        self.bound.population()
    }

    /// Sample size n.
    pub fn drawn(&self) -> usize {
        self.values.len()
    }

    pub fn is_exhausted(&self) -> bool {
        self.drawn() == self.population()
    }

    /// Streaming moments of the matching drawn values.
    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn matched_count(&self) -> usize {
        self.matched_values.len()
    }

    /// Matching drawn values in draw order.
    pub fn matched_values(&self) -> &[f64] {
        &self.matched_values
    }

    /// Values of every drawn row in draw order (matching or not).
    pub fn drawn_values(&self) -> &[f64] {
        &self.values
    }

    /// Predicate outcome of every drawn row in draw order.
    pub fn drawn_matches(&self) -> &[bool] {
        &self.matched
    }

    /// Partition-relative offsets of the drawn rows in draw order.
    pub fn drawn_offsets(&self) -> &[usize] {
        &self.perm.prefix()[..self.drawn()]
    }

    /// Seed of this state's permutation; also seeds its bootstrap.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Matching values in table row order; `None` unless the sample covers
    /// the whole partition.
    pub fn row_ordered_matches(&self) -> Option<Vec<f64>> {
        if !self.is_exhausted() {
            return None;
        }
        let n = self.population();
        let mut slots: Vec<Option<f64>> = vec![None; n];
        for (i, &offset) in self.drawn_offsets().iter().enumerate() {
            if self.matched[i] {
                slots[offset] = Some(self.values[i]);
            }
        }
        Some(slots.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{aggregate_values, exact_aggregate, Column, ColumnData, Table};
    use std::collections::HashSet;

    fn dataset(n: usize) -> Dataset {
        let v: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64 + 0.25).collect();
        let t = Table::new("t", vec![Column::new("v", ColumnData::Float64(v))], None).unwrap();
        Dataset::new(vec![t]).unwrap()
    }

    fn spec(id: &str, op: Operator) -> AggregationSpec {
        AggregationSpec {
            feature_id: id.into(),
            table: "t".into(),
            column: Some("v".into()),
            op,
            predicate: vec![],
            partition: None,
        }
    }

    #[test]
    fn open_sets_population() {
        let ds = dataset(100);
        let s = FeatureSampleState::open(&ds, &spec("f", Operator::Avg), &RequestRecord::new(3), 42).unwrap();
        assert_eq!((s.population(), s.drawn()), (100, 0));
    }

    #[test]
    fn draw_counts_and_clamp() {
        let ds = dataset(100);
        let mut s = FeatureSampleState::open(&ds, &spec("f", Operator::Avg), &RequestRecord::new(3), 42).unwrap();
        assert_eq!(s.draw_to(50), 50);
        assert_eq!(s.draw_to(50), 0);
        assert_eq!(s.draw_to(20), 0);
        assert_eq!(s.draw_to(120), 50);
        assert_eq!(s.drawn(), 100);
        let distinct: HashSet<_> = s.drawn_offsets().iter().collect();
        assert_eq!(distinct.len(), 100);
    }

    #[test]
    fn same_inputs_same_permutation() {
        let ds = dataset(10_000);
        let open = || {
            let mut s = FeatureSampleState::open(&ds, &spec("f", Operator::Sum), &RequestRecord::new(9), 7).unwrap();
            s.draw_to(5000);
            s.drawn_offsets().to_vec()
        };
        assert_eq!(open(), open());
    }

    #[test]
    fn incremental_equals_fresh() {
        let ds = dataset(10_000);
        let r = RequestRecord::new(1);
        let mut a = FeatureSampleState::open(&ds, &spec("f", Operator::Var), &r, 5).unwrap();
        a.draw_to(30);
        a.draw_to(4100);
        a.draw_to(5000);
        let mut b = FeatureSampleState::open(&ds, &spec("f", Operator::Var), &r, 5).unwrap();
        b.draw_to(5000);
        assert_eq!(a.moments(), b.moments());
        assert_eq!(a.drawn_offsets(), b.drawn_offsets());
    }

    #[test]
    fn full_draw_reproduces_row_order() {
        let ds = dataset(777);
        let sp = spec("f", Operator::Sum);
        let r = RequestRecord::new(1);
        let mut s = FeatureSampleState::open(&ds, &sp, &r, 5).unwrap();
        s.draw_to(777);
        let ordered = s.row_ordered_matches().unwrap();
        assert_eq!(aggregate_values(Operator::Sum, &ordered), exact_aggregate(&ds, &sp, &r).unwrap());
    }

    #[test]
    fn empty_partition() {
        let t = Table::new("t", vec![Column::new("v", ColumnData::Float64(vec![]))], None).unwrap();
        let ds = Dataset::new(vec![t]).unwrap();
        let mut s = FeatureSampleState::open(&ds, &spec("f", Operator::Avg), &RequestRecord::new(0), 1).unwrap();
        assert_eq!(s.draw_to(10), 0);
        assert!(s.is_exhausted());
    }
}
