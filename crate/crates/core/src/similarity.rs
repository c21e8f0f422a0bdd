//! Heuristic similarity between samples and exact closest-pair search.
//!
//! Everything here is exact: no approximate indexes. A batch of `s` items has
//! `s(s-1)/2` pairs; they are scored in cache-sized tiles in parallel and the
//! per-tile winners are merged by a total order, so the output never depends
//! on the thread count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of flagged pairs per batch.
pub const DEFAULT_K: usize = 20;

const TILE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    /// Raw intensities in `[0, 1]`.
    Pixel,
    /// Coordinates in some learned feature space.
    Embedding,
}

/// One sample as a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemVector {
    id: String,
    values: Vec<f32>,
    kind: ItemKind,
}

impl ItemVector {
    pub fn new(id: impl Into<String>, values: Vec<f32>, kind: ItemKind) -> Result<Self> {
        let id = id.into();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("item {id}: non-finite value {v}")));
        }
        if kind == ItemKind::Pixel {
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!(
                    "item {id}: pixel value {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { id, values, kind })
    }

    pub fn pixel(id: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        Self::new(id, values, ItemKind::Pixel)
    }

    pub fn embedding(id: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        Self::new(id, values, ItemKind::Embedding)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn kind(&self) -> ItemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| *v as f64).sum::<f64>() / self.values.len() as f64
    }
}

/// How two items are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Plain L2 on the stored values.
    #[default]
    Euclidean,
    /// L2 after subtracting each item's own mean (for unaligned pixel data).
    MeanCentered,
}

/// A candidate near-duplicate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCandidate {
    /// Lexicographically smaller id.
    pub id_a: String,
    pub id_b: String,
    pub distance: f64,
    /// 1-based position in the flagged list.
    pub rank: usize,
}

/// Checks that all items share dimension and kind.
pub fn check_compatible(items: &[ItemVector]) -> Result<()> {
    if let Some(first) = items.first() {
        for item in items {
            compatible(first, item)?;
        }
    }
    Ok(())
}

fn compatible(a: &ItemVector, b: &ItemVector) -> Result<()> {
    if a.kind != b.kind {
        return Err(Error::invalid(format!(
            "items {} ({:?}) and {} ({:?}) have different kinds",
            a.id, a.kind, b.id, b.kind
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "items {} (dim {}) and {} (dim {}) have different dimensions",
            a.id,
            a.dim(),
            b.id,
            b.dim()
        )));
    }
    Ok(())
}

/// `sum (a_i - b_i - offset)^2`, accumulated in f64 over eight lanes.
#[inline]
fn squared_l2(a: &[f32], b: &[f32], offset: f64) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (rem_a, rem_b) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for lane in 0..8 {
            let d = ca[lane] as f64 - cb[lane] as f64 - offset;
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in rem_a.iter().zip(rem_b) {
        let d = *x as f64 - *y as f64 - offset;
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// L2 distance between two items of the same kind and dimension.
pub fn euclidean_distance(a: &ItemVector, b: &ItemVector) -> Result<f64> {
    compatible(a, b)?;
    Ok(squared_l2(&a.values, &b.values, 0.0).sqrt())
}

/// Distance under `metric`.
pub fn distance(a: &ItemVector, b: &ItemVector, metric: Metric) -> Result<f64> {
    compatible(a, b)?;
    Ok(match metric {
        Metric::Euclidean => squared_l2(&a.values, &b.values, 0.0).sqrt(),
        Metric::MeanCentered => squared_l2(&a.values, &b.values, a.mean() - b.mean()).sqrt(),
    })
}

/// Per-item data the inner loop needs, computed once per batch.
struct Prepared<'a> {
    items: Vec<&'a ItemVector>,
    means: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(items: Vec<&'a ItemVector>, metric: Metric) -> Self {
        let means = match metric {
            Metric::Euclidean => vec![0.0; items.len()],
            Metric::MeanCentered => items.iter().map(|i| i.mean()).collect(),
        };
        Self { items, means }
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        squared_l2(
            &self.items[i].values,
            &self.items[j].values,
            self.means[i] - self.means[j],
        )
        .sqrt()
    }
}

/// The `k` closest pairs in `batch` under plain L2.
pub fn top_k_pairs(batch: &[ItemVector], k: usize) -> Result<Vec<PairCandidate>> {
    top_k_pairs_with(batch, k, Metric::Euclidean)
}

/// The `k` closest pairs in `batch`, ordered by `(distance, id_a, id_b)`.
///
/// Returns exactly `min(k, s(s-1)/2)` candidates.
pub fn top_k_pairs_with(
    batch: &[ItemVector],
    k: usize,
    metric: Metric,
) -> Result<Vec<PairCandidate>> {
    check_compatible(batch)?;
    let prepared = Prepared::new(batch.iter().collect(), metric);
    let ids: Vec<&str> = batch.iter().map(|i| i.id.as_str()).collect();
    top_k_by(&ids, k, |i, j| prepared.dist(i, j))
}

/// Closest-pair selection over `ids.len()` items with an arbitrary symmetric
/// distance `dist(i, j)`.
pub fn top_k_by<F>(ids: &[&str], k: usize, dist: F) -> Result<Vec<PairCandidate>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let s = ids.len();
    if s < 2 {
        return Err(Error::invalid(format!("need at least 2 items, got {s}")));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut sorted: Vec<&str> = ids.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!(
            "duplicate item id {:?} in batch",
            w[0]
        )));
    }

    let total_pairs = s * (s - 1) / 2;
    let k = k.min(total_pairs);
    let blocks = s.div_ceil(TILE);
    let tiles: Vec<(usize, usize)> = (0..blocks)
        .flat_map(|bi| (bi..blocks).map(move |bj| (bi, bj)))
        .collect();

    let winners: Vec<Vec<Scored>> = tiles
        .par_iter()
        .map(|&(bi, bj)| {
            let mut heap = BoundedHeap::new(k);
            for i in bi * TILE..((bi + 1) * TILE).min(s) {
                let j_start = if bi == bj { i + 1 } else { bj * TILE };
                for j in j_start..((bj + 1) * TILE).min(s) {
                    let d = dist(i, j);
                    let (a, b) = if ids[i] < ids[j] {
                        (ids[i], ids[j])
                    } else {
                        (ids[j], ids[i])
                    };
                    heap.offer(Scored {
                        dist: d,
                        id_a: a,
                        id_b: b,
                    });
                }
            }
            heap.into_vec()
        })
        .collect();

    let mut merged: Vec<Scored> = winners.into_iter().flatten().collect();
    merged.sort_unstable();
    merged.truncate(k);
    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(r, sc)| PairCandidate {
            id_a: sc.id_a.to_owned(),
            id_b: sc.id_b.to_owned(),
            distance: sc.dist,
            rank: r + 1,
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Scored<'a> {
    dist: f64,
    id_a: &'a str,
    id_b: &'a str,
}

impl Ord for Scored<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id_a.cmp(other.id_a))
            .then_with(|| self.id_b.cmp(other.id_b))
    }
}

impl PartialOrd for Scored<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Scored<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored<'_> {}

/// Keeps the `cap` smallest entries seen.
struct BoundedHeap<'a> {
    cap: usize,
    heap: BinaryHeap<Scored<'a>>,
}

impl<'a> BoundedHeap<'a> {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            heap: BinaryHeap::with_capacity(cap.min(TILE * TILE) + 1),
        }
    }

    #[inline]
    fn offer(&mut self, item: Scored<'a>) {
        if self.heap.len() < self.cap {
            self.heap.push(item);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if item < *worst {
                *worst = item;
            }
        }
    }

    fn into_vec(self) -> Vec<Scored<'a>> {
        self.heap.into_vec()
    }
}

/// Closest corpus item to a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

/// Exact nearest neighbor of `query` in `corpus` by linear scan; ties go to
/// the smaller id.
pub fn nearest_training_neighbor(query: &ItemVector, corpus: &[ItemVector]) -> Result<Neighbor> {
    nearest_neighbor_with(query, corpus, Metric::Euclidean)
}

pub fn nearest_neighbor_with(
    query: &ItemVector,
    corpus: &[ItemVector],
    metric: Metric,
) -> Result<Neighbor> {
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    for item in corpus {
        compatible(query, item)?;
    }
    let q_mean = match metric {
        Metric::Euclidean => 0.0,
        Metric::MeanCentered => query.mean(),
    };
    let best = corpus
        .par_iter()
        .map(|item| {
            let offset = match metric {
                Metric::Euclidean => 0.0,
                Metric::MeanCentered => q_mean - item.mean(),
            };
            (
                squared_l2(&query.values, &item.values, offset).sqrt(),
                item.id.as_str(),
            )
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .expect("corpus is non-empty");
    Ok(Neighbor {
        id: best.1.to_owned(),
        distance: best.0,
    })
}

/// All pairwise distances of a pool, stored as a condensed upper triangle.
///
/// Entries are computed with the same kernel as [`top_k_pairs_with`], so
/// lookups and direct evaluation agree bit for bit.
#[derive(Debug, Clone)]
pub struct PairwiseTable {
    n: usize,
    dists: Vec<f64>,
}

impl PairwiseTable {
    pub fn build(items: &[ItemVector], metric: Metric) -> Result<Self> {
        check_compatible(items)?;
        let n = items.len();
        let prepared = Prepared::new(items.iter().collect(), metric);
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| prepared.dist(i, j)).collect())
            .collect();
        Ok(Self {
            n,
            dists: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distance between pool items `i != j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // row i starts after rows 0..i, which hold (n-1) + ... + (n-i) entries
        let row_start = i * (2 * self.n - i - 1) / 2;
        self.dists[row_start + (j - i - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(s: usize, dim: usize, seed: u64) -> Vec<ItemVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..s)
            .map(|i| {
                let v = (0..dim).map(|_| rng.random::<f32>()).collect();
                ItemVector::embedding(format!("item-{i:04}"), v).unwrap()
            })
            .collect()
    }

    /// Reference: score every pair, sort everything.
    fn naive(batch: &[ItemVector], k: usize) -> Vec<PairCandidate> {
        let mut all = Vec::new();
        for i in 0..batch.len() {
            for j in i + 1..batch.len() {
                let (a, b) = if batch[i].id() < batch[j].id() {
                    (i, j)
                } else {
                    (j, i)
                };
                all.push((
                    euclidean_distance(&batch[a], &batch[b]).unwrap(),
                    batch[a].id().to_owned(),
                    batch[b].id().to_owned(),
                ));
            }
        }
        all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        all.into_iter()
            .take(k)
            .enumerate()
            .map(|(r, (d, a, b))| PairCandidate {
                id_a: a,
                id_b: b,
                distance: d,
                rank: r + 1,
            })
            .collect()
    }

    #[test]
    fn distance_examples() {
        let a = ItemVector::embedding("a", vec![0.0, 0.0]).unwrap();
        let b = ItemVector::embedding("b", vec![3.0, 4.0]).unwrap();
        assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&b, &a).unwrap(), 5.0);

        let c = ItemVector::embedding("c", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            euclidean_distance(&a, &c),
            Err(Error::InvalidArgument(_))
        ));
        let p = ItemVector::pixel("p", vec![0.0, 1.0]).unwrap();
        assert!(euclidean_distance(&a, &p).is_err());
    }

    #[test]
    fn pixel_range_enforced() {
        assert!(ItemVector::pixel("x", vec![0.5, 1.5]).is_err());
        assert!(ItemVector::embedding("x", vec![0.5, 1.5]).is_ok());
        assert!(ItemVector::embedding("x", vec![f32::NAN]).is_err());
    }

    #[test]
    fn mean_centering_ignores_brightness_shift() {
        let a = ItemVector::pixel("a", vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = ItemVector::pixel("b", vec![0.3, 0.4, 0.5, 0.6]).unwrap();
        assert!(distance(&a, &b, Metric::Euclidean).unwrap() > 0.39);
        assert!(distance(&a, &b, Metric::MeanCentered).unwrap() < 1e-6);
    }

    #[test]
    fn two_items_single_pair() {
        let batch = random_batch(2, 5, 1);
        let out = top_k_pairs(&batch, 20).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].rank, 1);
        assert_eq!(
            (out[0].id_a.as_str(), out[0].id_b.as_str()),
            ("item-0000", "item-0001")
        );
    }

    #[test]
    fn exact_duplicate_ranks_first() {
        let mut batch = random_batch(30, 16, 2);
        let dup = ItemVector::embedding("zz-copy", batch[7].values().to_vec()).unwrap();
        batch.push(dup);
        let out = top_k_pairs(&batch, 5).unwrap();
        assert_eq!(out[0].distance, 0.0);
        assert_eq!(out[0].id_a, "item-0007");
        assert_eq!(out[0].id_b, "zz-copy");
    }

    #[test]
    fn canonical_order_inside_pairs() {
        let batch: Vec<_> = ["m", "b", "z", "a"]
            .iter()
            .enumerate()
            .map(|(i, id)| ItemVector::embedding(*id, vec![i as f32]).unwrap())
            .collect();
        for c in top_k_pairs(&batch, 6).unwrap() {
            assert!(c.id_a < c.id_b);
        }
    }

    #[test]
    fn matches_naive_reference() {
        let batch = random_batch(500, 64, 3);
        for k in [1, 20] {
            assert_eq!(top_k_pairs(&batch, k).unwrap(), naive(&batch, k));
        }
    }

    #[test]
    fn full_enumeration_in_sorted_order() {
        for s in [2usize, 3, 17, 60] {
            let batch = random_batch(s, 6, s as u64);
            let all = s * (s - 1) / 2;
            assert_eq!(top_k_pairs(&batch, all).unwrap(), naive(&batch, all));
            assert_eq!(top_k_pairs(&batch, all + 10).unwrap().len(), all);
        }
    }

    #[test]
    fn ties_broken_by_ids() {
        let batch: Vec<_> = ["d", "c", "b", "a"]
            .iter()
            .map(|id| ItemVector::embedding(*id, vec![1.0, 1.0]).unwrap())
            .collect();
        let out = top_k_pairs(&batch, 6).unwrap();
        let keys: Vec<_> = out
            .iter()
            .map(|c| format!("{}{}", c.id_a, c.id_b))
            .collect();
        assert_eq!(keys, ["ab", "ac", "ad", "bc", "bd", "cd"]);
    }

    #[test]
    fn rejects_bad_batches() {
        let batch = random_batch(1, 4, 0);
        assert!(top_k_pairs(&batch, 3).is_err());
        let batch = random_batch(3, 4, 0);
        assert!(top_k_pairs(&batch, 0).is_err());
        let mut dup_ids = random_batch(3, 4, 0);
        dup_ids.push(ItemVector::embedding("item-0001", vec![0.0; 4]).unwrap());
        assert!(top_k_pairs(&dup_ids, 3).is_err());
    }

    #[test]
    fn independent_of_thread_count() {
        let batch = random_batch(300, 32, 4);
        let reference = top_k_pairs(&batch, 40).unwrap();
        for threads in [1, 4, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            assert_eq!(pool.install(|| top_k_pairs(&batch, 40).unwrap()), reference);
        }
    }

    #[test]
    fn nearest_neighbor_examples() {
        let corpus = random_batch(1000, 24, 5);
        let q = ItemVector::embedding("q", corpus[321].values().to_vec()).unwrap();
        let nn = nearest_training_neighbor(&q, &corpus).unwrap();
        assert_eq!((nn.id.as_str(), nn.distance), ("item-0321", 0.0));

        let single = &corpus[..1];
        assert_eq!(
            nearest_training_neighbor(&q, single).unwrap().id,
            "item-0000"
        );
        assert!(nearest_training_neighbor(&q, &[]).is_err());

        let probe = random_batch(20, 24, 6);
        for q in &probe {
            let got = nearest_training_neighbor(q, &corpus).unwrap();
            let mut best: Option<(f64, &str)> = None;
            for c in &corpus {
                let d = euclidean_distance(q, c).unwrap();
                if best.is_none_or(|(bd, bid)| d < bd || (d == bd && c.id() < bid)) {
                    best = Some((d, c.id()));
                }
            }
            let (d, id) = best.unwrap();
            assert_eq!((got.id.as_str(), got.distance), (id, d));
        }
    }

    #[test]
    fn table_lookup_equals_direct() {
        let pool = random_batch(130, 10, 8);
        let table = PairwiseTable::build(&pool, Metric::Euclidean).unwrap();
        for i in 0..pool.len() {
            for j in 0..pool.len() {
                if i != j {
                    assert_eq!(
                        table.get(i, j).to_bits(),
                        euclidean_distance(&pool[i], &pool[j]).unwrap().to_bits()
                    );
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn metric_axioms(seed in any::<u64>(), dim in 1usize..40) {
            let t = random_batch(3, dim, seed);
            let (ab, bc, ac) = (
                euclidean_distance(&t[0], &t[1]).unwrap(),
                euclidean_distance(&t[1], &t[2]).unwrap(),
                euclidean_distance(&t[0], &t[2]).unwrap(),
            );
            prop_assert!(ab >= 0.0 && bc >= 0.0 && ac >= 0.0);
            prop_assert_eq!(ab, euclidean_distance(&t[1], &t[0]).unwrap());
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn adding_items_never_raises_closest_distance(seed in any::<u64>(), s in 2usize..40, extra in 1usize..20) {
            let all = random_batch(s + extra, 8, seed);
            let before = top_k_pairs(&all[..s], 1).unwrap()[0].distance;
            let after = top_k_pairs(&all, 1).unwrap()[0].distance;
            prop_assert!(after <= before);
        }
    }
}
