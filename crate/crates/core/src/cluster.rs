//! Split-merge clustering by pseudo-volume tests.
//!
//! Phase one repeatedly splits clusters with two-component EM and keeps a
//! split only when the children's summed pseudo-volume is below
//! `(1 + tau_s)` times the parent's. Phase two merges pairs of the remaining
//! clusters whose union is not much larger than the pair, highest ratio
//! first, until no pair qualifies.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::em::{em_two_gaussian, hard_partition, split_ratio, EmConfig};
use crate::error::{invalid, Error, Result};
use crate::stats::{
    moments_of, pseudo_volume, CovarianceDivisor, DataMatrix, Moments, PseudoVolume,
};

/// A subset of the rows of a [`DataMatrix`] with its moments cached.
#[derive(Clone, Debug)]
pub struct ClusterView<'a> {
    data: &'a DataMatrix,
    indices: Vec<usize>,
    moments: Moments,
    pv: PseudoVolume,
    divisor: CovarianceDivisor,
}

impl<'a> ClusterView<'a> {
    /// Indices are sorted; duplicates and out-of-range indices are errors.
    pub fn new(
        data: &'a DataMatrix,
        mut indices: Vec<usize>,
        divisor: CovarianceDivisor,
    ) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate point index in cluster"));
        }
        if let Some(&last) = indices.last() {
            if last >= data.n() {
                return Err(invalid(format!(
                    "point index {last} out of range for {} points",
                    data.n()
                )));
            }
        }
        let moments = moments_of(data, &indices, divisor)?;
        let pv = pseudo_volume(&moments)?;
        Ok(ClusterView {
            data,
            indices,
            moments,
            pv,
            divisor,
        })
    }

    pub fn full(data: &'a DataMatrix, divisor: CovarianceDivisor) -> Result<Self> {
        ClusterView::new(data, (0..data.n()).collect(), divisor)
    }

    /// Another view over the same data with the same divisor.
    pub fn subset(&self, indices: Vec<usize>) -> Result<ClusterView<'a>> {
        ClusterView::new(self.data, indices, self.divisor)
    }

    pub fn union(&self, other: &ClusterView<'a>) -> Result<ClusterView<'a>> {
        let mut idx = self.indices.clone();
        idx.extend_from_slice(&other.indices);
        self.subset(idx)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn pseudo_volume(&self) -> PseudoVolume {
        self.pv
    }

    pub fn data(&self) -> &'a DataMatrix {
        self.data
    }

    pub fn divisor(&self) -> CovarianceDivisor {
        self.divisor
    }

    /// The cluster's points as their own matrix, in index order.
    pub fn points(&self) -> DataMatrix {
        self.data.select(&self.indices)
    }
}

/// Outcome of a split or merge test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Summed pseudo-volume of the parts over that of the whole; `None` when
    /// the whole is degenerate.
    pub ratio: Option<f64>,
    pub accept: bool,
}

fn check_partition(whole: &ClusterView, a: &ClusterView, b: &ClusterView) -> Result<()> {
    if !std::ptr::eq(whole.data, a.data) || !std::ptr::eq(whole.data, b.data) {
        return Err(Error::NotPartition("views over different datasets".into()));
    }
    if a.len() + b.len() != whole.len() {
        return Err(Error::NotPartition(format!(
            "{} + {} points do not make {}",
            a.len(),
            b.len(),
            whole.len()
        )));
    }
    let (mut i, mut j) = (0, 0);
    for &w in whole.indices() {
        if i < a.len() && a.indices[i] == w {
            i += 1;
        } else if j < b.len() && b.indices[j] == w {
            j += 1;
        } else {
            return Err(Error::NotPartition(format!(
                "point {w} missing or assigned twice"
            )));
        }
    }
    Ok(())
}

/// Accepts splitting `parent` into `left` and `right` when
/// `(pv(left) + pv(right)) / pv(parent) < 1 + tau_s`. A degenerate parent is
/// never split.
pub fn split_test(
    parent: &ClusterView,
    left: &ClusterView,
    right: &ClusterView,
    tau_s: f64,
) -> Result<Decision> {
    check_partition(parent, left, right)?;
    let ratio = split_ratio(parent, left, right);
    Ok(Decision {
        ratio,
        accept: ratio.is_some_and(|r| r < 1.0 + tau_s),
    })
}

/// Merges `q` and `r` into `p` when `(pv(q) + pv(r)) / pv(p) >= 1 + tau_m`.
pub fn merge_test(
    p: &ClusterView,
    q: &ClusterView,
    r: &ClusterView,
    tau_m: f64,
) -> Result<Decision> {
    check_partition(p, q, r)?;
    let ratio = split_ratio(p, q, r);
    Ok(Decision {
        ratio,
        accept: ratio.is_some_and(|x| x >= 1.0 + tau_m),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub tau_s: f64,
    pub tau_m: f64,
    pub em: EmConfig,
    /// Clusters below this size are never split, and an accepted split must
    /// leave at least half of it on each side. `None` picks
    /// [`default_min_cluster_size`].
    pub min_cluster_size: Option<usize>,
    pub divisor: CovarianceDivisor,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            tau_s: 0.05,
            tau_m: -0.05,
            em: EmConfig::default(),
            min_cluster_size: None,
            divisor: CovarianceDivisor::Unbiased,
        }
    }
}

/// Twice the free parameter count of a two-component full-covariance
/// Gaussian mixture in `d` dimensions.
///
/// Below this size EM splits of a single Gaussian sample routinely pass the
/// split test (in 4-D, most samples of 100 points do).
pub fn default_min_cluster_size(d: usize) -> usize {
    let params = 2 * (d + d * (d + 1) / 2) + 1;
    2 * params
}

impl ClusteringConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = ClusteringConfig::default();
        cfg.em.seed = seed;
        cfg
    }

    pub fn effective_min_cluster_size(&self, d: usize) -> Result<usize> {
        let floor = 2 * (d + 1);
        match self.min_cluster_size {
            None => Ok(default_min_cluster_size(d)),
            Some(m) if m >= floor => Ok(m),
            Some(m) => Err(invalid(format!(
                "min_cluster_size {m} below 2(d+1) = {floor}"
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.tau_s.is_finite() && self.tau_s != f64::INFINITY {
            return Err(invalid("tau_s must be a number"));
        }
        if !self.tau_m.is_finite() {
            return Err(invalid("tau_m must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Split,
    Merge,
}

/// One split or merge decision.
///
/// `clusters` lists `[parent, left, right]` for an accepted split, `[parent]`
/// for a rejected one, `[q, r, merged]` for an accepted merge and `[q, r]` for
/// the best rejected merge candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub ratio: Option<f64>,
    pub accepted: bool,
    pub clusters: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub size: usize,
    pub mean: Vec<f64>,
    pub pseudo_volume: f64,
}

/// Full record of a split-merge run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub k: usize,
    /// Final cluster per point, numbered by first appearance.
    pub labels: Vec<usize>,
    pub events: Vec<Event>,
    /// Final clusters in label order.
    pub clusters: Vec<ClusterSummary>,
    /// Cluster id of every point when the split phase ended.
    pub split_labels: Vec<usize>,
}

impl ClusterTree {
    /// Number of clusters left when the split phase ended.
    pub fn undecomposable_count(&self) -> usize {
        let mut ids = self.split_labels.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Replays the accepted merges over `split_labels` and returns the
    /// resulting canonical labels.
    pub fn replay_merges(&self) -> Result<Vec<usize>> {
        let mut labels = self.split_labels.clone();
        for e in self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Merge && e.accepted)
        {
            let [q, r, merged] = e.clusters[..] else {
                return Err(invalid("merge event without [q, r, merged] ids"));
            };
            for l in labels.iter_mut() {
                if *l == q || *l == r {
                    *l = merged;
                }
            }
        }
        Ok(canonical_labels(&labels))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.size).collect()
    }
}

impl ClusterTree {
    /// A tree with no events for a labelling produced elsewhere, such as
    /// k-means. Cluster ids are the canonical labels.
    pub fn from_labels(
        data: &DataMatrix,
        labels: &[usize],
        divisor: CovarianceDivisor,
    ) -> Result<ClusterTree> {
        if labels.len() != data.n() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                actual: labels.len(),
            });
        }
        let labels = canonical_labels(labels);
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        let views = groups
            .into_iter()
            .enumerate()
            .map(|(id, idx)| Ok((id, ClusterView::new(data, idx, divisor)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusterTree {
            k,
            split_labels: labels.clone(),
            labels,
            events: Vec::new(),
            clusters: summarize(&views),
        })
    }
}

/// Renumbers labels 0, 1, ... in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Clusters `data` without a preset number of clusters.
pub fn split_merge_cluster(data: &DataMatrix, cfg: &ClusteringConfig) -> Result<ClusterTree> {
    cfg.validate()?;
    let min_size = cfg.effective_min_cluster_size(data.d())?;
    if data.n() < min_size {
        return Err(invalid(format!(
            "{} points is below the minimum cluster size {min_size}",
            data.n()
        )));
    }
    let em_cfg = EmConfig {
        min_side: cfg.em.min_side.max(min_size / 2),
        ..cfg.em.clone()
    };

    let mut events = Vec::new();
    let mut next_id = 1;
    let mut queue = VecDeque::from([(0usize, ClusterView::full(data, cfg.divisor)?)]);
    let mut finals: Vec<(usize, ClusterView)> = Vec::new();

    while let Some((id, view)) = queue.pop_front() {
        if view.len() < min_size {
            finals.push((id, view));
            continue;
        }
        let attempt = em_two_gaussian(&view.points(), &em_cfg)
            .and_then(|fit| hard_partition(&view, &fit.responsibilities, fit.converged));
        let split = match attempt {
            Ok(s) if s.left.len().min(s.right.len()) >= min_size / 2 => s,
            _ => {
                // Failed or lopsided splits leave the cluster final.
                events.push(Event {
                    kind: EventKind::Split,
                    ratio: None,
                    accepted: false,
                    clusters: vec![id],
                });
                finals.push((id, view));
                continue;
            }
        };
        let decision = split_test(&view, &split.left, &split.right, cfg.tau_s)?;
        if decision.accept {
            let (l, r) = (next_id, next_id + 1);
            next_id += 2;
            events.push(Event {
                kind: EventKind::Split,
                ratio: decision.ratio,
                accepted: true,
                clusters: vec![id, l, r],
            });
            queue.push_back((l, split.left));
            queue.push_back((r, split.right));
        } else {
            events.push(Event {
                kind: EventKind::Split,
                ratio: decision.ratio,
                accepted: false,
                clusters: vec![id],
            });
            finals.push((id, view));
        }
    }

    finals.sort_by_key(|(id, _)| *id);
    let mut split_labels = vec![0; data.n()];
    for (id, v) in &finals {
        for &i in v.indices() {
            split_labels[i] = *id;
        }
    }

    merge_phase(&mut finals, &mut events, &mut next_id, cfg.tau_m)?;

    let mut raw = vec![0; data.n()];
    for (id, v) in &finals {
        for &i in v.indices() {
            raw[i] = *id;
        }
    }
    let clusters = summarize(&finals);
    Ok(ClusterTree {
        k: clusters.len(),
        labels: canonical_labels(&raw),
        events,
        clusters,
        split_labels,
    })
}

/// Summaries ordered by each cluster's smallest point index, which is the
/// order of canonical labels.
fn summarize(clusters: &[(usize, ClusterView)]) -> Vec<ClusterSummary> {
    let mut order: Vec<&(usize, ClusterView)> = clusters.iter().collect();
    order.sort_by_key(|(_, v)| v.indices()[0]);
    order
        .iter()
        .map(|(id, v)| ClusterSummary {
            id: *id,
            size: v.len(),
            mean: v.moments().mean.iter().copied().collect(),
            pseudo_volume: v.pseudo_volume().value(),
        })
        .collect()
}

fn merge_phase<'a>(
    clusters: &mut Vec<(usize, ClusterView<'a>)>,
    events: &mut Vec<Event>,
    next_id: &mut usize,
    tau_m: f64,
) -> Result<()> {
    let mut cache: BTreeMap<(usize, usize), (Decision, ClusterView<'a>)> = BTreeMap::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        let mut best_rejected: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let key = (clusters[i].0, clusters[j].0);
                if let Entry::Vacant(slot) = cache.entry(key) {
                    let union = clusters[i].1.union(&clusters[j].1)?;
                    let d = merge_test(&union, &clusters[i].1, &clusters[j].1, tau_m)?;
                    slot.insert((d, union));
                }
                let (d, _) = &cache[&key];
                let Some(ratio) = d.ratio else { continue };
                let slot = if d.accept {
                    &mut best
                } else {
                    &mut best_rejected
                };
                if slot.is_none_or(|(r, _, _)| ratio > r) {
                    *slot = Some((ratio, i, j));
                }
            }
        }
        let Some((ratio, i, j)) = best else {
            if let Some((ratio, i, j)) = best_rejected {
                events.push(Event {
                    kind: EventKind::Merge,
                    ratio: Some(ratio),
                    accepted: false,
                    clusters: vec![clusters[i].0, clusters[j].0],
                });
            }
            return Ok(());
        };
        let key = (clusters[i].0, clusters[j].0);
        let (_, union) = cache.remove(&key).expect("cached pair");
        let id = *next_id;
        *next_id += 1;
        events.push(Event {
            kind: EventKind::Merge,
            ratio: Some(ratio),
            accepted: true,
            clusters: vec![key.0, key.1, id],
        });
        clusters.remove(j);
        clusters.remove(i);
        cache.retain(|(a, b), _| ![key.0, key.1].contains(a) && ![key.0, key.1].contains(b));
        clusters.push((id, union));
    }
}
