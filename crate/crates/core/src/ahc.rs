//! Agglomerative hierarchical clustering over a distance matrix.
//!
//! Clusters are identified scipy-style: leaves are `0..n`, the cluster
//! created by merge `m` gets id `n + m`. The globally closest pair is merged
//! first; ties go to the pair with the smallest `(min id, max id)`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::plda::{ScoreKind, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linkage {
    /// Mean of all cross-cluster leaf distances.
    #[default]
    Average,
    Complete,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop when this many clusters remain.
    FixedK(usize),
    /// Stop before the first merge whose linkage distance exceeds the value.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Smaller of the two merged cluster ids.
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// Per-utterance cluster labels in `0..k`, every label used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!("cluster label {missing} is unused (k = {k})")));
        }
        Ok(Self { labels, k })
    }

    /// Densifies arbitrary ids, preserving their numeric order.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut ids: Vec<usize> = raw.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let labels = raw.iter().map(|r| ids.binary_search(r).unwrap()).collect();
        Self { labels, k: ids.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Member indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn validate(d: &ScoreMatrix) -> Result<()> {
    if d.kind() != ScoreKind::Distance {
        return Err(Error::Invalid(format!("AHC needs a distance matrix, got {:?}", d.kind())));
    }
    let n = d.n();
    for i in 0..n {
        if d.get(i, i) != 0.0 {
            return Err(Error::Invalid(format!("distance diagonal at {i} is {}", d.get(i, i))));
        }
        for j in (i + 1)..n {
            if d.get(i, j) != d.get(j, i) {
                return Err(Error::Invalid(format!("distance matrix asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Key {
    dist: f64,
    lo: usize,
    hi: usize,
}

impl Key {
    fn cmp(&self, other: &Key) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

struct Work {
    n: usize,
    linkage: Linkage,
    /// Average linkage stores sums of cross distances; the others store the linkage itself.
    agg: Vec<f64>,
    size: Vec<usize>,
    id: Vec<usize>,
    active: Vec<bool>,
    nn: Vec<Option<(usize, Key)>>,
}

impl Work {
    fn new(d: &ScoreMatrix, linkage: Linkage) -> Self {
        let n = d.n();
        let mut w = Self {
            n,
            linkage,
            agg: d.values().to_vec(),
            size: vec![1; n],
            id: (0..n).collect(),
            active: vec![true; n],
            nn: vec![None; n],
        };
        for i in 0..n {
            w.refresh_nn(i);
        }
        w
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        let v = self.agg[i * self.n + j];
        match self.linkage {
            Linkage::Average => v / (self.size[i] * self.size[j]) as f64,
            _ => v,
        }
    }

    fn key(&self, i: usize, j: usize) -> Key {
        let (a, b) = (self.id[i], self.id[j]);
        Key {
            dist: self.distance(i, j),
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    fn refresh_nn(&mut self, i: usize) {
        let mut best: Option<(usize, Key)> = None;
        for j in 0..self.n {
            if j == i || !self.active[j] {
                continue;
            }
            let k = self.key(i, j);
            if best.is_none_or(|(_, b)| k.cmp(&b) == Ordering::Less) {
                best = Some((j, k));
            }
        }
        self.nn[i] = best;
    }

    fn closest(&self) -> Option<(usize, usize, Key)> {
        let mut best: Option<(usize, usize, Key)> = None;
        for i in 0..self.n {
            if !self.active[i] {
                continue;
            }
            if let Some((j, k)) = self.nn[i] {
                if best.is_none_or(|(_, _, b)| k.cmp(&b) == Ordering::Less) {
                    best = Some((i, j, k));
                }
            }
        }
        best
    }

    /// Merges slot `o` into slot `s` and gives the result cluster id `new_id`.
    fn merge(&mut self, s: usize, o: usize, new_id: usize) {
        let n = self.n;
        for c in 0..n {
            if !self.active[c] || c == s || c == o {
                continue;
            }
            let (x, y) = (self.agg[s * n + c], self.agg[o * n + c]);
            let v = match self.linkage {
                Linkage::Average => x + y,
                Linkage::Complete => x.max(y),
                Linkage::Single => x.min(y),
            };
            self.agg[s * n + c] = v;
            self.agg[c * n + s] = v;
        }
        self.size[s] += self.size[o];
        self.id[s] = new_id;
        self.active[o] = false;
        self.nn[o] = None;

        self.refresh_nn(s);
        for c in 0..n {
            if !self.active[c] || c == s {
                continue;
            }
            match self.nn[c] {
                Some((j, _)) if j == s || j == o => self.refresh_nn(c),
                Some((_, current)) => {
                    let k = self.key(c, s);
                    if k.cmp(&current) == Ordering::Less {
                        self.nn[c] = Some((s, k));
                    }
                }
                None => self.refresh_nn(c),
            }
        }
    }
}

/// Average-linkage AHC.
pub fn ahc_cluster(distances: &ScoreMatrix, stop: StopRule) -> Result<(ClusterAssignment, Dendrogram)> {
    ahc_cluster_with(distances, stop, Linkage::Average)
}

pub fn ahc_cluster_with(
    distances: &ScoreMatrix,
    stop: StopRule,
    linkage: Linkage,
) -> Result<(ClusterAssignment, Dendrogram)> {
    validate(distances)?;
    let n = distances.n();
    let target = match stop {
        StopRule::FixedK(k) if k == 0 || k > n => {
            return Err(Error::Invalid(format!("fixed K = {k} outside 1..={n}")))
        }
        StopRule::FixedK(k) => k,
        StopRule::Threshold(t) if t.is_nan() || t < 0.0 => {
            return Err(Error::Invalid(format!("threshold must be >= 0, got {t}")))
        }
        StopRule::Threshold(_) => 1.min(n),
    };

    let mut work = Work::new(distances, linkage);
    let mut merges = Vec::with_capacity(n.saturating_sub(target));
    let mut clusters = n;
    while clusters > target {
        let Some((i, j, key)) = work.closest() else { break };
        if let StopRule::Threshold(t) = stop {
            if key.dist > t {
                break;
            }
        }
        let new_id = n + merges.len();
        merges.push(Merge {
            a: key.lo,
            b: key.hi,
            distance: key.dist,
            id: new_id,
        });
        work.merge(i.min(j), i.max(j), new_id);
        clusters -= 1;
    }
    let dendrogram = Dendrogram { leaves: n, merges };
    let assignment = apply_merges(&dendrogram, dendrogram.merges.len());
    Ok((assignment, dendrogram))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Labels after the first `count` merges, numbered by first appearance.
fn apply_merges(d: &Dendrogram, count: usize) -> ClusterAssignment {
    let n = d.leaves;
    let mut parent: Vec<usize> = (0..n).collect();
    let mut leaf_of: Vec<usize> = (0..n).collect();
    for m in &d.merges[..count] {
        let ra = find(&mut parent, leaf_of[m.a]);
        let rb = find(&mut parent, leaf_of[m.b]);
        parent[rb] = ra;
        leaf_of.push(ra);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let labels = (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect();
    ClusterAssignment { labels, k: next }
}

/// Re-cuts a dendrogram at `k` clusters without re-clustering.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.leaves;
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("cut at k = {k} outside 1..={n}")));
    }
    if dendrogram.merges.len() < n - k {
        return Err(Error::Invalid(format!(
            "dendrogram has {} merges; cutting at k = {k} needs {}",
            dendrogram.merges.len(),
            n - k
        )));
    }
    Ok(apply_merges(dendrogram, n - k))
}
