//! Binary symmetric weight matrices and their connected components.

use serde::Serialize;

use crate::error::{AwcError, Result};

/// Symmetric binary weights stored as per-point sorted sets of positive
/// off-diagonal entries. The diagonal is implicitly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: Vec<Vec<u32>>,
    step: usize,
}

impl WeightMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            rows: vec![Vec::new(); n],
            step: 0,
        }
    }

    pub fn full(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n as u32).filter(|&j| j as usize != i).collect())
            .collect();
        Self { rows, step: 0 }
    }

    /// Build from unordered pairs; each pair is stored in both directions.
    /// Self pairs and duplicates are ignored.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for (i, j) in pairs {
            if i >= n || j >= n {
                return Err(AwcError::InvalidInput(format!("pair ({i}, {j}) out of range for n = {n}")));
            }
            if i != j {
                rows[i].push(j as u32);
                rows[j].push(i as u32);
            }
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self { rows, step: 0 })
    }

    /// Component closure of a labeling: `w_ij = 1` iff `i`, `j` share a label.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut groups: std::collections::BTreeMap<usize, Vec<u32>> = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i as u32);
        }
        let rows = labels
            .iter()
            .enumerate()
            .map(|(i, l)| groups[l].iter().copied().filter(|&j| j as usize != i).collect())
            .collect();
        Self { rows, step: 0 }
    }

    /// Rows must be sorted, duplicate free, without self entries and
    /// mutually consistent.
    pub(crate) fn from_sorted_rows(rows: Vec<Vec<u32>>, step: usize) -> Self {
        let w = Self { rows, step };
        debug_assert!(w.is_symmetric());
        w
    }

    pub fn with_step(mut self, step: usize) -> Self {
        self.step = step;
        self
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        i == j || self.rows[i].binary_search(&(j as u32)).is_ok()
    }

    /// Positive off-diagonal entries of row `i`, ascending.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    /// Number of positive entries `i < j`.
    pub fn positive_pairs(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sum of all entries, diagonal included.
    pub fn total(&self) -> u64 {
        self.n() as u64 + self.rows.iter().map(|r| r.len() as u64).sum::<u64>()
    }

    /// Unordered positive pairs `(i, j)` with `i < j`, lexicographic order.
    pub fn upper_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            let from = row.partition_point(|&j| (j as usize) <= i);
            row[from..].iter().map(move |&j| (i, j as usize))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, row)| {
            row.windows(2).all(|w| w[0] < w[1])
                && row.iter().all(|&j| j as usize != i && self.rows[j as usize].binary_search(&(i as u32)).is_ok())
        })
    }
}

/// Partition of the points into connected components of the weight graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clustering {
    /// Cluster id per point; ids are assigned in order of the smallest
    /// member.
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of `{(i, j) : w_ij = 1}`.
pub fn extract_clusters(w: &WeightMatrix) -> Clustering {
    let n = w.n();
    let mut uf = UnionFind::new(n);
    for (i, j) in w.upper_pairs() {
        uf.union(i, j);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        let root = uf.find(i);
        if label_of_root[root] == usize::MAX {
            label_of_root[root] = next;
            next += 1;
        }
        labels.push(label_of_root[root]);
    }
    Clustering {
        labels,
        num_clusters: next,
    }
}
