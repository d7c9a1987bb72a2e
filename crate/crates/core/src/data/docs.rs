use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{AwcError, Result};
use crate::neighborhood::{DistanceMatrix, MAX_DENSE_POINTS};

/// Sparse row: `(term id, value)` sorted by term id, zeros omitted.
pub type SparseRow = Vec<(u32, f64)>;

/// Document-term counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDocMatrix {
    n_terms: usize,
    rows: Vec<SparseRow>,
}

impl SparseDocMatrix {
    /// Every row must be sorted by term, hold nonnegative finite counts and
    /// at least one positive count.
    pub fn new(n_terms: usize, rows: Vec<SparseRow>) -> Result<Self> {
        for (d, row) in rows.iter().enumerate() {
            if !row.windows(2).all(|w| w[0].0 < w[1].0) {
                return Err(AwcError::InvalidInput(format!("document {d}: terms not strictly increasing")));
            }
            if row.iter().any(|&(t, c)| t as usize >= n_terms || !(c >= 0.0 && c.is_finite())) {
                return Err(AwcError::InvalidInput(format!("document {d}: invalid term or count")));
            }
            if !row.iter().any(|&(_, c)| c > 0.0) {
                return Err(AwcError::InvalidInput(format!("document {d} has no terms")));
            }
        }
        Ok(Self { n_terms, rows })
    }

    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn row(&self, d: usize) -> &[(u32, f64)] {
        &self.rows[d]
    }
}

/// Read whitespace-separated `doc_id term_id count` triplets. Document ids
/// index the rows `0..=max id`; a document without any positive count is
/// rejected. Repeated `(doc, term)` entries are summed.
pub fn load_docs(path: impl AsRef<Path>) -> Result<SparseDocMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| AwcError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, detail: String| AwcError::Format {
        path: path.to_path_buf(),
        detail: format!("line {line}: {detail}"),
    };
    let mut counts: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    let mut n_terms = 0;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| AwcError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(AwcError::RaggedRow {
                path: path.to_path_buf(),
                row: k as u64 + 1,
                expected: 3,
                found: fields.len(),
            });
        }
        let doc: usize = fields[0]
            .parse()
            .map_err(|_| bad(k + 1, format!("document id `{}`", fields[0])))?;
        let term: u32 = fields[1]
            .parse()
            .map_err(|_| bad(k + 1, format!("term id `{}`", fields[1])))?;
        let count: f64 = fields[2]
            .parse()
            .ok()
            .filter(|c: &f64| *c >= 0.0 && c.is_finite())
            .ok_or_else(|| bad(k + 1, format!("count `{}`", fields[2])))?;
        n_terms = n_terms.max(term as usize + 1);
        *counts.entry((doc, term)).or_insert(0.0) += count;
    }
    let Some(&(last_doc, _)) = counts.keys().next_back() else {
        return Err(AwcError::EmptyFile { path: path.to_path_buf() });
    };
    let mut rows = vec![SparseRow::new(); last_doc + 1];
    for ((d, t), c) in counts {
        if c > 0.0 {
            rows[d].push((t, c));
        }
    }
    if let Some(d) = rows.iter().position(Vec::is_empty) {
        return Err(AwcError::Format {
            path: path.to_path_buf(),
            detail: format!("document {d} has no terms"),
        });
    }
    SparseDocMatrix::new(n_terms, rows)
}

/// `x_dj = tf_dj · idf_j` with `idf_j = ln(1+n) − ln(1+n_j) + 1`, where `n_j`
/// counts the documents containing term `j`. Zeros stay zeros.
pub fn tfidf(docs: &SparseDocMatrix) -> Vec<SparseRow> {
    let n = docs.n_docs() as f64;
    let mut df = vec![0usize; docs.n_terms()];
    for row in &docs.rows {
        for &(t, c) in row {
            if c > 0.0 {
                df[t as usize] += 1;
            }
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&nj| (1.0 + n).ln() - (1.0 + nj as f64).ln() + 1.0)
        .collect();
    docs.rows
        .iter()
        .map(|row| {
            row.iter()
                .filter(|&&(_, c)| c > 0.0)
                .map(|&(t, c)| (t, c * idf[t as usize]))
                .collect()
        })
        .collect()
}

fn sparse_sq_dist(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.len() || j < b.len() {
        let ta = a.get(i).map_or(u32::MAX, |e| e.0);
        let tb = b.get(j).map_or(u32::MAX, |e| e.0);
        let diff = if ta == tb {
            i += 1;
            j += 1;
            a[i - 1].1 - b[j - 1].1
        } else if ta < tb {
            i += 1;
            a[i - 1].1
        } else {
            j += 1;
            b[j - 1].1
        };
        acc += diff * diff;
    }
    acc
}

/// Exact Euclidean distances between sparse rows.
pub fn sparse_distances(rows: &[SparseRow]) -> Result<DistanceMatrix> {
    let n = rows.len();
    if n > MAX_DENSE_POINTS {
        return Err(AwcError::InvalidInput(format!(
            "{n} documents exceed the dense limit of {MAX_DENSE_POINTS}"
        )));
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sparse_sq_dist(&rows[i], &rows[j]).sqrt();
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    DistanceMatrix::from_precomputed(n, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(rows: Vec<SparseRow>, n_terms: usize) -> SparseDocMatrix {
        SparseDocMatrix::new(n_terms, rows).unwrap()
    }

    #[test]
    fn idf_values() {
        // term 0 in every doc, term 1 only in doc 0
        let m = docs(vec![vec![(0, 2.0), (1, 3.0)], vec![(0, 1.0)], vec![(0, 5.0)]], 2);
        let x = tfidf(&m);
        assert_eq!(x[1], vec![(0, 1.0)]);
        assert_eq!(x[2], vec![(0, 5.0)]);
        assert_eq!(x[0][0], (0, 2.0));
        let idf1 = 4f64.ln() - 2f64.ln() + 1.0;
        assert!((idf1 - 1.693147).abs() < 1e-6);
        assert!((x[0][1].1 - 3.0 * idf1).abs() < 1e-12);
    }

    #[test]
    fn zero_counts_stay_zero_and_empty_docs_fail() {
        assert!(SparseDocMatrix::new(2, vec![vec![(0, 0.0)]]).is_err());
        let m = docs(vec![vec![(0, 0.0), (1, 1.0)], vec![(0, 1.0)]], 2);
        assert_eq!(tfidf(&m)[0].len(), 1);
    }

    #[test]
    fn sparse_distances_match_dense() {
        let rows = vec![vec![(0, 1.0), (3, 2.0)], vec![(1, 4.0), (3, 2.0)], vec![(2, 1.5)]];
        let dm = sparse_distances(&rows).unwrap();
        let dense = |r: &SparseRow| {
            let mut v = [0.0; 4];
            for &(t, x) in r {
                v[t as usize] = x;
            }
            v
        };
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (dense(&rows[i]), dense(&rows[j]));
                let d = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                assert!((dm.get(i, j) - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn load_triplets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        std::fs::write(&p, "# doc term count\n0 1 2\n0 1 1\n1 0 4\n\n2 5 1\n").unwrap();
        let m = load_docs(&p).unwrap();
        assert_eq!((m.n_docs(), m.n_terms()), (3, 6));
        assert_eq!(m.row(0), &[(1, 3.0)]);

        std::fs::write(&p, "0 1 2\n2 0 1\n").unwrap();
        assert!(load_docs(&p).is_err(), "document 1 missing");
        std::fs::write(&p, "0 1\n").unwrap();
        assert!(load_docs(&p).is_err());
        std::fs::write(&p, "0 1 -2\n").unwrap();
        assert!(load_docs(&p).is_err());
        std::fs::write(&p, "").unwrap();
        assert!(matches!(load_docs(&p), Err(AwcError::EmptyFile { .. })));
    }
}
