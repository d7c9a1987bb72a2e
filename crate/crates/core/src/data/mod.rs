//! Datasets: CSV ingestion, sparse document counts, result files and seeded
//! synthetic generators.
//!
//! All files are UTF-8, comma separated, LF terminated; lines starting with
//! `#` are ignored on input.

mod csv_io;
mod docs;
pub mod generators;

use std::collections::HashMap;

use serde::Serialize;

use crate::neighborhood::{DistanceMatrix, PointMatrix};

pub use csv_io::{
    load_distance_csv, load_points_csv, read_labels_csv, read_weights_csv, write_distance_csv, write_labels_csv,
    write_points_csv, write_weights_csv, LabelColumn, PointsCsvOptions,
};
pub use docs::{load_docs, sparse_distances, tfidf, SparseDocMatrix, SparseRow};
pub use generators::{generator, generators, hyperplane_labels, Generator, GeneratorSpec};

/// Where a dataset came from; reported in run diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "source", rename_all = "kebab-case")]
pub enum Provenance {
    Csv(String),
    DistanceCsv(String),
    Synthetic(String),
    SparseTfidf(String),
}

#[derive(Debug, Clone)]
pub enum Features {
    Points(PointMatrix),
    Distances(DistanceMatrix),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Features,
    /// Reference labels, as read or generated.
    pub labels: Option<Vec<String>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n(&self) -> usize {
        match &self.features {
            Features::Points(p) => p.n(),
            Features::Distances(d) => d.n(),
        }
    }

    /// Coordinate dimension, `None` for distance-only data.
    pub fn dim(&self) -> Option<usize> {
        match &self.features {
            Features::Points(p) => Some(p.dim()),
            Features::Distances(_) => None,
        }
    }

    pub fn points(&self) -> Option<&PointMatrix> {
        match &self.features {
            Features::Points(p) => Some(p),
            Features::Distances(_) => None,
        }
    }

    /// Reference labels as dense ids in order of first appearance.
    pub fn label_ids(&self) -> Option<Vec<usize>> {
        self.labels.as_deref().map(encode_labels)
    }
}

/// Map arbitrary label strings to `0, 1, …` in order of first appearance.
pub fn encode_labels<S: AsRef<str>>(labels: &[S]) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.as_ref()).or_insert(next)
        })
        .collect()
}
