use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AwcError, Result};
use crate::neighborhood::{DistanceMatrix, PointMatrix};
use crate::weights::WeightMatrix;

use super::{Dataset, Features, Provenance};

const SYMMETRY_RTOL: f64 = 1e-9;
const DIAGONAL_TOL: f64 = 1e-12;

/// Column holding reference labels in a points file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Header name; requires a header row.
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointsCsvOptions {
    pub has_header: bool,
    pub label_column: Option<LabelColumn>,
}

impl Default for PointsCsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            label_column: None,
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| AwcError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| AwcError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> AwcError + '_ {
    move |source| AwcError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// All records with their 1-based line numbers, blank lines skipped.
fn records(path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = reader(open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_number(path: &Path, row: u64, column: usize, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(AwcError::NonNumeric {
            path: path.to_path_buf(),
            row,
            column: column + 1,
            value: cell.to_string(),
        }),
    }
}

/// Read a points file, one point per row. Row and column numbers in errors
/// are 1-based.
pub fn load_points_csv(path: impl AsRef<Path>, options: &PointsCsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rows = records(path)?.into_iter();
    let header = if options.has_header { rows.next().map(|(_, r)| r) } else { None };
    let rows: Vec<_> = rows.collect();
    if rows.is_empty() {
        return Err(AwcError::EmptyFile { path: path.to_path_buf() });
    }
    let width = header.as_ref().map_or(rows[0].1.len(), |h| h.len());
    let label_idx = match &options.label_column {
        None => None,
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(AwcError::Format {
                path: path.to_path_buf(),
                detail: format!("label column {i} out of range for {width} columns"),
            })
        }
        Some(LabelColumn::Name(name)) => {
            let header = header.as_ref().ok_or_else(|| AwcError::Format {
                path: path.to_path_buf(),
                detail: format!("label column `{name}` given by name but the file has no header"),
            })?;
            Some(header.iter().position(|h| h == name).ok_or_else(|| AwcError::Format {
                path: path.to_path_buf(),
                detail: format!("no column named `{name}`"),
            })?)
        }
    };
    let dim = width - label_idx.is_some() as usize;
    if dim == 0 {
        return Err(AwcError::Format {
            path: path.to_path_buf(),
            detail: "no coordinate columns".into(),
        });
    }

    let mut data = Vec::with_capacity(rows.len() * dim);
    let mut labels = label_idx.map(|_| Vec::with_capacity(rows.len()));
    for (line, rec) in &rows {
        if rec.len() != width {
            return Err(AwcError::RaggedRow {
                path: path.to_path_buf(),
                row: *line,
                expected: width,
                found: rec.len(),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                if let Some(l) = labels.as_mut() {
                    l.push(cell.to_string());
                }
            } else {
                data.push(parse_number(path, *line, c, cell)?);
            }
        }
    }
    Ok(Dataset {
        features: Features::Points(PointMatrix::new(rows.len(), dim, data)?),
        labels,
        provenance: Provenance::Csv(path.display().to_string()),
    })
}

/// Read a square distance matrix without header. Entries that differ from
/// their transpose by at most a relative 1e-9 are averaged; larger
/// asymmetry, negative entries and a diagonal beyond 1e-12 are errors.
pub fn load_distance_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = records(path)?;
    if rows.is_empty() {
        return Err(AwcError::EmptyFile { path: path.to_path_buf() });
    }
    let n = rows.len();
    let mut data = Vec::with_capacity(n * n);
    for (line, rec) in &rows {
        if rec.len() != n {
            return Err(AwcError::RaggedRow {
                path: path.to_path_buf(),
                row: *line,
                expected: n,
                found: rec.len(),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v = parse_number(path, *line, c, cell)?;
            if v < 0.0 {
                return Err(AwcError::Format {
                    path: path.to_path_buf(),
                    detail: format!("negative distance {v} at ({}, {c})", data.len() / n),
                });
            }
            data.push(v);
        }
    }
    let bad = |detail: String| AwcError::Format {
        path: path.to_path_buf(),
        detail,
    };
    for i in 0..n {
        let d = data[i * n + i];
        if d > DIAGONAL_TOL {
            return Err(bad(format!("diagonal entry ({i}, {i}) = {d} is not zero")));
        }
        data[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let (a, b) = (data[i * n + j], data[j * n + i]);
            if (a - b).abs() > SYMMETRY_RTOL * a.max(b) {
                return Err(bad(format!("asymmetric entries ({i}, {j}) = {a} and ({j}, {i}) = {b}")));
            }
            let mean = 0.5 * (a + b);
            data[i * n + j] = mean;
            data[j * n + i] = mean;
        }
    }
    Ok(Dataset {
        features: Features::Distances(DistanceMatrix::from_precomputed(n, data)?),
        labels: None,
        provenance: Provenance::DistanceCsv(path.display().to_string()),
    })
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(create(path)?)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let inner = w.into_inner().map_err(|e| AwcError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    inner
        .into_inner()
        .map_err(|e| AwcError::Io {
            path: path.to_path_buf(),
            source: e.into_error(),
        })?
        .flush()
        .map_err(|source| AwcError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Write points with a header `x1,…,xp` and, when present, a `label` column.
pub fn write_points_csv(points: &PointMatrix, labels: Option<&[String]>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let mut header: Vec<String> = (1..=points.dim()).map(|k| format!("x{k}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..points.n() {
        let mut rec: Vec<String> = points.row(i).iter().map(f64::to_string).collect();
        if let Some(l) = labels {
            rec.push(l[i].clone());
        }
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    finish(path, w)
}

pub fn write_distance_csv(dm: &DistanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    for i in 0..dm.n() {
        w.write_record(dm.row(i).iter().map(f64::to_string)).map_err(csv_err(path))?;
    }
    finish(path, w)
}

/// `point_id,cluster_id` rows in point order.
pub fn write_labels_csv(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["point_id", "cluster_id"]).map_err(csv_err(path))?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(csv_err(path))?;
    }
    finish(path, w)
}

/// Read a `point_id,cluster_id` file. Ids must cover `0..n` exactly once;
/// cluster ids are returned verbatim in point order.
pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut rows = records(path)?.into_iter();
    let Some((_, header)) = rows.next() else {
        return Err(AwcError::EmptyFile { path: path.to_path_buf() });
    };
    if header.len() != 2 || &header[0] != "point_id" || &header[1] != "cluster_id" {
        return Err(AwcError::Format {
            path: path.to_path_buf(),
            detail: "expected header `point_id,cluster_id`".into(),
        });
    }
    let rows: Vec<_> = rows.collect();
    let mut labels: Vec<Option<String>> = vec![None; rows.len()];
    for (line, rec) in rows {
        if rec.len() != 2 {
            return Err(AwcError::RaggedRow {
                path: path.to_path_buf(),
                row: line,
                expected: 2,
                found: rec.len(),
            });
        }
        let id = rec[0].parse::<usize>().ok().filter(|&id| id < labels.len());
        let Some(id) = id else {
            return Err(AwcError::Format {
                path: path.to_path_buf(),
                detail: format!("row {line}: point id `{}` outside 0..{}", &rec[0], labels.len()),
            });
        };
        if labels[id].replace(rec[1].to_string()).is_some() {
            return Err(AwcError::Format {
                path: path.to_path_buf(),
                detail: format!("row {line}: point id {id} repeated"),
            });
        }
    }
    Ok(labels.into_iter().map(|l| l.expect("every id seen once")).collect())
}

/// Sparse `i,j,w` triplets for the positive pairs `i < j`.
pub fn write_weights_csv(w: &WeightMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = writer(path)?;
    out.write_record(["i", "j", "w"]).map_err(csv_err(path))?;
    for (i, j) in w.upper_pairs() {
        out.write_record([i.to_string(), j.to_string(), "1".into()]).map_err(csv_err(path))?;
    }
    finish(path, out)
}

/// Read weights written by [`write_weights_csv`] for `n` points.
pub fn read_weights_csv(path: impl AsRef<Path>, n: usize) -> Result<WeightMatrix> {
    let path = path.as_ref();
    let mut rows = records(path)?.into_iter();
    match rows.next() {
        Some((_, h)) if h.iter().eq(["i", "j", "w"]) => {}
        Some(_) => {
            return Err(AwcError::Format {
                path: path.to_path_buf(),
                detail: "expected header `i,j,w`".into(),
            })
        }
        None => return Err(AwcError::EmptyFile { path: path.to_path_buf() }),
    }
    let mut pairs = Vec::new();
    for (line, rec) in rows {
        if rec.len() != 3 {
            return Err(AwcError::RaggedRow {
                path: path.to_path_buf(),
                row: line,
                expected: 3,
                found: rec.len(),
            });
        }
        let idx = |c: usize| {
            rec[c].parse::<usize>().map_err(|_| AwcError::NonNumeric {
                path: path.to_path_buf(),
                row: line,
                column: c + 1,
                value: rec[c].to_string(),
            })
        };
        let w = parse_number(path, line, 2, &rec[2])?;
        if w != 0.0 {
            pairs.push((idx(0)?, idx(1)?));
        }
    }
    WeightMatrix::from_pairs(n, pairs)
}
