//! CSV ingestion: duplicate removal, label mapping to ±1, Gaussian jitter,
//! and a seeded shuffle.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use deep_ice::model::Dataset;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Label column, by header name or 0-based index.
    pub label: String,
    pub delimiter: u8,
    /// Standard deviation of the per-coordinate Gaussian jitter that
    /// enforces general position. Zero keeps coordinates bit-identical.
    pub sigma: f64,
    pub seed: u64,
    /// Shuffle rows by the seed after dedup and jitter. Training wants
    /// this; prediction keeps file order.
    pub shuffle: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { label: "label".into(), delimiter: b',', sigma: 1e-8, seed: 0, shuffle: true }
    }
}

#[derive(Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub duplicates_removed: usize,
    /// Human-readable description of how raw labels map to ±1.
    pub label_mapping: String,
    pub feature_names: Vec<String>,
}

pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, opts)
}

pub fn ingest_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("cannot read header row: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();

    let label_col = match opts.label.parse::<usize>() {
        Ok(i) if i < headers.len() => i,
        Ok(i) => {
            return Err(CliError::Input(format!(
                "label column index {i} out of range; the file has {} columns",
                headers.len()
            )))
        }
        Err(_) => headers
            .iter()
            .position(|h| h == &opts.label)
            .ok_or_else(|| {
                CliError::Input(format!(
                    "label column {:?} not found; available: {}",
                    opts.label,
                    headers.join(", ")
                ))
            })?,
    };
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|&(i, _)| i != label_col).map(|(_, h)| h.clone()).collect();
    if feature_names.len() < 2 {
        return Err(CliError::Input(format!(
            "need at least 2 feature columns, found {}",
            feature_names.len()
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut rows_read = 0usize;
    let mut duplicates_removed = 0usize;
    let mut seen = std::collections::HashSet::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        rows_read += 1;
        if record.len() != headers.len() {
            return Err(CliError::Input(format!(
                "row {}: {} fields, expected {}",
                line + 2,
                record.len(),
                headers.len()
            )));
        }
        let mut features = Vec::with_capacity(feature_names.len());
        for (col, field) in record.iter().enumerate() {
            if col == label_col {
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Input(format!(
                    "row {}, column {:?}: {field:?} is not numeric",
                    line + 2,
                    headers[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "row {}, column {:?}: non-finite value",
                    line + 2,
                    headers[col]
                )));
            }
            features.push(v);
        }
        let label = record[label_col].trim().to_string();
        if label.is_empty() {
            return Err(CliError::Input(format!("row {}: missing label", line + 2)));
        }
        // duplicate rows drop out before jitter, first occurrence wins
        let key: (Vec<u64>, String) =
            (features.iter().map(|v| v.to_bits()).collect(), label.clone());
        if !seen.insert(key) {
            duplicates_removed += 1;
            continue;
        }
        rows.push(features);
        raw_labels.push(label);
    }
    if rows.is_empty() {
        return Err(CliError::Input("no usable data rows".into()));
    }

    let (labels, label_mapping) = map_labels(&raw_labels)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if opts.sigma > 0.0 {
        let noise = Normal::new(0.0, opts.sigma)
            .map_err(|e| CliError::Input(format!("bad sigma: {e}")))?;
        for row in &mut rows {
            for v in row.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    if opts.shuffle {
        order.shuffle(&mut rng);
    }
    let shuffled_rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let shuffled_labels: Vec<i8> = order.iter().map(|&i| labels[i]).collect();

    let dataset = Dataset::from_rows(&shuffled_rows, &shuffled_labels)
        .map_err(CliError::Core)?;
    Ok(IngestReport { dataset, rows_read, duplicates_removed, label_mapping, feature_names })
}

/// Maps raw label strings to ±1: numeric ±1 pass through, {0,1} maps 0 to
/// -1, any other two-valued column maps the smaller value to -1.
fn map_labels(raw: &[String]) -> Result<(Vec<i8>, String)> {
    let mut distinct: Vec<&String> = Vec::new();
    for l in raw {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    let numeric: Option<Vec<f64>> =
        distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
    let assign = |f: &dyn Fn(&str) -> Option<i8>, desc: String| -> Result<(Vec<i8>, String)> {
        let labels = raw
            .iter()
            .map(|s| f(s).ok_or_else(|| CliError::Input(format!("unmappable label {s:?}"))))
            .collect::<Result<Vec<i8>>>()?;
        Ok((labels, desc))
    };
    if let Some(vals) = numeric {
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.iter().all(|v| *v == 1.0 || *v == -1.0) {
            return assign(&|s| Some(if s.parse::<f64>().ok()? == 1.0 { 1 } else { -1 }), "±1 passed through".into());
        }
        if sorted.iter().all(|v| *v == 0.0 || *v == 1.0) {
            return assign(
                &|s| Some(if s.parse::<f64>().ok()? == 1.0 { 1 } else { -1 }),
                "0 -> -1, 1 -> +1".into(),
            );
        }
        if sorted.len() == 2 {
            let (lo, hi) = (sorted[0], sorted[1]);
            return assign(
                &move |s| {
                    let v = s.parse::<f64>().ok()?;
                    Some(if v == hi { 1 } else { -1 })
                },
                format!("{lo} -> -1, {hi} -> +1"),
            );
        }
        return Err(CliError::Input(format!(
            "label column has {} distinct numeric values; expected a binary column",
            sorted.len()
        )));
    }
    let mut sorted: Vec<&String> = distinct.clone();
    sorted.sort();
    if sorted.len() != 2 {
        return Err(CliError::Input(format!(
            "label column has {} distinct values; expected exactly 2",
            sorted.len()
        )));
    }
    let (lo, hi) = (sorted[0].clone(), sorted[1].clone());
    let desc = format!("{lo:?} -> -1, {hi:?} -> +1");
    assign(&move |s| Some(if s == hi { 1 } else { -1 }), desc)
}

/// Writes a dataset back out as CSV with headers f0..f{D-1},label.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let header: Vec<String> =
        (0..ds.dim()).map(|i| format!("f{i}")).chain(["label".to_string()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..ds.len() {
        let row: Vec<String> = ds.point(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{},{}", row.join(","), ds.label(i))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(sigma: f64, seed: u64) -> IngestOptions {
        IngestOptions { label: "label".into(), delimiter: b',', sigma, seed, shuffle: true }
    }

    #[test]
    fn unshuffled_ingest_preserves_row_order() {
        let csv = "x,y,label\n1,2,1\n3,4,-1\n5,6,1\n";
        let rep = ingest_reader(csv.as_bytes(), &IngestOptions {
            shuffle: false,
            ..opts(0.0, 99)
        })
        .unwrap();
        assert_eq!(rep.dataset.point(0), &[1.0, 2.0]);
        assert_eq!(rep.dataset.point(2), &[5.0, 6.0]);
    }

    #[test]
    fn duplicate_rows_collapse_before_jitter() {
        let csv = "x,y,label\n1,2,1\n1,2,1\n3,4,-1\n";
        let rep = ingest_reader(csv.as_bytes(), &opts(0.0, 0)).unwrap();
        assert_eq!(rep.rows_read, 3);
        assert_eq!(rep.duplicates_removed, 1);
        assert_eq!(rep.dataset.len(), 2);
    }

    #[test]
    fn same_point_different_label_both_survive() {
        let csv = "x,y,label\n1,2,1\n1,2,-1\n3,4,-1\n";
        let rep = ingest_reader(csv.as_bytes(), &opts(0.0, 0)).unwrap();
        assert_eq!(rep.duplicates_removed, 0);
        assert_eq!(rep.dataset.len(), 3);
    }

    #[test]
    fn sigma_zero_keeps_coordinates_bit_identical() {
        let csv = "x,y,label\n0.125,2.5,1\n3.75,-4.5,-1\n9,0.1,1\n";
        let rep = ingest_reader(csv.as_bytes(), &opts(0.0, 3)).unwrap();
        let mut points: Vec<Vec<f64>> =
            (0..rep.dataset.len()).map(|i| rep.dataset.point(i).to_vec()).collect();
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(points, vec![vec![0.125, 2.5], vec![3.75, -4.5], vec![9.0, 0.1]]);
    }

    #[test]
    fn fixed_seed_is_deterministic_and_jitter_is_small() {
        let csv = "x,y,label\n1,2,1\n3,4,-1\n5,6,1\n7,8,-1\n";
        let a = ingest_reader(csv.as_bytes(), &opts(1e-8, 9)).unwrap();
        let b = ingest_reader(csv.as_bytes(), &opts(1e-8, 9)).unwrap();
        for i in 0..a.dataset.len() {
            assert_eq!(a.dataset.point(i), b.dataset.point(i));
            assert_eq!(a.dataset.label(i), b.dataset.label(i));
        }
        let c = ingest_reader(csv.as_bytes(), &opts(1e-8, 10)).unwrap();
        let differs = (0..a.dataset.len()).any(|i| a.dataset.point(i) != c.dataset.point(i));
        assert!(differs, "different seed should jitter or order differently");
        for i in 0..a.dataset.len() {
            assert!((a.dataset.point(i)[0].round() - a.dataset.point(i)[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn label_mappings() {
        let rep =
            ingest_reader("x,y,label\n1,2,0\n3,4,1\n".as_bytes(), &opts(0.0, 0)).unwrap();
        assert_eq!(rep.dataset.labels().iter().filter(|&&l| l == 1).count(), 1);

        let rep =
            ingest_reader("x,y,label\n1,2,5\n3,4,9\n".as_bytes(), &opts(0.0, 0)).unwrap();
        assert_eq!(rep.label_mapping, "5 -> -1, 9 -> +1");

        let rep = ingest_reader("x,y,label\n1,2,yes\n3,4,no\n".as_bytes(), &opts(0.0, 0))
            .unwrap();
        assert!(rep.label_mapping.contains("\"no\" -> -1"));

        let err =
            ingest_reader("x,y,label\n1,2,a\n3,4,b\n5,6,c\n".as_bytes(), &opts(0.0, 0));
        assert!(err.is_err());
    }

    #[test]
    fn label_column_by_index_and_errors() {
        let rep = ingest_reader("t,x,y\n1,1,2\n-1,3,4\n".as_bytes(), &IngestOptions {
            label: "0".into(),
            ..opts(0.0, 0)
        })
        .unwrap();
        assert_eq!(rep.feature_names, vec!["x", "y"]);

        let err = ingest_reader("x,y,label\n1,oops,1\n".as_bytes(), &opts(0.0, 0));
        assert!(matches!(err, Err(CliError::Input(_))));

        let err = ingest_reader("x,label\n1,1\n".as_bytes(), &opts(0.0, 0));
        assert!(matches!(err, Err(CliError::Input(_))));
    }

    #[test]
    fn csv_round_trip() {
        let ds = deep_ice::synth::random_dataset(4, 6, 2);
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let rep = ingest_reader(buf.as_slice(), &opts(0.0, 0)).unwrap();
        assert_eq!(rep.dataset.len(), 6);
    }
}
