//! CSV interchange.
//!
//! One row per point: `time,x0,...,x{d-1},weight`. Comment lines start
//! with `#` and carry `key = value` metadata. Floats are written with
//! Rust's shortest round-trip formatting, so save/load is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::{Snapshot, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::inference::WeightedCloud;
use crate::matrix::Matrix;

pub fn save_snapshots(dataset: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in &dataset.metadata {
        writeln!(w, "# {k} = {v}")?;
    }
    write_header(&mut w, dataset.dim())?;
    for snap in dataset.snapshots() {
        write_rows(&mut w, snap.time, &snap.points, &snap.weights)?;
    }
    w.flush()?;
    Ok(())
}

/// Same row format as [`save_snapshots`] with a single time value;
/// weights are the exponentiated log-weights.
pub fn save_weighted_cloud(cloud: &WeightedCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, cloud.points.cols())?;
    let weights: Vec<f64> = cloud.log_weights.iter().map(|lw| lw.exp()).collect();
    write_rows(&mut w, cloud.time, &cloud.points, &weights)?;
    w.flush()?;
    Ok(())
}

fn write_header(w: &mut impl Write, dim: usize) -> Result<()> {
    write!(w, "time")?;
    for k in 0..dim {
        write!(w, ",x{k}")?;
    }
    writeln!(w, ",weight")?;
    Ok(())
}

fn write_rows(w: &mut impl Write, time: f64, points: &Matrix, weights: &[f64]) -> Result<()> {
    for i in 0..points.rows() {
        write!(w, "{time}")?;
        for v in points.row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", weights[i])?;
    }
    Ok(())
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let reader = BufReader::new(File::open(&path)?);
    let mut metadata = Vec::new();
    let mut header: Option<usize> = None; // dimension
    // groups keyed by exact time value, insertion order; sorted later
    let mut groups: Vec<(f64, Vec<Vec<f64>>, Vec<f64>)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            match comment.split_once('=') {
                Some((k, v)) => metadata.push((k.trim().to_string(), v.trim().to_string())),
                None => metadata.push((comment.to_string(), String::new())),
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        match header {
            None => {
                header = Some(parse_header(&fields, lineno)?);
            }
            Some(dim) => {
                if fields.len() != dim + 2 {
                    return Err(Error::Format(format!(
                        "line {}: expected {} fields, got {}",
                        lineno + 1,
                        dim + 2,
                        fields.len()
                    )));
                }
                let mut nums = Vec::with_capacity(dim + 2);
                for f in &fields {
                    nums.push(f.parse::<f64>().map_err(|_| {
                        Error::Format(format!("line {}: bad number {f:?}", lineno + 1))
                    })?);
                }
                let time = nums[0];
                if !time.is_finite() {
                    return Err(Error::Format(format!("line {}: non-finite time", lineno + 1)));
                }
                let weight = nums[dim + 1];
                let coords = nums[1..=dim].to_vec();
                match groups.iter_mut().find(|(t, _, _)| *t == time) {
                    Some((_, pts, ws)) => {
                        pts.push(coords);
                        ws.push(weight);
                    }
                    None => groups.push((time, vec![coords], vec![weight])),
                }
            }
        }
    }

    if groups.len() < 2 {
        return Err(Error::Format(format!(
            "need at least 2 distinct observation times, found {}",
            groups.len()
        )));
    }
    let mut snapshots = Vec::with_capacity(groups.len());
    for (time, pts, ws) in groups {
        snapshots.push(Snapshot::new(time, Matrix::from_rows(&pts)?, ws)?);
    }
    Ok(TimeSeriesDataset::new(snapshots)?.with_metadata(metadata))
}

fn parse_header(fields: &[&str], lineno: usize) -> Result<usize> {
    let bad = || Error::Format(format!("line {}: header must be time,x0,...,weight", lineno + 1));
    if fields.len() < 3 || fields[0] != "time" || *fields.last().unwrap() != "weight" {
        return Err(bad());
    }
    for (k, f) in fields[1..fields.len() - 1].iter().enumerate() {
        if *f != format!("x{k}") {
            return Err(bad());
        }
    }
    Ok(fields.len() - 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn groups_rows_by_time() {
        let f = write_temp("time,x0,x1,weight\n0,1,2,1\n0,3,4,1\n1,5,6,2\n1,7,8,1\n");
        let ds = load_snapshots(f.path()).unwrap();
        assert_eq!(ds.snapshots().len(), 2);
        assert_eq!(ds.snapshot(0).len(), 2);
        assert_eq!(ds.snapshot(1).weights, vec![2.0, 1.0]);
    }

    #[test]
    fn negative_weight_fails() {
        let f = write_temp("time,x0,weight\n0,1,1\n1,2,-0.5\n");
        assert!(matches!(load_snapshots(f.path()), Err(Error::Format(_))));
    }

    #[test]
    fn single_time_fails() {
        let f = write_temp("time,x0,weight\n0,1,1\n0,2,1\n");
        assert!(load_snapshots(f.path()).is_err());
    }

    #[test]
    fn ragged_row_fails() {
        let f = write_temp("time,x0,x1,weight\n0,1,2,1\n1,3,4\n");
        assert!(load_snapshots(f.path()).is_err());
    }

    #[test]
    fn internal_times_are_ranks() {
        let f = write_temp(
            "time,x0,weight\n0,0,1\n8,1,1\n16,2,1\n24,3,1\n32,4,1\n0,0.5,1\n",
        );
        let ds = load_snapshots(f.path()).unwrap();
        assert_eq!(ds.original_times(), vec![0.0, 8.0, 16.0, 24.0, 32.0]);
        assert_eq!(ds.internal_times(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn round_trip_preserves_values_and_metadata() {
        let pts0 = Matrix::from_vec(2, 2, vec![0.1, -0.25, 1.0 / 3.0, 2.5e-11]).unwrap();
        let pts1 = Matrix::from_vec(1, 2, vec![std::f64::consts::PI, -7.125]).unwrap();
        let ds = TimeSeriesDataset::new(vec![
            Snapshot::new(0.0, pts0, vec![1.0, 0.5]).unwrap(),
            Snapshot::new(1.5, pts1, vec![2.0]).unwrap(),
        ])
        .unwrap()
        .with_metadata(vec![("generator".into(), "test".into())]);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_snapshots(&ds, f.path()).unwrap();
        let back = load_snapshots(f.path()).unwrap();
        assert_eq!(back, ds);
    }
}
