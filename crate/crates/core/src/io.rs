//! CSV and JSON file formats.
//!
//! A combined data file has a `y` column, optional `year`, then scalar
//! covariates prefixed `w` and spatial covariates prefixed `x`. Separate
//! files (one `y` column; a `W` table; an `X` table) are also accepted.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::backtest::TimeSeriesData;
use crate::error::{Error, Result};
use crate::model::Dataset;

fn parse_f64(path: &Path, row: usize, col: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::data(path, format!("row {row}, column {col}: invalid number {s:?}")))
}

fn parse_count(path: &Path, row: usize, s: &str) -> Result<u64> {
    let v = parse_f64(path, row, "y", s)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::data(path, format!("row {row}: count {s:?} is not a non-negative integer")));
    }
    Ok(v as u64)
}

/// Reads a header plus numeric rows.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    if !path.exists() {
        return Err(Error::data(path, "file not found"));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn matrix_from(path: &Path, rows: &[csv::StringRecord], header: &[String], cols: &[usize]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (i, r) in rows.iter().enumerate() {
        for (c, &src) in cols.iter().enumerate() {
            m[(i, c)] = parse_f64(path, i + 1, &header[src], &r[src])?;
        }
    }
    Ok(m)
}

/// Reads a combined file; returns the years when a `year` column exists.
pub fn read_combined_csv(path: impl AsRef<Path>) -> Result<(Option<Vec<i64>>, Dataset)> {
    let path = path.as_ref();
    let (header, rows) = read_table(path)?;
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::data(path, "missing `y` column"))?;
    let year_col = header.iter().position(|h| h == "year");
    let w_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with('w')).collect();
    let x_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with('x')).collect();
    let known = 1 + year_col.is_some() as usize + w_cols.len() + x_cols.len();
    if known != header.len() {
        return Err(Error::data(path, "columns must be `y`, `year`, `w*` or `x*`"));
    }
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse_count(path, i + 1, &r[y_col]))
        .collect::<Result<Vec<_>>>()?;
    let years = year_col
        .map(|c| {
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    r[c].trim()
                        .parse::<i64>()
                        .map_err(|_| Error::data(path, format!("row {}: invalid year", i + 1)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let w = matrix_from(path, &rows, &header, &w_cols)?;
    let x = matrix_from(path, &rows, &header, &x_cols)?;
    let data = Dataset::new(y, w, x).map_err(|e| Error::data(path, e.to_string()))?;
    Ok((years, data))
}

/// Reads the three-file layout.
pub fn read_separate_csv(y_path: impl AsRef<Path>, w_path: impl AsRef<Path>, x_path: impl AsRef<Path>) -> Result<Dataset> {
    let (y_path, w_path, x_path) = (y_path.as_ref(), w_path.as_ref(), x_path.as_ref());
    let (yh, yr) = read_table(y_path)?;
    if yh != ["y"] {
        return Err(Error::data(y_path, "expected a single `y` column"));
    }
    let y = yr
        .iter()
        .enumerate()
        .map(|(i, r)| parse_count(y_path, i + 1, &r[0]))
        .collect::<Result<Vec<_>>>()?;
    let (wh, wr) = read_table(w_path)?;
    let (xh, xr) = read_table(x_path)?;
    let w = matrix_from(w_path, &wr, &wh, &(0..wh.len()).collect::<Vec<_>>())?;
    let x = matrix_from(x_path, &xr, &xh, &(0..xh.len()).collect::<Vec<_>>())?;
    Dataset::new(y, w, x)
}

pub fn read_time_series_csv(path: impl AsRef<Path>) -> Result<TimeSeriesData> {
    let path = path.as_ref();
    let (years, data) = read_combined_csv(path)?;
    let years = years.ok_or_else(|| Error::data(path, "missing `year` column"))?;
    TimeSeriesData::new(years, data).map_err(|e| Error::data(path, e.to_string()))
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the combined layout, with a leading `year` column when given.
pub fn write_combined_csv(path: impl AsRef<Path>, data: &Dataset, years: Option<&[i64]>) -> Result<()> {
    let mut header = Vec::new();
    if years.is_some() {
        header.push("year".to_string());
    }
    header.push("y".into());
    header.extend((0..data.k()).map(|k| format!("w{k}")));
    header.extend((0..data.j()).map(|j| format!("x{j}")));
    let rows = (0..data.n()).map(|i| {
        let mut r = Vec::with_capacity(header.len());
        if let Some(ys) = years {
            r.push(ys[i].to_string());
        }
        r.push(data.y()[i].to_string());
        r.extend(data.w().row(i).iter().map(f64::to_string));
        r.extend(data.x().row(i).iter().map(f64::to_string));
        r
    });
    write_rows(path.as_ref(), header.clone(), rows)
}

/// `region_id,<name>` with one row per entry.
pub fn write_region_values(path: impl AsRef<Path>, name: &str, values: &[f64]) -> Result<()> {
    write_rows(
        path.as_ref(),
        vec!["region_id".into(), name.into()],
        values.iter().enumerate().map(|(j, v)| vec![j.to_string(), v.to_string()]),
    )
}

pub fn read_region_values(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let (h, rows) = read_table(path)?;
    if h.len() != 2 || h[0] != "region_id" {
        return Err(Error::data(path, "expected `region_id,<value>`"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| parse_f64(path, i + 1, &h[1], &r[1]))
        .collect()
}

pub fn write_mask(path: impl AsRef<Path>, mask: &[bool]) -> Result<()> {
    write_rows(
        path.as_ref(),
        vec!["region_id".into(), "active".into()],
        mask.iter().enumerate().map(|(j, &a)| vec![j.to_string(), u8::from(a).to_string()]),
    )
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Vec<bool>> {
    Ok(read_region_values(path)?.into_iter().map(|v| v != 0.0).collect())
}

/// `rows x cols` grid of 0/1 without a header.
pub fn write_grid(path: impl AsRef<Path>, mask: &[bool], rows: usize, cols: usize) -> Result<()> {
    let text: String = (0..rows)
        .map(|r| {
            let line: Vec<&str> = (0..cols).map(|c| if mask[r * cols + c] { "1" } else { "0" }).collect();
            line.join(",") + "\n"
        })
        .collect();
    fs::write(path, text)?;
    Ok(())
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    write_rows(
        path.as_ref(),
        (0..m.ncols()).map(|c| format!("{prefix}{c}")).collect(),
        (0..m.nrows()).map(|i| m.row(i).iter().map(f64::to_string).collect()),
    )
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::data(path, e.to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combined_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let data = Dataset::new(
            vec![0, 3, 1],
            DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[0.1, -0.2, 1e-17, 4.0, 5.5, 6.25]),
        )
        .unwrap();
        write_combined_csv(&p, &data, Some(&[2001, 2002, 2003])).unwrap();
        let (years, back) = read_combined_csv(&p).unwrap();
        assert_eq!(years, Some(vec![2001, 2002, 2003]));
        assert_eq!(back.y(), data.y());
        assert_eq!(back.x(), data.x());
        assert_eq!(back.w(), data.w());
    }

    #[test]
    fn separate_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        fs::write(d.join("y.csv"), "y\n1\n2\n").unwrap();
        fs::write(d.join("w.csv"), "a,b\n1,0.5\n1,-0.5\n").unwrap();
        fs::write(d.join("x.csv"), "r0,r1,r2\n1,2,3\n4,5,6\n").unwrap();
        let data = read_separate_csv(d.join("y.csv"), d.join("w.csv"), d.join("x.csv")).unwrap();
        assert_eq!((data.n(), data.k(), data.j()), (2, 2, 3));
        fs::write(d.join("y.csv"), "y\n1.5\n2\n").unwrap();
        assert!(matches!(
            read_separate_csv(d.join("y.csv"), d.join("w.csv"), d.join("x.csv")),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn bad_files_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        assert!(matches!(read_combined_csv(&p), Err(Error::Data { .. })));
        fs::write(&p, "y,z\n1,2\n").unwrap();
        assert!(matches!(read_combined_csv(&p), Err(Error::Data { .. })));
        fs::write(&p, "y,x0\n1,abc\n").unwrap();
        assert!(matches!(read_combined_csv(&p), Err(Error::Data { .. })));
    }

    #[test]
    fn masks_and_grids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mask = vec![true, false, false, true, true, false];
        write_mask(&p, &mask).unwrap();
        assert_eq!(read_mask(&p).unwrap(), mask);
        let g = dir.path().join("g.csv");
        write_grid(&g, &mask, 2, 3).unwrap();
        assert_eq!(fs::read_to_string(g).unwrap(), "1,0,0\n1,1,0\n");
    }
}
