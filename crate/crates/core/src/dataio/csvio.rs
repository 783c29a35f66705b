use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{is_missing, Dataset};
use crate::covkernel::CoordMatrix;
use crate::error::{Result, SvcError};
use crate::knots::KnotSet;

/// Which CSV columns hold what.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub x: String,
    pub y: String,
    pub response: String,
    /// `None` takes every remaining column, in file order.
    pub covariates: Option<Vec<String>>,
    pub missing_token: String,
    /// Prepend an all-ones `intercept` covariate.
    pub intercept: bool,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            x: "x".into(),
            y: "y".into(),
            response: "response".into(),
            covariates: None,
            missing_token: "NA".into(),
            intercept: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    pub missing_response: usize,
    pub missing_covariates: usize,
}

fn parse_cell(raw: &str, missing: &str, row: usize, column: &str) -> Result<f64> {
    let cell = raw.trim();
    if cell == missing {
        return Ok(f64::NAN);
    }
    let v: f64 = cell.parse().map_err(|_| SvcError::Parse {
        row,
        column: column.to_string(),
        message: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(SvcError::Parse {
            row,
            column: column.to_string(),
            message: format!("'{cell}' is not finite"),
        });
    }
    Ok(v)
}

/// Reads a headered CSV into a [`Dataset`]. Rows are numbered from 1 (the
/// first data row) in parse errors.
pub fn load_csv_dataset(path: &Path, spec: &ColumnSpec) -> Result<(Dataset, LoadReport)> {
    let file = File::open(path).map_err(|e| SvcError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| SvcError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();

    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SvcError::Schema(format!("{}: no column named '{name}'", path.display())))
    };
    let xi = find(&spec.x)?;
    let yi = find(&spec.y)?;
    let ri = find(&spec.response)?;
    let cov_names: Vec<String> = match &spec.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != xi && *i != yi && *i != ri)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let cov_idx = cov_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    if cov_idx.is_empty() && !spec.intercept {
        return Err(SvcError::Schema(format!("{}: no covariate columns", path.display())));
    }

    let mut coords = Vec::new();
    let mut response = Vec::new();
    let mut covs: Vec<f64> = Vec::new();
    for (row0, record) in reader.records().enumerate() {
        let row = row0 + 1;
        let record = record.map_err(|e| SvcError::csv(path, e))?;
        let get = |i: usize| record.get(i).unwrap_or("");
        let x = parse_cell(get(xi), &spec.missing_token, row, &spec.x)?;
        let y = parse_cell(get(yi), &spec.missing_token, row, &spec.y)?;
        if x.is_nan() || y.is_nan() {
            return Err(SvcError::Parse {
                row,
                column: if x.is_nan() { spec.x.clone() } else { spec.y.clone() },
                message: "coordinates cannot be missing".into(),
            });
        }
        coords.push([x, y]);
        response.push(parse_cell(get(ri), &spec.missing_token, row, &spec.response)?);
        if spec.intercept {
            covs.push(1.0);
        }
        for (&ci, name) in cov_idx.iter().zip(&cov_names) {
            covs.push(parse_cell(get(ci), &spec.missing_token, row, name)?);
        }
    }

    let n = coords.len();
    let mut names = Vec::new();
    if spec.intercept {
        names.push("intercept".to_string());
    }
    names.extend(cov_names);
    let p = names.len();
    let data = Dataset::with_names(
        DVector::from_vec(response),
        DMatrix::from_row_slice(n, p, &covs),
        CoordMatrix::new(coords)?,
        spec.response.clone(),
        names,
    )?;
    let report = LoadReport {
        rows: n,
        missing_response: data.missing_response_count(),
        missing_covariates: data.missing_covariate_count(),
    };
    Ok((data, report))
}

pub(crate) fn fmt_value(v: f64, missing: &str) -> String {
    if is_missing(v) {
        missing.to_string()
    } else {
        // Shortest representation that parses back to the same bits.
        format!("{v}")
    }
}

fn write_table(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| SvcError::csv(path, e))?;
    writer.write_record(header).map_err(|e| SvcError::csv(path, e))?;
    for row in rows {
        writer.write_record(&row).map_err(|e| SvcError::csv(path, e))?;
    }
    writer.flush().map_err(|e| SvcError::io(path, e))
}

fn write_rows(
    path: &Path,
    x_name: &str,
    y_name: &str,
    response_name: &str,
    names: &[String],
    coords: &CoordMatrix,
    response: &DVector<f64>,
    covariates: &DMatrix<f64>,
) -> Result<()> {
    let mut header = vec![x_name.to_string(), y_name.to_string(), response_name.to_string()];
    header.extend(names.iter().cloned());
    let rows = (0..coords.len()).map(|i| {
        let pt = coords.row(i);
        let mut row = vec![fmt_value(pt[0], "NA"), fmt_value(pt[1], "NA"), fmt_value(response[i], "NA")];
        row.extend(covariates.row(i).iter().map(|v| fmt_value(*v, "NA")));
        row
    });
    write_table(path, &header, rows)
}

/// Writes `x,y,<response>,<covariates...>` with `NA` for missing entries.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    write_rows(
        path,
        "x",
        "y",
        data.response_name(),
        data.covariate_names(),
        data.coords(),
        data.response(),
        data.covariates(),
    )
}

/// Writes a knot set in the same layout as [`write_dataset_csv`].
pub fn write_knots_csv(path: &Path, knots: &KnotSet, response_name: &str, names: &[String]) -> Result<()> {
    if names.len() != knots.p() {
        return Err(SvcError::DimensionMismatch(format!(
            "{} names for {} knot covariates",
            names.len(),
            knots.p()
        )));
    }
    write_rows(
        path,
        "x",
        "y",
        response_name,
        names,
        knots.coords(),
        knots.response(),
        knots.covariates(),
    )
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SvcError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| SvcError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| SvcError::io(path, e))
}

pub(crate) fn write_csv_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    write_table(path, header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,y,temp,ndvi\n0,0,300.5,0.3\n1,0,NA,0.4\n0,1,299,0.5\n").unwrap();
        let spec = ColumnSpec {
            response: "temp".into(),
            ..ColumnSpec::default()
        };
        let (d, report) = load_csv_dataset(&path, &spec).unwrap();
        assert_eq!((d.n(), d.p()), (3, 1));
        assert_eq!(d.covariate_names(), &["ndvi".to_string()]);
        assert!(d.response()[1].is_nan());
        assert_eq!(report.missing_response, 1);
        assert_eq!(report.rows, 3);
    }

    #[test]
    fn intercept_column_prepended() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,y,response,a\n0,0,1,2\n1,1,3,4\n").unwrap();
        let spec = ColumnSpec {
            intercept: true,
            ..ColumnSpec::default()
        };
        let (d, _) = load_csv_dataset(&path, &spec).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.covariates().column(0).as_slice(), &[1.0, 1.0]);
        assert_eq!(d.covariates().column(1).as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn schema_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,y,response,a\n0,0,1,2\n1,1,oops,4\n").unwrap();
        match load_csv_dataset(&path, &ColumnSpec::default()) {
            Err(SvcError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "response");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let spec = ColumnSpec {
            covariates: Some(vec!["b".into()]),
            ..ColumnSpec::default()
        };
        assert!(matches!(load_csv_dataset(&path, &spec), Err(SvcError::Schema(_))));
        std::fs::write(&path, "x,y,response,a\nNA,0,1,2\n").unwrap();
        assert!(matches!(load_csv_dataset(&path, &ColumnSpec::default()), Err(SvcError::Parse { .. })));
        assert!(matches!(
            load_csv_dataset(&dir.path().join("absent.csv"), &ColumnSpec::default()),
            Err(SvcError::Io { .. })
        ));
    }

    #[test]
    fn write_read_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 40;
        let coords = CoordMatrix::new(
            (0..n)
                .map(|_| [rng.random_range(-1e3..1e3), rng.random::<f64>() * 1e-7])
                .collect(),
        )
        .unwrap();
        let mut y = DVector::from_fn(n, |_, _| rng.random_range(-1e6..1e6));
        y[3] = f64::NAN;
        let mut x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() / 3.0);
        x[(5, 1)] = f64::NAN;
        let d = Dataset::with_names(y, x, coords, "response".into(), vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_dataset_csv(&path, &d).unwrap();
        let (back, _) = load_csv_dataset(&path, &ColumnSpec::default()).unwrap();
        assert_eq!(back.coords(), d.coords());
        assert_eq!(back.covariate_names(), d.covariate_names());
        for (a, b) in back.response().iter().zip(d.response().iter()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        for (a, b) in back.covariates().iter().zip(d.covariates().iter()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
}
