use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::csvio::{create_dir, fmt_value, write_csv_table, write_text};
use crate::covkernel::CoordMatrix;
use crate::error::{Result, SvcError};
use crate::gibbs::{ChainDiagnostics, PosteriorSamples};

pub const PHI_FILE: &str = "phi_samples.csv";
pub const ACCEPT_FILE: &str = "phi_acceptance.csv";
pub const SIGMASQ_FILE: &str = "sigmasq_samples.csv";
pub const TAUSQ_FILE: &str = "tausq_samples.csv";
pub const W_KNOT_FILE: &str = "w_knot_samples.csv";
pub const W_FILE: &str = "w_samples.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    /// Logical array shape, e.g. `[iterations, p]`.
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    pub config_sha256: String,
    pub entries: Vec<ManifestEntry>,
}

fn iteration_table(
    path: &Path,
    names: &[String],
    rows: &[usize],
    samples: &PosteriorSamples,
    value: impl Fn(usize, usize) -> String,
) -> Result<()> {
    let mut header = vec!["iteration".to_string()];
    header.extend(names.iter().cloned());
    let iter = rows.iter().map(|&s| {
        let mut row = vec![samples.iterations[s].to_string()];
        row.extend((0..names.len()).map(|r| value(s, r)));
        row
    });
    write_csv_table(path, &header, iter)
}

fn long_table(path: &Path, index_name: &str, names: &[String], rows: &[usize], draws: &[DMatrix<f64>], iterations: &[usize]) -> Result<()> {
    let header: Vec<String> = ["iteration", index_name, "coefficient", "value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let iter = rows.iter().flat_map(|&s| {
        let mat = &draws[s];
        let it = iterations[s];
        (0..mat.ncols()).flat_map(move |r| {
            (0..mat.nrows()).map(move |i| {
                vec![it.to_string(), i.to_string(), names[r].clone(), fmt_value(mat[(i, r)], "NA")]
            })
        })
    });
    write_csv_table(path, &header, iter)
}

/// Writes one CSV per parameter group plus `manifest.txt`.
///
/// `stride` keeps every `stride`-th stored draw. `config_text` is hashed
/// into the manifest so that runs can be compared.
pub fn write_samples(
    samples: &PosteriorSamples,
    names: &[String],
    out_dir: &Path,
    stride: usize,
    config_text: &str,
) -> Result<Manifest> {
    if stride == 0 {
        return Err(SvcError::Config("stride must be at least 1".into()));
    }
    if names.len() != samples.p {
        return Err(SvcError::DimensionMismatch(format!(
            "{} names for {} coefficients",
            names.len(),
            samples.p
        )));
    }
    create_dir(out_dir)?;
    let rows: Vec<usize> = (0..samples.stored()).step_by(stride).collect();
    let t = rows.len();
    let (n, m, p) = (samples.n, samples.m, samples.p);

    iteration_table(&out_dir.join(PHI_FILE), names, &rows, samples, |s, r| fmt_value(samples.phi[s][r], "NA"))?;
    iteration_table(&out_dir.join(ACCEPT_FILE), names, &rows, samples, |s, r| {
        samples.phi_acceptance[s][r].to_string()
    })?;
    iteration_table(&out_dir.join(SIGMASQ_FILE), names, &rows, samples, |s, r| {
        fmt_value(samples.sigmasq[s][r], "NA")
    })?;
    iteration_table(&out_dir.join(TAUSQ_FILE), &["tausq".to_string()], &rows, samples, |s, _| {
        fmt_value(samples.tausq[s], "NA")
    })?;
    long_table(&out_dir.join(W_KNOT_FILE), "knot_index", names, &rows, &samples.w_knots, &samples.iterations)?;

    let mut entries = vec![
        ManifestEntry { file: PHI_FILE.into(), shape: vec![t, p] },
        ManifestEntry { file: ACCEPT_FILE.into(), shape: vec![t, p] },
        ManifestEntry { file: SIGMASQ_FILE.into(), shape: vec![t, p] },
        ManifestEntry { file: TAUSQ_FILE.into(), shape: vec![t, 1] },
        ManifestEntry { file: W_KNOT_FILE.into(), shape: vec![t, m, p] },
    ];
    if let Some(surfaces) = &samples.w_surfaces {
        long_table(&out_dir.join(W_FILE), "location_index", names, &rows, surfaces, &samples.iterations)?;
        entries.push(ManifestEntry { file: W_FILE.into(), shape: vec![t, n, p] });
    }

    let manifest = Manifest {
        seed: samples.seed,
        config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
        entries,
    };
    let mut text = String::new();
    text.push_str(&format!("seed={}\n", manifest.seed));
    text.push_str(&format!("iterations={}\n", samples.total_iterations));
    text.push_str(&format!("burn_in={}\n", samples.burn_in));
    text.push_str(&format!("stride={stride}\n"));
    text.push_str(&format!("n={n}\nm={m}\np={p}\n"));
    text.push_str(&format!("coefficients={}\n", names.join(",")));
    text.push_str(&format!("config_sha256={}\n", manifest.config_sha256));
    for e in &manifest.entries {
        let shape: Vec<String> = e.shape.iter().map(usize::to_string).collect();
        text.push_str(&format!("file={} shape={}\n", e.file, shape.join("x")));
    }
    write_text(&out_dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let file = File::open(path).map_err(|e| SvcError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| SvcError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| SvcError::csv(path, e))?;
    Ok((header, records))
}

fn num<T: std::str::FromStr>(path: &Path, row: usize, column: &str, cell: Option<&str>) -> Result<T> {
    let cell = cell.unwrap_or("");
    cell.parse().map_err(|_| SvcError::Parse {
        row,
        column: format!("{}:{column}", path.display()),
        message: format!("'{cell}' is not a number"),
    })
}

fn wide(path: &Path, cols: usize) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let (header, records) = read_records(path)?;
    if header.len() != cols + 1 {
        return Err(SvcError::Schema(format!(
            "{}: expected {} columns, found {}",
            path.display(),
            cols + 1,
            header.len()
        )));
    }
    let mut its = Vec::with_capacity(records.len());
    let mut vals = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        its.push(num(path, i + 1, "iteration", rec.get(0))?);
        vals.push(
            (1..=cols)
                .map(|c| num(path, i + 1, &header[c], rec.get(c)))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok((its, vals))
}

fn long(path: &Path, iterations: &[usize], rows: usize, names: &[String]) -> Result<Vec<DMatrix<f64>>> {
    let (_, records) = read_records(path)?;
    let pos: BTreeMap<usize, usize> = iterations.iter().enumerate().map(|(s, &it)| (it, s)).collect();
    let mut out = vec![DMatrix::zeros(rows, names.len()); iterations.len()];
    for (i, rec) in records.iter().enumerate() {
        let it: usize = num(path, i + 1, "iteration", rec.get(0))?;
        let idx: usize = num(path, i + 1, "index", rec.get(1))?;
        let name = rec.get(2).unwrap_or("");
        let r = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| SvcError::Schema(format!("{}: unknown coefficient '{name}'", path.display())))?;
        let v: f64 = num(path, i + 1, "value", rec.get(3))?;
        let s = *pos
            .get(&it)
            .ok_or_else(|| SvcError::Schema(format!("{}: unexpected iteration {it}", path.display())))?;
        if idx >= rows {
            return Err(SvcError::Schema(format!("{}: index {idx} out of range", path.display())));
        }
        out[s][(idx, r)] = v;
    }
    Ok(out)
}

/// Reads a directory produced by [`write_samples`]. Surface summaries are
/// not part of the sample files and come back empty.
pub fn read_samples(dir: &Path) -> Result<(PosteriorSamples, Vec<String>)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| SvcError::io(&manifest_path, e))?;
    let kv: BTreeMap<&str, &str> = text
        .lines()
        .filter(|l| !l.starts_with("file="))
        .filter_map(|l| l.split_once('='))
        .collect();
    let field = |k: &str| -> Result<&str> {
        kv.get(k)
            .copied()
            .ok_or_else(|| SvcError::Schema(format!("{}: missing '{k}'", manifest_path.display())))
    };
    let parse = |k: &str| -> Result<usize> {
        field(k)?
            .parse()
            .map_err(|_| SvcError::Schema(format!("{}: bad value for '{k}'", manifest_path.display())))
    };
    let (n, m, p) = (parse("n")?, parse("m")?, parse("p")?);
    let names: Vec<String> = field("coefficients")?.split(',').map(str::to_string).collect();
    if names.len() != p {
        return Err(SvcError::Schema(format!("{}: {p} coefficients but {} names", manifest_path.display(), names.len())));
    }
    let seed: u64 = field("seed")?
        .parse()
        .map_err(|_| SvcError::Schema(format!("{}: bad seed", manifest_path.display())))?;

    let (iterations, phi) = wide(&dir.join(PHI_FILE), p)?;
    let (_, acc) = wide(&dir.join(ACCEPT_FILE), p)?;
    let (_, sigmasq) = wide(&dir.join(SIGMASQ_FILE), p)?;
    let (_, tau) = wide(&dir.join(TAUSQ_FILE), 1)?;
    let w_knots = long(&dir.join(W_KNOT_FILE), &iterations, m, &names)?;
    let w_path: PathBuf = dir.join(W_FILE);
    let w_surfaces = if w_path.exists() {
        Some(long(&w_path, &iterations, n, &names)?)
    } else {
        None
    };
    let samples = PosteriorSamples {
        n,
        m,
        p,
        seed,
        total_iterations: parse("iterations")?,
        burn_in: parse("burn_in")?,
        iterations,
        phi,
        phi_acceptance: acc
            .into_iter()
            .map(|row| row.into_iter().map(|v| v as u8).collect())
            .collect(),
        sigmasq,
        tausq: tau.into_iter().map(|row| row[0]).collect(),
        w_knots,
        w_surfaces,
        surface_mean: DMatrix::zeros(0, p),
        surface_var: DMatrix::zeros(0, p),
        diagnostics: ChainDiagnostics::default(),
    };
    Ok((samples, names))
}

/// `location_index,x,y,<name>_mean...,<name>_sd...` from the running surface
/// moments.
pub fn write_surface_summary(path: &Path, samples: &PosteriorSamples, coords: &CoordMatrix, names: &[String]) -> Result<()> {
    if coords.len() != samples.surface_mean.nrows() || names.len() != samples.p {
        return Err(SvcError::DimensionMismatch(format!(
            "{} coordinates / {} names for {}x{} surfaces",
            coords.len(),
            names.len(),
            samples.surface_mean.nrows(),
            samples.p
        )));
    }
    let mut header = vec!["location_index".to_string(), "x".into(), "y".into()];
    header.extend(names.iter().map(|n| format!("{n}_mean")));
    header.extend(names.iter().map(|n| format!("{n}_sd")));
    let rows = (0..coords.len()).map(|i| {
        let pt = coords.row(i);
        let mut row = vec![i.to_string(), fmt_value(pt[0], "NA"), fmt_value(pt[1], "NA")];
        row.extend((0..samples.p).map(|r| fmt_value(samples.surface_mean[(i, r)], "NA")));
        row.extend((0..samples.p).map(|r| fmt_value(samples.surface_var[(i, r)].max(0.0).sqrt(), "NA")));
        row
    });
    write_csv_table(path, &header, rows)
}

/// Reads the `<name>_mean` columns written by [`write_surface_summary`].
pub fn read_surface_means(path: &Path, names: &[String]) -> Result<DMatrix<f64>> {
    read_surface_columns(path, names, "_mean")
}

/// Columns `<name><suffix>` of a per-location table, one matrix column each.
pub(crate) fn read_surface_columns(path: &Path, names: &[String], suffix: &str) -> Result<DMatrix<f64>> {
    let (header, records) = read_records(path)?;
    let cols = names
        .iter()
        .map(|n| {
            let want = format!("{n}{suffix}");
            header
                .iter()
                .position(|h| *h == want)
                .ok_or_else(|| SvcError::Schema(format!("{}: no column '{want}'", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::zeros(records.len(), names.len());
    for (i, rec) in records.iter().enumerate() {
        for (r, &c) in cols.iter().enumerate() {
            out[(i, r)] = num(path, i + 1, &header[c], rec.get(c))?;
        }
    }
    Ok(out)
}
