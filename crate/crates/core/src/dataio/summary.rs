use std::path::Path;

use super::csvio::{fmt_value, write_csv_table};
use crate::error::{Result, SvcError};
use crate::gibbs::PosteriorSamples;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// Only for range parameters.
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub burn_in: usize,
    pub kept: usize,
    pub rows: Vec<ParamSummary>,
}

impl SummaryTable {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Linear-interpolation quantile of sorted data: position `(len - 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn describe(name: String, values: &[f64], acceptance_rate: Option<f64>) -> ParamSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    ParamSummary {
        name,
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q50: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
        acceptance_rate,
    }
}

/// Posterior summaries of `phi`, `sigmasq` and `tausq` from stored draws at
/// iterations `>= burn_in`. `names` label the coefficients.
pub fn summarize(samples: &PosteriorSamples, names: &[String], burn_in: usize) -> Result<SummaryTable> {
    if burn_in >= samples.total_iterations {
        return Err(SvcError::Config(format!(
            "burn-in {burn_in} must be below the iteration count {}",
            samples.total_iterations
        )));
    }
    if names.len() != samples.p {
        return Err(SvcError::DimensionMismatch(format!(
            "{} names for {} coefficients",
            names.len(),
            samples.p
        )));
    }
    let keep: Vec<usize> = (0..samples.stored())
        .filter(|&s| samples.iterations[s] >= burn_in)
        .collect();
    if keep.is_empty() {
        return Err(SvcError::Config(format!("no stored draws after burn-in {burn_in}")));
    }
    let mut rows = Vec::with_capacity(2 * samples.p + 1);
    for (r, name) in names.iter().enumerate() {
        let phi: Vec<f64> = keep.iter().map(|&s| samples.phi[s][r]).collect();
        let acc = keep.iter().map(|&s| samples.phi_acceptance[s][r] as f64).sum::<f64>() / keep.len() as f64;
        rows.push(describe(format!("phi[{name}]"), &phi, Some(acc)));
    }
    for (r, name) in names.iter().enumerate() {
        let s2: Vec<f64> = keep.iter().map(|&s| samples.sigmasq[s][r]).collect();
        rows.push(describe(format!("sigmasq[{name}]"), &s2, None));
    }
    let tau: Vec<f64> = keep.iter().map(|&s| samples.tausq[s]).collect();
    rows.push(describe("tausq".into(), &tau, None));
    Ok(SummaryTable {
        burn_in,
        kept: keep.len(),
        rows,
    })
}

pub fn write_summary(path: &Path, table: &SummaryTable) -> Result<()> {
    let header: Vec<String> = ["parameter", "mean", "sd", "q2.5", "q50", "q97.5", "acceptance_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = table.rows.iter().map(|r| {
        vec![
            r.name.clone(),
            fmt_value(r.mean, "NA"),
            fmt_value(r.sd, "NA"),
            fmt_value(r.q025, "NA"),
            fmt_value(r.q50, "NA"),
            fmt_value(r.q975, "NA"),
            r.acceptance_rate.map_or("NA".into(), |a| fmt_value(a, "NA")),
        ]
    });
    write_csv_table(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(values: &[f64]) -> PosteriorSamples {
        let t = values.len();
        PosteriorSamples {
            n: 0,
            m: 1,
            p: 1,
            seed: 0,
            total_iterations: t,
            burn_in: 0,
            iterations: (0..t).collect(),
            phi: values.iter().map(|v| vec![*v]).collect(),
            phi_acceptance: (0..t).map(|i| vec![(i % 2) as u8]).collect(),
            sigmasq: values.iter().map(|v| vec![*v]).collect(),
            tausq: values.to_vec(),
            w_knots: vec![DMatrix::zeros(1, 1); t],
            w_surfaces: None,
            surface_mean: DMatrix::zeros(0, 1),
            surface_var: DMatrix::zeros(0, 1),
            diagnostics: Default::default(),
        }
    }

    fn names() -> Vec<String> {
        vec!["a".into()]
    }

    #[test]
    fn constant_chain() {
        let s = summarize(&chain(&[2.5; 10]), &names(), 0).unwrap();
        let t = s.get("tausq").unwrap();
        assert_eq!((t.mean, t.sd, t.q025, t.q50, t.q975), (2.5, 0.0, 2.5, 2.5, 2.5));
    }

    #[test]
    fn one_to_hundred_median() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = summarize(&chain(&v), &names(), 0).unwrap();
        assert_eq!(s.get("tausq").unwrap().q50, 50.5);
        assert_eq!(s.get("phi[a]").unwrap().acceptance_rate, Some(0.5));
    }

    #[test]
    fn burn_in_equals_pre_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let a = summarize(&chain(&v), &names(), 20).unwrap();
        let b = summarize(&chain(&v[20..]), &names(), 0).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.kept, 30);
    }

    #[test]
    fn burn_in_too_large() {
        assert!(matches!(summarize(&chain(&[1.0; 5]), &names(), 5), Err(SvcError::Config(_))));
    }

    #[test]
    fn quantiles_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for len in [1usize, 2, 7, 100, 333] {
            let v: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = summarize(&chain(&v), &names(), 0).unwrap();
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (q, got) in [(0.025, s.rows[2].q025), (0.5, s.rows[2].q50), (0.975, s.rows[2].q975)] {
                let pos = q * (len - 1) as f64;
                let i = pos as usize;
                let want = if i + 1 < len {
                    sorted[i] * (1.0 - (pos - i as f64)) + sorted[i + 1] * (pos - i as f64)
                } else {
                    sorted[i]
                };
                assert!((got - want).abs() < 1e-12, "len {len} q {q}: {got} vs {want}");
            }
            assert!(s.rows[2].q025 <= s.rows[2].q50 && s.rows[2].q50 <= s.rows[2].q975);
        }
    }
}
