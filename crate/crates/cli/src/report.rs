//! The `report` subcommand: merge evaluation JSON files into a table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use shortsim::eval::binomial_significance;
use shortsim::EvalReport;

use crate::commands::{create, prepare_out};
use crate::ReportArgs;

const COLUMNS: [&str; 9] = [
    "method",
    "distance",
    "split_error",
    "js_divergence",
    "split_threshold",
    "n_errors",
    "n_pairs",
    "n_nonpairs",
    "p_value",
];

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("cannot list {}", path.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|p| p.extension().is_some_and(|e| e == "json"));
            found.sort();
            if found.is_empty() {
                bail!("no .json reports in {}", path.display());
            }
            files.extend(found);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            bail!("report input not found: {}", path.display());
        }
    }
    Ok(files)
}

fn load(path: &Path) -> Result<EvalReport> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let report: EvalReport = serde_json::from_str(&text)
        .with_context(|| format!("malformed report {}", path.display()))?;
    let total = report.n_pairs + report.n_nonpairs;
    if total == 0 || report.n_errors > total {
        bail!(
            "malformed report {}: inconsistent couple counts",
            path.display()
        );
    }
    Ok(report)
}

/// Reports sorted by split error, each with the p-value of the best
/// report's error count against its error rate (`None` for the best).
fn rank(mut reports: Vec<EvalReport>) -> Result<Vec<(EvalReport, Option<f64>)>> {
    reports.sort_by(|a, b| {
        a.split_error
            .total_cmp(&b.split_error)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| a.distance.cmp(&b.distance))
    });
    let best = reports[0].clone();
    let n = (best.n_pairs + best.n_nonpairs) as u64;
    reports
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if i == 0 {
                return Ok((r, None));
            }
            if (r.n_pairs + r.n_nonpairs) as u64 != n {
                bail!(
                    "{} {} covers {} couples but {} {} covers {}; reports must share a test set",
                    r.method,
                    r.distance,
                    r.n_pairs + r.n_nonpairs,
                    best.method,
                    best.distance,
                    n
                );
            }
            let p = binomial_significance(best.n_errors as u64, r.n_errors as u64, n)?;
            Ok((r, Some(p)))
        })
        .collect()
}

fn cells(r: &EvalReport, p: Option<f64>) -> Vec<String> {
    vec![
        r.method.clone(),
        r.distance.clone(),
        r.split_error.to_string(),
        r.js_divergence.to_string(),
        r.split_threshold.to_string(),
        r.n_errors.to_string(),
        r.n_pairs.to_string(),
        r.n_nonpairs.to_string(),
        p.map(|p| p.to_string()).unwrap_or_default(),
    ]
}

fn text_cells(r: &EvalReport, p: Option<f64>) -> Vec<String> {
    vec![
        r.method.clone(),
        r.distance.clone(),
        format!("{:.2}%", 100.0 * r.split_error),
        format!("{:.5}", r.js_divergence),
        format!("{:.6}", r.split_threshold),
        r.n_errors.to_string(),
        r.n_pairs.to_string(),
        r.n_nonpairs.to_string(),
        p.map(|p| format!("{p:.3e}")).unwrap_or_default(),
    ]
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let files = collect_inputs(&args.inputs)?;
    let reports = files.iter().map(|f| load(f)).collect::<Result<Vec<_>>>()?;
    let ranked = rank(reports)?;
    prepare_out(&args.out)?;

    let mut csv = create(&args.out, "report.csv")?;
    writeln!(csv, "{}", COLUMNS.join(","))?;
    for (r, p) in &ranked {
        writeln!(csv, "{}", cells(r, *p).join(","))?;
    }
    csv.flush()?;

    let rows: Vec<Vec<String>> = std::iter::once(COLUMNS.map(String::from).to_vec())
        .chain(ranked.iter().map(|(r, p)| text_cells(r, *p)))
        .collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| rows.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut txt = create(&args.out, "report.txt")?;
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c < 2 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let line = line.join("  ");
        writeln!(txt, "{}", line.trim_end())?;
        println!("{}", line.trim_end());
    }
    txt.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: &str, error: usize) -> EvalReport {
        EvalReport {
            method: method.into(),
            distance: "cosine".into(),
            split_threshold: 0.5,
            split_error: error as f64 / 100.0,
            js_divergence: 0.1,
            n_pairs: 50,
            n_nonpairs: 50,
            n_errors: error,
        }
    }

    #[test]
    fn ranking_sorts_and_tests_against_best() {
        let ranked = rank(vec![
            report("max", 30),
            report("mean", 10),
            report("min", 10),
        ])
        .unwrap();
        let names: Vec<&str> = ranked.iter().map(|(r, _)| r.method.as_str()).collect();
        assert_eq!(names, ["mean", "min", "max"]);
        assert_eq!(ranked[0].1, None);
        assert!(ranked[1].1.unwrap() > 0.99);
        assert!(ranked[2].1.unwrap() < 1e-4);
    }

    #[test]
    fn ranking_rejects_different_test_sets() {
        let mut other = report("max", 30);
        other.n_pairs = 40;
        assert!(rank(vec![report("mean", 10), other]).is_err());
    }
}
