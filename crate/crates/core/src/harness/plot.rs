//! Plot-ready CSVs derived from `summary.csv`. Nothing is rendered.
//!
//! | file       | x axis         | y axis(es)        |
//! |------------|----------------|-------------------|
//! | `fig1.csv` | AL_baseline    | AL_diff           |
//! | `fig2.csv` | AL             | BLEU              |
//! | `fig4.csv` | predictor      | AL_diff, accuracy |
//! | `fig6.csv` | tau            | AWR, AL_diff      |

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::experiment::SUMMARY_FILE;

struct Table {
    file: PathBuf,
    header: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(file: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(file)?;
        let header = reader.headers()?.clone();
        let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Table {
            file: file.to_path_buf(),
            header,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                file: self.file.clone(),
                column: name.to_string(),
            })
    }

    fn project(&self, columns: &[&str], rows: &[&csv::StringRecord]) -> Result<Vec<Vec<String>>> {
        let idx = columns.iter().map(|c| self.column(c)).collect::<Result<Vec<_>>>()?;
        Ok(rows
            .iter()
            .map(|r| idx.iter().map(|&i| r.get(i).unwrap_or("").to_string()).collect())
            .collect())
    }
}

fn write(path: &Path, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn number(row: &csv::StringRecord, column: usize) -> Option<f64> {
    row.get(column).and_then(|v| v.parse().ok())
}

/// Reads `dir/summary.csv` and writes `fig1.csv`, `fig2.csv`, `fig4.csv`
/// and `fig6.csv` next to it. Rows with AWR above `max_awr` and rows of
/// failed grid points are dropped.
pub fn plot_data(dir: &Path, max_awr: Option<f64>) -> Result<Vec<PathBuf>> {
    let summary = dir.join(SUMMARY_FILE);
    if !summary.is_file() {
        return Err(Error::EmptyResults(dir.to_path_buf()));
    }
    let table = Table::read(&summary)?;
    if table.rows.is_empty() {
        return Err(Error::EmptyResults(dir.to_path_buf()));
    }
    let awr = table.column("AWR")?;
    let status = table.column("status")?;
    let tau = table.column("tau")?;
    let kept: Vec<&csv::StringRecord> = table
        .rows
        .iter()
        .filter(|r| r.get(status) == Some("ok"))
        .filter(|r| match (max_awr, number(r, awr)) {
            (Some(limit), Some(a)) => a <= limit,
            _ => true,
        })
        .collect();

    let key = ["policy", "param", "predictor", "tau"];
    let figures: [(&str, Vec<&str>); 3] = [
        ("fig1.csv", [&key[..], &["AL_baseline", "AL_diff", "AWR"]].concat()),
        ("fig2.csv", [&key[..], &["AL_baseline", "BLEU_baseline", "AL", "BLEU"]].concat()),
        ("fig4.csv", vec!["predictor", "policy", "param", "tau", "accuracy", "AL_diff"]),
    ];
    let mut written = Vec::new();
    for (name, columns) in &figures {
        let path = dir.join(name);
        write(&path, columns, &table.project(columns, &kept)?)?;
        written.push(path);
    }

    let mut by_tau = kept.clone();
    // stable: grid order is kept among equal τ
    by_tau.sort_by(|a, b| {
        let (x, y) = (number(a, tau), number(b, tau));
        x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal)
    });
    let columns = ["tau", "AWR", "AL_diff", "policy", "param", "predictor"];
    let path = dir.join("fig6.csv");
    write(&path, &columns, &table.project(&columns, &by_tau)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(dir: &Path, text: &str) {
        std::fs::write(dir.join(SUMMARY_FILE), text).unwrap();
    }

    const HEADER: &str = "policy,param,tau,predictor,sentences,accuracy,AL_baseline,AL,AL_diff,AWR,BLEU_baseline,BLEU,W,S,H,J,status,data\n";

    #[test]
    fn empty_or_missing_results_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(plot_data(dir.path(), None), Err(Error::EmptyResults(_))));
        summary(dir.path(), HEADER);
        assert!(matches!(plot_data(dir.path(), None), Err(Error::EmptyResults(_))));
    }

    #[test]
    fn missing_column_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        summary(dir.path(), "policy,tau,AWR,status\nwait-k,0,0,ok\n");
        match plot_data(dir.path(), None) {
            Err(Error::MissingColumn { file, column }) => {
                assert!(file.ends_with(SUMMARY_FILE));
                assert_eq!(column, "param");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tau_sorted_and_awr_filtered() {
        let dir = tempfile::tempdir().unwrap();
        let row = |tau: &str, awr: &str| {
            format!("wait-k,1,{tau},in-domain,10,0.5,3,2,1,{awr},0.8,0.8,1,2,1,10,ok,synthetic-markov\n")
        };
        summary(
            dir.path(),
            &format!("{HEADER}{}{}{}{}", row("1", "0"), row("0.5", "0.2"), row("0", "0.9"), row("0.2", "0.1")),
        );
        plot_data(dir.path(), Some(0.7)).unwrap();
        let fig6 = std::fs::read_to_string(dir.path().join("fig6.csv")).unwrap();
        let taus: Vec<&str> = fig6.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(taus, vec!["0.2", "0.5", "1"]);
        let fig1 = std::fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
        assert_eq!(fig1.lines().count(), 4);
        assert!(fig1.starts_with("policy,param,predictor,tau,AL_baseline,AL_diff,AWR\n"));
    }
}
