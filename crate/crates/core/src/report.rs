//! Rebuilds metrics and the summary table from a written run bundle.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::attacks::{AttackScoreSet, ScoreDomain};
use crate::error::{Error, Result};
use crate::eval::summary::{aggregate_runs, AttackMetrics, RunReport, Summary};
use crate::pipeline::{render_table, summary_csv};

#[derive(Deserialize)]
struct ScoreRow {
    unit: String,
    attack: String,
    label: u8,
    score: f64,
}

fn read_scores(path: &Path) -> Result<Vec<AttackScoreSet>> {
    let mut sets: Vec<AttackScoreSet> = Vec::new();
    let mut rdr = csv::Reader::from_path(path)?;
    for row in rdr.deserialize() {
        let row: ScoreRow = row?;
        let pos = match sets.iter().position(|s| s.attack == row.attack) {
            Some(p) => p,
            None => {
                sets.push(AttackScoreSet {
                    attack: row.attack.clone(),
                    mode: None,
                    domain: ScoreDomain::Probability,
                    units: Vec::new(),
                    scores: Vec::new(),
                    labels: Vec::new(),
                });
                sets.len() - 1
            }
        };
        let s = &mut sets[pos];
        s.units.push(row.unit);
        s.scores.push(row.score);
        s.labels.push(row.label == 1);
    }
    Ok(sets)
}

fn seed_dirs(bundle: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(bundle)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(seed) = name.to_str().and_then(|n| n.strip_prefix("seed_")).and_then(|s| s.parse().ok()) else {
            continue;
        };
        if entry.path().is_dir() {
            dirs.push((seed, entry.path()));
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Recomputes every per-seed metric from the score files of `bundle` and
/// aggregates across seeds.
pub fn summarize_bundle(bundle: &Path) -> Result<Summary> {
    let dirs = seed_dirs(bundle)?;
    if dirs.is_empty() {
        return Err(Error::Insufficient(format!("no seed directories in {}", bundle.display())));
    }
    let mut reports = Vec::new();
    for (seed, dir) in dirs {
        let stored: RunReport = serde_json::from_slice(&fs::read(dir.join("report.json"))?)?;
        let record = read_scores(&dir.join("scores_record.csv"))?;
        let user = read_scores(&dir.join("scores_user.csv"))?;
        if record.len() != user.len() || record.iter().zip(&user).any(|(r, u)| r.attack != u.attack) {
            return Err(Error::Invalid(format!("seed {seed}: record and user score files list different attacks")));
        }
        let attacks = record
            .iter()
            .zip(&user)
            .map(|(r, u)| AttackMetrics::from_scores(&r.attack, r, u))
            .collect::<Result<Vec<_>>>()?;
        reports.push(RunReport {
            seed,
            config_digest: stored.config_digest,
            attacks,
        });
    }
    aggregate_runs(&reports)
}

/// Text table and CSV export for a bundle.
pub fn cmd_report(bundle: &Path) -> Result<(String, String)> {
    let summary = summarize_bundle(bundle)?;
    Ok((render_table(&summary), summary_csv(&summary)))
}
