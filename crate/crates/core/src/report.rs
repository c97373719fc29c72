//! Trial output files: `trial.json`, `stats.csv` and one `.pipeline` file
//! per front member.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::blocks::{library, BlockId};
use crate::evolution::{GenerationStats, TrialResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed trial file {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Column names of `stats.csv`.
pub fn stats_header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "generation",
        "min_xor_score",
        "mean_xor_score",
        "best_mean_xor",
        "mean_effective_length",
        "wall_seconds",
        "archive_size",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(BlockId::ALL.iter().map(|b| format!("count_{}", b.name())));
    for spec in library() {
        for p in spec.params {
            cols.push(format!("{}.{}_mean", spec.id.name(), p.name));
            cols.push(format!("{}.{}_std", spec.id.name(), p.name));
        }
    }
    cols
}

fn stats_row(s: &GenerationStats) -> Vec<String> {
    let mut row = vec![
        s.generation.to_string(),
        s.min_xor_score.to_string(),
        s.mean_xor_score.to_string(),
        s.best_mean_xor.to_string(),
        s.mean_effective_length.to_string(),
        s.wall_seconds.to_string(),
        s.archive_size.to_string(),
    ];
    row.extend(s.block_counts.iter().map(|c| c.to_string()));
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in &s.params {
        row.push(opt(p.mean));
        row.push(opt(p.std));
    }
    row
}

pub fn write_stats_csv<W: Write>(stats: &[GenerationStats], out: W) -> Result<(), ReportError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(stats_header())?;
    for s in stats {
        wtr.write_record(stats_row(s))?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    fs::write(path, bytes).map_err(|source| ReportError::Write {
        path: path.to_owned(),
        source,
    })
}

/// Paths written by [`write_trial`].
#[derive(Clone, Debug)]
pub struct TrialFiles {
    pub trial: PathBuf,
    pub stats: PathBuf,
    pub pipelines: Vec<PathBuf>,
}

pub fn write_trial(result: &TrialResult, dir: impl AsRef<Path>) -> Result<TrialFiles, ReportError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ReportError::Write {
        path: dir.to_owned(),
        source,
    })?;
    let trial = dir.join("trial.json");
    let json = serde_json::to_string_pretty(result).expect("trial results serialize");
    write_file(&trial, (json + "\n").as_bytes())?;

    let stats = dir.join("stats.csv");
    let mut buf = Vec::new();
    write_stats_csv(&result.stats, &mut buf)?;
    write_file(&stats, &buf)?;

    let mut pipelines = Vec::new();
    for (i, m) in result.front.iter().enumerate() {
        let p = dir.join(format!("front_{i:02}.pipeline"));
        write_file(&p, format!("{}\n", m.pipeline).as_bytes())?;
        pipelines.push(p);
    }
    Ok(TrialFiles {
        trial,
        stats,
        pipelines,
    })
}

pub fn read_trial(path: impl AsRef<Path>) -> Result<TrialResult, ReportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ReportError::Read {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Parse {
        path: path.to_owned(),
        source,
    })
}

/// Short human-readable account of a trial.
pub fn summary(result: &TrialResult) -> String {
    let mut out = format!(
        "{} generations, stopped by {:?}, {:.1} s\n",
        result.generations, result.termination, result.wall_seconds
    );
    out += &format!("archive front: {} members\n", result.archive.len());
    out += "final front (train mean XOR %, pipeline):\n";
    for m in &result.front {
        out += &format!("  {:8.4}  {}\n", 100.0 * m.train_mean_xor, m.pipeline);
    }
    if let Some(b) = result.best_by_xor() {
        out += &format!("lowest training XOR: {:.4}% {}\n", 100.0 * b.train_mean_xor, b.pipeline);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, EvolutionConfig};
    use crate::fitness::Sample;
    use crate::synth::{synth_corpus, SynthParams};

    fn tiny_trial() -> TrialResult {
        let p = SynthParams {
            width: 48,
            height: 40,
            count_min: 2,
            count_max: 4,
            radius_median: 4.0,
            radius_max: 6.0,
            ..SynthParams::default()
        };
        let samples: Vec<Sample> = synth_corpus(&p, 2)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, m)| Sample::new(i.to_string(), m.image, m.mask).unwrap())
            .collect();
        let cfg = EvolutionConfig {
            population_size: 6,
            max_length: 3,
            max_generations: 3,
            seed: 4,
            ..EvolutionConfig::default()
        };
        evolve(&cfg, &samples, 1).unwrap()
    }

    #[test]
    fn header_matches_row_width() {
        let t = tiny_trial();
        let header = stats_header();
        assert_eq!(header.len(), stats_row(&t.stats[0]).len());
        assert_eq!(header.iter().filter(|c| c.starts_with("count_")).count(), BlockId::ALL.len());
        assert!(header.contains(&"median_filter.h_mean".to_string()));
    }

    #[test]
    fn trial_files_round_trip() {
        let t = tiny_trial();
        let dir = tempfile::tempdir().unwrap();
        let files = write_trial(&t, dir.path()).unwrap();
        assert_eq!(files.pipelines.len(), t.front.len());
        let back = read_trial(&files.trial).unwrap();
        assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&t).unwrap());

        let mut csv = Vec::new();
        write_stats_csv(&back.stats, &mut csv).unwrap();
        assert_eq!(csv, fs::read(&files.stats).unwrap());
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + t.generations);

        for (m, p) in t.front.iter().zip(&files.pipelines) {
            assert_eq!(fs::read_to_string(p).unwrap().trim(), m.pipeline);
        }
        assert!(summary(&t).contains("final front"));
    }

    #[test]
    fn unreadable_trials_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial.json");
        assert!(matches!(read_trial(&path), Err(ReportError::Read { .. })));
        fs::write(&path, "[]").unwrap();
        assert!(matches!(read_trial(&path), Err(ReportError::Parse { .. })));
    }
}
