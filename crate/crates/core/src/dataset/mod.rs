//! Commit corpora: loading, time-based splitting and class rebalancing.

mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::slice::diff_lines;

pub use synth::{gen_synthetic, gen_synthetic_detailed, EditKind, SyntheticCommit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Fix,
    NonFix,
}

impl Label {
    pub fn is_fix(self) -> bool {
        self == Label::Fix
    }

    pub fn as_f64(self) -> f64 {
        if self.is_fix() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub label: Label,
    pub files: Vec<FileChange>,
    /// Added plus deleted lines over all files.
    pub changed_loc: usize,
}

impl CommitRecord {
    /// Builds a record, computing `changed_loc` from the file texts.
    pub fn new(commit_id: impl Into<String>, timestamp: i64, label: Label, files: Vec<FileChange>) -> Self {
        let changed_loc = count_changed_loc(&files);
        Self { commit_id: commit_id.into(), timestamp, label, files, changed_loc }
    }
}

pub fn count_changed_loc(files: &[FileChange]) -> usize {
    files.iter().map(|f| diff_lines(&f.before, &f.after).changed_loc()).sum()
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: field `{field}`: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("training set has no fixing commits")]
    NoPositives,
    #[error("only {negatives} non-fixing commits for {fixes} fixing commits")]
    InsufficientNegatives { fixes: usize, negatives: usize },
}

fn schema(line: usize, field: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema { line, field: field.to_string(), message: message.into() }
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>, DatasetError> {
    let file = File::open(path)?;
    let inner: Box<dyn Read> =
        if path.extension().is_some_and(|e| e == "gz") { Box::new(GzDecoder::new(file)) } else { Box::new(file) };
    Ok(Box::new(BufReader::new(inner)))
}

/// Reads a JSON-lines corpus (gzip-compressed when the path ends in `.gz`).
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CommitRecord>, DatasetError> {
    parse_corpus(open_reader(path.as_ref())?)
}

pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<CommitRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, lineno)?);
    }
    Ok(out)
}

fn field<'a>(
    obj: &'a serde_json::Map<String, serde_json::Value>,
    line: usize,
    name: &str,
) -> Result<&'a serde_json::Value, DatasetError> {
    obj.get(name).ok_or_else(|| schema(line, name, "missing"))
}

fn parse_record(text: &str, line: usize) -> Result<CommitRecord, DatasetError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(line, "<record>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| schema(line, "<record>", "expected an object"))?;

    let commit_id = field(obj, line, "commit_id")?
        .as_str()
        .ok_or_else(|| schema(line, "commit_id", "expected a string"))?
        .to_string();
    let timestamp =
        field(obj, line, "timestamp")?.as_i64().ok_or_else(|| schema(line, "timestamp", "expected an integer"))?;
    let label: Label = serde_json::from_value(field(obj, line, "label")?.clone())
        .map_err(|_| schema(line, "label", "expected \"fix\" or \"non-fix\""))?;
    let files: Vec<FileChange> =
        serde_json::from_value(field(obj, line, "files")?.clone()).map_err(|e| schema(line, "files", e.to_string()))?;
    if files.is_empty() {
        return Err(schema(line, "files", "at least one file is required"));
    }
    let computed = count_changed_loc(&files);
    if let Some(stated) = obj.get("changed_loc") {
        let stated = stated.as_u64().ok_or_else(|| schema(line, "changed_loc", "expected a non-negative integer"))?;
        if stated as usize != computed {
            return Err(schema(line, "changed_loc", format!("stated {stated}, diff gives {computed}")));
        }
    }
    Ok(CommitRecord { commit_id, timestamp, label, files, changed_loc: computed })
}

/// Writes a JSON-lines corpus (gzip-compressed when the path ends in `.gz`).
pub fn write_corpus(path: impl AsRef<Path>, corpus: &[CommitRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut w = GzEncoder::new(BufWriter::new(file), Compression::default());
        write_records(&mut w, corpus)?;
        w.finish()?.flush()?;
    } else {
        let mut w = BufWriter::new(file);
        write_records(&mut w, corpus)?;
        w.flush()?;
    }
    Ok(())
}

pub fn write_records(w: &mut impl Write, corpus: &[CommitRecord]) -> Result<(), DatasetError> {
    for record in corpus {
        serde_json::to_writer(&mut *w, record).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratio: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_ratio: 0.8 }
    }
}

#[derive(Debug, Clone)]
pub struct TimeSplit {
    /// Every training timestamp is below the cut; every test timestamp is at or above it.
    pub cut: i64,
    pub train: Vec<CommitRecord>,
    pub test: Vec<CommitRecord>,
}

/// Splits by time at the smallest timestamp that puts at least
/// `train_ratio` of the commits strictly before it. Commits tied with the
/// cut go to the test side. Both halves are returned in time order.
pub fn time_split(corpus: &[CommitRecord], spec: SplitSpec) -> Result<TimeSplit, DatasetError> {
    let mut sorted = corpus.to_vec();
    sorted.sort_by_key(|c| c.timestamp);
    let (Some(first), Some(last)) = (sorted.first(), sorted.last()) else {
        return Err(DatasetError::DegenerateSplit("empty corpus".into()));
    };
    if first.timestamp == last.timestamp {
        return Err(DatasetError::DegenerateSplit("all timestamps are equal".into()));
    }
    let n = sorted.len() as f64;
    let mut cut = last.timestamp;
    for (i, c) in sorted.iter().enumerate() {
        // `i` commits precede the first occurrence of this timestamp.
        if i > 0 && sorted[i - 1].timestamp == c.timestamp {
            continue;
        }
        if i as f64 / n >= spec.train_ratio && i > 0 {
            cut = c.timestamp;
            break;
        }
    }
    let at = sorted.partition_point(|c| c.timestamp < cut);
    let test = sorted.split_off(at);
    Ok(TimeSplit { cut, train: sorted, test })
}

#[derive(Debug)]
pub struct Undersampled {
    pub records: Vec<CommitRecord>,
    /// Set when there were fewer negatives than positives; all were kept.
    pub shortfall: Option<DatasetError>,
}

/// Keeps every fix and an equal number of non-fixes drawn without
/// replacement. Output preserves input order.
pub fn undersample(train: &[CommitRecord], seed: u64) -> Result<Undersampled, DatasetError> {
    let fixes = train.iter().filter(|c| c.label.is_fix()).count();
    if fixes == 0 {
        return Err(DatasetError::NoPositives);
    }
    let negatives: Vec<usize> = (0..train.len()).filter(|&i| !train[i].label.is_fix()).collect();
    if negatives.len() < fixes {
        let err = DatasetError::InsufficientNegatives { fixes, negatives: negatives.len() };
        log::warn!("{err}; keeping all commits");
        return Ok(Undersampled { records: train.to_vec(), shortfall: Some(err) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; train.len()];
    for k in sample(&mut rng, negatives.len(), fixes) {
        keep[negatives[k]] = true;
    }
    let records =
        train.iter().enumerate().filter(|&(i, c)| c.label.is_fix() || keep[i]).map(|(_, c)| c.clone()).collect();
    Ok(Undersampled { records, shortfall: None })
}

/// Resamples an evaluation set to `ratio` non-fixes per fix. Negatives are
/// subsampled when there are enough of them; otherwise all negatives are kept
/// and the fixes are subsampled instead. Output preserves input order.
pub fn sample_ratio(test: &[CommitRecord], ratio: f64, seed: u64) -> Vec<CommitRecord> {
    assert!(ratio > 0.0, "ratio must be positive");
    let pos: Vec<usize> = (0..test.len()).filter(|&i| test[i].label.is_fix()).collect();
    let neg: Vec<usize> = (0..test.len()).filter(|&i| !test[i].label.is_fix()).collect();
    if pos.is_empty() || neg.is_empty() {
        return test.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wanted_neg = (pos.len() as f64 * ratio).round() as usize;
    let (keep_pos, keep_neg) = if wanted_neg <= neg.len() {
        (pos.clone(), pick(&mut rng, &neg, wanted_neg))
    } else {
        let n_pos = ((neg.len() as f64 / ratio).floor() as usize).max(1);
        (pick(&mut rng, &pos, n_pos), neg.clone())
    };
    let mut chosen = vec![false; test.len()];
    keep_pos.iter().chain(&keep_neg).for_each(|&i| chosen[i] = true);
    test.iter().enumerate().filter(|&(i, _)| chosen[i]).map(|(_, c)| c.clone()).collect()
}

fn pick(rng: &mut ChaCha8Rng, from: &[usize], n: usize) -> Vec<usize> {
    sample(rng, from.len(), n.min(from.len())).into_iter().map(|k| from[k]).collect()
}
