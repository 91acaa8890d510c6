//! Case base, trial distributions and their statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::Contradiction;
use crate::report::Stage;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("schema violation in {file}: {detail}")]
    SchemaViolation { file: String, detail: String },
    #[error("duplicate case id `{0}`")]
    DuplicateId(String),
    #[error("distribution has no counted trials")]
    EmptyDistribution,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

/// A benchmark problem with its expert reference answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub domain: String,
    pub problem_statement: String,
    pub reference_contradiction: Contradiction,
    pub reference_principles: Vec<u8>,
    #[serde(default)]
    pub reference_solution: String,
    #[serde(default)]
    pub source: String,
}

impl CaseRecord {
    fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".into());
        }
        if self.problem_statement.trim().is_empty() {
            return Err("problem_statement is empty".into());
        }
        if let Some(p) = self.reference_principles.iter().find(|p| !(1..=40).contains(*p)) {
            return Err(format!("reference principle {p} outside 1..=40"));
        }
        Ok(())
    }
}

/// Reads every `*.json` file in `dir` as one [`CaseRecord`], sorted by id.
pub fn load_case_base(dir: impl AsRef<Path>) -> Result<Vec<CaseRecord>, EvalError> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut seen = HashSet::new();
    let mut cases = Vec::with_capacity(files.len());
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let file = path.display().to_string();
        let case: CaseRecord = serde_json::from_str(&text)
            .map_err(|e| EvalError::SchemaViolation { file: file.clone(), detail: e.to_string() })?;
        case.check().map_err(|detail| EvalError::SchemaViolation { file, detail })?;
        if !seen.insert(case.id.clone()) {
            return Err(EvalError::DuplicateId(case.id));
        }
        cases.push(case);
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub stage: Option<Stage>,
    pub message: String,
}

/// Tally of contradictions identified over repeated trials.
///
/// Invariant: the sum of counts plus `failures` equals `n_requested`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct TrialDistribution {
    counts: BTreeMap<Contradiction, usize>,
    failure_log: Vec<TrialFailure>,
    failures: usize,
}

#[derive(Serialize, Deserialize)]
struct CountEntry {
    improving: u8,
    worsening: u8,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    n_requested: usize,
    failures: usize,
    counts: Vec<CountEntry>,
    #[serde(default)]
    failure_log: Vec<TrialFailure>,
}

impl TryFrom<RawDistribution> for TrialDistribution {
    type Error = String;

    fn try_from(raw: RawDistribution) -> Result<Self, String> {
        let mut d = TrialDistribution::new();
        for e in raw.counts {
            let c = Contradiction::new(e.improving.into(), e.worsening.into()).map_err(|e| e.to_string())?;
            if e.count == 0 {
                return Err(format!("zero count for {c}"));
            }
            *d.counts.entry(c).or_default() += e.count;
        }
        d.failures = raw.failures;
        d.failure_log = raw.failure_log;
        if d.n_requested() != raw.n_requested {
            return Err(format!(
                "counts ({}) + failures ({}) != n_requested ({})",
                d.counted(),
                d.failures,
                raw.n_requested
            ));
        }
        Ok(d)
    }
}

impl From<TrialDistribution> for RawDistribution {
    fn from(d: TrialDistribution) -> Self {
        RawDistribution {
            n_requested: d.n_requested(),
            failures: d.failures,
            counts: d
                .counts
                .iter()
                .map(|(c, &count)| CountEntry { improving: c.improving(), worsening: c.worsening(), count })
                .collect(),
            failure_log: d.failure_log,
        }
    }
}

impl TrialDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (Contradiction, usize)>, failures: usize) -> Self {
        let mut d = Self::new();
        for (c, n) in counts {
            if n > 0 {
                *d.counts.entry(c).or_default() += n;
            }
        }
        d.failures = failures;
        d
    }

    /// Builds a distribution from per-trial outcomes, in any order.
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = Result<Contradiction, TrialFailure>>) -> Self {
        let mut d = Self::new();
        for o in outcomes {
            match o {
                Ok(c) => d.record(c),
                Err(f) => d.record_failure(f),
            }
        }
        d.failure_log.sort_by_key(|f| f.trial);
        d
    }

    pub fn record(&mut self, c: Contradiction) {
        *self.counts.entry(c).or_default() += 1;
    }

    pub fn record_failure(&mut self, f: TrialFailure) {
        self.failures += 1;
        self.failure_log.push(f);
    }

    pub fn counts(&self) -> &BTreeMap<Contradiction, usize> {
        &self.counts
    }

    pub fn count(&self, c: Contradiction) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn failure_log(&self) -> &[TrialFailure] {
        &self.failure_log
    }

    /// Successful trials.
    pub fn counted(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn n_requested(&self) -> usize {
        self.counted() + self.failures
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Entries sorted by count descending, then by (improving, worsening).
    pub fn ranked(&self) -> Vec<(Contradiction, usize)> {
        let mut v: Vec<_> = self.counts.iter().map(|(c, n)| (*c, *n)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// Shannon entropy in bits of the counts' empirical distribution.
pub fn entropy_of_counts(counts: &[usize]) -> Result<f64, EvalError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(EvalError::EmptyDistribution);
    }
    let total = total as f64;
    Ok(counts
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let p = n as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

pub fn entropy(d: &TrialDistribution) -> Result<f64, EvalError> {
    let counts: Vec<usize> = d.counts.values().copied().collect();
    entropy_of_counts(&counts)
}

/// How well a detected contradiction agrees with a reference one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchCategory {
    None,
    Half,
    Complete,
}

impl fmt::Display for MatchCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchCategory::None => "None",
            MatchCategory::Half => "Half",
            MatchCategory::Complete => "Complete",
        })
    }
}

/// Roles matter: a swapped pair is only a half match.
pub fn categorize_match(detected: Contradiction, reference: Contradiction) -> MatchCategory {
    let same_improving = detected.improving() == reference.improving();
    let same_worsening = detected.worsening() == reference.worsening();
    if same_improving && same_worsening {
        MatchCategory::Complete
    } else if same_improving || same_worsening || detected.swapped() == reference {
        MatchCategory::Half
    } else {
        MatchCategory::None
    }
}

/// The `k` most frequent contradictions with their share of counted trials.
pub fn top_k(d: &TrialDistribution, k: usize) -> Result<Vec<(Contradiction, f64)>, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let total = d.counted();
    if total == 0 {
        return Err(EvalError::EmptyDistribution);
    }
    Ok(d.ranked().into_iter().take(k).map(|(c, n)| (c, n as f64 / total as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedContradiction {
    pub contradiction: Contradiction,
    pub count: usize,
    pub proportion: f64,
    pub category: MatchCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case_id: String,
    pub reference: Contradiction,
    pub k: usize,
    pub entropy: f64,
    pub counted: usize,
    pub failures: usize,
    pub top: Vec<RankedContradiction>,
    /// Best category among the top-k entries.
    pub best: MatchCategory,
}

pub fn evaluate_case(case: &CaseRecord, d: &TrialDistribution, k: usize) -> Result<CaseEvaluation, EvalError> {
    let h = entropy(d)?;
    let top: Vec<RankedContradiction> = top_k(d, k)?
        .into_iter()
        .map(|(c, proportion)| RankedContradiction {
            contradiction: c,
            count: d.count(c),
            proportion,
            category: categorize_match(c, case.reference_contradiction),
        })
        .collect();
    let best = top.iter().map(|r| r.category).max().unwrap_or(MatchCategory::None);
    Ok(CaseEvaluation {
        case_id: case.id.clone(),
        reference: case.reference_contradiction,
        k,
        entropy: h,
        counted: d.counted(),
        failures: d.failures(),
        top,
        best,
    })
}

#[derive(Serialize)]
struct CsvRow {
    contradiction: String,
    count: usize,
    proportion: f64,
    r#match: MatchCategory,
}

/// Writes `<dir>/<case_id>.json` (the evaluation plus the distribution) and
/// `<dir>/<case_id>.csv` (every contradiction, ranked). Returns both paths.
pub fn write_evaluation(
    dir: impl AsRef<Path>,
    case: &CaseRecord,
    eval: &CaseEvaluation,
    d: &TrialDistribution,
) -> Result<(PathBuf, PathBuf), EvalError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let json_path = dir.join(format!("{}.json", case.id));
    let doc = serde_json::json!({ "evaluation": eval, "distribution": d });
    let mut text = serde_json::to_string_pretty(&doc).expect("evaluation serializes");
    text.push('\n');
    std::fs::write(&json_path, text).map_err(io_err(&json_path))?;

    let csv_path = dir.join(format!("{}.csv", case.id));
    let total = d.counted().max(1) as f64;
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
    for (c, n) in d.ranked() {
        w.serialize(CsvRow {
            contradiction: c.to_string(),
            count: n,
            proportion: n as f64 / total,
            r#match: categorize_match(c, case.reference_contradiction),
        })
        .map_err(|e| csv_err(&csv_path, e))?;
    }
    w.flush().map_err(io_err(&csv_path))?;
    Ok((json_path, csv_path))
}

fn csv_err(path: &Path, e: csv::Error) -> EvalError {
    EvalError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}
