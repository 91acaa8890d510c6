//! The fixed TRIZ knowledge base: 39 engineering parameters, 40 inventive
//! principles and the 39x39 contradiction matrix.
//!
//! A bundle is three JSON documents in one directory:
//!
//! * `parameters.json`: `[{ "index", "title", "description" }, ...]`
//! * `principles.json`: same shape, 40 entries
//! * `matrix.json`: `[{ "improving", "worsening", "principles": [..] }, ...]`
//!   where an absent pair is an empty cell.
//!
//! The matrix is not symmetric; `(i, w)` and `(w, i)` are unrelated cells.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PARAMETER_COUNT: usize = 39;
pub const PRINCIPLE_COUNT: usize = 40;

pub const PARAMETERS_FILE: &str = "parameters.json";
pub const PRINCIPLES_FILE: &str = "principles.json";
pub const MATRIX_FILE: &str = "matrix.json";

const BUNDLED_PARAMETERS: &str = include_str!("../assets/kb/parameters.json");
const BUNDLED_PRINCIPLES: &str = include_str!("../assets/kb/principles.json");
const BUNDLED_MATRIX: &str = include_str!("../assets/kb/matrix.json");

/// One of the 39 engineering parameters used to state a contradiction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineeringParameter {
    pub index: u8,
    pub title: String,
    pub description: String,
}

/// One of the 40 inventive principles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventivePrinciple {
    pub index: u8,
    pub title: String,
    pub description: String,
}

impl fmt::Display for EngineeringParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[INDEX] {} [TITLE] {} [DESCRIPTION] {}", self.index, self.title, self.description)
    }
}

impl fmt::Display for InventivePrinciple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[INDEX] {} [TITLE] {} [DESCRIPTION] {}", self.index, self.title, self.description)
    }
}

/// An (improving, worsening) pair of engineering parameter indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawContradiction", into = "RawContradiction")]
pub struct Contradiction {
    improving: u8,
    worsening: u8,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawContradiction {
    improving: i64,
    worsening: i64,
}

impl TryFrom<RawContradiction> for Contradiction {
    type Error = ContradictionError;

    fn try_from(raw: RawContradiction) -> Result<Self, Self::Error> {
        Contradiction::new(raw.improving, raw.worsening)
    }
}

impl From<Contradiction> for RawContradiction {
    fn from(c: Contradiction) -> Self {
        RawContradiction { improving: c.improving.into(), worsening: c.worsening.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContradictionError {
    #[error("parameter index {0} is outside 1..=39")]
    OutOfRange(i64),
    #[error("improving and worsening parameter are both {0}")]
    SameParameter(i64),
}

impl Contradiction {
    pub fn new(improving: i64, worsening: i64) -> Result<Self, ContradictionError> {
        for idx in [improving, worsening] {
            if !(1..=PARAMETER_COUNT as i64).contains(&idx) {
                return Err(ContradictionError::OutOfRange(idx));
            }
        }
        if improving == worsening {
            return Err(ContradictionError::SameParameter(improving));
        }
        Ok(Self { improving: improving as u8, worsening: worsening as u8 })
    }

    pub fn improving(&self) -> u8 {
        self.improving
    }

    pub fn worsening(&self) -> u8 {
        self.worsening
    }

    /// The same pair with roles exchanged.
    pub fn swapped(&self) -> Self {
        Self { improving: self.worsening, worsening: self.improving }
    }
}

impl fmt::Display for Contradiction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.improving, self.worsening)
    }
}

impl std::str::FromStr for Contradiction {
    type Err = String;

    /// Parses `I:W`, e.g. `6:22`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (i, w) = s.split_once(':').ok_or_else(|| format!("expected IMPROVING:WORSENING, got `{s}`"))?;
        let i: i64 = i.trim().parse().map_err(|e| format!("bad improving index: {e}"))?;
        let w: i64 = w.trim().parse().map_err(|e| format!("bad worsening index: {e}"))?;
        Contradiction::new(i, w).map_err(|e| e.to_string())
    }
}

/// One non-empty matrix cell as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub improving: u8,
    pub worsening: u8,
    pub principles: Vec<u8>,
}

/// 39x39 grid of principle lists. Cell order is significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContradictionMatrix {
    cells: Vec<Vec<u8>>,
}

impl ContradictionMatrix {
    pub fn empty() -> Self {
        Self { cells: vec![Vec::new(); PARAMETER_COUNT * PARAMETER_COUNT] }
    }

    fn slot(improving: usize, worsening: usize) -> Option<usize> {
        let ok = (1..=PARAMETER_COUNT).contains(&improving) && (1..=PARAMETER_COUNT).contains(&worsening);
        ok.then(|| (improving - 1) * PARAMETER_COUNT + (worsening - 1))
    }

    /// Raw cell contents, or `None` when an index is outside 1..=39.
    pub fn cell(&self, improving: usize, worsening: usize) -> Option<&[u8]> {
        Self::slot(improving, worsening).map(|s| self.cells[s].as_slice())
    }

    pub fn set(&mut self, improving: usize, worsening: usize, principles: Vec<u8>) {
        let slot = Self::slot(improving, worsening).expect("matrix index in 1..=39");
        self.cells[slot] = principles;
    }

    /// Non-empty cells in row-major order.
    pub fn entries(&self) -> Vec<MatrixEntry> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty())
            .map(|(slot, c)| MatrixEntry {
                improving: (slot / PARAMETER_COUNT + 1) as u8,
                worsening: (slot % PARAMETER_COUNT + 1) as u8,
                principles: c.clone(),
            })
            .collect()
    }
}

/// Failure modes of a principle lookup. The messages are part of the
/// lookup contract and are surfaced verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("Index out of range")]
    IndexOutOfRange,
    #[error("No principle found for this case")]
    EmptyCell,
    #[error("Unknown principle")]
    UnknownPrinciple(u8),
}

/// Looks up the cell `(improving, worsening)` and resolves each listed
/// index against `principles`, preserving cell order.
pub fn lookup_principles<'a>(
    matrix: &ContradictionMatrix,
    principles: &'a [InventivePrinciple],
    improving: usize,
    worsening: usize,
) -> Result<Vec<&'a InventivePrinciple>, LookupError> {
    let cell = matrix.cell(improving, worsening).ok_or(LookupError::IndexOutOfRange)?;
    if cell.is_empty() {
        return Err(LookupError::EmptyCell);
    }
    cell.iter()
        .map(|&idx| principles.iter().find(|p| p.index == idx).ok_or(LookupError::UnknownPrinciple(idx)))
        .collect()
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("missing knowledge base file {0}")]
    MissingFile(PathBuf),
    #[error("schema violation in {file}: {detail}")]
    SchemaViolation { file: String, detail: String },
    #[error("knowledge base invariant violated: {0}")]
    InvariantViolation(ValidationReport),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Where a violation was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Parameters,
    Principles,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub table: Table,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {}: {}", self.table, self.location, self.message)
    }
}

/// All invariant violations of a bundle; empty iff the bundle is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, table: Table, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { table, location: location.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Bundle contents as parsed, before any invariant is checked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawKnowledgeBase {
    pub parameters: Vec<EngineeringParameter>,
    pub principles: Vec<InventivePrinciple>,
    pub matrix: Vec<MatrixEntry>,
}

fn check_indexed<'a>(
    report: &mut ValidationReport,
    table: Table,
    expected: usize,
    entries: impl Iterator<Item = (u8, &'a str, &'a str)>,
) {
    let mut seen = vec![0usize; expected + 1];
    for (pos, (index, title, description)) in entries.enumerate() {
        let loc = format!("entry #{pos} (index {index})");
        if index == 0 || usize::from(index) > expected {
            report.push(table.clone(), &loc, format!("index {index} outside 1..={expected}"));
            continue;
        }
        seen[usize::from(index)] += 1;
        if seen[usize::from(index)] == 2 {
            report.push(table.clone(), &loc, format!("duplicate index {index}"));
        }
        if title.trim().is_empty() {
            report.push(table.clone(), &loc, "empty title");
        }
        if description.trim().is_empty() {
            report.push(table.clone(), &loc, "empty description");
        }
    }
    for (index, count) in seen.iter().enumerate().skip(1) {
        if *count == 0 {
            report.push(table.clone(), format!("index {index}"), format!("missing index {index}"));
        }
    }
}

/// Checks every knowledge-base invariant and lists each violation.
pub fn validate_knowledge_base(raw: &RawKnowledgeBase) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_indexed(
        &mut report,
        Table::Parameters,
        PARAMETER_COUNT,
        raw.parameters.iter().map(|p| (p.index, p.title.as_str(), p.description.as_str())),
    );
    check_indexed(
        &mut report,
        Table::Principles,
        PRINCIPLE_COUNT,
        raw.principles.iter().map(|p| (p.index, p.title.as_str(), p.description.as_str())),
    );

    let mut seen_cells = std::collections::HashSet::new();
    let mut non_empty = 0usize;
    for entry in &raw.matrix {
        let loc = format!("cell ({}, {})", entry.improving, entry.worsening);
        let i = usize::from(entry.improving);
        let w = usize::from(entry.worsening);
        if !(1..=PARAMETER_COUNT).contains(&i) || !(1..=PARAMETER_COUNT).contains(&w) {
            report.push(Table::Matrix, &loc, "parameter index outside 1..=39");
            continue;
        }
        if !seen_cells.insert((i, w)) {
            report.push(Table::Matrix, &loc, "cell listed twice");
        }
        if i == w && !entry.principles.is_empty() {
            report.push(Table::Matrix, &loc, "diagonal cell must be empty");
        }
        for &p in &entry.principles {
            if p == 0 || usize::from(p) > PRINCIPLE_COUNT {
                report.push(Table::Matrix, &loc, format!("principle index {p} outside 1..=40"));
            }
        }
        if i != w && !entry.principles.is_empty() {
            non_empty += 1;
        }
    }
    if non_empty == 0 {
        report.push(Table::Matrix, "matrix", "no non-diagonal cell lists a principle");
    }
    report
}

/// A validated, immutable knowledge base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    parameters: Vec<EngineeringParameter>,
    principles: Vec<InventivePrinciple>,
    matrix: ContradictionMatrix,
}

fn parse<T: serde::de::DeserializeOwned>(file: &str, text: &str) -> Result<T, KbError> {
    serde_json::from_str(text).map_err(|e| KbError::SchemaViolation { file: file.to_string(), detail: e.to_string() })
}

fn read_doc(dir: &Path, name: &str) -> Result<String, KbError> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(KbError::MissingFile(path)),
        Err(source) => Err(KbError::Io { path, source }),
    }
}

impl RawKnowledgeBase {
    pub fn from_json(parameters: &str, principles: &str, matrix: &str) -> Result<Self, KbError> {
        Ok(Self {
            parameters: parse(PARAMETERS_FILE, parameters)?,
            principles: parse(PRINCIPLES_FILE, principles)?,
            matrix: parse(MATRIX_FILE, matrix)?,
        })
    }

    pub fn read_dir(dir: &Path) -> Result<Self, KbError> {
        let parameters = read_doc(dir, PARAMETERS_FILE)?;
        let principles = read_doc(dir, PRINCIPLES_FILE)?;
        let matrix = read_doc(dir, MATRIX_FILE)?;
        Self::from_json(&parameters, &principles, &matrix)
    }
}

impl KnowledgeBase {
    /// Loads and validates a bundle directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, KbError> {
        Self::from_raw(RawKnowledgeBase::read_dir(dir.as_ref())?)
    }

    /// The bundle compiled into this crate.
    pub fn bundled() -> Self {
        let raw = RawKnowledgeBase::from_json(BUNDLED_PARAMETERS, BUNDLED_PRINCIPLES, BUNDLED_MATRIX)
            .expect("bundled knowledge base parses");
        Self::from_raw(raw).expect("bundled knowledge base validates")
    }

    pub fn bundled_raw() -> RawKnowledgeBase {
        RawKnowledgeBase::from_json(BUNDLED_PARAMETERS, BUNDLED_PRINCIPLES, BUNDLED_MATRIX)
            .expect("bundled knowledge base parses")
    }

    pub fn from_raw(raw: RawKnowledgeBase) -> Result<Self, KbError> {
        let report = validate_knowledge_base(&raw);
        if !report.is_valid() {
            return Err(KbError::InvariantViolation(report));
        }
        let RawKnowledgeBase { mut parameters, mut principles, matrix: entries } = raw;
        parameters.sort_by_key(|p| p.index);
        principles.sort_by_key(|p| p.index);
        let mut matrix = ContradictionMatrix::empty();
        for e in entries {
            matrix.set(e.improving.into(), e.worsening.into(), e.principles);
        }
        Ok(Self { parameters, principles, matrix })
    }

    /// Writes the three bundle documents into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), KbError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| KbError::Io { path: dir.to_path_buf(), source })?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| KbError::Io { path, source })
        };
        write(PARAMETERS_FILE, to_pretty(&self.parameters))?;
        write(PRINCIPLES_FILE, to_pretty(&self.principles))?;
        write(MATRIX_FILE, to_pretty(&self.matrix.entries()))?;
        Ok(())
    }

    pub fn parameters(&self) -> &[EngineeringParameter] {
        &self.parameters
    }

    pub fn principles(&self) -> &[InventivePrinciple] {
        &self.principles
    }

    pub fn matrix(&self) -> &ContradictionMatrix {
        &self.matrix
    }

    pub fn parameter(&self, index: u8) -> Option<&EngineeringParameter> {
        self.parameters.get(usize::from(index).checked_sub(1)?)
    }

    pub fn principle(&self, index: u8) -> Option<&InventivePrinciple> {
        self.principles.get(usize::from(index).checked_sub(1)?)
    }

    /// Principle records for a contradiction, in cell order.
    pub fn lookup_principles(&self, c: Contradiction) -> Result<Vec<InventivePrinciple>, LookupError> {
        self.lookup(c.improving().into(), c.worsening().into())
    }

    /// Lookup by raw indexes; out-of-range indexes are reported, not panicked on.
    pub fn lookup(&self, improving: usize, worsening: usize) -> Result<Vec<InventivePrinciple>, LookupError> {
        lookup_principles(&self.matrix, &self.principles, improving, worsening)
            .map(|ps| ps.into_iter().cloned().collect())
    }

    /// Resolves user-chosen principle indexes, preserving the given order.
    pub fn principles_by_index(&self, indexes: &[u8]) -> Result<Vec<InventivePrinciple>, LookupError> {
        indexes.iter().map(|&i| self.principle(i).cloned().ok_or(LookupError::UnknownPrinciple(i))).collect()
    }
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("knowledge base serializes");
    s.push('\n');
    s
}
