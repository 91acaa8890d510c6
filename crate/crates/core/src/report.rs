//! Records produced by a pipeline run.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kb::{Contradiction, InventivePrinciple};
use crate::llm::ChatMessage;

/// The user's problem statement, verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInput {
    pub raw_text: String,
}

impl ProblemInput {
    pub fn new(raw_text: impl Into<String>) -> Option<Self> {
        let raw_text = raw_text.into();
        (!raw_text.trim().is_empty()).then_some(Self { raw_text })
    }
}

/// The distilled problem statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDescription {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub principle_index: u8,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Distill,
    Identify,
    Generate,
    Summarize,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Distill => "distill",
            Stage::Identify => "identify",
            Stage::Generate => "generate",
            Stage::Summarize => "summarize",
        })
    }
}

/// One executed LLM stage. A corrective re-prompt shows up as a second
/// entry for the same stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub prompt: Vec<ChatMessage>,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverrideKind {
    Problem,
    Contradiction,
    Principles,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model_id: String,
    pub started_at: String,
    pub finished_at: String,
}

/// Condensed prose for one solution; index and titles come from the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub principle_index: u8,
    pub principle_title: String,
    pub title: String,
    pub text: String,
}

/// A parameter as it appears in a document: index and title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterRef {
    pub index: u8,
    pub title: String,
}

/// Everything a document template needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizedContent {
    pub problem: String,
    /// `None` when the principles were chosen directly by the user.
    pub contradiction: Option<(ParameterRef, ParameterRef)>,
    pub contradiction_text: String,
    pub principles: Vec<InventivePrinciple>,
    pub principles_text: String,
    pub solutions: Vec<SolutionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub id: String,
    pub input: ProblemInput,
    pub problem: ProblemDescription,
    pub contradiction: Option<Contradiction>,
    pub principles: Vec<InventivePrinciple>,
    pub solutions: Vec<Solution>,
    pub overrides_applied: BTreeSet<OverrideKind>,
    pub trace: Vec<TraceEntry>,
    pub metadata: ReportMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummarizedContent>,
}

impl SolutionReport {
    pub fn principle_indexes(&self) -> Vec<u8> {
        self.principles.iter().map(|p| p.index).collect()
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.trace.iter().map(|t| t.stage).collect()
    }

    /// Copy with the run-specific fields (id, timestamps) blanked, for
    /// comparing two runs.
    pub fn without_run_identity(&self) -> Self {
        let mut r = self.clone();
        r.id.clear();
        r.metadata.started_at.clear();
        r.metadata.finished_at.clear();
        r
    }
}
