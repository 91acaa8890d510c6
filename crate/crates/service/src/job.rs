//! Job documents and their lifecycle.

use serde::{Deserialize, Serialize};
use triz_core::report::Stage;
use triz_core::PipelineOverrides;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Solve,
    Trials,
    Evaluate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Done | Self::Failed)
    }

    fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (Self::Queued, Self::Running) | (Self::Running, Self::Done) | (Self::Queued | Self::Running, Self::Failed)
        )
    }
}

/// Pipeline position reported to pollers. `Lookup` sits between
/// identification and generation even though it makes no model call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStage {
    Distill,
    Identify,
    Lookup,
    Generate,
    Summarize,
}

impl From<Stage> for JobStage {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Distill => Self::Distill,
            Stage::Identify => Self::Identify,
            Stage::Generate => Self::Generate,
            Stage::Summarize => Self::Summarize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRequest {
    pub kind: JobKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<PipelineOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub stage: Option<JobStage>,
    pub progress: Option<Progress>,
    pub result_ref: Option<String>,
    pub error: Option<String>,
    pub request: JobRequest,
    pub created_at: String,
    pub updated_at: String,
}

#[derive(Debug, thiserror::Error)]
#[error("job {id} cannot move from {from:?} to {to:?}")]
pub struct TransitionError {
    pub id: String,
    pub from: JobState,
    pub to: JobState,
}

impl Job {
    pub fn new(request: JobRequest) -> Self {
        let now = now();
        let progress = match request.kind {
            JobKind::Solve => None,
            JobKind::Trials | JobKind::Evaluate => {
                Some(Progress { completed: 0, total: request.n.unwrap_or(DEFAULT_TRIALS) })
            }
        };
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            kind: request.kind,
            state: JobState::Queued,
            stage: None,
            progress,
            result_ref: None,
            error: None,
            request,
            created_at: now.clone(),
            updated_at: now,
        }
    }

    fn advance(&mut self, to: JobState) -> Result<(), TransitionError> {
        if !self.state.can_become(to) {
            return Err(TransitionError { id: self.id.clone(), from: self.state, to });
        }
        self.state = to;
        self.updated_at = now();
        Ok(())
    }

    pub fn start(&mut self) -> Result<(), TransitionError> {
        self.advance(JobState::Running)
    }

    pub fn finish(&mut self, result_ref: String) -> Result<(), TransitionError> {
        self.advance(JobState::Done)?;
        self.result_ref = Some(result_ref);
        Ok(())
    }

    pub fn fail(&mut self, error: String) -> Result<(), TransitionError> {
        self.advance(JobState::Failed)?;
        self.error = Some(error);
        Ok(())
    }

    pub fn touch(&mut self) {
        self.updated_at = now();
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}
