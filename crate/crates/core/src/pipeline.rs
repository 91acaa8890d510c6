//! The four-stage reasoning flow: distill, identify, look up, generate.
//!
//! Lookup is a plain matrix read. The other stages each make one model
//! call (two if a structured reply needs correcting). Overrides replace a
//! stage's output and skip the stage entirely.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{TrialDistribution, TrialFailure};
use crate::kb::{Contradiction, ContradictionError, InventivePrinciple, KnowledgeBase, LookupError};
use crate::llm::{FieldKind, FieldSpec, Gateway, GatewayError, GenerationRequest, StructuredReply};
use crate::prompts::PromptSet;
use crate::report::{
    OverrideKind, ProblemDescription, ProblemInput, ReportMetadata, Solution, SolutionReport, Stage, TraceEntry,
};
use crate::reporting;

/// Temperature used for every stage unless configured otherwise.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("model returned an empty problem description")]
    EmptyDistillation,
    #[error("distilled problem is {len} characters, more than twice the input ({limit} allowed)")]
    DistillationTooLong { len: usize, limit: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("contradiction outside the parameter domain: {0}")]
    Domain(#[from] ContradictionError),
    #[error("{0}")]
    Lookup(#[from] LookupError),
    #[error("no solution generated for principle(s) {0:?}")]
    MissingPrincipleCoverage(Vec<u8>),
    #[error("all {n} trials failed; last error: {last}")]
    AllTrialsFailed { n: usize, last: String },
}

/// A run that stopped early, with whatever was traced before the failure.
#[derive(Debug)]
pub struct FailedRun {
    pub stage: Option<Stage>,
    pub error: PipelineError,
    pub trace: Vec<TraceEntry>,
}

impl fmt::Display for FailedRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "{s} stage failed: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for FailedRun {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// User-supplied replacements for stage outputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contradiction: Option<Contradiction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principles: Option<Vec<u8>>,
}

impl PipelineOverrides {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(p) = &self.problem {
            if p.trim().is_empty() {
                return Err(PipelineError::InvalidOverride("problem is empty".into()));
            }
        }
        if let Some(ps) = &self.principles {
            if ps.is_empty() {
                return Err(PipelineError::InvalidOverride("principle list is empty".into()));
            }
            if let Some(p) = ps.iter().find(|p| !(1..=40).contains(*p)) {
                return Err(PipelineError::InvalidOverride(format!("principle {p} outside 1..=40")));
            }
            let distinct: BTreeSet<_> = ps.iter().collect();
            if distinct.len() != ps.len() {
                return Err(PipelineError::InvalidOverride("principle listed twice".into()));
            }
        }
        Ok(())
    }

    pub fn applied(&self) -> BTreeSet<OverrideKind> {
        let mut s = BTreeSet::new();
        if self.problem.is_some() {
            s.insert(OverrideKind::Problem);
        }
        if self.contradiction.is_some() {
            s.insert(OverrideKind::Contradiction);
        }
        if self.principles.is_some() {
            s.insert(OverrideKind::Principles);
        }
        s
    }
}

/// Progress callbacks. All methods default to no-ops.
pub trait PipelineObserver: Send + Sync {
    fn stage_started(&self, _stage: Stage) {}
    fn stage_finished(&self, _stage: Stage) {}
    fn trial_finished(&self, _done: usize, _total: usize) {}
}

struct Run<'t> {
    seed: Option<u64>,
    trace: &'t mut Vec<TraceEntry>,
    stage: Option<Stage>,
}

pub struct Pipeline<'a> {
    gateway: &'a Gateway,
    kb: &'a KnowledgeBase,
    prompts: PromptSet,
    temperature: f64,
    observer: Option<&'a dyn PipelineObserver>,
}

impl<'a> Pipeline<'a> {
    pub fn new(gateway: &'a Gateway, kb: &'a KnowledgeBase) -> Self {
        Self { gateway, kb, prompts: PromptSet::bundled(), temperature: DEFAULT_TEMPERATURE, observer: None }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_observer(mut self, observer: &'a dyn PipelineObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    fn prepare(&self, req: GenerationRequest, seed: Option<u64>) -> GenerationRequest {
        req.with_temperature(self.temperature).with_seed(seed)
    }

    fn enter(&self, run: &mut Run<'_>, stage: Stage) {
        run.stage = Some(stage);
        if let Some(o) = self.observer {
            o.stage_started(stage);
        }
    }

    fn leave(&self, stage: Stage) {
        if let Some(o) = self.observer {
            o.stage_finished(stage);
        }
    }

    fn structured(
        &self,
        run: &mut Run<'_>,
        stage: Stage,
        req: &GenerationRequest,
        spec: &FieldSpec,
    ) -> Result<StructuredReply, PipelineError> {
        let reply = self.gateway.complete_structured(req, spec)?;
        run.trace.push(TraceEntry { stage, prompt: reply.request.messages.clone(), response: reply.raw.clone() });
        Ok(reply)
    }

    fn distill_in(&self, run: &mut Run<'_>, input: &ProblemInput) -> Result<ProblemDescription, PipelineError> {
        check_input(input)?;
        self.enter(run, Stage::Distill);
        let req = self.prepare(self.prompts.distill(&input.raw_text), run.seed);
        let raw = self.gateway.complete(&req)?;
        run.trace.push(TraceEntry { stage: Stage::Distill, prompt: req.messages, response: raw.clone() });
        let text = raw.trim();
        if text.is_empty() {
            return Err(PipelineError::EmptyDistillation);
        }
        let len = text.chars().count();
        let limit = 2 * input.raw_text.chars().count();
        if len > limit {
            return Err(PipelineError::DistillationTooLong { len, limit });
        }
        self.leave(Stage::Distill);
        Ok(ProblemDescription { text: text.to_string() })
    }

    fn identify_in(&self, run: &mut Run<'_>, problem: &ProblemDescription) -> Result<Contradiction, PipelineError> {
        self.enter(run, Stage::Identify);
        let req = self.prepare(self.prompts.identify(&problem.text, self.kb.parameters()), run.seed);
        let reply = self.structured(run, Stage::Identify, &req, &FieldSpec::contradiction())?;
        let c = Contradiction::new(reply.int("improving"), reply.int("worsening"))?;
        self.leave(Stage::Identify);
        Ok(c)
    }

    fn generate_in(
        &self,
        run: &mut Run<'_>,
        problem: &ProblemDescription,
        contradiction: Option<Contradiction>,
        principles: &[InventivePrinciple],
    ) -> Result<Vec<Solution>, PipelineError> {
        if principles.is_empty() {
            return Err(PipelineError::InvalidInput("no principles to apply".into()));
        }
        self.enter(run, Stage::Generate);
        let supplied: Vec<i64> = principles.iter().map(|p| p.index.into()).collect();
        let spec = FieldSpec::new().field(
            "solutions",
            FieldKind::List(
                FieldSpec::new()
                    .field("principle_index", FieldKind::IntegerIn(supplied))
                    .field("title", FieldKind::Text)
                    .field("body", FieldKind::Text),
            ),
        );
        let req = self
            .prepare(self.prompts.generate(&problem.text, contradiction.map(|c| (c, self.kb)), principles), run.seed);
        let reply = self.structured(run, Stage::Generate, &req, &spec)?;
        let solutions: Vec<Solution> = reply.record["solutions"]
            .as_array()
            .expect("validated list")
            .iter()
            .map(|s| Solution {
                principle_index: s["principle_index"].as_f64().expect("validated index") as u8,
                title: s["title"].as_str().unwrap_or_default().trim().to_string(),
                body: s["body"].as_str().unwrap_or_default().trim().to_string(),
            })
            .collect();
        let missing: Vec<u8> =
            principles.iter().map(|p| p.index).filter(|i| !solutions.iter().any(|s| s.principle_index == *i)).collect();
        if !missing.is_empty() {
            return Err(PipelineError::MissingPrincipleCoverage(missing));
        }
        self.leave(Stage::Generate);
        Ok(solutions)
    }

    pub fn distill_problem(&self, input: &ProblemInput) -> Result<ProblemDescription, PipelineError> {
        let mut trace = Vec::new();
        self.distill_in(&mut Run { seed: None, trace: &mut trace, stage: None }, input)
    }

    pub fn identify_contradiction(&self, problem: &ProblemDescription) -> Result<Contradiction, PipelineError> {
        let mut trace = Vec::new();
        self.identify_in(&mut Run { seed: None, trace: &mut trace, stage: None }, problem)
    }

    pub fn generate_solutions(
        &self,
        problem: &ProblemDescription,
        contradiction: Option<Contradiction>,
        principles: &[InventivePrinciple],
    ) -> Result<Vec<Solution>, PipelineError> {
        let mut trace = Vec::new();
        self.generate_in(&mut Run { seed: None, trace: &mut trace, stage: None }, problem, contradiction, principles)
    }

    /// Runs every stage not replaced by an override and assembles the report.
    pub fn run(&self, input: &ProblemInput, overrides: &PipelineOverrides) -> Result<SolutionReport, FailedRun> {
        let started_at = now();
        let mut trace = Vec::new();
        let mut run = Run { seed: None, trace: &mut trace, stage: None };
        let result = self.run_stages(&mut run, input, overrides, started_at);
        let stage = run.stage;
        match result {
            Ok(mut report) => {
                report.trace = trace;
                Ok(report)
            }
            Err(error) => Err(FailedRun { stage, error, trace }),
        }
    }

    fn run_stages(
        &self,
        run: &mut Run<'_>,
        input: &ProblemInput,
        ov: &PipelineOverrides,
        started_at: String,
    ) -> Result<SolutionReport, PipelineError> {
        check_input(input)?;
        ov.validate()?;

        let problem = match &ov.problem {
            Some(text) => ProblemDescription { text: text.trim().to_string() },
            None => self.distill_in(run, input)?,
        };
        let contradiction = match (ov.contradiction, &ov.principles) {
            (Some(c), _) => Some(c),
            (None, Some(_)) => None,
            (None, None) => Some(self.identify_in(run, &problem)?),
        };
        let principles = match (&ov.principles, contradiction) {
            (Some(list), _) => self.kb.principles_by_index(list)?,
            (None, Some(c)) => self.kb.lookup_principles(c)?,
            (None, None) => unreachable!("identify always yields a contradiction"),
        };
        let solutions = self.generate_in(run, &problem, contradiction, &principles)?;

        let mut report = SolutionReport {
            id: uuid::Uuid::new_v4().to_string(),
            input: input.clone(),
            problem,
            contradiction,
            principles,
            solutions,
            overrides_applied: ov.applied(),
            trace: Vec::new(),
            metadata: ReportMetadata {
                model_id: self.gateway.model_id().to_string(),
                started_at,
                finished_at: String::new(),
            },
            summary: None,
        };

        self.enter(run, Stage::Summarize);
        let req = self.prepare(self.prompts.summarize(&reporting::summary_source(self.kb, &report)), run.seed);
        let raw = self.gateway.complete(&req)?;
        run.trace.push(TraceEntry { stage: Stage::Summarize, prompt: req.messages, response: raw.clone() });
        report.summary = Some(reporting::content_from_summary(self.kb, &report, &raw));
        self.leave(Stage::Summarize);

        report.metadata.finished_at = now();
        Ok(report)
    }

    /// Runs `n` independent distill + identify trials and tallies the
    /// contradictions found. Trial `i` uses seed `i`, so each trial's
    /// requests are distinct and the tally does not depend on scheduling.
    pub fn run_trials(&self, input: &ProblemInput, n: usize) -> Result<TrialDistribution, PipelineError> {
        check_input(input)?;
        if n == 0 {
            return Err(PipelineError::InvalidInput("trial count must be at least 1".into()));
        }
        let done = std::sync::atomic::AtomicUsize::new(0);
        let trial = |i: usize| {
            let mut trace = Vec::new();
            let mut run = Run { seed: Some(i as u64), trace: &mut trace, stage: None };
            let outcome = self
                .distill_in(&mut run, input)
                .and_then(|p| self.identify_in(&mut run, &p))
                .map_err(|e| TrialFailure { trial: i, stage: run.stage, message: e.to_string() });
            let finished = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
            if let Some(o) = self.observer {
                o.trial_finished(finished, n);
            }
            outcome
        };

        #[cfg(feature = "parallel")]
        let outcomes: Vec<_> = {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(trial).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let outcomes: Vec<_> = (0..n).map(trial).collect();

        let d = TrialDistribution::from_outcomes(outcomes);
        if d.counted() == 0 {
            let last = d.failure_log().last().map(|f| f.message.clone()).unwrap_or_default();
            return Err(PipelineError::AllTrialsFailed { n, last });
        }
        Ok(d)
    }
}

fn check_input(input: &ProblemInput) -> Result<(), PipelineError> {
    if input.raw_text.trim().is_empty() {
        return Err(PipelineError::InvalidInput("problem statement is empty".into()));
    }
    Ok(())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
