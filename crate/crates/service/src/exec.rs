//! Validation, admission and background execution of jobs.

use std::sync::atomic::Ordering;
use std::sync::Arc;

use serde::Serialize;
use triz_core::evaluation::{entropy, evaluate_case, top_k, write_evaluation, CaseRecord, TrialDistribution};
use triz_core::pipeline::PipelineObserver;
use triz_core::report::Stage;
use triz_core::{Contradiction, Pipeline, PipelineOverrides, ProblemInput};

use crate::error::ApiError;
use crate::job::{Job, JobKind, JobRequest, JobStage, DEFAULT_TOP_K, DEFAULT_TRIALS};
use crate::store::Collection;
use crate::{AppState, Inner};

/// A request resolved against the case base, ready to run.
struct Plan {
    input: ProblemInput,
    case: Option<CaseRecord>,
    overrides: PipelineOverrides,
    n: usize,
    k: usize,
}

fn plan(inner: &Inner, req: &JobRequest) -> Result<Plan, ApiError> {
    let case = match &req.case_id {
        Some(id) => Some(
            inner
                .cases
                .iter()
                .find(|c| &c.id == id)
                .cloned()
                .ok_or_else(|| ApiError::validation(format!("unknown case {id:?}")))?,
        ),
        None => None,
    };
    let text = match (&req.problem_text, &case) {
        (Some(t), _) => t.clone(),
        (None, Some(c)) => c.problem_statement.clone(),
        (None, None) => return Err(ApiError::validation("problem_text or case_id is required")),
    };
    let input = ProblemInput::new(text).ok_or_else(|| ApiError::validation("problem_text is empty"))?;
    if req.kind == JobKind::Evaluate && case.is_none() {
        return Err(ApiError::validation("evaluate jobs need a case_id"));
    }
    let overrides = req.overrides.clone().unwrap_or_default();
    if req.kind != JobKind::Solve && overrides != PipelineOverrides::default() {
        return Err(ApiError::validation("overrides apply to solve jobs only"));
    }
    overrides.validate().map_err(|e| ApiError::validation(e.to_string()))?;
    let n = req.n.unwrap_or(DEFAULT_TRIALS);
    if n == 0 {
        return Err(ApiError::validation("n must be at least 1"));
    }
    let k = req.k.unwrap_or(DEFAULT_TOP_K);
    if k == 0 {
        return Err(ApiError::validation("k must be at least 1"));
    }
    Ok(Plan { input, case, overrides, n, k })
}

/// Validates, persists and schedules a job. Returns the job and whether it
/// is new (false when the idempotency key matched an earlier submission).
pub(crate) fn submit(state: &AppState, mut req: JobRequest) -> Result<(Job, bool), ApiError> {
    let inner = &state.0;
    if let Some(k) = &req.idempotency_key {
        if k.trim().is_empty() {
            req.idempotency_key = None;
        }
    }
    plan(inner, &req)?;

    let cap = inner.queue_capacity;
    if inner.active.fetch_add(1, Ordering::SeqCst) >= cap {
        inner.active.fetch_sub(1, Ordering::SeqCst);
        return Err(ApiError::queue_full(cap));
    }
    let key = req.idempotency_key.clone();
    let (job, created) = match inner.store.insert_job(Job::new(req), key.as_deref()) {
        Ok(r) => r,
        Err(e) => {
            inner.active.fetch_sub(1, Ordering::SeqCst);
            return Err(e.into());
        }
    };
    if !created {
        inner.active.fetch_sub(1, Ordering::SeqCst);
        return Ok((job, false));
    }

    let st = state.clone();
    let id = job.id.clone();
    let permits = Arc::clone(&inner.permits);
    tokio::spawn(async move {
        let permit = permits.acquire_owned().await;
        let worker = st.clone();
        let job_id = id.clone();
        let outcome = tokio::task::spawn_blocking(move || execute(&worker.0, &job_id)).await;
        drop(permit);
        if let Err(e) = outcome {
            let msg = format!("job worker crashed: {e}");
            log::error!("{id}: {msg}");
            let _ = st.0.store.update_job(&id, |j| {
                let _ = j.fail(msg);
            });
        }
        st.0.active.fetch_sub(1, Ordering::SeqCst);
    });
    Ok((job, true))
}

struct JobObserver<'a> {
    inner: &'a Inner,
    id: &'a str,
}

impl JobObserver<'_> {
    fn update(&self, f: impl FnOnce(&mut Job)) {
        if let Err(e) = self.inner.store.update_job(self.id, |j| {
            f(j);
            j.touch();
        }) {
            log::warn!("{}: progress update lost: {e}", self.id);
        }
    }
}

impl PipelineObserver for JobObserver<'_> {
    fn stage_started(&self, stage: Stage) {
        self.update(|j| j.stage = Some(stage.into()));
    }

    fn stage_finished(&self, stage: Stage) {
        if stage == Stage::Identify {
            self.update(|j| j.stage = Some(JobStage::Lookup));
        }
    }

    fn trial_finished(&self, done: usize, total: usize) {
        self.update(|j| {
            let p = j.progress.get_or_insert(crate::job::Progress { completed: 0, total });
            p.completed = p.completed.max(done);
        });
    }
}

#[derive(Serialize)]
struct TopEntry {
    contradiction: Contradiction,
    proportion: f64,
}

#[derive(Serialize)]
struct TrialsResult<'a> {
    job_id: &'a str,
    entropy: f64,
    top: Vec<TopEntry>,
    distribution: &'a TrialDistribution,
}

fn execute(inner: &Inner, id: &str) {
    let Ok(Some(job)) = inner.store.update_job(id, |j| {
        if let Err(e) = j.start() {
            log::warn!("{e}");
        }
    }) else {
        log::error!("{id}: job document vanished before it ran");
        return;
    };
    let outcome = run(inner, &job);
    let update = inner.store.update_job(id, |j| {
        let r = match outcome {
            Ok(result_ref) => j.finish(result_ref),
            Err(msg) => j.fail(msg),
        };
        if let Err(e) = r {
            log::warn!("{e}");
        }
    });
    if let Err(e) = update {
        log::error!("{id}: could not record the outcome: {e}");
    }
}

fn run(inner: &Inner, job: &Job) -> Result<String, String> {
    let plan = plan(inner, &job.request).map_err(|e| e.message)?;
    let observer = JobObserver { inner, id: &job.id };
    let pipeline = Pipeline::new(&inner.gateway, &inner.kb).with_observer(&observer);
    match job.kind {
        JobKind::Solve => {
            let report = pipeline.run(&plan.input, &plan.overrides).map_err(|e| e.to_string())?;
            inner.store.put(Collection::Reports, &report.id, &report).map_err(|e| e.to_string())?;
            Ok(report.id)
        }
        JobKind::Trials => {
            let d = pipeline.run_trials(&plan.input, plan.n).map_err(|e| e.to_string())?;
            let h = entropy(&d).map_err(|e| e.to_string())?;
            let top = top_k(&d, plan.k)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|(contradiction, proportion)| TopEntry { contradiction, proportion })
                .collect();
            let doc = TrialsResult { job_id: &job.id, entropy: h, top, distribution: &d };
            inner.store.put(Collection::Results, &job.id, &doc).map_err(|e| e.to_string())?;
            Ok(job.id.clone())
        }
        JobKind::Evaluate => {
            let case = plan.case.expect("evaluate plans carry a case");
            let d = pipeline.run_trials(&plan.input, plan.n).map_err(|e| e.to_string())?;
            let eval = evaluate_case(&case, &d, plan.k).map_err(|e| e.to_string())?;
            write_evaluation(inner.store.dir(Collection::Eval), &case, &eval, &d).map_err(|e| e.to_string())?;
            Ok(case.id)
        }
    }
}
