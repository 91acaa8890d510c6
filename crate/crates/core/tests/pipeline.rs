//! Pipeline control flow against a scripted backend.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use triz_core::llm::{FnBackend, Gateway, GatewayError, GenerationRequest, ProviderConfig};
use triz_core::pipeline::{PipelineError, PipelineObserver};
use triz_core::prompts;
use triz_core::report::{OverrideKind, ProblemDescription, Stage};
use triz_core::{Contradiction, KnowledgeBase, Pipeline, PipelineOverrides, ProblemInput};

#[derive(Clone, Copy)]
struct Script {
    distill: &'static str,
    identify: &'static str,
    /// `None`: answer every supplied principle.
    generate: Option<&'static str>,
}

impl Default for Script {
    fn default() -> Self {
        Self { distill: "Short problem.", identify: r#"{"improving": 6, "worsening": 22}"#, generate: None }
    }
}

fn stage_of(req: &GenerationRequest) -> Stage {
    let m = &req.messages[1].content;
    if m == prompts::MODULE1 {
        Stage::Distill
    } else if m == prompts::MODULE3 {
        Stage::Generate
    } else if m.starts_with("Summarize") {
        Stage::Summarize
    } else {
        Stage::Identify
    }
}

fn answer_all(req: &GenerationRequest) -> String {
    let text = &req.messages[2].content;
    let sols: Vec<_> = text
        .match_indices("[INDEX] ")
        .map(|(i, m)| {
            let idx: u8 = text[i + m.len()..].split_whitespace().next().unwrap().parse().unwrap();
            serde_json::json!({"principle_index": idx, "title": format!("Idea {idx}"), "body": "Body."})
        })
        .collect();
    serde_json::json!({ "solutions": sols }).to_string()
}

fn scripted(script: Script) -> (Gateway, Arc<Mutex<Vec<Stage>>>) {
    let log = Arc::new(Mutex::new(Vec::new()));
    let l = log.clone();
    let gw = Gateway::live(
        ProviderConfig::fixture(),
        FnBackend(move |req: &GenerationRequest| {
            let stage = stage_of(req);
            l.lock().unwrap().push(stage);
            Ok(match stage {
                Stage::Distill => script.distill.to_string(),
                Stage::Identify => script.identify.to_string(),
                Stage::Generate => script.generate.map(str::to_string).unwrap_or_else(|| answer_all(req)),
                Stage::Summarize => "## Problem\nP\n## Solutions\n### Solution 1\nS".to_string(),
            })
        }),
    )
    .unwrap();
    (gw, log)
}

fn input() -> ProblemInput {
    ProblemInput::new("A fairly long problem statement about a machine that overheats.").unwrap()
}

fn c(i: i64, w: i64) -> Contradiction {
    Contradiction::new(i, w).unwrap()
}

#[test]
fn all_overrides_leave_only_generate_and_summarize() {
    let kb = KnowledgeBase::bundled();
    let (gw, log) = scripted(Script::default());
    let ov = PipelineOverrides {
        problem: Some("Given problem.".into()),
        contradiction: Some(c(6, 22)),
        principles: Some(vec![7]),
    };
    let r = Pipeline::new(&gw, &kb).run(&input(), &ov).unwrap();
    assert_eq!(*log.lock().unwrap(), vec![Stage::Generate, Stage::Summarize]);
    assert_eq!(r.stages(), vec![Stage::Generate, Stage::Summarize]);
    assert_eq!(r.problem.text, "Given problem.");
    assert_eq!(r.contradiction, Some(c(6, 22)));
    assert_eq!(r.principle_indexes(), vec![7]);
    assert_eq!(
        r.overrides_applied.iter().copied().collect::<Vec<_>>(),
        vec![OverrideKind::Problem, OverrideKind::Contradiction, OverrideKind::Principles]
    );
}

#[test]
fn lookup_uses_the_matrix_not_the_model() {
    let kb = KnowledgeBase::bundled();
    let (gw, log) = scripted(Script::default());
    let r = Pipeline::new(&gw, &kb).run(&input(), &PipelineOverrides::default()).unwrap();
    assert_eq!(r.principle_indexes(), kb.matrix().cell(6, 22).unwrap());
    // one call per LLM stage, none for lookup
    assert_eq!(log.lock().unwrap().len(), 4);
    assert_eq!(r.summary.as_ref().unwrap().solutions.len(), r.solutions.len());
}

#[test]
fn equal_indexes_are_a_domain_error() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script { identify: r#"{"improving": 9, "worsening": 9}"#, ..Script::default() });
    let err = Pipeline::new(&gw, &kb).run(&input(), &PipelineOverrides::default()).unwrap_err();
    assert!(matches!(err.error, PipelineError::Domain(_)));
    assert_eq!(err.stage, Some(Stage::Identify));
    // the partial trace holds the stages that ran
    let stages: Vec<_> = err.trace.iter().map(|t| t.stage).collect();
    assert_eq!(stages, vec![Stage::Distill, Stage::Identify]);
}

#[test]
fn out_of_range_index_is_a_structure_error() {
    let kb = KnowledgeBase::bundled();
    let (gw, log) = scripted(Script { identify: r#"{"improving": 40, "worsening": 2}"#, ..Script::default() });
    let err = Pipeline::new(&gw, &kb).run(&input(), &PipelineOverrides::default()).unwrap_err();
    assert!(matches!(err.error, PipelineError::Gateway(GatewayError::Structure(_))));
    assert_eq!(log.lock().unwrap().iter().filter(|s| **s == Stage::Identify).count(), 2);
}

#[test]
fn blank_input_fails_before_any_call() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script::default());
    let blank = ProblemInput { raw_text: "  \n\t".into() };
    let p = Pipeline::new(&gw, &kb);
    assert!(matches!(p.distill_problem(&blank), Err(PipelineError::InvalidInput(_))));
    assert!(matches!(p.run_trials(&blank, 3), Err(PipelineError::InvalidInput(_))));
    assert!(p.run(&blank, &PipelineOverrides::default()).is_err());
    assert!(matches!(p.run_trials(&input(), 0), Err(PipelineError::InvalidInput(_))));
    assert_eq!(gw.call_count(), 0);
    assert!(ProblemInput::new("   ").is_none());
}

#[test]
fn empty_and_overlong_distillations_are_rejected() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script { distill: "   ", ..Script::default() });
    assert!(matches!(Pipeline::new(&gw, &kb).distill_problem(&input()), Err(PipelineError::EmptyDistillation)));

    let long: &'static str = Box::leak("word ".repeat(100).into_boxed_str());
    let (gw, _) = scripted(Script { distill: long, ..Script::default() });
    assert!(matches!(
        Pipeline::new(&gw, &kb).distill_problem(&input()),
        Err(PipelineError::DistillationTooLong { .. })
    ));
}

#[test]
fn empty_principle_list_is_a_precondition_failure() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script::default());
    let problem = ProblemDescription { text: "p".into() };
    assert!(matches!(
        Pipeline::new(&gw, &kb).generate_solutions(&problem, None, &[]),
        Err(PipelineError::InvalidInput(_))
    ));
    assert_eq!(gw.call_count(), 0);
}

#[test]
fn uncovered_principle_is_reported() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script {
        generate: Some(r#"{"solutions": [{"principle_index": 17, "title": "t", "body": "b"}]}"#),
        ..Script::default()
    });
    let problem = ProblemDescription { text: "p".into() };
    let ps = kb.principles_by_index(&[17, 7]).unwrap();
    match Pipeline::new(&gw, &kb).generate_solutions(&problem, Some(c(6, 22)), &ps) {
        Err(PipelineError::MissingPrincipleCoverage(m)) => assert_eq!(m, vec![7]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn solution_citing_unsupplied_principle_is_rejected() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script {
        generate: Some(r#"{"solutions": [{"principle_index": 1, "title": "t", "body": "b"}]}"#),
        ..Script::default()
    });
    let problem = ProblemDescription { text: "p".into() };
    let ps = kb.principles_by_index(&[7]).unwrap();
    assert!(matches!(
        Pipeline::new(&gw, &kb).generate_solutions(&problem, None, &ps),
        Err(PipelineError::Gateway(GatewayError::Structure(_)))
    ));
}

#[test]
fn bad_overrides_are_rejected() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script::default());
    let p = Pipeline::new(&gw, &kb);
    for ov in [
        PipelineOverrides { principles: Some(vec![]), ..Default::default() },
        PipelineOverrides { principles: Some(vec![41]), ..Default::default() },
        PipelineOverrides { principles: Some(vec![3, 3]), ..Default::default() },
        PipelineOverrides { problem: Some(" ".into()), ..Default::default() },
    ] {
        let err = p.run(&input(), &ov).unwrap_err();
        assert!(matches!(err.error, PipelineError::InvalidOverride(_)), "{ov:?}");
    }
    assert_eq!(gw.call_count(), 0);
}

#[test]
fn empty_matrix_cell_stops_the_run() {
    let kb = KnowledgeBase::bundled();
    // (27, 13) is an empty cell in the bundled matrix
    assert!(kb.matrix().cell(27, 13).unwrap().is_empty());
    let (gw, _) = scripted(Script { identify: r#"{"improving": 27, "worsening": 13}"#, ..Script::default() });
    let err = Pipeline::new(&gw, &kb).run(&input(), &PipelineOverrides::default()).unwrap_err();
    assert_eq!(err.error.to_string(), "No principle found for this case");
}

#[derive(Default)]
struct Recorder {
    stages: Mutex<Vec<(bool, Stage)>>,
    trials: AtomicUsize,
}

impl PipelineObserver for Recorder {
    fn stage_started(&self, s: Stage) {
        self.stages.lock().unwrap().push((true, s));
    }
    fn stage_finished(&self, s: Stage) {
        self.stages.lock().unwrap().push((false, s));
    }
    fn trial_finished(&self, _done: usize, _total: usize) {
        self.trials.fetch_add(1, Ordering::SeqCst);
    }
}

#[test]
fn observer_sees_stages_and_trials() {
    let kb = KnowledgeBase::bundled();
    let (gw, _) = scripted(Script::default());
    let rec = Recorder::default();
    let p = Pipeline::new(&gw, &kb).with_observer(&rec);
    p.run(&input(), &PipelineOverrides::default()).unwrap();
    let stages = rec.stages.lock().unwrap().clone();
    assert_eq!(stages.len(), 8);
    assert_eq!(stages[0], (true, Stage::Distill));
    assert_eq!(stages[7], (false, Stage::Summarize));

    let d = p.run_trials(&input(), 12).unwrap();
    assert_eq!(rec.trials.load(Ordering::SeqCst), 12);
    assert_eq!(d.count(c(6, 22)), 12);
}

#[test]
fn trials_send_distinct_seeds() {
    let kb = KnowledgeBase::bundled();
    let seeds = Arc::new(Mutex::new(Vec::new()));
    let s = seeds.clone();
    let gw = Gateway::live(
        ProviderConfig::fixture(),
        FnBackend(move |req: &GenerationRequest| {
            s.lock().unwrap().push(req.seed);
            Ok(if stage_of(req) == Stage::Distill {
                "p".to_string()
            } else {
                r#"{"improving": 1, "worsening": 2}"#.to_string()
            })
        }),
    )
    .unwrap();
    Pipeline::new(&gw, &kb).run_trials(&input(), 5).unwrap();
    let mut got: Vec<_> = seeds.lock().unwrap().iter().map(|s| s.unwrap()).collect();
    got.sort();
    assert_eq!(got, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
}
