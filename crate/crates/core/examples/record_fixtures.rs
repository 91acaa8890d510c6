//! Regenerates the replay transcripts under `assets/transcripts`.
//!
//! The replies come from a scripted backend with hand-written content, not
//! from a real model. The pipeline itself runs unmodified in record mode, so
//! the recorded digests are exactly the ones a replay run will look up.
//!
//!     cargo run -p triz-core --example record_fixtures

// `repeat_n` needs a newer toolchain than the workspace minimum.
#![allow(clippy::manual_repeat_n, clippy::vec_init_then_push, clippy::type_complexity)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde_json::json;
use triz_core::evaluation::{load_case_base, CaseRecord};
use triz_core::llm::{FnBackend, Gateway, GatewayError, GenerationRequest, ProviderConfig};
use triz_core::prompts;
use triz_core::{Contradiction, KnowledgeBase, Pipeline, PipelineOverrides, ProblemInput};

struct Fixture {
    id: &'static str,
    distilled: String,
    primary: (u8, u8),
    trials: Vec<(u8, u8, usize)>,
    /// Trials whose first identify reply is unusable and needs correcting.
    malformed: Vec<u64>,
    solutions: HashMap<u8, Vec<(&'static str, &'static str)>>,
}

impl Fixture {
    fn trial_pair(&self, seed: u64) -> (u8, u8) {
        let mut slots: Vec<(u8, u8)> =
            self.trials.iter().flat_map(|&(i, w, n)| std::iter::repeat((i, w)).take(n)).collect();
        // fixed pseudo-random interleaving so neighbouring trials differ
        slots.sort_by_key(|&(i, w)| ((i as u64 * 131 + w as u64 * 71) * 2_654_435_761) % 1_000_003);
        let n = slots.len() as u64;
        let k = (seed * 37 + 11) % n;
        slots[k as usize]
    }
}

fn fixtures() -> Vec<Fixture> {
    let mut v = Vec::new();

    v.push(Fixture {
        id: "case7",
        distilled: "Metal shot conveyed pneumatically through plastic piping built for plastic granules \
wears through the plastic elbows where the stream strikes the wall. The elbows must withstand the shot \
without replacing the conveying system."
            .into(),
        primary: (6, 13),
        trials: vec![(6, 13, 62), (12, 13, 14), (14, 13, 9), (30, 13, 5), (23, 13, 4), (27, 13, 3), (6, 14, 3)],
        malformed: vec![17, 58],
        solutions: HashMap::from([
            (
                2,
                vec![(
                    "Separate the shot stream from the elbow wall",
                    "Take the impact zone out of the plastic: replace the outer radius of each elbow with a short, \
detachable wear pocket (a blind tee) in which a bed of shot collects, so that moving shot strikes resting shot \
instead of plastic. Implementation: survey the elbows and rank them by wear rate; design a bolt-on pocket that \
reuses the existing flanges; fit it first on the worst elbow and extend to the rest over two maintenance \
shutdowns. The change keeps the pipe layout and the conveying air system unchanged, which is the point of \
extracting only the part that suffers. Challenges are a small extra pressure drop and possible clogging at \
low air speed; both are handled by sizing the pocket depth and checking the minimum conveying velocity. \
Effectiveness is measured as wall-thickness loss per tonne conveyed and as the interval between elbow \
replacements. Cost is a few fabricated fittings per line; the benefit is the removal of unplanned stops \
caused by perforated elbows.",
                )],
            ),
            (
                39,
                vec![(
                    "Protective coating on the elbow bore",
                    "Treat the inner surface of the elbows so that the shot meets a hard, oxidised protective layer \
rather than bare plastic. An oxide-rich ceramic coating, applied by a low-temperature spray process suitable \
for plastics, gives the bore a surface far harder than the shot. Implementation: select a coating system \
compatible with the pipe polymer, trial it on spare elbows in a test loop for two weeks, then coat all \
elbows during a planned shutdown and keep coated spares in stock. The principle is applied by using a \
strongly oxidised material at exactly the place where the contact happens. Adhesion on plastic is the main \
risk and is addressed with a primer and surface activation before spraying. Evaluate with coating \
thickness measurements and inspection of the bore at fixed intervals. The coating adds material and labour \
cost per elbow but extends elbow life many times over.",
                )],
            ),
        ]),
    });

    v.push(Fixture {
        id: "btms",
        distilled: "Heat pipes for cooling cylindrical battery cells touch only a small part of the cell \
surface, so their heat transfer capacity is underused and the extra coupling parts add weight and \
complexity. A heat pipe design is needed that contacts the cells fully and directly, stays light, and \
removes the heat produced at high discharge rates."
            .into(),
        primary: (12, 22),
        trials: vec![
            (12, 22, 38),
            (6, 22, 24),
            (39, 6, 9),
            (12, 17, 7),
            (6, 17, 6),
            (21, 22, 5),
            (36, 22, 4),
            (12, 36, 3),
            (9, 22, 1),
            (35, 22, 1),
            (14, 22, 1),
            (32, 22, 1),
        ],
        malformed: vec![44],
        solutions: HashMap::from([
            (
                14,
                vec![
                    (
                        "Curved heat pipe saddles",
                        "Form the evaporator section of each heat pipe into a curved saddle whose radius matches \
the cell, so the pipe wraps part of the cylinder instead of touching it along a line. Bend trials on flattened \
tubes set the minimum radius; a fixture holds the cells while the saddles are pressed on with a thin gap filler. \
Curving the contact follows the cell geometry directly. Watch for wick damage during bending and verify \
thermal performance on a heated dummy cell. The tooling cost is moderate and the gain in contact area is large.",
                    ),
                    (
                        "Rotating contact elements",
                        "Place small rotating, spring-loaded cylindrical conductors between the heat pipe and the \
cells so that they roll into full contact as the module is assembled and adapt to tolerances. Prototype with \
aluminium rollers, then measure contact resistance under vibration. Wear of the bearings is the main risk. \
The parts are cheap but add count, so this suits modules where tolerances are loose.",
                    ),
                ],
            ),
            (
                7,
                vec![(
                    "Heat pipes nested in contoured channels",
                    "Build a support frame with channels that follow the cylindrical shape of the cells and nest \
the heat pipes inside these channels, so each pipe sits in a guide that presses it against the cell wall. The \
frame doubles as the cell holder, so no separate brackets are needed. Steps: model the channel profile, machine \
a frame for one row of cells, test contact pressure and temperature spread, then move to an extruded frame. \
Tolerance stack-up is the main challenge and is handled with a compliant interface layer. Evaluate by maximum \
cell temperature and temperature difference across the row. Extrusion tooling is a one-off cost offset by \
fewer parts.",
                )],
            ),
            (
                17,
                vec![(
                    "Flexible modular flat heat pipe",
                    "Move from round tubes to a flat heat pipe with interconnected internal chambers, made as a \
flexible, modular plate that wraps onto the cylindrical cell surfaces. Heat is then spread in two dimensions \
across the module instead of along single pipes. Steps: design the chamber pattern, produce a plate segment for \
four cells, test orientation sensitivity and burst pressure, then tile segments into a full module. Keeping the \
wick continuous across the bends is the main difficulty. Measure thermal resistance per cell and module mass. \
The plate is more complex to make than a tube but replaces several parts and raises pack energy density.",
                )],
            ),
            (
                30,
                vec![(
                    "Thin conformal film evaporator",
                    "Wrap the cells in a thin, flexible metal film that forms the evaporator envelope of the heat \
pipe, so the working fluid sits directly behind a membrane that conforms to the cell. Prototype with laminated \
foil, check sealing and vapour pressure limits, and compare against the rigid design. Puncture resistance and \
long-term sealing are the risks. Material cost is low, but the sealing process needs development.",
                )],
            ),
            (
                35,
                vec![(
                    "Adjust the contact surface and interface state",
                    "Change the physical parameters of the contact: increase the angle over which the heat pipe \
envelops each cell and fill the interface with a phase-change material that melts slightly below the cell limit \
temperature, so the interface adapts to the cell shape and buffers peaks. Steps: simulate maximum temperature \
against contact angle at several discharge rates, select the smallest angle that keeps the cells below the \
limit, then test the interface material in cycling. Added wall thickness at large angles is the main drawback, \
so the angle is chosen as a compromise between temperature and material use.",
                )],
            ),
        ]),
    });

    v.push(Fixture {
        id: "synthetic-kettle",
        // already concise: the distillation returns the statement unchanged
        distilled: String::new(),
        primary: (9, 21),
        trials: vec![(9, 21, 8), (21, 9, 5), (39, 21, 4), (19, 9, 3)],
        malformed: vec![],
        solutions: HashMap::new(),
    });

    v.push(Fixture {
        id: "synthetic-drone",
        distilled: "A delivery drone needs longer flight time per charge, but a larger battery adds mass that \
raises hover power and reduces payload."
            .into(),
        primary: (15, 1),
        trials: vec![(15, 1, 12), (1, 15, 4), (26, 1, 4)],
        malformed: vec![],
        solutions: HashMap::new(),
    });
    v
}

fn principle_indexes(text: &str) -> Vec<u8> {
    text.match_indices("[INDEX] ")
        .filter_map(|(i, m)| text[i + m.len()..].split_whitespace().next().and_then(|n| n.parse().ok()))
        .collect()
}

fn identify_reply(pair: (u8, u8), style: u64) -> String {
    let obj = json!({"improving": pair.0, "worsening": pair.1}).to_string();
    match style % 3 {
        0 => obj,
        1 => format!("Reviewing the statement step by step, the improving and worsening parameters are:\n{obj}"),
        _ => format!("```json\n{obj}\n```"),
    }
}

fn first_sentences(text: &str, n: usize) -> String {
    let mut out = String::new();
    for (k, s) in text.split_inclusive(". ").enumerate() {
        if k == n {
            break;
        }
        out.push_str(s);
    }
    out.trim().to_string()
}

/// Condensed Markdown built from the summarize request's content.
fn summary_reply(content: &str) -> String {
    let problem = content.strip_prefix("Problem:\n").and_then(|s| s.split("\n\n").next()).unwrap_or_default();
    let contradiction = content
        .lines()
        .find(|l| l.starts_with("Identified contradiction:"))
        .unwrap_or_default()
        .trim_start_matches("Identified contradiction:")
        .trim();
    let titles: Vec<&str> = content
        .lines()
        .filter(|l| l.starts_with("[INDEX]"))
        .filter_map(|l| l.split("[TITLE] ").nth(1))
        .filter_map(|l| l.split(" [DESCRIPTION]").next())
        .collect();
    let mut md = format!(
        "## Problem\n{}\n\n## Identified Contradiction\nThe conflict is {}\n\n## Inventive Principles\nThe retrieved principles are {}; each is applied in at least one solution below.\n\n## Solutions\n",
        first_sentences(problem, 1),
        contradiction,
        titles.join(", ")
    );
    let sols = content.split("\nSolutions:\n").nth(1).unwrap_or_default();
    for (k, block) in sols.split("\n\n").filter(|b| !b.trim().is_empty()).enumerate() {
        let mut lines = block.lines();
        let head = lines.next().unwrap_or_default();
        let title = head.split("): ").nth(1).unwrap_or(head);
        let body: String = lines.collect::<Vec<_>>().join(" ");
        md.push_str(&format!("### Solution {}\n{}: {}\n\n", k + 1, title, first_sentences(&body, 2)));
    }
    md.trim_end().to_string()
}

fn generic_solution(problem: &str, index: u8, kb: &KnowledgeBase) -> (String, String) {
    let p = kb.principle(index).expect("known principle");
    (
        format!("Apply {}", p.title),
        format!(
            "Use the principle of {} on the problem: {} Work out a concrete design change, build a \
prototype, compare it against the current design with a measurable target, and weigh the added cost \
against the expected gain.",
            p.title.to_lowercase(),
            first_sentences(problem, 1)
        ),
    )
}

fn script(
    cases: &[CaseRecord],
    fx: &[Fixture],
    kb: &KnowledgeBase,
    req: &GenerationRequest,
) -> Result<String, GatewayError> {
    let module = &req.messages[1].content;
    let user = &req.messages.last().unwrap().content;
    let by_distilled =
        |text: &str| fx.iter().zip(cases).find(|(f, c)| text.starts_with(distilled(f, c))).map(|(f, _)| f);
    let miss = || GatewayError::Provider {
        status: 404,
        body: format!("script has no reply for: {}", user.chars().take(80).collect::<String>()),
    };

    if module == prompts::MODULE1 {
        let (f, c) = fx.iter().zip(cases).find(|(_, c)| c.problem_statement.trim() == user.trim()).ok_or_else(miss)?;
        return Ok(distilled(f, c).to_string());
    }
    if module.starts_with("Transform the problem statement") {
        let problem = req.messages[2].content.as_str();
        let f = by_distilled(problem).ok_or_else(miss)?;
        let corrective = req.messages.len() > 3;
        return Ok(match req.seed {
            None => format!(
                "Reviewing the statement step by step, the central trade-off is expressed by these parameters.\n{}",
                identify_reply(f.primary, 2)
            ),
            Some(s) if f.malformed.contains(&s) && !corrective => {
                "The improving parameter relates to the shape and the worsening one to a loss.".to_string()
            }
            Some(s) => identify_reply(f.trial_pair(s), s),
        });
    }
    if module == prompts::MODULE3 {
        let indexes = principle_indexes(&req.messages[2].content);
        let problem = user.strip_prefix("Problem: ").unwrap_or(user);
        let f = by_distilled(problem).ok_or_else(miss)?;
        let mut out = Vec::new();
        for i in indexes {
            match f.solutions.get(&i) {
                Some(list) => {
                    for (title, body) in list {
                        out.push(json!({"principle_index": i, "title": title, "body": body}));
                    }
                }
                None => {
                    let (title, body) = generic_solution(problem, i, kb);
                    out.push(json!({"principle_index": i, "title": title, "body": body}));
                }
            }
        }
        let text = serde_json::to_string_pretty(&json!({ "solutions": out })).unwrap();
        return Ok(format!("```json\n{text}\n```"));
    }
    if module.starts_with("Summarize all the given content") {
        return Ok(summary_reply(user));
    }
    Err(miss())
}

fn distilled<'a>(f: &'a Fixture, c: &'a CaseRecord) -> &'a str {
    if f.distilled.is_empty() {
        c.problem_statement.trim()
    } else {
        &f.distilled
    }
}

fn c(i: i64, w: i64) -> Contradiction {
    Contradiction::new(i, w).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets");
    let out_dir = root.join("transcripts");
    let kb = KnowledgeBase::bundled();
    let all_cases = load_case_base(root.join("cases"))?;
    let fx = fixtures();
    let cases: Vec<CaseRecord> =
        fx.iter().map(|f| all_cases.iter().find(|c| c.id == f.id).cloned().expect("case file for fixture")).collect();

    let record = |file: &str,
                  jobs: &dyn Fn(&Pipeline, &dyn Fn(&str) -> ProblemInput) -> Result<(), Box<dyn std::error::Error>>|
     -> Result<(), Box<dyn std::error::Error>> {
        let path = out_dir.join(file);
        let _ = std::fs::remove_file(&path);
        let (cases, fx, kb2) = (cases.clone(), fixtures(), KnowledgeBase::bundled());
        let backend = FnBackend(move |req: &GenerationRequest| script(&cases, &fx, &kb2, req));
        let gw = Gateway::recording(ProviderConfig::fixture(), backend, &path)?;
        let pipeline = Pipeline::new(&gw, &kb);
        let input = |id: &str| {
            let case = all_cases.iter().find(|c| c.id == id).expect("case");
            ProblemInput::new(case.problem_statement.clone()).expect("non-empty")
        };
        jobs(&pipeline, &input)?;
        println!("{}: {} calls", path.display(), gw.call_count());
        Ok(())
    };

    record("case7.jsonl", &|p, input| {
        let u = input("case7");
        p.run(&u, &PipelineOverrides::default())?;
        p.run_trials(&u, 100)?;
        Ok(())
    })?;

    record("btms.jsonl", &|p, input| {
        let u = input("btms");
        p.run(&u, &PipelineOverrides::default())?;
        let ov = |contradiction: Option<Contradiction>, principles: Option<Vec<u8>>| PipelineOverrides {
            problem: None,
            contradiction,
            principles,
        };
        p.run(&u, &ov(Some(c(6, 22)), None))?;
        p.run(&u, &ov(Some(c(6, 22)), Some(vec![7, 17])))?;
        p.run(&u, &ov(None, Some(vec![35])))?;
        p.run_trials(&u, 100)?;
        Ok(())
    })?;

    record("synthetic.jsonl", &|p, input| {
        for id in ["synthetic-kettle", "synthetic-drone"] {
            let u = input(id);
            p.run(&u, &PipelineOverrides::default())?;
            p.run_trials(&u, 20)?;
        }
        Ok(())
    })?;

    let inputs = root.join("inputs");
    std::fs::create_dir_all(&inputs)?;
    for case in &all_cases {
        write(&inputs.join(format!("{}.txt", case.id)), &format!("{}\n", case.problem_statement))?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> std::io::Result<()> {
    std::fs::write(path, text)
}
