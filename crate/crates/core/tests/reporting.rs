use std::collections::BTreeSet;

use triz_core::report::{
    ParameterRef, ProblemDescription, ReportMetadata, Solution, SolutionReport, SolutionSummary, SummarizedContent,
};
use triz_core::reporting::{self, Format, Templates};
use triz_core::{KnowledgeBase, ProblemInput};

fn content(kb: &KnowledgeBase, principles: &[u8], solutions_per: usize) -> SummarizedContent {
    let principles = kb.principles_by_index(principles).unwrap();
    SummarizedContent {
        problem: "Pipes wear out at 50% of design life & more.".into(),
        contradiction: Some((
            ParameterRef { index: 6, title: kb.parameter(6).unwrap().title.clone() },
            ParameterRef { index: 13, title: kb.parameter(13).unwrap().title.clone() },
        )),
        contradiction_text: "Bigger area, less stable composition.".into(),
        solutions: principles
            .iter()
            .flat_map(|p| {
                (0..solutions_per).map(move |k| SolutionSummary {
                    principle_index: p.index,
                    principle_title: p.title.clone(),
                    title: format!("Use {} #{k}", p.title),
                    text: "Do_it {now}.".into(),
                })
            })
            .collect(),
        principles,
        principles_text: String::new(),
    }
}

fn section<'a>(doc: &'a str, start: &str, end: &str) -> &'a str {
    let a = doc.find(start).unwrap();
    let b = doc[a..].find(end).map(|b| a + b).unwrap_or(doc.len());
    &doc[a..b]
}

#[test]
fn markdown_has_four_top_level_sections_in_order() {
    let kb = KnowledgeBase::bundled();
    let md = reporting::render(&content(&kb, &[2, 39], 1), Format::Markdown);
    let headings: Vec<&str> = md.lines().filter(|l| l.starts_with("# ")).collect();
    assert_eq!(headings, ["# Problem", "# Identified Contradiction", "# Inventive Principles", "# Solutions"]);
    assert_eq!(md.lines().filter(|l| l.starts_with("## ")).count(), 2);
    assert!(md.contains("Area of stationary object"));
}

#[test]
fn single_solution_gives_single_subsection() {
    let kb = KnowledgeBase::bundled();
    let c = content(&kb, &[28], 1);
    let md = reporting::render(&c, Format::Markdown);
    assert_eq!(md.matches("\n## Solution").count(), 1);
    let tex = reporting::render(&c, Format::Latex);
    assert_eq!(tex.matches("\\subsection*{Solution").count(), 1);
}

#[test]
fn rendering_is_pure() {
    let kb = KnowledgeBase::bundled();
    let c = content(&kb, &[2, 39], 2);
    for fmt in [Format::Markdown, Format::Latex] {
        assert_eq!(reporting::render(&c, fmt), reporting::render(&c.clone(), fmt));
    }
}

#[test]
fn principles_listed_once_and_cited_in_solutions() {
    let kb = KnowledgeBase::bundled();
    let c = content(&kb, &[17, 7, 30], 1);
    let md = reporting::render(&c, Format::Markdown);
    let principles = section(&md, "# Inventive Principles", "# Solutions");
    let solutions = section(&md, "# Solutions", "\u{0}");
    for p in &c.principles {
        let entry = format!("**{}. {}:**", p.index, p.title);
        assert_eq!(principles.matches(&entry).count(), 1, "{entry}");
        assert!(solutions.contains(&format!("*Principle {}. {}*", p.index, p.title)));
    }

    let tex = reporting::render(&c, Format::Latex);
    let principles = section(&tex, "\\section*{Inventive Principles}", "\\section*{Solutions}");
    for p in &c.principles {
        assert_eq!(principles.matches(&format!("\\textbf{{{}. ", p.index)).count(), 1);
    }
}

#[test]
fn latex_is_a_balanced_standalone_document() {
    let kb = KnowledgeBase::bundled();
    let tex = reporting::render(&content(&kb, &[2, 39], 1), Format::Latex);
    assert!(tex.starts_with("\\documentclass"));
    assert!(tex.trim_end().ends_with("\\end{document}"));
    assert!(tex.contains("Area of stationary object"));
    assert!(tex.contains("Stability of the object's composition"));
    // specials from the content are escaped
    assert!(tex.contains("50\\% of design life \\& more"));
    assert!(tex.contains("Do\\_it \\{now\\}"));

    let mut depth = 0i64;
    let mut prev = ' ';
    for ch in tex.chars() {
        if prev != '\\' {
            match ch {
                '{' => depth += 1,
                '}' => depth -= 1,
                _ => {}
            }
        }
        assert!(depth >= 0);
        prev = if prev == '\\' && ch == '\\' { ' ' } else { ch };
    }
    assert_eq!(depth, 0);
    for env in ["document", "itemize"] {
        assert_eq!(tex.matches(&format!("\\begin{{{env}}}")).count(), tex.matches(&format!("\\end{{{env}}}")).count());
    }
}

#[test]
fn report_without_summary_renders_from_raw_fields() {
    let kb = KnowledgeBase::bundled();
    let report = SolutionReport {
        id: "r1".into(),
        input: ProblemInput::new("u").unwrap(),
        problem: ProblemDescription { text: "The problem.".into() },
        contradiction: None,
        principles: kb.principles_by_index(&[35]).unwrap(),
        solutions: vec![Solution { principle_index: 35, title: "Change state".into(), body: "Melt it.".into() }],
        overrides_applied: BTreeSet::new(),
        trace: vec![],
        metadata: ReportMetadata { model_id: "m".into(), started_at: "a".into(), finished_at: "b".into() },
        summary: None,
    };
    let md = reporting::render(&reporting::content(&kb, &report), Format::Markdown);
    assert!(md.contains("The problem."));
    assert!(md.contains("Melt it."));
    assert!(md.contains("selected directly"));
    assert!(!md.contains("r1"));
}

#[test]
fn user_templates_override_and_are_checked() {
    let kb = KnowledgeBase::bundled();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("report.md"),
        "TITLE\n{{problem}}\n{{contradiction}}\n{{principles}}\n{{solutions}}\n",
    )
    .unwrap();
    let t = Templates::load(dir.path()).unwrap();
    let md = t.render(&content(&kb, &[2], 1), Format::Markdown);
    assert!(md.starts_with("TITLE\nPipes wear out"));
    // latex falls back to the built-in template
    assert_eq!(t.latex, Templates::default().latex);

    std::fs::write(dir.path().join("report.tex"), "{{problem}} only").unwrap();
    assert!(Templates::load(dir.path()).is_err());
}

#[test]
fn write_documents_creates_both_files() {
    let kb = KnowledgeBase::bundled();
    let dir = tempfile::tempdir().unwrap();
    let c = content(&kb, &[2], 1);
    let paths = reporting::write_documents(dir.path(), "abc", &c, &Templates::default()).unwrap();
    assert_eq!(paths.len(), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("abc.md")).unwrap(), reporting::render(&c, Format::Markdown));
    assert!(dir.path().join("abc.tex").exists());
}
