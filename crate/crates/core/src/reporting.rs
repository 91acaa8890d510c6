//! Turning a [`SolutionReport`] into Markdown and LaTeX documents.
//!
//! Structured fields (indexes, titles, descriptions) always come from the
//! report. The model only contributes section prose, via the summarize
//! stage. Rendering itself is a pure template expansion.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kb::KnowledgeBase;
use crate::llm::{Gateway, GatewayError};
use crate::prompts::PromptSet;
use crate::report::{ParameterRef, SolutionReport, SolutionSummary, SummarizedContent};

pub const MARKDOWN_TEMPLATE: &str = "# Problem\n\n{{problem}}\n\n\
# Identified Contradiction\n\n{{contradiction}}\n\n\
# Inventive Principles\n\n{{principles}}\n\n\
# Solutions\n\n{{solutions}}\n";

pub const LATEX_TEMPLATE: &str = "\\documentclass[11pt]{article}\n\
\\usepackage[T1]{fontenc}\n\
\\usepackage[utf8]{inputenc}\n\
\\usepackage[margin=2.5cm]{geometry}\n\
\\title{TRIZ Solution Report}\n\
\\date{}\n\
\\begin{document}\n\
\\maketitle\n\n\
\\section*{Problem}\n{{problem}}\n\n\
\\section*{Identified Contradiction}\n{{contradiction}}\n\n\
\\section*{Inventive Principles}\n{{principles}}\n\n\
\\section*{Solutions}\n{{solutions}}\n\
\\end{document}\n";

const PLACEHOLDERS: [&str; 4] = ["{{problem}}", "{{contradiction}}", "{{principles}}", "{{solutions}}"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Markdown,
    Latex,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Latex => "tex",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(Format::Markdown),
            "tex" | "latex" => Ok(Format::Latex),
            other => Err(format!("unknown format `{other}` (expected md or tex)")),
        }
    }
}

/// Document skeletons. Each must contain the four section placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub markdown: String,
    pub latex: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self { markdown: MARKDOWN_TEMPLATE.into(), latex: LATEX_TEMPLATE.into() }
    }
}

impl Templates {
    /// Reads `report.md` and/or `report.tex` from `dir`, keeping the
    /// built-in template for any file that is absent.
    pub fn load(dir: &Path) -> Result<Self, String> {
        let mut t = Self::default();
        for (name, slot) in [("report.md", &mut t.markdown), ("report.tex", &mut t.latex)] {
            let path = dir.join(name);
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                if let Some(p) = PLACEHOLDERS.iter().find(|p| !text.contains(*p)) {
                    return Err(format!("{} lacks placeholder {p}", path.display()));
                }
                *slot = text;
            }
        }
        Ok(t)
    }

    pub fn render(&self, content: &SummarizedContent, fmt: Format) -> String {
        let (template, sections) = match fmt {
            Format::Markdown => (&self.markdown, markdown_sections(content)),
            Format::Latex => (&self.latex, latex_sections(content)),
        };
        PLACEHOLDERS.iter().zip(sections).fold(template.clone(), |doc, (p, body)| doc.replace(p, body.trim_end()))
    }
}

/// Renders with the built-in templates.
pub fn render(content: &SummarizedContent, fmt: Format) -> String {
    Templates::default().render(content, fmt)
}

fn parameter_ref(kb: &KnowledgeBase, index: u8) -> ParameterRef {
    ParameterRef { index, title: kb.parameter(index).map(|p| p.title.clone()).unwrap_or_default() }
}

fn principle_title(report: &SolutionReport, index: u8) -> String {
    report.principles.iter().find(|p| p.index == index).map(|p| p.title.clone()).unwrap_or_default()
}

/// The text handed to the summarize stage.
pub fn summary_source(kb: &KnowledgeBase, report: &SolutionReport) -> String {
    let mut s = format!("Problem:\n{}\n\n", report.problem.text);
    match report.contradiction {
        Some(c) => s.push_str(&format!(
            "Identified contradiction: improving parameter {} ({}), worsening parameter {} ({}).\n\n",
            c.improving(),
            parameter_ref(kb, c.improving()).title,
            c.worsening(),
            parameter_ref(kb, c.worsening()).title,
        )),
        None => s.push_str("Identified contradiction: none (principles were selected directly).\n\n"),
    }
    s.push_str("Inventive principles:\n");
    for p in &report.principles {
        s.push_str(&format!("{p}\n"));
    }
    s.push_str("\nSolutions:\n");
    for (i, sol) in report.solutions.iter().enumerate() {
        s.push_str(&format!(
            "Solution {} (principle {}, {}): {}\n{}\n\n",
            i + 1,
            sol.principle_index,
            principle_title(report, sol.principle_index),
            sol.title,
            sol.body
        ));
    }
    s.trim_end().to_string()
}

#[derive(Default)]
struct ParsedSummary {
    problem: Option<String>,
    contradiction: Option<String>,
    principles: Option<String>,
    solutions: Vec<String>,
}

enum Section {
    Preamble,
    Problem,
    Contradiction,
    Principles,
    Solutions,
    Solution,
}

fn parse_summary(markdown: &str) -> ParsedSummary {
    let mut out = ParsedSummary::default();
    let mut section = Section::Preamble;
    let mut buf = String::new();

    fn flush(out: &mut ParsedSummary, section: &Section, buf: &mut String) {
        let text = buf.trim().to_string();
        buf.clear();
        match section {
            Section::Problem => out.problem = Some(text),
            Section::Contradiction => out.contradiction = Some(text),
            Section::Principles => out.principles = Some(text),
            Section::Solution => out.solutions.push(text),
            Section::Preamble | Section::Solutions => {}
        }
    }

    for line in markdown.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with('#') {
            let heading = trimmed.trim_start_matches('#').trim().to_ascii_lowercase();
            let next = if heading.starts_with("solutions") {
                Some(Section::Solutions)
            } else if heading.starts_with("solution") {
                Some(Section::Solution)
            } else if heading.contains("contradiction") {
                Some(Section::Contradiction)
            } else if heading.contains("principle") {
                Some(Section::Principles)
            } else if heading.contains("problem") {
                Some(Section::Problem)
            } else {
                None
            };
            if let Some(next) = next {
                flush(&mut out, &section, &mut buf);
                section = next;
                continue;
            }
        }
        buf.push_str(line);
        buf.push('\n');
    }
    flush(&mut out, &section, &mut buf);
    out
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|t| !t.is_empty())
}

fn assemble(kb: &KnowledgeBase, report: &SolutionReport, parsed: ParsedSummary) -> SummarizedContent {
    let mut sub = parsed.solutions.into_iter();
    SummarizedContent {
        problem: non_empty(parsed.problem).unwrap_or_else(|| report.problem.text.clone()),
        contradiction: report
            .contradiction
            .map(|c| (parameter_ref(kb, c.improving()), parameter_ref(kb, c.worsening()))),
        contradiction_text: non_empty(parsed.contradiction).unwrap_or_default(),
        principles: report.principles.clone(),
        principles_text: non_empty(parsed.principles).unwrap_or_default(),
        solutions: report
            .solutions
            .iter()
            .map(|s| SolutionSummary {
                principle_index: s.principle_index,
                principle_title: principle_title(report, s.principle_index),
                title: s.title.clone(),
                text: non_empty(sub.next()).unwrap_or_else(|| s.body.clone()),
            })
            .collect(),
    }
}

/// Content built from a Markdown summary reply. Sections the reply lacks
/// fall back to the report's own text.
pub fn content_from_summary(kb: &KnowledgeBase, report: &SolutionReport, markdown: &str) -> SummarizedContent {
    assemble(kb, report, parse_summary(markdown))
}

/// Content built from the report alone, without a model call.
pub fn content_from_report(kb: &KnowledgeBase, report: &SolutionReport) -> SummarizedContent {
    assemble(kb, report, ParsedSummary::default())
}

/// The report's stored summary, or content built from its raw fields.
pub fn content(kb: &KnowledgeBase, report: &SolutionReport) -> SummarizedContent {
    report.summary.clone().unwrap_or_else(|| content_from_report(kb, report))
}

/// One model call condensing the report into section prose.
pub fn summarize(
    gateway: &Gateway,
    prompts: &PromptSet,
    kb: &KnowledgeBase,
    report: &SolutionReport,
) -> Result<SummarizedContent, GatewayError> {
    let raw = gateway.complete(&prompts.summarize(&summary_source(kb, report)))?;
    Ok(content_from_summary(kb, report, &raw))
}

fn markdown_sections(c: &SummarizedContent) -> [String; 4] {
    let mut contradiction = match &c.contradiction {
        Some((i, w)) => format!(
            "- **Improving parameter:** {}. {}\n- **Worsening parameter:** {}. {}",
            i.index, i.title, w.index, w.title
        ),
        None => "No contradiction was identified; the principles were selected directly.".to_string(),
    };
    if !c.contradiction_text.is_empty() {
        contradiction.push_str("\n\n");
        contradiction.push_str(&c.contradiction_text);
    }

    let mut principles = c
        .principles
        .iter()
        .map(|p| format!("- **{}. {}:** {}", p.index, p.title, p.description))
        .collect::<Vec<_>>()
        .join("\n");
    if !c.principles_text.is_empty() {
        principles.push_str("\n\n");
        principles.push_str(&c.principles_text);
    }

    let solutions = c
        .solutions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "## Solution {}: {}\n\n*Principle {}. {}*\n\n{}",
                i + 1,
                s.title,
                s.principle_index,
                s.principle_title,
                s.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");

    [c.problem.clone(), contradiction, principles, solutions]
}

/// Escapes LaTeX special characters in running text.
pub fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(ch);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '<' => out.push_str("\\textless{}"),
            '>' => out.push_str("\\textgreater{}"),
            _ => out.push(ch),
        }
    }
    out
}

fn latex_sections(c: &SummarizedContent) -> [String; 4] {
    let e = latex_escape;
    let mut contradiction = match &c.contradiction {
        Some((i, w)) => format!(
            "\\begin{{itemize}}\n\\item \\textbf{{Improving parameter:}} {}. {}\n\\item \\textbf{{Worsening parameter:}} {}. {}\n\\end{{itemize}}",
            i.index,
            e(&i.title),
            w.index,
            e(&w.title)
        ),
        None => "No contradiction was identified; the principles were selected directly.".to_string(),
    };
    if !c.contradiction_text.is_empty() {
        contradiction.push_str("\n\n");
        contradiction.push_str(&e(&c.contradiction_text));
    }

    let mut principles = String::from("\\begin{itemize}\n");
    for p in &c.principles {
        principles.push_str(&format!("\\item \\textbf{{{}. {}:}} {}\n", p.index, e(&p.title), e(&p.description)));
    }
    principles.push_str("\\end{itemize}");
    if !c.principles_text.is_empty() {
        principles.push_str("\n\n");
        principles.push_str(&e(&c.principles_text));
    }

    let solutions = c
        .solutions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "\\subsection*{{Solution {}: {}}}\n\\emph{{Principle {}. {}}}\n\n{}",
                i + 1,
                e(&s.title),
                s.principle_index,
                e(&s.principle_title),
                e(&s.text)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");

    [e(&c.problem), contradiction, principles, solutions]
}

/// Writes `<id>.md` and `<id>.tex` into `dir`.
pub fn write_documents(
    dir: &Path,
    id: &str,
    content: &SummarizedContent,
    templates: &Templates,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    [Format::Markdown, Format::Latex]
        .into_iter()
        .map(|fmt| {
            let path = dir.join(format!("{id}.{}", fmt.extension()));
            std::fs::write(&path, templates.render(content, fmt))?;
            Ok(path)
        })
        .collect()
}
