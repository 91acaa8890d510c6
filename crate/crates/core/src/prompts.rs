//! Prompt assets and the message layouts built from them.
//!
//! The module texts are stored verbatim under `assets/prompts` and compiled
//! in. Each stage request has the same shape: the system prompt, then the
//! module instruction as an assistant message, then any retrieved knowledge
//! as assistant messages, and the working content as the final user message.

use std::path::Path;

use crate::kb::{Contradiction, EngineeringParameter, InventivePrinciple, KnowledgeBase};
use crate::llm::{ChatMessage, GenerationRequest};

pub const SYSTEM: &str = include_str!("../assets/prompts/system.txt");
pub const MODULE1: &str = include_str!("../assets/prompts/module1.txt");
pub const MODULE2: &str = include_str!("../assets/prompts/module2.txt");
pub const MODULE3: &str = include_str!("../assets/prompts/module3.txt");
pub const MODULE4: &str = include_str!("../assets/prompts/module4.txt");
pub const MODULE5: &str = include_str!("../assets/prompts/module5.txt");
pub const EXAMPLES: &str = include_str!("../assets/prompts/examples.txt");
pub const OUTPUT_FORMAT: &str = include_str!("../assets/prompts/output_format.md");

pub const PARAMETERS_PLACEHOLDER: &str = "{Engineering_Parameters}";
pub const EXAMPLES_PLACEHOLDER: &str = "{Examples}";
pub const OUTPUT_FORMAT_PLACEHOLDER: &str = "{Output_Format_Example}";

/// File names of the six checksum-pinned prompt texts.
pub const PINNED_FILES: [&str; 6] =
    ["system.txt", "module1.txt", "module2.txt", "module3.txt", "module4.txt", "module5.txt"];

const CONTRADICTION_FORMAT: &str = "Answer with a single JSON object of the form \
{\"improving\": <parameter index 1-39>, \"worsening\": <parameter index 1-39>} \
using the indexes from the parameter list.";

const SOLUTIONS_FORMAT: &str = "Answer with a single JSON object of the form \
{\"solutions\": [{\"principle_index\": <index of the principle applied>, \"title\": <short title>, \
\"body\": <the full solution text>}]}. Provide at least one solution for every principle listed above.";

/// The prompt texts used by a pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system: String,
    pub module1: String,
    pub module2: String,
    pub module3: String,
    pub module4: String,
    pub module5: String,
    pub examples: String,
    pub output_format: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptSet {
    pub fn bundled() -> Self {
        Self {
            system: SYSTEM.into(),
            module1: MODULE1.into(),
            module2: MODULE2.into(),
            module3: MODULE3.into(),
            module4: MODULE4.into(),
            module5: MODULE5.into(),
            examples: EXAMPLES.into(),
            output_format: OUTPUT_FORMAT.into(),
        }
    }

    /// Reads a prompt directory laid out like `assets/prompts`.
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Ok(Self {
            system: read("system.txt")?,
            module1: read("module1.txt")?,
            module2: read("module2.txt")?,
            module3: read("module3.txt")?,
            module4: read("module4.txt")?,
            module5: read("module5.txt")?,
            examples: read("examples.txt")?,
            output_format: read("output_format.md")?,
        })
    }

    fn frame(&self, instruction: String) -> Vec<ChatMessage> {
        vec![ChatMessage::system(&self.system), ChatMessage::assistant(instruction)]
    }

    pub fn distill(&self, raw: &str) -> GenerationRequest {
        let mut m = self.frame(self.module1.clone());
        m.push(ChatMessage::user(raw.trim()));
        GenerationRequest::new(m)
    }

    pub fn identify(&self, problem: &str, parameters: &[EngineeringParameter]) -> GenerationRequest {
        let list = parameters.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n");
        let instruction =
            self.module2.replace(PARAMETERS_PLACEHOLDER, &list).replace(EXAMPLES_PLACEHOLDER, &self.examples);
        let mut m = self.frame(instruction);
        m.push(ChatMessage::user(format!("{problem}\n\n{CONTRADICTION_FORMAT}")));
        GenerationRequest::new(m)
    }

    /// `contradiction` is `None` when the principles were chosen by the user
    /// rather than looked up.
    pub fn generate(
        &self,
        problem: &str,
        contradiction: Option<(Contradiction, &KnowledgeBase)>,
        principles: &[InventivePrinciple],
    ) -> GenerationRequest {
        let entries = principles.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n");
        let mut m = self.frame(self.module3.clone());
        let retrieved = match contradiction {
            Some((c, _)) => format!("getTrizPrinciple({}, {}) returned:\n{entries}", c.improving(), c.worsening()),
            None => format!("Inventive principles selected for this problem:\n{entries}"),
        };
        m.push(ChatMessage::assistant(retrieved));
        m.push(ChatMessage::assistant(self.module4.clone()));
        let mut user = format!("Problem: {problem}");
        if let Some((c, kb)) = contradiction {
            user.push_str(&format!(
                "\nContradiction: improving {} ({}), worsening {} ({}).",
                c.improving(),
                parameter_title(kb, c.improving()),
                c.worsening(),
                parameter_title(kb, c.worsening()),
            ));
        }
        user.push_str("\n\n");
        user.push_str(SOLUTIONS_FORMAT);
        m.push(ChatMessage::user(user));
        GenerationRequest::new(m)
    }

    pub fn summarize(&self, content: &str) -> GenerationRequest {
        let instruction = self.module5.replace(OUTPUT_FORMAT_PLACEHOLDER, &format!("\n{}", self.output_format));
        let mut m = self.frame(instruction);
        m.push(ChatMessage::user(content));
        GenerationRequest::new(m)
    }
}

fn parameter_title(kb: &KnowledgeBase, index: u8) -> &str {
    kb.parameter(index).map(|p| p.title.as_str()).unwrap_or("?")
}
