//! TRIZ problem-solving engine: knowledge base, LLM gateway, reasoning
//! pipeline, report rendering and evaluation.

pub mod evaluation;
pub mod kb;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod reporting;

pub use kb::{Contradiction, KnowledgeBase};
pub use llm::{Gateway, GatewayError, ProviderConfig};
pub use pipeline::{Pipeline, PipelineError, PipelineOverrides};
pub use report::{ProblemInput, SolutionReport};

/// The `assets` directory of this crate's source tree: the bundled
/// knowledge base, prompts, case base and replay transcripts.
pub fn bundled_assets_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}
