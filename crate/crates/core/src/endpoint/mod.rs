//! Teams, aggregator and embedder backed by a chat-completions HTTP endpoint.

mod backend;
mod client;
mod config;
mod prompt;

pub use backend::{HttpEmbedder, LlmAggregator, LlmTeam, LlmTeamFactory};
pub use client::{CallRecord, ChatClient, ChatMessage};
pub use config::{Credential, EndpointConfig, DEFAULT_KEY_ENV, ENV_BASE_URL, ENV_MODEL};
pub use prompt::{
    parse_action, parse_index, render_action, split_summary, ParsedAction, PromptTemplate,
    TEMPLATE_VERSION,
};
