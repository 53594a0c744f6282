//! Prompt templates and the one-line action grammar.
//!
//! An orchestrator reply is scanned line by line; the first line of the form
//! `STEP:<instruction>`, `RETRIEVE:<entry id>` or `FINAL:<answer>` decides the
//! move. Payloads are trimmed. A reply without such a line is malformed.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::ChatMessage;
use crate::runtime::{Candidate, HistoryItem};

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedAction {
    Step(String),
    Retrieve(u64),
    Final(String),
    /// No conforming line; holds the first non-empty line for the trace.
    Malformed(String),
}

pub fn parse_action(text: &str) -> ParsedAction {
    for line in text.lines() {
        let line = line.trim();
        if let Some(p) = line.strip_prefix("STEP:") {
            let p = p.trim();
            if !p.is_empty() {
                return ParsedAction::Step(p.to_string());
            }
        } else if let Some(p) = line.strip_prefix("RETRIEVE:") {
            if let Ok(id) = p.trim().parse::<u64>() {
                return ParsedAction::Retrieve(id);
            }
        } else if let Some(p) = line.strip_prefix("FINAL:") {
            return ParsedAction::Final(p.trim().to_string());
        }
    }
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    ParsedAction::Malformed(first.chars().take(200).collect())
}

/// Inverse of [`parse_action`] for well-formed actions.
pub fn render_action(action: &ParsedAction) -> Option<String> {
    match action {
        ParsedAction::Step(s) => Some(format!("STEP:{s}")),
        ParsedAction::Retrieve(id) => Some(format!("RETRIEVE:{id}")),
        ParsedAction::Final(a) => Some(format!("FINAL:{a}")),
        ParsedAction::Malformed(_) => None,
    }
}

/// Splits a worker reply into `(output, summary)`.
///
/// The summary is the last `SUMMARY:` line; without one it falls back to the
/// first non-empty output line, shortened to 160 characters.
pub fn split_summary(reply: &str) -> (String, String) {
    let mut summary = None;
    let mut body = Vec::new();
    for line in reply.lines() {
        match line.trim().strip_prefix("SUMMARY:") {
            Some(s) => summary = Some(s.trim().to_string()),
            None => body.push(line),
        }
    }
    let output = body.join("\n").trim().to_string();
    let summary = summary.filter(|s| !s.is_empty()).unwrap_or_else(|| {
        output
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("(no output)")
            .chars()
            .take(160)
            .collect()
    });
    let output = if output.is_empty() {
        summary.clone()
    } else {
        output
    };
    (output, summary)
}

/// First integer in `text`, if any.
pub fn parse_index(text: &str) -> Option<usize> {
    let start = text.find(|c: char| c.is_ascii_digit())?;
    let digits: String = text[start..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub orchestrator_system: String,
    pub worker_system: String,
    pub summary_suffix: String,
    pub aggregator_system: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            orchestrator_system: "You are the orchestrator of one agent team working on a task. \
Several teams work on the same task in parallel and publish useful intermediate results to a \
shared memory. Each memory entry is listed by id and a one-line key; its full value is only \
shown after you retrieve it.\n\
Reply with exactly one line in one of these forms:\n\
STEP:<instruction for your worker>\n\
RETRIEVE:<memory entry id>\n\
FINAL:<final answer>\n\
Retrieve an entry when its key covers something you still need instead of recomputing it."
                .into(),
            worker_system:
                "You are a worker agent. Carry out the instruction and report the result.".into(),
            summary_suffix: "After your result, add one last line of the form \
SUMMARY:<one-line summary of what you found, stating key values>."
                .into(),
            aggregator_system: "Several teams answered the same task. Choose the best answer. \
Reply with only the number of the chosen candidate."
                .into(),
        }
    }
}

impl PromptTemplate {
    /// Hex SHA-256 over the version and all template texts.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            TEMPLATE_VERSION,
            &self.orchestrator_system,
            &self.worker_system,
            &self.summary_suffix,
            &self.aggregator_system,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn orchestrator(
        &self,
        query: &str,
        history: &[HistoryItem],
        keys: &[(u64, String)],
    ) -> Vec<ChatMessage> {
        let mut u = format!("Task:\n{query}\n\nHistory:\n");
        if history.is_empty() {
            u.push_str("(nothing yet)\n");
        }
        for (i, h) in history.iter().enumerate() {
            let _ = writeln!(u, "({}) {h}", i + 1);
        }
        u.push_str("\nShared memory keys:\n");
        if keys.is_empty() {
            u.push_str("(empty)\n");
        }
        for (id, key) in keys {
            let _ = writeln!(u, "[{id}] {}", key.replace('\n', " "));
        }
        u.push_str("\nYour action:");
        vec![
            ChatMessage::system(&self.orchestrator_system),
            ChatMessage::user(u),
        ]
    }

    pub fn worker(&self, query: &str, instruction: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(&self.worker_system),
            ChatMessage::user(format!(
                "Overall task:\n{query}\n\nInstruction:\n{instruction}\n\n{}",
                self.summary_suffix
            )),
        ]
    }

    pub fn aggregator(&self, query: &str, candidates: &[Candidate]) -> Vec<ChatMessage> {
        let mut u = format!("Task:\n{query}\n\nCandidates:\n");
        for (i, c) in candidates.iter().enumerate() {
            let _ = writeln!(u, "{}. {}", i + 1, c.answer.replace('\n', " "));
        }
        u.push_str("\nNumber of the best candidate:");
        vec![
            ChatMessage::system(&self.aggregator_system),
            ChatMessage::user(u),
        ]
    }
}
