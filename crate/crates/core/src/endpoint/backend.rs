use serde_json::{json, Value};

use super::prompt::{parse_action, parse_index, split_summary, ParsedAction, PromptTemplate};
use super::ChatClient;
use crate::controller::StepTriplet;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::runtime::{
    normalize_answer, AgentBackend, Aggregator, BackendError, Candidate, MajorityVote, Move,
    PlannedMove, TeamFactory, TeamView,
};

/// An orchestrator driven by a chat endpoint.
///
/// Each move costs one action call; a `STEP` adds one worker call whose reply
/// ends with a `SUMMARY:` line.
pub struct LlmTeam<'a> {
    client: &'a ChatClient,
    template: &'a PromptTemplate,
    team: usize,
}

impl<'a> LlmTeam<'a> {
    pub fn new(client: &'a ChatClient, template: &'a PromptTemplate, team: usize) -> Self {
        Self {
            client,
            template,
            team,
        }
    }
}

impl AgentBackend for LlmTeam<'_> {
    fn next_move(&mut self, view: &TeamView<'_>) -> std::result::Result<PlannedMove, BackendError> {
        let fail = |e: Error| BackendError(e.to_string());
        let msgs = self
            .template
            .orchestrator(view.query, view.history, view.visible_keys);
        let reply = self
            .client
            .call_chat(&format!("team-{}/action", self.team), &msgs)
            .map_err(fail)?;
        let mv = match parse_action(&reply) {
            ParsedAction::Step(instruction) => {
                let worker = self.template.worker(view.query, &instruction);
                let out = self
                    .client
                    .call_chat(&format!("team-{}/worker", self.team), &worker)
                    .map_err(fail)?;
                let (agent_output, step_summary) = split_summary(&out);
                Move::Step(StepTriplet {
                    agent_input: instruction,
                    step_summary,
                    agent_output,
                })
            }
            ParsedAction::Retrieve(id) => Move::Retrieve(id),
            ParsedAction::Final(answer) => Move::Final(answer),
            ParsedAction::Malformed(line) => Move::Failed(format!("malformed action: {line}")),
        };
        Ok(PlannedMove { mv, cost: 1 })
    }
}

pub struct LlmTeamFactory<'a> {
    pub client: &'a ChatClient,
    pub template: &'a PromptTemplate,
}

impl TeamFactory for LlmTeamFactory<'_> {
    fn create(&self, team: usize, _seed: u64) -> Box<dyn AgentBackend + '_> {
        Box::new(LlmTeam::new(self.client, self.template, team))
    }
}

/// Asks the endpoint to pick a candidate by number.
///
/// Unanimous candidates are returned without a call; an unparseable or
/// out-of-range reply falls back to [`MajorityVote`].
pub struct LlmAggregator<'a> {
    pub client: &'a ChatClient,
    pub template: &'a PromptTemplate,
}

impl Aggregator for LlmAggregator<'_> {
    fn aggregate(&self, query: &str, candidates: &[Candidate]) -> Result<String> {
        let Some(first) = candidates.first() else {
            return Ok(String::new());
        };
        let norm = normalize_answer(&first.answer);
        if candidates
            .iter()
            .all(|c| normalize_answer(&c.answer) == norm)
        {
            return Ok(first.answer.clone());
        }
        let reply = self
            .client
            .call_chat("aggregator", &self.template.aggregator(query, candidates))?;
        match parse_index(&reply) {
            Some(i) if (1..=candidates.len()).contains(&i) => Ok(candidates[i - 1].answer.clone()),
            _ => {
                tracing::warn!(reply = %reply.chars().take(80).collect::<String>(), "unparseable aggregator reply; using majority vote");
                MajorityVote.aggregate(query, candidates)
            }
        }
    }
}

/// Embeddings from an `/embeddings` endpoint, L2-normalized.
pub struct HttpEmbedder<'a> {
    pub client: &'a ChatClient,
    pub model: String,
    pub dim: usize,
    pub max_chars: usize,
}

impl EmbeddingProvider for HttpEmbedder<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_input_chars(&self) -> usize {
        self.max_chars
    }

    fn id(&self) -> String {
        format!("http-{}-d{}", self.model, self.dim)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::validation("cannot embed empty text"));
        }
        let input: String = text.chars().take(self.max_chars).collect();
        let v = self.client.post_json(
            "embed",
            "embeddings",
            &json!({ "model": self.model, "input": input }),
        )?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Backend("response has no data[0].embedding".into()))?;
        let mut out: Vec<f64> = arr.iter().filter_map(Value::as_f64).collect();
        if out.len() != arr.len() || out.len() != self.dim {
            return Err(Error::config(format!(
                "embedding endpoint returned {} values, expected {}",
                arr.len(),
                self.dim
            )));
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(out)
    }
}
