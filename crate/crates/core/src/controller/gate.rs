use rand::RngCore;

use super::{
    decide, Action, AdmissionPolicy, ControllerContext, Decision, DecisionMode, StepTriplet,
};

pub struct GateInput<'a> {
    pub query: &'a str,
    pub triplet: &'a StepTriplet,
    pub context: &'a ControllerContext,
}

/// Anything that decides whether a candidate step enters shared memory.
pub trait AdmissionGate: Sync {
    fn label(&self) -> String;
    fn decide(&self, input: &GateInput<'_>, rng: &mut dyn RngCore) -> Decision;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysYes;

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysNo;

impl AdmissionGate for AlwaysYes {
    fn label(&self) -> String {
        "add-all".into()
    }

    fn decide(&self, _: &GateInput<'_>, _: &mut dyn RngCore) -> Decision {
        Decision::fixed(Action::Yes)
    }
}

impl AdmissionGate for AlwaysNo {
    fn label(&self) -> String {
        "always-no".into()
    }

    fn decide(&self, _: &GateInput<'_>, _: &mut dyn RngCore) -> Decision {
        Decision::fixed(Action::No)
    }
}

/// Scripted stand-in for an LLM judge.
///
/// Admits a step iff its summary is an assertion of the form `<subject> = <value>`
/// whose subject is mentioned in the task query.
#[derive(Debug, Clone, Copy, Default)]
pub struct RelevanceRule;

impl RelevanceRule {
    pub fn is_relevant(query: &str, summary: &str) -> bool {
        let Some((subject, value)) = summary.split_once(" = ") else {
            return false;
        };
        let subject = subject.trim().to_lowercase();
        !subject.is_empty() && !value.trim().is_empty() && query.to_lowercase().contains(&subject)
    }
}

impl AdmissionGate for RelevanceRule {
    fn label(&self) -> String {
        "llm-proxy".into()
    }

    fn decide(&self, input: &GateInput<'_>, _: &mut dyn RngCore) -> Decision {
        let action = if Self::is_relevant(input.query, &input.triplet.step_summary) {
            Action::Yes
        } else {
            Action::No
        };
        Decision::fixed(action)
    }
}

pub struct LearnedGate<'a> {
    pub policy: &'a AdmissionPolicy,
    pub mode: DecisionMode,
}

impl AdmissionGate for LearnedGate<'_> {
    fn label(&self) -> String {
        "learned".into()
    }

    fn decide(&self, input: &GateInput<'_>, rng: &mut dyn RngCore) -> Decision {
        decide(self.policy, input.context, self.mode, rng)
    }
}
