use super::task::{parse_answer, AnswerField, SimTask};
use crate::runtime::Scorer;

/// Weighted fraction of answer fields that match the key.
///
/// In binary mode the score is 1 only when every field matches.
#[derive(Debug, Clone)]
pub struct SimScorer {
    fields: Vec<AnswerField>,
    binary: bool,
}

impl SimScorer {
    pub fn new(fields: Vec<AnswerField>, binary: bool) -> Self {
        Self { fields, binary }
    }

    pub fn for_task(task: &SimTask) -> Self {
        Self::new(task.answer_fields.clone(), task.params.binary_score)
    }
}

impl Scorer for SimScorer {
    fn score(&self, answer: &str) -> f64 {
        let given = parse_answer(answer);
        let total: f64 = self.fields.iter().map(|f| f.weight).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let correct: f64 = self
            .fields
            .iter()
            .filter(|f| given.get(&f.key).is_some_and(|v| *v == f.value))
            .map(|f| f.weight)
            .sum();
        if self.binary {
            if correct == total {
                1.0
            } else {
                0.0
            }
        } else {
            correct / total
        }
    }
}
