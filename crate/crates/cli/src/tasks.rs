use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sharegate_core::runtime::{normalize_answer, Scorer};
use sharegate_core::sim::{generate_task, SimParams, SimTask};
use sharegate_core::TaskSpec;

use crate::SimTaskArgs;

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    if out.is_empty() {
        bail!("{} contains no tasks", path.display());
    }
    Ok(out)
}

pub fn sim_tasks(args: &SimTaskArgs) -> Result<Vec<SimTask>> {
    if let Some(path) = &args.tasks {
        return read_lines(path);
    }
    let mut params = SimParams::new(args.depth, args.width, args.overlap, args.distractors);
    params.step_cap = args.step_cap;
    (args.seed_start..args.seed_start + args.count)
        .map(|s| generate_task(s, &params).map_err(Into::into))
        .collect()
}

pub fn write_sim_tasks(path: &Path, tasks: &[SimTask]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in tasks {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// A task for the LLM backend with an optional reference answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmTask {
    #[serde(flatten)]
    pub spec: TaskSpec,
    #[serde(default)]
    pub reference: Option<String>,
}

pub fn llm_tasks(path: &Path) -> Result<Vec<LlmTask>> {
    read_lines(path)
}

/// 1 when the answer equals the reference after whitespace and case normalization.
pub struct ExactMatch<'a>(pub &'a str);

impl Scorer for ExactMatch<'_> {
    fn score(&self, answer: &str) -> f64 {
        if normalize_answer(answer) == normalize_answer(self.0) {
            1.0
        } else {
            0.0
        }
    }
}
