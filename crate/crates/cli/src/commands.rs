use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sharegate_core::controller::{
    load_checkpoint, save_checkpoint, AlwaysNo, AlwaysYes, LearnedGate, RelevanceRule,
};
use sharegate_core::endpoint::{
    ChatClient, EndpointConfig, HttpEmbedder, LlmAggregator, LlmTeamFactory, PromptTemplate,
};
use sharegate_core::metrics::{
    compute_from_traces, compute_metrics, summary_table, write_report, VariantRow,
};
use sharegate_core::runtime::{
    run_episode, write_trace_events, EpisodeOptions, MemorySetup, SchedulerMode,
};
use sharegate_core::sim::{run_matrix, Variant};
use sharegate_core::training::{train as train_policy, TrainConfig};
use sharegate_core::{
    AdmissionGate, AdmissionPolicy, DecisionMode, EmbeddingProvider, EpisodeTrace, HashingEmbedder,
    PolicyShape, RunMetrics,
};

use crate::tasks::{llm_tasks, sim_tasks, write_sim_tasks, ExactMatch};
use crate::{
    BackendArg, EvalArgs, ExecArgs, GenerateArgs, ReportArgs, RunArgs, TrainArgs, VariantArg,
};

const EMBED_MAX_CHARS: usize = 8_000;

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let tasks = sim_tasks(&a.sim)?;
    write_sim_tasks(&a.out, &tasks)?;
    println!("wrote {} tasks to {}", tasks.len(), a.out.display());
    Ok(())
}

fn label(v: VariantArg) -> &'static str {
    match v {
        VariantArg::NoMemory => "no-memory",
        VariantArg::AlwaysNo => "always-no",
        VariantArg::AddAll => "add-all",
        VariantArg::LlmProxy => "llm-proxy",
        VariantArg::Learned => "learned",
    }
}

fn load_policy(exec: &ExecArgs, provider: &dyn EmbeddingProvider) -> Result<AdmissionPolicy> {
    let path = exec
        .checkpoint
        .as_deref()
        .context("the learned variant needs --checkpoint")?;
    let (policy, ck) = load_checkpoint(path, Some(provider.dim()))
        .with_context(|| format!("loading {}", path.display()))?;
    if ck.provider_id != provider.id() {
        return Err(sharegate_core::Error::config(format!(
            "checkpoint was trained with embeddings {}, run uses {}",
            ck.provider_id,
            provider.id()
        ))
        .into());
    }
    Ok(policy)
}

struct VariantRun {
    label: String,
    traces: Vec<EpisodeTrace>,
    metrics: RunMetrics,
}

/// Runs `variants` with the backend chosen in `exec`; also returns the
/// endpoint call log when one was used.
fn execute(
    exec: &ExecArgs,
    variants: &[VariantArg],
) -> Result<(Vec<VariantRun>, Option<ChatClient>)> {
    if exec.seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let client = match (exec.backend, &exec.embedding_model) {
        (BackendArg::Llm, _) | (_, Some(_)) => Some(ChatClient::new(EndpointConfig::from_env())?),
        _ => None,
    };
    let hashing = HashingEmbedder::new(exec.dim);
    let http;
    let provider: &dyn EmbeddingProvider = match (&exec.embedding_model, &client) {
        (Some(model), Some(c)) => {
            http = HttpEmbedder {
                client: c,
                model: model.clone(),
                dim: exec.dim,
                max_chars: EMBED_MAX_CHARS,
            };
            &http
        }
        _ => &hashing,
    };
    let policy = if variants.contains(&VariantArg::Learned) {
        Some(load_policy(exec, provider)?)
    } else {
        None
    };

    let runs = match exec.backend {
        BackendArg::Sim => {
            let tasks = sim_tasks(&exec.sim)?;
            let vs: Vec<Variant<'_>> = variants
                .iter()
                .map(|v| match v {
                    VariantArg::NoMemory => Variant::NoMemory,
                    VariantArg::AlwaysNo => Variant::AlwaysNo,
                    VariantArg::AddAll => Variant::AddAll,
                    VariantArg::LlmProxy => Variant::LlmProxy,
                    VariantArg::Learned => Variant::Learned(policy.as_ref().expect("loaded above")),
                })
                .collect();
            run_matrix(&tasks, &vs, exec.k, &exec.seeds, provider)?
                .into_iter()
                .map(|r| VariantRun {
                    label: r.label,
                    traces: r.traces,
                    metrics: r.metrics,
                })
                .collect()
        }
        BackendArg::Llm => {
            let path = exec
                .llm_tasks
                .as_deref()
                .context("the llm backend needs --llm-tasks")?;
            let tasks = llm_tasks(path)?;
            let c = client.as_ref().expect("created for the llm backend");
            let template = PromptTemplate::default();
            let mut runs = Vec::new();
            for &v in variants {
                let learned;
                let gate: Option<&dyn AdmissionGate> = match v {
                    VariantArg::NoMemory => None,
                    VariantArg::AlwaysNo => Some(&AlwaysNo),
                    VariantArg::AddAll => Some(&AlwaysYes),
                    VariantArg::LlmProxy => Some(&RelevanceRule),
                    VariantArg::Learned => {
                        learned = LearnedGate {
                            policy: policy.as_ref().expect("loaded above"),
                            mode: DecisionMode::Greedy,
                        };
                        Some(&learned)
                    }
                };
                let mut traces = Vec::new();
                for task in &tasks {
                    for &seed in &exec.seeds {
                        let mut trace = run_episode(
                            &task.spec,
                            &LlmTeamFactory {
                                client: c,
                                template: &template,
                            },
                            gate.map(|gate| MemorySetup { gate, provider }),
                            &LlmAggregator {
                                client: c,
                                template: &template,
                            },
                            EpisodeOptions {
                                k: exec.k,
                                seed,
                                scheduler: SchedulerMode::Live,
                            },
                        )?;
                        if let Some(reference) = &task.reference {
                            trace.score_with(&ExactMatch(reference));
                        }
                        tracing::info!(task = %task.spec.task_id, seed, variant = label(v), "episode finished");
                        traces.push(trace);
                    }
                }
                runs.push(VariantRun {
                    label: label(v).to_string(),
                    metrics: compute_from_traces(&traces)?,
                    traces,
                });
            }
            runs
        }
    };
    Ok((runs, client))
}

fn write_run(dir: &Path, run: &VariantRun, include_content: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("traces.jsonl"))?);
    for t in &run.traces {
        write_trace_events(&mut f, &t.to_events(include_content))?;
    }
    f.flush()?;
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&run.metrics)?,
    )?;
    Ok(())
}

fn write_calls(dir: &Path, client: Option<&ChatClient>) -> Result<()> {
    let Some(c) = client else { return Ok(()) };
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("calls.jsonl"))?);
    for rec in c.call_log() {
        serde_json::to_writer(&mut f, &rec)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn rows(runs: &[VariantRun]) -> Vec<VariantRow> {
    runs.iter()
        .map(|r| VariantRow {
            label: r.label.clone(),
            metrics: r.metrics.clone(),
        })
        .collect()
}

pub fn run(a: &RunArgs) -> Result<()> {
    let (runs, client) = execute(&a.exec, &[a.variant])?;
    write_run(&a.exec.out, &runs[0], !a.exec.no_content)?;
    write_calls(&a.exec.out, client.as_ref())?;
    print!("{}", summary_table(&rows(&runs)));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.variants.is_empty() {
        bail!("no variants given");
    }
    let (runs, client) = execute(&a.exec, &a.variants)?;
    for r in &runs {
        write_run(&a.exec.out.join(&r.label), r, !a.exec.no_content)?;
    }
    write_calls(&a.exec.out, client.as_ref())?;
    let rows = rows(&runs);
    write_report(&a.exec.out.join("report"), &rows)?;
    print!("{}", summary_table(&rows));
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(n) = a.epochs {
        config.epochs = n;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    let tasks = sim_tasks(&a.sim)?;
    let provider = HashingEmbedder::new(a.dim);
    let policy = match &a.init {
        Some(p) => load_checkpoint(p, Some(a.dim))?.0,
        None => AdmissionPolicy::new(
            PolicyShape {
                d_e: a.dim,
                d_c: a.d_c,
            },
            &mut ChaCha8Rng::seed_from_u64(a.init_seed),
        ),
    };
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("config.toml"), config.to_toml_string()?)?;
    let outcome = train_policy(
        policy,
        &tasks,
        &config,
        &provider,
        Some(&a.out.join("checkpoints")),
    )?;
    let mut log = std::fs::File::create(a.out.join("training.jsonl"))?;
    outcome.report.write_jsonl(&mut log)?;
    if let Some(reason) = &outcome.report.aborted {
        return Err(sharegate_core::Error::Numeric(format!(
            "training diverged ({reason}); last finite parameters in {}",
            a.out.join("checkpoints").display()
        ))
        .into());
    }
    let final_path = a.out.join("policy.json");
    save_checkpoint(
        &final_path,
        &outcome.policy,
        &provider.id(),
        Some(config.epochs),
    )?;
    for e in &outcome.report.epochs {
        println!(
            "epoch {}: reward {:.4}, admission {:.3}, loss {:.5}",
            e.epoch, e.mean_reward, e.admission_rate, e.loss_last_pass
        );
    }
    println!("policy written to {}", final_path.display());
    Ok(())
}

fn trace_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "jsonl")
                && p.file_name().is_some_and(|n| n != "calls.jsonl")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no trace files in {}", input.display());
    }
    Ok(files)
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for input in &a.inputs {
        let files = trace_files(input)?;
        let label = input
            .file_stem()
            .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
        rows.push(VariantRow {
            label,
            metrics: compute_metrics(&files)?,
        });
    }
    let written = write_report(&a.out, &rows)?;
    print!("{}", summary_table(&rows));
    tracing::info!(files = written.len(), "report written");
    Ok(())
}
