//! Command-line entry points.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use opinion_core::agents::{build_agent, PromptFraming, PromptTemplates};
use opinion_core::driver::{run_llm_batch, BatchOptions, BatchOutcome, DriveOptions};
use opinion_core::engine::{AiBackendConfig, ScriptedPolicy};
use opinion_core::llm::ChatTransport;
use opinion_core::metrics::{series_for_run_with, NciOptions};
use opinion_core::stance::{Annotator, Lexicon, LexiconAnnotator, LlmAnnotator};
use opinion_core::statements::{load_pool, seed_layout};
use opinion_core::{Framing, GridTopology, Imbalance, MetricsSeries, RunConfig, SystemClock, Transcript};

use crate::export::{format_summary, write_series_csv, write_summary_csv, SummaryRow};
use crate::llm_http::HttpTransport;
use crate::plot::plot_series;
use crate::service::{Service, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "hybrid-opinion", version, about = "Opinion-dynamics experiments on grid networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Run a batch of AI-only experiments.
    RunAi(RunAiArgs),
    /// Recompute the metric series of a transcript.
    Metrics(MetricsArgs),
    /// Draw metric series as an SVG chart.
    Plot(PlotArgs),
    /// Check a statement pool file.
    ValidatePool(ValidatePoolArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LlmArgs {
    /// Chat-completions API base URL.
    #[arg(long, env = "OPINION_LLM_ENDPOINT")]
    pub llm_endpoint: Option<String>,
    #[arg(long, env = "OPINION_LLM_API_KEY", hide_env_values = true)]
    pub llm_api_key: Option<String>,
    #[arg(long, env = "OPINION_LLM_MODEL", default_value = "gpt-4o-mini")]
    pub llm_model: String,
    #[arg(long, default_value_t = 120)]
    pub llm_timeout_secs: u64,
}

impl LlmArgs {
    fn transport(&self, endpoint: Option<&str>) -> Option<Arc<dyn ChatTransport>> {
        let endpoint = endpoint.or(self.llm_endpoint.as_deref())?;
        Some(Arc::new(HttpTransport::new(
            endpoint,
            self.llm_api_key.clone(),
            Duration::from_secs(self.llm_timeout_secs),
        )))
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "OPINION_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "OPINION_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Statement pool file; the bundled pool by default.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub ai_workers: usize,
    #[arg(long, default_value_t = 5)]
    pub sweep_secs: u64,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Scripted,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnnotatorKind {
    Lexicon,
    Llm,
}

#[derive(Debug, Args)]
pub struct RunAiArgs {
    #[arg(long, default_value = "consensus")]
    pub framing: Framing,
    #[arg(long, default_value_t = 21)]
    pub runs: usize,
    /// Seed of the first run; run `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "scripted")]
    pub backend: Backend,
    #[arg(long, default_value = "majority-copy")]
    pub policy: ScriptedPolicy,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 8)]
    pub iterations: u32,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Runs executing at once.
    #[arg(long, default_value_t = 2)]
    pub parallelism: usize,
    /// Worker threads per run.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lexicon")]
    pub annotator: AnnotatorKind,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub transcript: PathBuf,
    /// Output path; `.csv` writes CSV, anything else JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "lexicon")]
    pub annotator: AnnotatorKind,
    /// Include each node's own previous opinion in its neighbor mean.
    #[arg(long)]
    pub include_prior_self: bool,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Metric series JSON files (repeatable).
    #[arg(long, required = true)]
    pub series: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidatePoolArgs {
    pub path: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    #[arg(long, default_value_t = 5)]
    pub cols: usize,
    #[arg(long, default_value_t = 14)]
    pub positive: usize,
    #[arg(long, default_value_t = 11)]
    pub negative: usize,
    /// Seeds to try laying out.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::RunAi(a) => run_ai(a),
        Command::Metrics(a) => metrics(a),
        Command::Plot(a) => plot(a),
        Command::ValidatePool(a) => validate_pool(a).map(|summary| println!("{summary}")),
    }
}

fn read_pool(path: Option<&Path>) -> anyhow::Result<opinion_core::StatementPool> {
    match path {
        None => Ok(opinion_core::StatementPool::default_pool()),
        Some(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            load_pool(f).with_context(|| format!("loading {}", p.display()))
        }
    }
}

fn templates(dir: Option<&Path>) -> anyhow::Result<Arc<PromptTemplates>> {
    Ok(Arc::new(match dir {
        Some(d) => PromptTemplates::from_dir(d).with_context(|| format!("reading {}", d.display()))?,
        None => PromptTemplates::bundled(),
    }))
}

fn annotator(kind: AnnotatorKind, llm: &LlmArgs) -> anyhow::Result<Arc<dyn Annotator>> {
    Ok(match kind {
        AnnotatorKind::Lexicon => Arc::new(LexiconAnnotator::new(Lexicon::default_red_meat())),
        AnnotatorKind::Llm => {
            let Some(t) = llm.transport(None) else {
                bail!("--annotator llm needs OPINION_LLM_ENDPOINT");
            };
            Arc::new(LlmAnnotator::new(t, llm.llm_model.clone()))
        }
    })
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let mut config = ServiceConfig::new(&a.data_dir);
    config.pool = read_pool(a.pool.as_deref())?;
    config.templates = templates(a.prompts.as_deref())?;
    config.ai_workers = a.ai_workers;
    let llm = a.llm.clone();
    config.transports = Arc::new(move |backend| match backend {
        AiBackendConfig::Llm { endpoint, .. } => llm.transport(endpoint.as_deref()),
        AiBackendConfig::Scripted { .. } => None,
    });
    let service = Service::open(config, Arc::new(SystemClock)).map_err(|e| anyhow::anyhow!(e))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::serve(service.clone(), a.listen, Duration::from_secs(a.sweep_secs)))?;
    service.shutdown();
    Ok(())
}

/// Runs the batch and writes `<out>/<run_id>.json`, `<out>/<run_id>.metrics.json`
/// and `<out>/summary.csv`. Returns the summary rows.
pub fn run_ai_batch(a: &RunAiArgs) -> anyhow::Result<Vec<SummaryRow>> {
    let pool = read_pool(a.pool.as_deref())?;
    let templates = templates(a.prompts.as_deref())?;
    let lexicon = Arc::new(Lexicon::default_red_meat());
    let backend = match a.backend {
        Backend::Scripted => AiBackendConfig::Scripted { policy: a.policy },
        Backend::Llm => AiBackendConfig::Llm {
            model: a.llm.llm_model.clone(),
            temperature: a.temperature,
            endpoint: a.llm.llm_endpoint.clone(),
        },
    };
    let transport = match a.backend {
        Backend::Llm => Some(
            a.llm
                .transport(None)
                .context("--backend llm needs OPINION_LLM_ENDPOINT")?,
        ),
        Backend::Scripted => None,
    };
    let configs: Vec<RunConfig> = (0..a.runs as u64)
        .map(|i| RunConfig {
            framing: a.framing,
            iterations: a.iterations,
            ..RunConfig::ai_only(backend.clone(), a.seed + i)
        })
        .collect();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let annotator = annotator(a.annotator, &a.llm)?;
    let options = BatchOptions {
        parallelism: a.parallelism,
        drive: DriveOptions {
            workers: a.workers,
            ..DriveOptions::default()
        },
    };
    let out = a.out.clone();
    let persist = move |o: &BatchOutcome| {
        if let Ok(t) = &o.result {
            let path = out.join(format!("{}.json", o.run_id));
            if let Err(e) = std::fs::write(&path, t.to_json()) {
                tracing::error!(path = %path.display(), error = %e, "writing transcript failed");
            }
        }
    };
    let outcomes = run_llm_batch(
        &configs,
        &pool,
        |c| {
            build_agent(
                &c.ai_backend,
                PromptFraming::new(c.framing, templates.clone()),
                transport.clone(),
                lexicon.clone(),
                c.min_words,
            )
        },
        &options,
        Arc::new(SystemClock),
        &persist,
    );
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let framing = o.framing.to_string();
        match o.result {
            Ok(t) => {
                let series = series_for_run_with(&t, annotator.as_ref(), NciOptions::default())
                    .with_context(|| format!("annotating {}", o.run_id))?;
                std::fs::write(
                    a.out.join(format!("{}.metrics.json", o.run_id)),
                    serde_json::to_string_pretty(&series)?,
                )?;
                rows.push(SummaryRow::from_series(&o.run_id, &framing, o.rng_seed, &series));
            }
            Err(e) => rows.push(SummaryRow::failed(&o.run_id, &framing, o.rng_seed, e.to_string())),
        }
    }
    let f = std::fs::File::create(a.out.join("summary.csv"))?;
    write_summary_csv(f, &rows)?;
    Ok(rows)
}

fn run_ai(a: RunAiArgs) -> anyhow::Result<()> {
    let rows = run_ai_batch(&a)?;
    print!("{}", format_summary(&rows));
    let failed = rows.iter().filter(|r| r.status != "complete").count();
    if failed > 0 {
        bail!("{failed} of {} runs failed", rows.len());
    }
    Ok(())
}

pub fn compute_metrics(a: &MetricsArgs) -> anyhow::Result<MetricsSeries> {
    let text = std::fs::read_to_string(&a.transcript)
        .with_context(|| format!("reading {}", a.transcript.display()))?;
    let t = Transcript::from_json(&text).with_context(|| format!("parsing {}", a.transcript.display()))?;
    let annotator = annotator(a.annotator, &a.llm)?;
    let series = series_for_run_with(
        &t,
        annotator.as_ref(),
        NciOptions {
            include_prior_self: a.include_prior_self,
        },
    )?;
    if a.out.extension().is_some_and(|e| e == "csv") {
        write_series_csv(std::fs::File::create(&a.out)?, std::slice::from_ref(&series))?;
    } else {
        std::fs::write(&a.out, serde_json::to_string_pretty(&series)?)?;
    }
    Ok(series)
}

fn metrics(a: MetricsArgs) -> anyhow::Result<()> {
    let s = compute_metrics(&a)?;
    println!("{} records written to {}", s.records.len(), a.out.display());
    Ok(())
}

fn plot(a: PlotArgs) -> anyhow::Result<()> {
    let mut series = Vec::new();
    for p in &a.series {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        series.push(
            serde_json::from_str::<MetricsSeries>(&text)
                .with_context(|| format!("parsing {}", p.display()))?,
        );
    }
    plot_series(&series, &a.out).map_err(|e| anyhow::anyhow!("plotting: {e}"))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn validate_pool(a: ValidatePoolArgs) -> anyhow::Result<String> {
    let pool = read_pool(Some(&a.path))?;
    let topo = GridTopology::new(a.rows, a.cols)?;
    let imbalance = Imbalance {
        positive: a.positive,
        negative: a.negative,
    };
    for seed in 0..a.seeds {
        seed_layout(&pool, topo, imbalance, seed)
            .with_context(|| format!("laying out seed {seed}"))?;
    }
    Ok(format!(
        "ok: {} statements ({} positive, {} negative); {} seeds laid out on {}x{}",
        pool.statements.len(),
        pool.statements.iter().filter(|s| s.stance == opinion_core::SeedStance::Positive).count(),
        pool.statements.iter().filter(|s| s.stance == opinion_core::SeedStance::Negative).count(),
        a.seeds,
        a.rows,
        a.cols
    ))
}
