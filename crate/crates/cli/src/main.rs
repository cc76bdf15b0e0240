mod error;
mod overrides;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use npudraft::calibration::{calibrate, CalibratedIndex, CalibrationConfig};
use npudraft::engine::{decode, EngineConfig};
use npudraft::harness::{run_experiment, ExperimentConfig, Variant};
use npudraft::lm::read_corpus_jsonl;
use npudraft::retrieval::DraftStore;
use npudraft::scheduler::{
    brute_force_schedule, greedy_schedule, naive_async_plan, reduce_partition, simulate_trace,
    synchronous_plan, ScheduleInstance, SwitchPlan,
};
use npudraft::TableLm;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use error::CliError;
use overrides::parse_assignment;

#[derive(Parser)]
#[command(
    name = "npudraft",
    version,
    about = "Retrieval-drafted speculative decoding and prefill graph scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one prompt with a table model, drafting from context and history.
    Decode(DecodeArgs),
    /// Plan and simulate graph switching for a scheduling instance.
    Schedule(ScheduleArgs),
    /// Run a seeded experiment and write the report.
    Bench(BenchArgs),
    /// Build the scheduling instance for a 2-partition input.
    ReducePartition(ReduceArgs),
}

#[derive(Args)]
struct Overrides {
    /// Config file (JSON). Missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set engine.target_draft_len=16`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, Value)>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Table model JSON.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    lm: Option<PathBuf>,
    /// Corpus JSONL to fit a count model on instead of `--lm`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Model order when fitting from `--corpus`.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Whitespace-separated prompt.
    #[arg(long)]
    prompt: String,
    /// Whitespace-separated context text.
    #[arg(long, conflicts_with = "context_file")]
    context: Option<String>,
    #[arg(long)]
    context_file: Option<PathBuf>,
    /// Earlier responses (JSONL of token arrays) to draft from.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Appends this response to the history file afterwards.
    #[arg(long, requires = "history")]
    save_history: bool,
    /// Per-step trace (JSONL).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Sets `engine.max_new_tokens`.
    #[arg(long)]
    max_new_tokens: Option<usize>,
    /// Sets `engine.target_draft_len`.
    #[arg(long)]
    target_draft_len: Option<usize>,
    /// Sets `engine.reuse` to false.
    #[arg(long)]
    no_reuse: bool,
    /// Sets `calibrate` to false.
    #[arg(long)]
    no_calibration: bool,
    #[command(flatten)]
    overrides: Overrides,
}

/// Config document for `decode`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecodeConfig {
    engine: EngineConfig,
    calibration: CalibrationConfig,
    calibrate: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            engine: EngineConfig::default(),
            calibration: CalibrationConfig::default(),
            calibrate: true,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Greedy,
    Naive,
    Sync,
    Brute,
    All,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Instance JSON: `{chunks, subchunk_factor, blocks: [{load_g2, compute_g1, compute_g2_sub}]}`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Policy::All)]
    policy: Policy,
    /// Event trace CSV of the chosen policy (greedy when `all`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Sets `workload.seed`.
    #[arg(long)]
    seed: u64,
    /// Sets `workload.num_tasks`.
    #[arg(long)]
    tasks: Option<usize>,
    /// Comma-separated variants; sets `variants`.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    /// Workload spec JSON, merged over the `workload` section.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Cost model JSON, merged over the `cost` section.
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Report JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-task CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave the report timestamp out.
    #[arg(long)]
    no_timestamp: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReduceArgs {
    /// Positive integers, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<u64>,
    /// Also decide feasibility by exact search.
    #[arg(long)]
    solve: bool,
    /// Writes the instance JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_text(key: &str, path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        key: key.to_string(),
        path: path.display().to_string(),
        source,
    })
}

fn read_json(key: &str, path: &Path) -> Result<Value, CliError> {
    serde_json::from_str(&read_text(key, path)?).map_err(|e| CliError::Config {
        key: key.to_string(),
        msg: format!("{}: {e}", path.display()),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn config_file(o: &Overrides) -> Result<Option<Value>, CliError> {
    o.config
        .as_deref()
        .map(|p| read_json("--config", p))
        .transpose()
}

fn run_decode(a: DecodeArgs) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(n) = a.max_new_tokens {
        extra.push(("engine.max_new_tokens".into(), json!(n)));
    }
    if let Some(n) = a.target_draft_len {
        extra.push(("engine.target_draft_len".into(), json!(n)));
    }
    if a.no_reuse {
        extra.push(("engine.reuse".into(), json!(false)));
    }
    if a.no_calibration {
        extra.push(("calibrate".into(), json!(false)));
    }
    let doc = overrides::base::<DecodeConfig>(config_file(&a.overrides)?)?;
    let all: Vec<_> = a.overrides.set.iter().cloned().chain(extra).collect();
    let cfg: DecodeConfig = overrides::finish(doc, &all)?;

    let lm = match (&a.lm, &a.corpus) {
        (Some(p), _) => TableLm::from_json_str(&read_text("--lm", p)?)?,
        (None, Some(p)) => {
            let docs = read_corpus_jsonl(BufReader::new(File::open(p).map_err(|source| {
                CliError::File {
                    key: "--corpus".into(),
                    path: p.display().to_string(),
                    source,
                }
            })?))?;
            TableLm::from_corpus(docs, a.order)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --lm or --corpus is required".into(),
            ))
        }
    };
    let vocab = lm.vocab().clone();
    let context_text = match (&a.context, &a.context_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => read_text("--context-file", p)?,
        (None, None) => String::new(),
    };
    let prompt = vocab.encode(&a.prompt)?;
    let mut text = vocab.encode(&context_text)?;
    text.extend_from_slice(&prompt);

    let mut store = DraftStore::new(&text);
    if let Some(p) = &a.history {
        if p.exists() {
            let f = File::open(p)?;
            store.load_history(BufReader::new(f), &vocab)?;
        }
    }
    if cfg.calibrate {
        let logits = lm.prefill(&text)?;
        store.set_calibrated(CalibratedIndex::from_tree(&calibrate(
            &text,
            &logits,
            &cfg.calibration,
        )?));
    }
    let out = decode(&lm, &mut store, &prompt, &cfg.engine)?;

    if let Some(p) = &a.trace {
        let mut w = create(p)?;
        out.write_trace(&mut w)?;
        w.flush()?;
    }
    if a.save_history && !out.tokens.is_empty() {
        let p = a.history.as_ref().expect("clap requires --history");
        let mut f = fs::OpenOptions::new().create(true).append(true).open(p)?;
        let words: Vec<&str> = out
            .tokens
            .iter()
            .map(|&t| vocab.token(t).unwrap_or("<?>"))
            .collect();
        serde_json::to_writer(&mut f, &words)?;
        writeln!(f)?;
    }
    print_json(&json!({
        "output": vocab.decode(&out.tokens),
        "stats": out.stats,
    }))
}

fn run_schedule(a: ScheduleArgs) -> Result<(), CliError> {
    let inst = ScheduleInstance::from_json_str(&read_text("--instance", &a.instance)?)?;
    let policies = match a.policy {
        Policy::All => vec![Policy::Greedy, Policy::Naive, Policy::Sync, Policy::Brute],
        p => vec![p],
    };
    let traced = if a.policy == Policy::All {
        Policy::Greedy
    } else {
        a.policy
    };
    let mut results = Vec::new();
    for p in policies {
        let (name, plan): (&str, SwitchPlan) = match p {
            Policy::Greedy => ("greedy", greedy_schedule(&inst)),
            Policy::Naive => ("naive", naive_async_plan(&inst)),
            Policy::Sync => ("sync", synchronous_plan(&inst)),
            Policy::Brute => match brute_force_schedule(&inst) {
                Ok((plan, _)) => ("brute", plan),
                // Too large for exact search: skip under `all`, fail otherwise.
                Err(e @ npudraft::Error::Size(_)) if a.policy == Policy::All => {
                    results.push(json!({"policy": "brute", "skipped": e.to_string()}));
                    continue;
                }
                Err(e) => return Err(e.into()),
            },
            Policy::All => unreachable!("expanded above"),
        };
        let (report, trace) = simulate_trace(&inst, &plan)?;
        if p == traced {
            if let Some(path) = &a.trace {
                let mut w = create(path)?;
                trace.write_csv(&mut w)?;
                w.flush()?;
            }
        }
        results.push(json!({"policy": name, "plan": plan, "report": report}));
    }
    print_json(&Value::Array(results))
}

fn run_bench(a: BenchArgs) -> Result<(), CliError> {
    // Precedence, lowest first: defaults, --config, section files, --set,
    // then the dedicated flags.
    let mut all = Vec::new();
    if let Some(p) = &a.workload {
        all.push(("workload".to_string(), read_json("--workload", p)?));
    }
    if let Some(p) = &a.cost {
        all.push(("cost".to_string(), read_json("--cost", p)?));
    }
    all.extend(a.overrides.set.iter().cloned());
    all.push(("workload.seed".into(), json!(a.seed)));
    if let Some(n) = a.tasks {
        all.push(("workload.num_tasks".into(), json!(n)));
    }
    if let Some(v) = &a.variants {
        all.push(("variants".into(), serde_json::to_value(v)?));
    }
    let mut doc = overrides::base::<ExperimentConfig>(config_file(&a.overrides)?)?;
    for (k, v) in all {
        overrides::set_path(&mut doc, &k, v)?;
    }
    // Parsed from text so variant names are checked with their position.
    let cfg = ExperimentConfig::from_json_str(&doc.to_string())?;
    let mut report = run_experiment(&cfg)?;
    if !a.no_timestamp {
        report.timestamp =
            Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    if let Some(p) = &a.csv {
        let mut w = create(p)?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    let text = report.to_json();
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    for s in &report.summaries {
        eprintln!(
            "{:<12} acceptance {:>7.3}  ms/token {:>7.2}  draft len {:>6.2}  lossless {}/{}",
            s.variant.name(),
            s.mean_acceptance_ratio,
            s.mean_ms_per_token,
            s.mean_draft_len,
            s.lossless_tasks,
            s.tasks
        );
    }
    Ok(())
}

fn run_reduce(a: ReduceArgs) -> Result<(), CliError> {
    let red = reduce_partition(&a.values)?;
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        writeln!(w, "{}", red.instance.to_json())?;
        w.flush()?;
    }
    let mut v = serde_json::to_value(&red)?;
    if a.solve {
        v["feasible"] = json!(red.feasible()?);
    }
    print_json(&v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Decode(a) => run_decode(a),
        Command::Schedule(a) => run_schedule(a),
        Command::Bench(a) => run_bench(a),
        Command::ReducePartition(a) => run_reduce(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
