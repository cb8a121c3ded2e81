use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lofscan_core::log_model::{parse_log, CommandClass, FilterConfig};
use lofscan_core::pipeline::{
    self, PipelineConfig, ScoringParams, DEFAULT_CHUNK_SIZE, DEFAULT_K, DEFAULT_TOP_N,
    DEFAULT_WINDOW,
};
use lofscan_core::synthgen::{self, GroundTruth, ScenarioConfig};
use lofscan_core::Error;

/// Local Outlier Factor anomaly detection for CPS event logs.
#[derive(Parser)]
#[command(name = "lofscan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a log and write per-chunk reports.
    Run(RunArgs),
    /// Generate a synthetic log with labelled fault injections.
    Synth(SynthArgs),
    /// Check a log against a scenario's baseline rules and its ground truth.
    Validate(ValidateArgs),
    /// Print the built-in scenario as TOML.
    Scenario,
}

#[derive(Args)]
struct RunArgs {
    /// Log CSV: id,timestamp,command,numeric_arg,string_arg
    #[arg(long)]
    input: PathBuf,
    /// Command classes CSV: command,class
    #[arg(long)]
    classes: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Windows reported per chunk.
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    top: usize,
    /// Command class to drop (repeatable). Replaces the default `other`;
    /// pass `none` to keep every class.
    #[arg(long = "exclude-class", value_name = "CLASS")]
    exclude_class: Vec<String>,
    /// Glob over command names to drop (repeatable).
    #[arg(long = "exclude-pattern", value_name = "GLOB")]
    exclude_pattern: Vec<String>,
    /// Skip top windows that share an entry with a higher-ranked one.
    #[arg(long)]
    suppress_overlap: bool,
    /// Also write normalized entry and window vectors.
    #[arg(long)]
    dump_vectors: bool,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario TOML; the built-in scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Also write a classes CSV covering every generated command.
    #[arg(long)]
    classes_out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Synth(args) => cmd_synth(args).map(|()| 0),
        Command::Validate(args) => cmd_validate(args),
        Command::Scenario => cmd_scenario().map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn filter_config(args: &RunArgs) -> Result<FilterConfig, Error> {
    let mut filter = FilterConfig::default();
    if !args.exclude_class.is_empty() {
        let mut classes = BTreeSet::new();
        for name in &args.exclude_class {
            if name.eq_ignore_ascii_case("none") {
                continue;
            }
            let class: CommandClass = name.parse()?;
            classes.insert(class);
        }
        filter.excluded_classes = classes;
    }
    for pattern in &args.exclude_pattern {
        filter = filter.exclude_pattern(pattern)?;
    }
    Ok(filter)
}

fn cmd_run(args: RunArgs) -> Result<u8, Error> {
    let params = ScoringParams {
        chunk_size: args.chunk_size,
        window: args.window,
        k: args.k,
        top_n: args.top,
        suppress_overlap: args.suppress_overlap,
        filter: filter_config(&args)?,
    };
    let config = PipelineConfig {
        input: args.input,
        classes: args.classes,
        out_dir: args.out,
        params,
        lenient: args.lenient,
        dump_vectors: args.dump_vectors,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let summary = pool.install(|| pipeline::run(&config))?;

    for r in &summary.reports {
        match &r.skipped {
            Some(why) => println!("chunk {}: skipped ({why})", r.chunk_index),
            None => {
                let top = r.outliers.first().map(|o| o.lof).unwrap_or(f64::NAN);
                println!(
                    "chunk {}: {} entries, {}-dim windows, top LOF {top}",
                    r.chunk_index, r.entries, r.window_dimension
                );
            }
        }
    }
    for (i, e) in &summary.failures {
        eprintln!("chunk {i} failed: {e}");
    }
    if summary.parse_warnings > 0 {
        eprintln!("{} parse warnings", summary.parse_warnings);
    }
    Ok(summary.exit_code() as u8)
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig, Error> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", p.display())))?;
            ScenarioConfig::from_toml(&text)
        }
        None => Ok(ScenarioConfig::default()),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let mut scenario = load_scenario(args.scenario.as_deref())?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let log = synthgen::generate(&scenario)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    log.write_csv(&mut out)?;
    out.flush()?;
    let mut truth = BufWriter::new(File::create(&args.truth)?);
    log.truth.write_json(&mut truth)?;
    truth.flush()?;
    if let Some(path) = &args.classes_out {
        let mut f = BufWriter::new(File::create(path)?);
        scenario.class_map().write(&mut f)?;
        f.flush()?;
    }
    println!(
        "{} entries, {} labelled ranges",
        log.entries.len(),
        log.truth.ranges().len()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<u8, Error> {
    let scenario = load_scenario(args.scenario.as_deref())?;
    let entries = parse_log(BufReader::new(File::open(&args.log)?))?;
    let truth: GroundTruth = serde_json::from_reader(BufReader::new(File::open(&args.truth)?))?;
    let v = synthgen::validate(&scenario, &entries, &truth);
    for d in &v.diagnostics {
        eprintln!("{d}");
    }
    println!("{}", if v.ok { "valid" } else { "invalid" });
    Ok(if v.ok { 0 } else { 1 })
}

fn cmd_scenario() -> Result<(), Error> {
    let text = ScenarioConfig::default().to_toml()?;
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}
