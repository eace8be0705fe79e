// SPDX-License-Identifier: Apache-2.0

//! Command implementations behind the `tesserflow` binary.

pub mod complete;
pub mod output;
mod repl;

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tesserflow::demo::{self, DemoConfig, Selection, QUERIES};
use tesserflow::engine::{Catalog, EngineError, ExecMode, Session, StatementResult};
use tesserflow::fdb::{build_fdb, BuildOptions, FdbDataset, FdbError, MANIFEST_FILE};
use tesserflow::model::{load_model, register_model_extension, ModelStore};
use tesserflow::schema::{parse_schema, validate_json};
use tesserflow::wfl::{Registry, WflError};

pub use output::Format;

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SYNTAX: i32 = 3;
pub const EXIT_DEADLINE: i32 = 4;
pub const EXIT_SHARD_FAILURE: i32 = 5;

pub const DATA_ROOT_ENV: &str = "TESSERFLOW_DATA_ROOT";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    fn new(code: i32, msg: impl Into<String>) -> Self {
        CliError { code, msg: msg.into() }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::Wfl(WflError::Syntax { .. }) => EXIT_SYNTAX,
            EngineError::Deadline { .. } => EXIT_DEADLINE,
            EngineError::ShardFailure { .. } => EXIT_SHARD_FAILURE,
            EngineError::UnknownDataset(_) => EXIT_VALIDATION,
            _ => EXIT_ERROR,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_ERROR, format!("io error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "tesserflow", version, about = "Embeddable spatiotemporal query engine")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Directory holding one subdirectory per dataset (TESSERFLOW_DATA_ROOT takes precedence).
    #[arg(long, global = true, default_value = "tesserflow-data")]
    pub data_root: PathBuf,
    #[arg(long, global = true, default_value_t = 4)]
    pub workers: usize,
    #[arg(long, global = true)]
    pub deadline_ms: Option<u64>,
    /// Seed used by --sample.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub output: Format,
    /// Model file to register under `model.*`; repeatable.
    #[arg(long = "model", global = true)]
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Adhoc,
    Batch,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset from a schema and a JSON Lines file.
    Ingest {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 4)]
        shards: usize,
        #[arg(long)]
        shard_key: Option<String>,
    },
    /// Run a program given as a file or as text.
    Query {
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value_t = Mode::Adhoc)]
        mode: Mode,
        /// Sample fraction applied to the last pipeline's source.
        #[arg(long)]
        sample: Option<f64>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Dataset used by `find`/`filter` pipelines without a `flow(...)` source.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Interactive session; statements end with `;;`.
    Repl,
    /// Manifest, shard statistics and posting totals of a dataset.
    Inspect {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        shard: Option<usize>,
    },
    /// Generate the traffic datasets and run the selection comparison.
    Demo {
        /// Number of observation documents.
        #[arg(long, default_value_t = 1_000_000)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        shards: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Where to write the per-road coefficient of variation map.
        #[arg(long)]
        geojson: Option<PathBuf>,
    },
}

/// Resolved global settings.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub data_root: PathBuf,
    pub workers: usize,
    pub deadline: Option<Duration>,
    pub seed: u64,
    pub output: Format,
    pub models: Vec<PathBuf>,
}

impl CliConfig {
    pub fn resolve(g: &GlobalArgs) -> CliResult<CliConfig> {
        let data_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| g.data_root.clone());
        if g.workers == 0 {
            return Err(CliError::new(EXIT_VALIDATION, "--workers must be at least 1"));
        }
        std::fs::create_dir_all(&data_root)?;
        Ok(CliConfig {
            data_root,
            workers: g.workers,
            deadline: g.deadline_ms.map(Duration::from_millis),
            seed: g.seed,
            output: g.output,
            models: g.models.clone(),
        })
    }

    fn session(&self) -> CliResult<Session> {
        let reg = Arc::new(Registry::new());
        if !self.models.is_empty() {
            let store = Arc::new(ModelStore::new());
            for p in &self.models {
                store.insert(load_model(p).map_err(|e| CliError::new(EXIT_VALIDATION, e.to_string()))?);
            }
            register_model_extension(&reg, store).map_err(EngineError::from)?;
        }
        let mut s = Session::with_registry(Catalog::load_root(&self.data_root)?, reg);
        s.defaults.workers = self.workers;
        s.defaults.deadline = self.deadline;
        Ok(s)
    }
}

/// Runs one command, writing results to `out` and diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> CliResult<()> {
    let cfg = CliConfig::resolve(&cli.global)?;
    match cli.cmd {
        Command::Ingest { schema, input, dataset, shards, shard_key } => {
            cmd_ingest(&cfg, &schema, &input, &dataset, shards, shard_key.as_deref(), out)
        }
        Command::Query { query, mode, sample, checkpoint_dir, dataset } => {
            cmd_query(&cfg, &query, mode, sample, checkpoint_dir, dataset, out, err)
        }
        Command::Repl => repl::run(&cfg, cfg.session()?),
        Command::Inspect { dataset, shard } => cmd_inspect(&cfg, &dataset, shard, out),
        Command::Demo { size, seed, shards, repeats, geojson } => {
            let c = DemoConfig { observations: size, seed, shards, workers: cfg.workers, ..DemoConfig::default() };
            cmd_demo(&cfg, &c, repeats, geojson, out, err)
        }
    }
}

pub fn cmd_ingest(
    cfg: &CliConfig,
    schema: &Path,
    input: &Path,
    name: &str,
    shards: usize,
    shard_key: Option<&str>,
    out: &mut dyn std::io::Write,
) -> CliResult<()> {
    let text = std::fs::read_to_string(schema)?;
    let schema = parse_schema(&text).map_err(|e| CliError::new(EXIT_VALIDATION, format!("{}: {e}", "schema")))?;
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(input)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| CliError::new(EXIT_VALIDATION, format!("line {}: {m}", i + 1));
        let json: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        records.push(validate_json(&schema, &json).map_err(|e| bad(e.to_string()))?);
        lines.push(i + 1);
    }
    let mut opts = BuildOptions::new(name, shards.max(1));
    if let Some(k) = shard_key {
        opts = opts.shard_key(k);
    }
    let dir = cfg.data_root.join(name);
    let n = records.len();
    build_fdb(&schema, records, &opts, &dir).map_err(|e| match e {
        FdbError::Validation { index, source } => {
            CliError::new(EXIT_VALIDATION, format!("line {}: {source}", lines[index]))
        }
        FdbError::VirtualField { index, field, source } => {
            CliError::new(EXIT_VALIDATION, format!("line {}: virtual field '{field}': {source}", lines[index]))
        }
        e => CliError::from(EngineError::from(e)),
    })?;
    writeln!(out, "ingested {n} records into '{name}' at {}", dir.display())?;
    let ds = FdbDataset::open(&dir).map_err(EngineError::from)?;
    out.write_all(shard_report(&ds, None)?.as_bytes())?;
    Ok(())
}

fn shard_report(ds: &FdbDataset, only: Option<usize>) -> CliResult<String> {
    let stats = ds.shard_stats().map_err(EngineError::from)?;
    let mut s = String::new();
    for (i, st) in stats.iter().enumerate().filter(|(i, _)| only.is_none_or(|o| o == *i)) {
        let postings: u64 = st.postings.iter().sum();
        let _ = writeln!(
            s,
            "shard {i} docs {} postings {postings} meta_bytes {} posting_bytes {} data_bytes {}",
            st.doc_count, st.meta_bytes, st.posting_bytes, st.data_bytes
        );
    }
    if only.is_none() {
        for (index, n) in ds.posting_totals().map_err(EngineError::from)? {
            let _ = writeln!(s, "postings {index} {n}");
        }
    }
    Ok(s)
}

/// Appends `.sample(f, seed)` to the last statement of `text`.
fn with_sample(text: &str, fraction: f64, seed: u64) -> String {
    let body = text.trim_end().trim_end_matches(';').trim_end();
    format!("{body}.sample({fraction}, {seed})")
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_query(
    cfg: &CliConfig,
    query: &str,
    mode: Mode,
    sample: Option<f64>,
    checkpoint_dir: Option<PathBuf>,
    dataset: Option<String>,
    out: &mut dyn std::io::Write,
    err: &mut dyn std::io::Write,
) -> CliResult<()> {
    let mut text = match Path::new(query).is_file() {
        true => std::fs::read_to_string(query)?,
        false => query.to_string(),
    };
    if let Some(f) = sample {
        text = with_sample(&text, f, cfg.seed);
    }
    let mut session = cfg.session()?;
    session.defaults.default_dataset = dataset;
    if mode == Mode::Batch {
        session.defaults.mode = ExecMode::Batch;
        session.defaults.checkpoint_dir = Some(checkpoint_dir.unwrap_or_else(|| cfg.data_root.join(".checkpoints")));
    }
    for r in session.execute(&text)? {
        report(&r, cfg.output, out, err)?;
    }
    Ok(())
}

/// Prints one statement result: rows to `out`, everything else to `err`.
pub(crate) fn report(
    r: &StatementResult,
    fmt: Format,
    out: &mut dyn std::io::Write,
    err: &mut dyn std::io::Write,
) -> CliResult<()> {
    match r {
        StatementResult::Rows(q) => {
            out.write_all(output::render(&q.records, fmt).as_bytes())?;
            err.write_all(q.stats.render().as_bytes())?;
        }
        StatementResult::Bound { name, rows: Some(n) } => writeln!(err, "{name}: {n} rows")?,
        StatementResult::Bound { name, rows: None } => writeln!(err, "{name} bound")?,
        StatementResult::Value(v) => writeln!(out, "{v}")?,
        StatementResult::Saved { format, path, rows } => {
            writeln!(err, "saved {rows} rows as {format:?} to {}", path.display())?
        }
    }
    Ok(())
}

pub fn cmd_inspect(cfg: &CliConfig, name: &str, shard: Option<usize>, out: &mut dyn std::io::Write) -> CliResult<()> {
    let dir = cfg.data_root.join(name);
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(CliError::new(EXIT_VALIDATION, format!("unknown dataset '{name}'")));
    }
    let ds = FdbDataset::open(&dir).map_err(EngineError::from)?;
    let m = ds.manifest();
    if let Some(i) = shard {
        if i >= m.num_shards {
            return Err(CliError::new(EXIT_VALIDATION, format!("shard {i} does not exist ({} shards)", m.num_shards)));
        }
    } else {
        out.write_all(m.to_text().as_bytes())?;
    }
    out.write_all(shard_report(&ds, shard)?.as_bytes())?;
    Ok(())
}

pub fn cmd_demo(
    cfg: &CliConfig,
    c: &DemoConfig,
    repeats: usize,
    geojson: Option<PathBuf>,
    out: &mut dyn std::io::Write,
    err: &mut dyn std::io::Write,
) -> CliResult<()> {
    let dir = cfg.data_root.join("demo");
    writeln!(err, "generating {} observations under {}", c.observations, dir.display())?;
    demo::build_demo(&dir, c)?;
    let mut s = demo::demo_session(&dir, cfg.workers)?;
    let rows = demo::run_table(&mut s, c.seed, repeats)?;
    out.write_all(demo::render_table(&rows).as_bytes())?;

    let q = &QUERIES[3];
    let full = demo::mean_of(&s.query(&demo::estimate_query(q, Selection::MultiIndex, c.seed))?.records);
    for sel in [Selection::Sample10, Selection::Sample1] {
        let est = demo::mean_of(&s.query(&demo::estimate_query(q, sel, c.seed))?.records);
        if let (Some(f), Some(e)) = (full, est) {
            writeln!(out, "{} mean speed {}: {e:.4} vs {f:.4} full ({:+.2}%)", q.name, sel.label(), (e - f) / f * 100.0)?;
        }
    }

    let fig = demo::run_fig1(&mut s)?;
    let want = demo::fig1_brute_force(c);
    writeln!(
        out,
        "travel-time error over {} requests: mean {:.3} s, sd {:.3} s (direct computation: mean {:.3} s, sd {:.3} s)",
        fig.n, fig.mean, fig.sd, want.mean, want.sd
    )?;

    let cv = s.query(&demo::cv_query(q, Selection::MultiIndex, c.seed))?;
    let map = demo::cv_geojson(&cv.records, &demo::gen_roads(c));
    let path = geojson.unwrap_or_else(|| dir.join("cv.geojson"));
    std::fs::write(&path, format!("{map}\n"))?;
    writeln!(out, "wrote {} road features to {}", cv.records.len(), path.display())?;
    Ok(())
}
