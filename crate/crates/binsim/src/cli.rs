//! Command-line front end.
//!
//! Every command reads the same JSON [`RunConfig`]. Outputs that depend on
//! the configuration carry its hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use binsim_core::bnn::{self, TrainConfig};
use binsim_core::fitness::{FitnessFn, SurrogateFitness, TrainedFitness};
use binsim_core::ga::{self, Observer, SearchConfig, SearchState, StepReport, StopReason};
use binsim_core::measure::{builtin, builtins, Genome, MeasureExpr, SLOT_INPUTS};
use binsim_core::Dataset;
use clap::{Args, Parser, Subcommand};

use crate::bench::{self, Kernels};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::model_file;
use crate::parallel::Evaluator;
use crate::records::{render_table, HistoryLine, JsonLines, LedgerLine, RecordJson, ResultRow};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const LEDGER_FILE: &str = "evaluations.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const RESULTS_TEXT: &str = "results.txt";
pub const RESULTS_JSONL: &str = "results.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "binsim",
    version,
    about = "Search binary similarity measures for binarized networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the genetic search and write the ranked population.
    Search(SearchArgs),
    /// Train with one measure and with the baseline, then compare.
    Eval(EvalArgs),
    /// Print the formula and operators of a genome.
    Decode(DecodeArgs),
    /// Time the popcount kernels after checking them against a bit loop.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_name = "PATH", conflicts_with = "resume")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64", conflicts_with = "resume")]
    pub seed: Option<u64>,
    /// Continue from a checkpoint; its embedded config is used.
    #[arg(long, value_name = "PATH")]
    pub resume: Option<PathBuf>,
    #[arg(long, value_name = "GENOME", conflicts_with = "resume")]
    pub surrogate_target: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Built-in name (`baseline`, `M1`..`M10`) or genome.
    #[arg(long, value_name = "NAME|GENOME")]
    pub measure: String,
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(
        required_unless_present = "all_builtins",
        conflicts_with = "all_builtins"
    )]
    pub genome: Option<String>,
    #[arg(long)]
    pub all_builtins: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Bit length to time; repeatable.
    #[arg(long = "n", value_name = "BITS", value_parser = clap::value_parser!(u32).range(1..))]
    pub n: Vec<u32>,
    /// Timing budget per kernel and size.
    #[arg(long, value_name = "MS", default_value_t = 200)]
    pub millis: u64,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: error.into(),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error: error.into(),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Search(a) => cmd_search(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Decode(a) => cmd_decode(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(usage),
        None => {
            let mut c = RunConfig::default();
            c.resolve_paths(Path::new("."));
            c.validate().map_err(usage)?;
            Ok(c)
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .context("writing to stdout")
        .map_err(runtime)
}

/// Parses a built-in name or a genome.
pub fn parse_measure(text: &str) -> Result<Genome, anyhow::Error> {
    let t = text.trim();
    if t.bytes()
        .all(|b| b.is_ascii_digit() || b == b',' || b == b' ')
    {
        t.parse::<Genome>()
            .map_err(|e| anyhow!("genome `{t}`: {e}"))
    } else {
        builtin(t).map_err(|e| anyhow!("{e}"))
    }
}

/// `name (genome)` for built-ins, the genome alone otherwise.
pub fn measure_label(g: Genome) -> String {
    match builtins().find(|(_, b)| *b == g) {
        Some((name, _)) => format!("{name} ({g})"),
        None => g.to_string(),
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build()
        .context("starting worker threads")
        .map_err(runtime)
}

enum Fitness {
    Surrogate(SurrogateFitness),
    Trained(Box<TrainedFitness>),
}

impl FitnessFn for Fitness {
    fn evaluate(
        &self,
        genome: &Genome,
        threshold: f64,
    ) -> Result<binsim_core::FitnessRecord, binsim_core::fitness::EvalFailure> {
        match self {
            Fitness::Surrogate(f) => f.evaluate(genome, threshold),
            Fitness::Trained(f) => f.evaluate(genome, threshold),
        }
    }
}

/// Fitness function and threshold scale for a configuration.
fn fitness_for(cfg: &RunConfig) -> Result<(Fitness, f64), Failure> {
    if let Some(target) = cfg.surrogate() {
        return Ok((Fitness::Surrogate(SurrogateFitness::new(target)), 1.0));
    }
    let (train, validation) = cfg.load_datasets().map_err(usage)?;
    let ratio = cfg.chance_ratio(&validation);
    Ok((
        Fitness::Trained(Box::new(TrainedFitness::new(
            train,
            validation,
            cfg.train_config(),
        ))),
        ratio,
    ))
}

struct Recorder<'a, F> {
    config: &'a RunConfig,
    hash: String,
    evaluator: &'a Evaluator<F>,
    history: JsonLines,
    ledger: JsonLines,
    out_dir: PathBuf,
}

impl<F: FitnessFn + Sync> Recorder<'_, F> {
    fn flush_ledger(&mut self) -> anyhow::Result<()> {
        for rec in self.evaluator.drain() {
            self.ledger.write(&LedgerLine {
                config_hash: self.hash.clone(),
                record: RecordJson::from(&rec),
            })?;
        }
        self.ledger.flush()?;
        Ok(())
    }

    fn checkpoint(&self, state: &SearchState) -> anyhow::Result<()> {
        let ck = Checkpoint::capture(state, self.config);
        ck.save(&self.out_dir.join(CHECKPOINT_FILE))?;
        let dir = self.out_dir.join(CHECKPOINT_DIR);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        ck.save(&dir.join(format!("gen-{:06}.json", state.generation())))?;
        Ok(())
    }
}

impl<F: FitnessFn + Sync> Observer for Recorder<'_, F> {
    type Error = anyhow::Error;

    fn on_step(&mut self, state: &SearchState, report: &StepReport) -> anyhow::Result<()> {
        self.history
            .write(&HistoryLine::from_step(report, &self.hash))?;
        self.history.flush()?;
        self.flush_ledger()?;
        log::info!(
            "gen {} {} {} best {:.4} median {:.4}",
            report.generation,
            report.child,
            report.event.name(),
            report.best,
            report.median
        );
        let every = self.config.checkpoint_every;
        if every > 0 && state.generation().is_multiple_of(every) {
            self.checkpoint(state)?;
        }
        Ok(())
    }
}

fn open_outputs(dir: &Path, append: bool) -> anyhow::Result<(JsonLines, JsonLines)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let open = |name: &str| {
        let p = dir.join(name);
        if append {
            JsonLines::append_to(&p)
        } else {
            JsonLines::create(&p)
        }
        .with_context(|| format!("opening {}", p.display()))
    };
    Ok((open(HISTORY_FILE)?, open(LEDGER_FILE)?))
}

fn cmd_search(args: &SearchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (cfg, resume) = match &args.resume {
        Some(p) => {
            let ck = Checkpoint::load(p).map_err(usage)?;
            ck.config.validate().map_err(usage)?;
            (ck.config.clone(), Some(ck))
        }
        None => {
            let mut cfg = load_config(args.config.as_deref())?;
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            if let Some(t) = &args.surrogate_target {
                cfg.surrogate_target = Some(t.clone());
            }
            cfg.validate().map_err(usage)?;
            (cfg, None)
        }
    };
    let hash = cfg.hash();
    let (fitness, ratio) = fitness_for(&cfg)?;
    let search = cfg.search_config(ratio);
    search.validate().map_err(usage)?;
    let pool = thread_pool(cfg.threads)?;
    let evaluator = Evaluator::new(fitness);

    let (state, reason) = pool.install(|| search_loop(&cfg, &hash, &search, &evaluator, resume))?;

    let rows: Vec<ResultRow> = state
        .population()
        .members()
        .iter()
        .enumerate()
        .map(|(i, m)| ResultRow::new(i + 1, m, &hash))
        .collect();
    let table = render_table(&rows);
    let dir = &cfg.output_dir;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    write(RESULTS_TEXT, &table).map_err(runtime)?;
    let mut jsonl = String::new();
    for r in &rows {
        jsonl.push_str(&serde_json::to_string(r).expect("row serializes"));
        jsonl.push('\n');
    }
    write(RESULTS_JSONL, &jsonl).map_err(runtime)?;

    let reason = match reason {
        StopReason::Stagnated => "stagnated",
        StopReason::BudgetExhausted => "generation budget exhausted",
    };
    emit(
        out,
        &format!(
            "{table}\nstopped at generation {}: {reason}\nevaluations: {}\nconfig hash: {hash}\n",
            state.generation(),
            state.cache().len()
        ),
    )
}

fn search_loop<F: FitnessFn + Sync>(
    cfg: &RunConfig,
    hash: &str,
    search: &SearchConfig,
    evaluator: &Evaluator<F>,
    resume: Option<Checkpoint>,
) -> Result<(SearchState, StopReason), Failure> {
    let dir = cfg.output_dir.clone();
    let (history, ledger) = open_outputs(&dir, resume.is_some()).map_err(runtime)?;
    let mut rec = Recorder {
        config: cfg,
        hash: hash.into(),
        evaluator,
        history,
        ledger,
        out_dir: dir,
    };
    let mut state = match resume {
        Some(ck) => {
            let s = ck.restore(search).map_err(usage)?;
            log::info!("resumed at generation {}", s.generation());
            s
        }
        None => {
            let s = SearchState::initialize(search, evaluator, cfg.seed);
            rec.flush_ledger().map_err(runtime)?;
            let s = s.map_err(runtime)?;
            let p = s.population();
            rec.history
                .write(&HistoryLine {
                    gen: 0,
                    best: p.best().map_or(0.0, |b| b.fitness),
                    median: p.median(),
                    event: "initialized".into(),
                    child: None,
                    child_fitness: None,
                    selection: None,
                    cache_hit: None,
                    stage: s.stage(),
                    config_hash: hash.into(),
                })
                .map_err(runtime)?;
            s
        }
    };
    let reason = ga::run(&mut state, search, evaluator, &mut rec).map_err(runtime)?;
    rec.history.flush().map_err(runtime)?;
    rec.flush_ledger().map_err(runtime)?;
    rec.checkpoint(&state).map_err(runtime)?;
    Ok((state, reason))
}

/// Final validation accuracy of `genome` under `cfg`, and the trained model.
pub fn train_measure(
    cfg: &TrainConfig,
    train: &Dataset,
    validation: &Dataset,
    genome: Genome,
) -> anyhow::Result<(f64, bnn::ToyModel)> {
    let (report, model) = bnn::train(cfg, train, validation, MeasureExpr::decode(genome))
        .map_err(|e| anyhow!("training {}: {e}", measure_label(genome)))?;
    let acc = report.accuracy.last().copied().unwrap_or(0.0);
    Ok((acc, model))
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let genome = parse_measure(&args.measure).map_err(usage)?;
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    let hash = cfg.hash();
    let (train, validation) = cfg.load_datasets().map_err(usage)?;
    let tc = cfg.train_config();
    let pool = thread_pool(cfg.threads)?;
    let (m, b) = pool.install(|| {
        rayon::join(
            || train_measure(&tc, &train, &validation, genome),
            || train_measure(&tc, &train, &validation, Genome::BASELINE),
        )
    });
    let (acc, model) = m.map_err(runtime)?;
    let (base_acc, base_model) = b.map_err(runtime)?;

    let models = cfg.output_dir.join("models");
    fs::create_dir_all(&models)
        .with_context(|| format!("creating {}", models.display()))
        .map_err(runtime)?;
    for (g, model) in [(genome, &model), (Genome::BASELINE, &base_model)] {
        let name = format!("{}.bnnm", g.to_string().replace(',', "-"));
        model_file::save(models.join(name), model).map_err(runtime)?;
    }

    emit(
        out,
        &format!(
            "measure:  {}\nformula:  {}\naccuracy: {acc:.4}\nbaseline: {base_acc:.4}\ndelta:    {:+.4}\nchance:   {:.4}\nepochs:   {}\nconfig hash: {hash}\n",
            measure_label(genome),
            MeasureExpr::decode(genome).formula(),
            acc - base_acc,
            validation.chance_accuracy(),
            tc.epochs,
        ),
    )
}

fn cmd_decode(args: &DecodeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if args.all_builtins {
        let mut s = String::new();
        for (name, g) in builtins() {
            s.push_str(&format!(
                "{name:<8}  {:<15}  {}\n",
                g.to_string(),
                MeasureExpr::decode(g).formula()
            ));
        }
        return emit(out, &s);
    }
    let text = args.genome.as_deref().expect("clap requires a genome");
    let g: Genome = text
        .parse()
        .map_err(|e| usage(anyhow!("genome `{text}`: {e}")))?;
    let expr = MeasureExpr::decode(g);
    let mut s = format!("{}\ngenome: {g}\n", expr.formula());
    for (i, op) in expr.unary_ops().iter().enumerate() {
        s.push_str(&format!("U{}({}): {}\n", i + 1, SLOT_INPUTS[i], op.name()));
    }
    for (i, op) in expr.binary_ops().iter().enumerate() {
        s.push_str(&format!("B{}: {}\n", i + 1, op.name()));
    }
    emit(out, &s)
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let sizes: Vec<usize> = if args.n.is_empty() {
        vec![64, 512, 4096]
    } else {
        args.n.iter().map(|&n| n as usize).collect()
    };
    let rows = bench::run(
        &Kernels::default(),
        &sizes,
        Duration::from_millis(args.millis),
        0,
    )
    .map_err(runtime)?;
    emit(
        out,
        &format!(
            "all kernels agree with the bit-loop oracle\n{}",
            bench::render(&rows)
        ),
    )
}
