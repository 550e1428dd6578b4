use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use instguide::gnn::{GnnParams, DEFAULT_LAYERS, DEFAULT_WIDTH};
use instguide::harness::{self, list_corpus, problem_name, EvalResults, ResultLine, StrategyKind, StrategySpec};
use instguide::trace::{read_dataset, write_dataset, DatasetHeader};
use instguide::{load_problem, Limits};

#[derive(Parser)]
#[command(
    name = "instguide",
    version,
    about = "Instantiation-based prover with learned guidance"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one problem and print a JSON result line.
    Solve {
        problem: PathBuf,
        #[command(flatten)]
        strategy: StrategyArgs,
        /// Wall-clock limit in seconds.
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        /// Stop after this many rounds.
        #[arg(long)]
        max_rounds: Option<usize>,
    },
    /// Run e-matching over a corpus and write labeled transitions.
    Collect {
        corpus: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train network weights on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 150)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output weight file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WIDTH)]
        width: usize,
        #[arg(long, default_value_t = DEFAULT_LAYERS)]
        layers: usize,
        /// Optional CSV of per-iteration losses.
        #[arg(long)]
        loss_log: Option<PathBuf>,
    },
    /// Evaluate strategies over a corpus with one worker process per problem.
    Eval {
        corpus: PathBuf,
        /// Comma-separated strategies; repeatable.
        #[arg(long = "strategy", value_delimiter = ',', required = true)]
        strategies: Vec<String>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = instguide::guided::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        max_inst_per_qe: usize,
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Directory for results.jsonl, tables and the instantiation CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a needle corpus.
    GenNeedle {
        #[arg(long, default_value_t = 50)]
        problems: usize,
        #[arg(long, default_value_t = 20)]
        distractors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a corpus where every trigger has many matches.
    GenTriggerRich {
        #[arg(long, default_value_t = 30)]
        problems: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct StrategyArgs {
    /// ematch | enum | dry-run | random-dry-run | qsampling | threshold
    #[arg(long, default_value = "enum")]
    strategy: String,
    #[arg(long, default_value_t = instguide::guided::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    max_inst_per_qe: usize,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn secs(t: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(t).with_context(|| format!("invalid timeout {t}"))
}

fn load_weights(path: Option<&Path>) -> Result<Option<Arc<GnnParams>>> {
    path.map(|p| {
        GnnParams::load(p)
            .map(Arc::new)
            .with_context(|| format!("loading weights {}", p.display()))
    })
    .transpose()
}

fn solve(problem: &Path, args: &StrategyArgs, timeout: f64, max_rounds: Option<usize>) -> ResultLine {
    let name = problem_name(problem);
    let run = || -> Result<ResultLine> {
        let kind = StrategyKind::parse(&args.strategy).map_err(anyhow::Error::msg)?;
        let spec = StrategySpec {
            kind,
            threshold: args.threshold,
            max_inst_per_qe: args.max_inst_per_qe,
            seed: args.seed,
            params: load_weights(args.weights.as_deref())?,
        };
        let p = load_problem(problem).map_err(anyhow::Error::msg)?;
        let limits = Limits {
            timeout: Some(secs(timeout)?),
            max_rounds,
            ..Limits::default()
        };
        let out = harness::run(&p, &spec, limits).map_err(anyhow::Error::msg)?;
        Ok(ResultLine::from_outcome(&name, &out))
    };
    run().unwrap_or_else(|e| ResultLine::error(&name, format!("{e:#}")))
}

/// Runs `solve` in a child process, killing it once the timeout (plus a
/// short grace period for its own shutdown) has passed.
fn solve_in_worker(
    exe: &Path,
    problem: &Path,
    args: &StrategyArgs,
    timeout: f64,
    max_rounds: Option<usize>,
) -> ResultLine {
    let name = problem_name(problem);
    let mut cmd = Command::new(exe);
    cmd.arg("solve")
        .arg(problem)
        .args(["--strategy", &args.strategy])
        .args(["--threshold", &args.threshold.to_string()])
        .args(["--max-inst-per-qe", &args.max_inst_per_qe.to_string()])
        .args(["--seed", &args.seed.to_string()])
        .args(["--timeout", &timeout.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    if let Some(w) = &args.weights {
        cmd.arg("--weights").arg(w);
    }
    if let Some(r) = max_rounds {
        cmd.args(["--max-rounds", &r.to_string()]);
    }
    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return ResultLine::error(&name, format!("spawning worker: {e}")),
    };
    let limit = Duration::from_secs_f64(timeout) + Duration::from_millis(500);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if start.elapsed() > limit => {
                let _ = child.kill();
                let _ = child.wait();
                return ResultLine::timeout(&name, start.elapsed());
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return ResultLine::error(&name, format!("waiting for worker: {e}")),
        }
    }
    let stdout = child.stdout.take().expect("piped stdout");
    let line = BufReader::new(stdout).lines().map_while(Result::ok).last();
    match line.map(|l| serde_json::from_str::<ResultLine>(&l)) {
        Some(Ok(r)) => r,
        Some(Err(e)) => ResultLine::error(&name, format!("bad worker output: {e}")),
        None => ResultLine::error(&name, "worker printed nothing"),
    }
}

#[allow(clippy::too_many_arguments)]
fn eval(
    corpus: &Path,
    strategies: &[String],
    base: &StrategyArgs,
    timeout: f64,
    jobs: usize,
    max_rounds: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    for s in strategies {
        StrategyKind::parse(s).map_err(anyhow::Error::msg)?;
    }
    secs(timeout)?;
    let problems = list_corpus(corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let exe = std::env::current_exe().context("locating own executable")?;
    let tasks: Vec<(usize, usize)> = (0..strategies.len())
        .flat_map(|s| (0..problems.len()).map(move |p| (s, p)))
        .collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ResultLine>>> = Mutex::new(vec![None; tasks.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(s, p)) = tasks.get(i) else { break };
                let mut args = base.clone();
                args.strategy = strategies[s].clone();
                let r = solve_in_worker(&exe, &problems[p], &args, timeout, max_rounds);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let mut results = EvalResults::default();
    let mut jsonl = String::new();
    for (&(s, _), r) in tasks.iter().zip(slots.into_inner().expect("workers finished")) {
        let r = r.expect("every task ran");
        let mut v = serde_json::to_value(&r)?;
        v["strategy"] = serde_json::Value::from(strategies[s].as_str());
        jsonl.push_str(&v.to_string());
        jsonl.push('\n');
        results.add(&strategies[s], r);
    }
    let solved = results.solved_table();
    let diff = results.difference_table();
    let csv = results.instantiation_csv();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{solved}\n{diff}")?;
    for s in strategies {
        if let Some(m) = results.median_instantiations(s) {
            writeln!(stdout, "median instantiations ({s}): {m}")?;
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.jsonl"), jsonl)?;
        std::fs::write(dir.join("solved.tsv"), solved)?;
        std::fs::write(dir.join("differences.tsv"), diff)?;
        std::fs::write(dir.join("instantiations.csv"), csv)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Solve {
            problem,
            strategy,
            timeout,
            max_rounds,
        } => {
            let r = solve(&problem, &strategy, timeout, max_rounds);
            println!("{}", serde_json::to_string(&r)?);
            if let Some(e) = &r.error {
                eprintln!("error: {e}");
            }
            Ok(match r.status.as_str() {
                "PROVED" => ExitCode::SUCCESS,
                "ERROR" => ExitCode::from(2),
                _ => ExitCode::from(1),
            })
        }
        Cmd::Collect {
            corpus,
            dataset,
            timeout,
            seed,
        } => {
            let paths = list_corpus(&corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
            let limits = Limits {
                timeout: Some(secs(timeout)?),
                ..Limits::default()
            };
            let (ts, summary) = harness::collect_corpus(&paths, limits, seed);
            for e in &summary.errors {
                eprintln!("warning: {e}");
            }
            write_dataset(&dataset, &DatasetHeader::new(seed), &ts)?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Train {
            dataset,
            iterations,
            seed,
            out,
            width,
            layers,
            loss_log,
        } => {
            let data = read_dataset(&dataset)?;
            if data.transitions.is_empty() {
                bail!("dataset {} has no transitions", dataset.display());
            }
            let (params, report) = harness::train_with_report(&data.transitions, width, layers, iterations, seed)?;
            params.save(&out)?;
            if let Some(path) = loss_log {
                let mut csv = String::from("iteration,loss\n");
                for (i, l) in report.log.iteration_loss.iter().enumerate() {
                    csv.push_str(&format!("{},{l}\n", i + 1));
                }
                std::fs::write(path, csv)?;
            }
            let last = report.log.iteration_loss.last().copied().unwrap_or(report.initial_loss);
            println!("transitions: {}", data.transitions.len());
            println!(
                "loss: initial {:.4}, last iteration {:.4}, final {:.4}",
                report.initial_loss, last, report.metrics.mean_loss
            );
            println!("{}", report.metrics.report());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval {
            corpus,
            strategies,
            weights,
            threshold,
            max_inst_per_qe,
            timeout,
            jobs,
            seed,
            max_rounds,
            out,
        } => {
            let base = StrategyArgs {
                strategy: String::new(),
                threshold,
                max_inst_per_qe,
                weights,
                seed,
            };
            eval(&corpus, &strategies, &base, timeout, jobs, max_rounds, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::GenNeedle {
            problems,
            distractors,
            seed,
            out,
        } => {
            let corpus: Vec<(String, String)> = harness::needle_corpus(problems, distractors, seed)
                .into_iter()
                .map(|(n, t, _)| (n, t))
                .collect();
            let paths = harness::write_corpus(&out, &corpus)?;
            println!("wrote {} problems to {}", paths.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::GenTriggerRich { problems, seed, out } => {
            let paths = harness::write_corpus(&out, &harness::trigger_rich_corpus(problems, seed))?;
            println!("wrote {} problems to {}", paths.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
