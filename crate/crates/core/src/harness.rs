//! Batch plumbing shared by the command line and the experiments:
//! synthetic corpora, data collection, training reports and result tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ematch::EmatchStrategy;
use crate::engine::{solve_loop, InstantiationStrategy, Limits, NoObserver, SolveOutcome, Status};
use crate::enumerate::EnumStrategy;
use crate::gnn::{self, GnnError, GnnParams, Metrics, TrainLog};
use crate::guided::{GuidanceConfig, GuidanceMode, GuidedStrategy};
use crate::parser::{load_problem, Problem};
use crate::trace::{label_transitions, GraphRecorder, Transition};

/// Extension used for generated problems in the native format.
pub const NATIVE_EXT: &str = "fol";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyKind {
    Ematch,
    Enum,
    Guided(GuidanceMode),
}

impl StrategyKind {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "ematch" => Ok(StrategyKind::Ematch),
            "enum" => Ok(StrategyKind::Enum),
            other => other.parse().map(StrategyKind::Guided).map_err(|_| {
                format!("unknown strategy {other:?}; expected ematch, enum, dry-run, random-dry-run, qsampling or threshold")
            }),
        }
    }

    pub fn name(&self) -> String {
        match self {
            StrategyKind::Ematch => "ematch".into(),
            StrategyKind::Enum => "enum".into(),
            StrategyKind::Guided(m) => m.to_string(),
        }
    }
}

/// Everything needed to build a fresh strategy for one run.
#[derive(Clone, Debug)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub threshold: f64,
    pub max_inst_per_qe: usize,
    pub seed: u64,
    pub params: Option<Arc<GnnParams>>,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        StrategySpec {
            kind,
            threshold: crate::guided::DEFAULT_THRESHOLD,
            max_inst_per_qe: 1,
            seed: 0,
            params: None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn InstantiationStrategy>, String> {
        Ok(match self.kind {
            StrategyKind::Ematch => Box::new(EmatchStrategy::default()),
            StrategyKind::Enum => Box::new(EnumStrategy),
            StrategyKind::Guided(mode) => {
                let config = GuidanceConfig {
                    mode,
                    threshold: self.threshold,
                    max_inst_per_qe: self.max_inst_per_qe,
                    seed: self.seed,
                };
                Box::new(GuidedStrategy::new(config, self.params.clone())?)
            }
        })
    }
}

pub fn run(problem: &Problem, spec: &StrategySpec, limits: Limits) -> Result<SolveOutcome, String> {
    let mut strategy = spec.build()?;
    Ok(solve_loop(problem, strategy.as_mut(), limits, &mut NoObserver))
}

/// The machine-readable line printed per solved (or failed) problem.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultLine {
    pub problem: String,
    pub status: String,
    pub rounds: usize,
    pub instantiation_count: usize,
    pub wall_ms: u64,
    pub gnn_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Exhausted round or decision budgets count as timeouts on result lines.
pub fn status_label(s: Status) -> &'static str {
    match s {
        Status::Proved => "PROVED",
        Status::GaveUp => "GAVE_UP",
        Status::Timeout | Status::ResourceOut => "TIMEOUT",
    }
}

impl ResultLine {
    pub fn from_outcome(problem: &str, o: &SolveOutcome) -> Self {
        ResultLine {
            problem: problem.to_string(),
            status: status_label(o.status).into(),
            rounds: o.rounds,
            instantiation_count: o.instantiation_count(),
            wall_ms: o.wall.as_millis() as u64,
            gnn_ms: o.guidance.as_millis() as u64,
            error: None,
        }
    }

    pub fn error(problem: &str, msg: impl Into<String>) -> Self {
        ResultLine {
            problem: problem.to_string(),
            status: "ERROR".into(),
            rounds: 0,
            instantiation_count: 0,
            wall_ms: 0,
            gnn_ms: 0,
            error: Some(msg.into()),
        }
    }

    pub fn timeout(problem: &str, wall: Duration) -> Self {
        ResultLine {
            problem: problem.to_string(),
            status: "TIMEOUT".into(),
            rounds: 0,
            instantiation_count: 0,
            wall_ms: wall.as_millis() as u64,
            gnn_ms: 0,
            error: None,
        }
    }

    pub fn proved(&self) -> bool {
        self.status == "PROVED"
    }
}

/// Problem files of a corpus directory, sorted by name.
pub fn list_corpus(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        let hidden = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_none_or(|n| n.starts_with('.'));
        if p.is_file() && !hidden {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn problem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// A needle problem: constants `c1..c(m+1)`, one of which (the needle, at
/// `needle` in creation order) satisfies `key` and falsifies `goal`. The QE
/// `forall x. key(x) -> goal(x)` is refuted only by the needle; the other
/// constants carry `other` facts feeding an irrelevant QE.
pub fn needle_problem(distractors: usize, needle: usize) -> String {
    assert!(needle <= distractors);
    let n = distractors + 1;
    let mut s = String::from("; needle problem\n(declare-sort S)\n");
    for i in 1..=n {
        writeln!(s, "(declare-fun c{i} () S)").unwrap();
    }
    s.push_str(
        "(declare-fun key (S) Bool)\n(declare-fun goal (S) Bool)\n(declare-fun other (S) Bool)\n(declare-fun aux (S) Bool)\n",
    );
    for i in 0..n {
        if i == needle {
            writeln!(s, "(assert (key c{}))\n(assert (not (goal c{})))", i + 1, i + 1).unwrap();
        } else {
            writeln!(s, "(assert (other c{}))", i + 1).unwrap();
        }
    }
    s.push_str("(assert-forall ((x S)) (or (not (key x)) (goal x)))\n");
    s.push_str("(assert-forall ((x S)) (or (not (other x)) (aux x)))\n");
    s
}

/// `(name, text, needle position)` for `n` needle problems with the needle
/// placed uniformly at random.
pub fn needle_corpus(n: usize, distractors: usize, seed: u64) -> Vec<(String, String, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pos = rng.gen_range(0..=distractors);
            (format!("needle_{i:04}"), needle_problem(distractors, pos), pos)
        })
        .collect()
}

/// A problem where the trigger `q(g(x))` has one match per constant and a
/// single constant refutes: `e-matching` instantiates every match at once,
/// enumeration walks the constants one per round.
pub fn trigger_rich_problem(constants: usize, refuter: usize) -> String {
    assert!(refuter < constants);
    let mut s = String::from("; trigger-rich problem\n(declare-sort S)\n(declare-sort T)\n");
    for i in 1..=constants {
        writeln!(s, "(declare-fun c{i} () S)").unwrap();
    }
    s.push_str("(declare-fun g (S) T)\n(declare-fun q (T) Bool)\n(declare-fun r (S) Bool)\n");
    for i in 1..=constants {
        writeln!(s, "(assert (q (g c{i})))").unwrap();
    }
    writeln!(s, "(assert (not (r c{})))", refuter + 1).unwrap();
    s.push_str("(assert-forall ((x S)) (or (not (q (g x))) (r x)))\n");
    s
}

pub fn trigger_rich_corpus(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let m = rng.gen_range(10..=14);
            let k = rng.gen_range(0..m);
            (format!("trigger_{i:04}"), trigger_rich_problem(m, k))
        })
        .collect()
}

pub fn write_corpus(dir: &Path, problems: &[(String, String)]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    problems
        .iter()
        .map(|(name, text)| {
            let p = dir.join(format!("{name}.{NATIVE_EXT}"));
            fs::write(&p, text)?;
            Ok(p)
        })
        .collect()
}

/// Runs e-matching on a problem and, when it proves, labels its rounds.
pub fn collect_problem(name: &str, problem: &Problem, limits: Limits, seed: u64) -> (SolveOutcome, Vec<Transition>) {
    let mut rec = GraphRecorder::default();
    let out = solve_loop(problem, &mut EmatchStrategy::default(), limits, &mut rec);
    if !out.proved() {
        return (out, Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = label_transitions(name, &out, &rec.states, &mut rng).expect("proved runs label");
    (out, ts)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CollectSummary {
    pub problems: usize,
    pub solved: usize,
    pub transitions: usize,
    pub errors: Vec<String>,
}

/// Collects training data over a corpus; problem `i` labels with seed `seed + i`.
pub fn collect_corpus(paths: &[PathBuf], limits: Limits, seed: u64) -> (Vec<Transition>, CollectSummary) {
    let mut summary = CollectSummary {
        problems: paths.len(),
        ..Default::default()
    };
    let mut all = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let problem = match load_problem(path) {
            Ok(p) => p,
            Err(e) => {
                summary.errors.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let (out, ts) = collect_problem(&problem.name, &problem, limits, seed.wrapping_add(i as u64));
        if out.proved() {
            summary.solved += 1;
            summary.transitions += ts.len();
            all.extend(ts);
        }
    }
    (all, summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub log: TrainLog,
    pub initial_loss: f64,
    pub metrics: Metrics,
}

/// Initializes with `seed`, trains, and measures training-set metrics.
pub fn train_with_report(
    transitions: &[Transition],
    k: usize,
    layers: usize,
    iterations: usize,
    seed: u64,
) -> Result<(GnnParams, TrainReport), GnnError> {
    if transitions.is_empty() {
        return Err(GnnError::Dimension("empty dataset".into()));
    }
    let mut params = GnnParams::init(k, layers, seed);
    let initial_loss = gnn::evaluate(&params, transitions)?.mean_loss;
    let log = gnn::train(&mut params, transitions, iterations, seed, gnn::DEFAULT_LEARNING_RATE)?;
    let metrics = gnn::evaluate(&params, transitions)?;
    Ok((
        params,
        TrainReport {
            log,
            initial_loss,
            metrics,
        },
    ))
}

/// Results of several strategies over one corpus.
#[derive(Clone, Debug, Default)]
pub struct EvalResults {
    pub strategies: Vec<String>,
    pub results: BTreeMap<String, Vec<ResultLine>>,
}

impl EvalResults {
    pub fn add(&mut self, strategy: &str, line: ResultLine) {
        if !self.results.contains_key(strategy) {
            self.strategies.push(strategy.to_string());
        }
        self.results.entry(strategy.to_string()).or_default().push(line);
    }

    pub fn solved(&self, strategy: &str) -> BTreeSet<String> {
        self.results
            .get(strategy)
            .into_iter()
            .flatten()
            .filter(|r| r.proved())
            .map(|r| r.problem.clone())
            .collect()
    }

    /// `m[i][j]` = problems solved by strategy `i` but not by `j`.
    pub fn set_differences(&self) -> Vec<Vec<usize>> {
        let sets: Vec<BTreeSet<String>> = self.strategies.iter().map(|s| self.solved(s)).collect();
        sets.iter()
            .map(|a| sets.iter().map(|b| a.difference(b).count()).collect())
            .collect()
    }

    pub fn median_instantiations(&self, strategy: &str) -> Option<f64> {
        let mut v: Vec<usize> = self
            .results
            .get(strategy)?
            .iter()
            .filter(|r| r.proved())
            .map(|r| r.instantiation_count)
            .collect();
        median(&mut v)
    }

    pub fn solved_table(&self) -> String {
        let mut s = String::from("strategy\tsolved\ttotal\n");
        for name in &self.strategies {
            let total = self.results[name].len();
            writeln!(s, "{name}\t{}\t{total}", self.solved(name).len()).unwrap();
        }
        s
    }

    pub fn difference_table(&self) -> String {
        let m = self.set_differences();
        let mut s = String::from("row-minus-column");
        for name in &self.strategies {
            write!(s, "\t{name}").unwrap();
        }
        s.push('\n');
        for (name, row) in self.strategies.iter().zip(&m) {
            s.push_str(name);
            for v in row {
                write!(s, "\t{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// One row per successful run, then one median row per strategy.
    pub fn instantiation_csv(&self) -> String {
        let mut s = String::from("strategy,problem,instantiations\n");
        for name in &self.strategies {
            for r in self.results[name].iter().filter(|r| r.proved()) {
                writeln!(s, "{name},{},{}", r.problem, r.instantiation_count).unwrap();
            }
        }
        for name in &self.strategies {
            let m = self
                .median_instantiations(name)
                .map_or_else(String::new, |m| m.to_string());
            writeln!(s, "{name},MEDIAN,{m}").unwrap();
        }
        s
    }
}

pub fn median(v: &mut [usize]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    })
}

/// Splits names into (train, test) after a seeded shuffle.
pub fn split<T: Clone>(items: &[T], train: usize, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = v.split_off(train.min(v.len()));
    (v, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_native;

    fn line(p: &str, status: &str, n: usize) -> ResultLine {
        ResultLine {
            problem: p.into(),
            status: status.into(),
            rounds: 1,
            instantiation_count: n,
            wall_ms: 0,
            gnn_ms: 0,
            error: None,
        }
    }

    #[test]
    fn difference_matrix_of_nested_sets() {
        let mut r = EvalResults::default();
        r.add("a", line("p1", "PROVED", 3));
        r.add("a", line("p2", "GAVE_UP", 0));
        r.add("b", line("p1", "PROVED", 5));
        r.add("b", line("p2", "PROVED", 7));
        assert_eq!(r.set_differences(), vec![vec![0, 0], vec![1, 0]]);
        assert_eq!(r.median_instantiations("b"), Some(6.0));
        assert!(r.instantiation_csv().contains("b,MEDIAN,6"));
    }

    #[test]
    fn strategy_names_parse() {
        for s in ["ematch", "enum", "dry-run", "random-dry-run", "qsampling", "threshold"] {
            assert_eq!(StrategyKind::parse(s).unwrap().name(), s);
        }
        assert!(StrategyKind::parse("magic").is_err());
    }

    #[test]
    fn needle_without_distractors_is_immediate() {
        let p = parse_native(&needle_problem(0, 0)).unwrap();
        let out = run(&p, &StrategySpec::new(StrategyKind::Enum), Limits::default()).unwrap();
        assert_eq!(out.status, Status::Proved);
        assert_eq!(out.rounds, 1);
    }

    #[test]
    fn last_needle_is_slowest_for_enum() {
        let rounds: Vec<usize> = (0..=5)
            .map(|pos| {
                let p = parse_native(&needle_problem(5, pos)).unwrap();
                run(&p, &StrategySpec::new(StrategyKind::Enum), Limits::default())
                    .unwrap()
                    .rounds
            })
            .collect();
        assert_eq!(rounds, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn ematch_finds_the_needle_at_once() {
        let p = parse_native(&needle_problem(20, 13)).unwrap();
        let (out, ts) = collect_problem("n", &p, Limits::default(), 0);
        assert_eq!(out.status, Status::Proved);
        assert_eq!(out.rounds, 1);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].qe_labels, vec![1, 0]);
        assert_eq!(ts[0].term_labels[0], Some(vec![13]));
    }

    #[test]
    fn trigger_rich_counts() {
        let p = parse_native(&trigger_rich_problem(12, 4)).unwrap();
        let e = run(&p, &StrategySpec::new(StrategyKind::Ematch), Limits::default()).unwrap();
        let n = run(&p, &StrategySpec::new(StrategyKind::Enum), Limits::default()).unwrap();
        assert!(e.proved() && n.proved());
        assert_eq!(e.instantiation_count(), 12);
        assert_eq!(n.instantiation_count(), 5);
    }
}
