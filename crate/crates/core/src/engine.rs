//! The round loop: the quantifier module proposes instantiations, the ground
//! solver decides whether they already refute the problem.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::egraph::EGraph;
use crate::ground::{ground_sat_check, GroundError, GroundLimits, GroundResult, DEFAULT_DECISION_BUDGET};
use crate::parser::Problem;
use crate::terms::{Clause, QeId, QuantifiedExpression, TermBank, TermId};

/// One instantiation: a QE and a ground tuple aligned with its variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Instantiation {
    pub qe: QeId,
    pub tuple: Vec<TermId>,
}

impl Instantiation {
    pub fn new(qe: QeId, tuple: Vec<TermId>) -> Self {
        Instantiation { qe, tuple }
    }
}

/// Instantiations performed so far, per QE.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DoneSet {
    map: HashMap<QeId, HashSet<Vec<TermId>>>,
    len: usize,
}

impl DoneSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, qe: QeId, tuple: &[TermId]) -> bool {
        self.map.get(&qe).is_some_and(|s| s.contains(tuple))
    }

    pub fn insert(&mut self, qe: QeId, tuple: Vec<TermId>) -> bool {
        let fresh = self.map.entry(qe).or_default().insert(tuple);
        self.len += fresh as usize;
        fresh
    }

    pub fn count_for(&self, qe: QeId) -> usize {
        self.map.get(&qe).map_or(0, HashSet::len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// What a strategy sees at the start of a round.
pub struct RoundContext<'a> {
    pub round: usize,
    pub bank: &'a TermBank,
    pub quantified: &'a [QuantifiedExpression],
    /// Input ground clauses followed by every instance added so far.
    pub ground: &'a [Clause],
    /// E-graph of the current candidate model.
    pub egraph: &'a EGraph,
    pub done: &'a DoneSet,
}

pub trait InstantiationStrategy {
    fn name(&self) -> String;

    /// Proposes the instantiations of this round. Must not repeat anything in
    /// `ctx.done`; an empty result ends the run.
    fn instantiate(&mut self, ctx: &RoundContext<'_>) -> Vec<Instantiation>;

    /// Time spent computing guidance (network evaluation), if any.
    fn guidance_time(&self) -> Duration {
        Duration::ZERO
    }
}

/// Receives per-round events from the solve loop.
pub trait SolveObserver {
    fn round_start(&mut self, _ctx: &RoundContext<'_>) {}
    fn lemma(&mut self, _round: usize, _inst: &Instantiation, _clause: &Clause, _bank: &TermBank) {}
    fn finished(&mut self, _outcome: &SolveOutcome) {}
}

/// Observer that ignores everything.
pub struct NoObserver;

impl SolveObserver for NoObserver {}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub timeout: Option<Duration>,
    pub max_rounds: Option<usize>,
    pub max_decisions: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            timeout: Some(Duration::from_secs(10)),
            max_rounds: None,
            max_decisions: DEFAULT_DECISION_BUDGET,
        }
    }
}

impl Limits {
    pub fn rounds(max_rounds: usize) -> Self {
        Limits {
            timeout: None,
            max_rounds: Some(max_rounds),
            ..Limits::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Proved,
    GaveUp,
    Timeout,
    /// Round or decision budget exhausted.
    ResourceOut,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Proved => "PROVED",
            Status::GaveUp => "GAVE_UP",
            Status::Timeout => "TIMEOUT",
            Status::ResourceOut => "RESOURCE_OUT",
        })
    }
}

/// Final solver state: the bank with every created term and the asserted
/// ground clauses, inputs first.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub bank: TermBank,
    pub quantified: Vec<QuantifiedExpression>,
    pub ground: Vec<Clause>,
    pub input_len: usize,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: Status,
    /// Number of completed rounds.
    pub rounds: usize,
    /// `trace[r - 1]` holds the instantiations of round `r`.
    pub trace: Vec<Vec<Instantiation>>,
    /// On PROVED, indices into `state.ground` of an unsatisfiable core.
    pub core: Option<Vec<usize>>,
    pub wall: Duration,
    pub guidance: Duration,
    pub state: SolverState,
}

impl SolveOutcome {
    pub fn instantiation_count(&self) -> usize {
        self.trace.iter().map(Vec::len).sum()
    }

    pub fn proved(&self) -> bool {
        self.status == Status::Proved
    }

    /// (round, instantiation) pairs in execution order.
    pub fn flat_trace(&self) -> impl Iterator<Item = (usize, &Instantiation)> {
        self.trace
            .iter()
            .enumerate()
            .flat_map(|(r, insts)| insts.iter().map(move |i| (r + 1, i)))
    }
}

fn ground_status(e: GroundError) -> Status {
    match e {
        GroundError::ResourceOut(_) => Status::ResourceOut,
        GroundError::Timeout => Status::Timeout,
    }
}

/// Runs the round loop until the ground part becomes unsatisfiable, the
/// strategy has nothing new to offer, or a limit is hit.
pub fn solve_loop(
    problem: &Problem,
    strategy: &mut dyn InstantiationStrategy,
    limits: Limits,
    observer: &mut dyn SolveObserver,
) -> SolveOutcome {
    let start = Instant::now();
    let deadline = limits.timeout.map(|t| start + t);
    let ground_limits = GroundLimits {
        max_decisions: limits.max_decisions,
        deadline,
    };
    let mut bank = problem.bank.clone();
    let quantified = problem.quantified.clone();
    let mut ground = problem.ground_clauses.clone();
    let input_len = ground.len();
    let mut done = DoneSet::new();
    let mut trace: Vec<Vec<Instantiation>> = Vec::new();
    let mut core = None;

    let mut check = ground_sat_check(&bank, &ground, ground_limits);
    let status = loop {
        let egraph = match check {
            Err(e) => break ground_status(e),
            Ok(GroundResult::Unsat { core: c }) => {
                core = Some(c);
                break Status::Proved;
            }
            Ok(GroundResult::SatCandidate(model)) => model.egraph,
        };
        let round = trace.len() + 1;
        if limits.max_rounds.is_some_and(|m| round > m) {
            break Status::ResourceOut;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break Status::Timeout;
        }
        let ctx = RoundContext {
            round,
            bank: &bank,
            quantified: &quantified,
            ground: &ground,
            egraph: &egraph,
            done: &done,
        };
        observer.round_start(&ctx);
        let proposed = strategy.instantiate(&ctx);
        let mut accepted = Vec::with_capacity(proposed.len());
        for inst in proposed {
            debug_assert!(
                !done.contains(inst.qe, &inst.tuple),
                "strategy repeated an instantiation"
            );
            if done.contains(inst.qe, &inst.tuple) {
                continue;
            }
            let qe = &quantified[inst.qe.index()];
            let clause = qe
                .instantiate(&mut bank, &inst.tuple)
                .expect("strategies propose well-sorted ground tuples");
            observer.lemma(round, &inst, &clause, &bank);
            ground.push(clause);
            done.insert(inst.qe, inst.tuple.clone());
            accepted.push(inst);
        }
        if accepted.is_empty() {
            break Status::GaveUp;
        }
        trace.push(accepted);
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break Status::Timeout;
        }
        check = ground_sat_check(&bank, &ground, ground_limits);
    };
    let outcome = SolveOutcome {
        status,
        rounds: trace.len(),
        trace,
        core,
        wall: start.elapsed(),
        guidance: strategy.guidance_time(),
        state: SolverState {
            bank,
            quantified,
            ground,
            input_len,
        },
    };
    observer.finished(&outcome);
    outcome
}

/// Ground instances of the given instantiations, in order.
pub fn instance_clauses(
    bank: &mut TermBank,
    quantified: &[QuantifiedExpression],
    insts: &[Instantiation],
) -> Vec<Clause> {
    insts
        .iter()
        .map(|i| {
            quantified[i.qe.index()]
                .instantiate(bank, &i.tuple)
                .expect("traced instantiations are well-sorted")
        })
        .collect()
}
