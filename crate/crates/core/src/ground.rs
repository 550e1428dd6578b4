//! Satisfiability of ground clause sets modulo equality.
//!
//! Lazy-SMT style: a DPLL search over the propositional abstraction of the
//! atoms, with a congruence-closure consistency check after every unit
//! propagation fixpoint. Backtracking is chronological; there is no clause
//! learning.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::egraph::EGraph;
use crate::terms::{Clause, Literal, TermBank, TermId};

pub const DEFAULT_DECISION_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug)]
pub struct GroundLimits {
    pub max_decisions: u64,
    pub deadline: Option<Instant>,
}

impl Default for GroundLimits {
    fn default() -> Self {
        GroundLimits {
            max_decisions: DEFAULT_DECISION_BUDGET,
            deadline: None,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GroundError {
    #[error("decision budget of {0} exhausted")]
    ResourceOut(u64),
    #[error("deadline passed during ground solving")]
    Timeout,
}

/// A total assignment of the atoms that is consistent under congruence
/// closure, together with the e-graph it induces.
#[derive(Clone, Debug)]
pub struct Model {
    pub assignment: Vec<Literal>,
    pub egraph: EGraph,
}

impl Model {
    pub fn value(&self, atom: TermId) -> Option<bool> {
        self.assignment.iter().find(|l| l.atom == atom).map(|l| l.positive)
    }
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum GroundResult {
    /// Indices of input clauses that are unsatisfiable on their own.
    Unsat {
        core: Vec<usize>,
    },
    SatCandidate(Model),
}

impl GroundResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self, GroundResult::Unsat { .. })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Origin {
    Decision,
    // flipped decision or propagation: not a backtrack point
    Implied,
}

struct Dpll<'a> {
    bank: &'a TermBank,
    atoms: Vec<TermId>,
    clauses: Vec<Vec<(usize, bool)>>,
    value: Vec<Option<bool>>,
    reason: Vec<Option<usize>>,
    trail: Vec<(usize, Origin)>,
    base: EGraph,
    core: BTreeSet<usize>,
    decisions: u64,
    limits: GroundLimits,
}

enum Conflict {
    Clause(usize),
    Theory,
}

impl<'a> Dpll<'a> {
    fn new(bank: &'a TermBank, input: &[Clause], limits: GroundLimits) -> Self {
        let mut atom_index: HashMap<TermId, usize> = HashMap::new();
        let mut atoms = Vec::new();
        let mut base = EGraph::new();
        base.ensure_truth(bank);
        let clauses = input
            .iter()
            .map(|c| {
                c.literals
                    .iter()
                    .map(|l| {
                        let v = *atom_index.entry(l.atom).or_insert_with(|| {
                            atoms.push(l.atom);
                            atoms.len() - 1
                        });
                        (v, l.positive)
                    })
                    .collect()
            })
            .collect();
        for &a in &atoms {
            if bank.kind(a) == crate::terms::Kind::Equality {
                for &side in bank.children(a) {
                    base.add_term(bank, side);
                }
            } else {
                base.add_term(bank, a);
            }
        }
        let n = atoms.len();
        Dpll {
            bank,
            atoms,
            clauses,
            value: vec![None; n],
            reason: vec![None; n],
            trail: Vec::new(),
            base,
            core: BTreeSet::new(),
            decisions: 0,
            limits,
        }
    }

    fn assign(&mut self, var: usize, val: bool, origin: Origin) {
        self.value[var] = Some(val);
        self.trail.push((var, origin));
    }

    fn propagate(&mut self) -> Option<Conflict> {
        loop {
            let mut changed = false;
            for ci in 0..self.clauses.len() {
                let mut unassigned = None;
                let mut open = 0;
                let mut satisfied = false;
                for &(v, pos) in &self.clauses[ci] {
                    match self.value[v] {
                        Some(val) if val == pos => {
                            satisfied = true;
                            break;
                        }
                        Some(_) => {}
                        None => {
                            open += 1;
                            unassigned = Some((v, pos));
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match (open, unassigned) {
                    (0, _) => return Some(Conflict::Clause(ci)),
                    (1, Some((v, pos))) => {
                        self.assign(v, pos, Origin::Implied);
                        self.reason[v] = Some(ci);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return None;
            }
        }
    }

    fn theory_graph(&self) -> EGraph {
        let mut eg = self.base.clone();
        for (v, val) in self.value.iter().enumerate() {
            if let Some(val) = *val {
                eg.assert_literal(
                    self.bank,
                    Literal {
                        positive: val,
                        atom: self.atoms[v],
                    },
                );
            }
        }
        eg
    }

    /// Adds the propagation reasons behind `var` to the core. Decisions and
    /// flipped decisions are case splits whose other branch is already
    /// accounted for.
    fn explain(&mut self, var: usize) {
        let mut stack = vec![var];
        while let Some(v) = stack.pop() {
            if let Some(r) = self.reason[v] {
                if self.core.insert(r) {
                    stack.extend(self.clauses[r].iter().map(|&(u, _)| u).filter(|&u| u != v));
                }
            }
        }
    }

    /// Undoes the trail up to the most recent decision and flips it.
    fn backtrack(&mut self) -> bool {
        while let Some((v, origin)) = self.trail.pop() {
            let val = self.value[v].take().expect("trail entries are assigned");
            self.reason[v] = None;
            if origin == Origin::Decision {
                self.assign(v, !val, Origin::Implied);
                return true;
            }
        }
        false
    }

    fn pick_branch(&self) -> Option<(usize, bool)> {
        for clause in &self.clauses {
            if clause.iter().any(|&(v, pos)| self.value[v] == Some(pos)) {
                continue;
            }
            if let Some(&(v, pos)) = clause.iter().find(|&&(v, _)| self.value[v].is_none()) {
                return Some((v, pos));
            }
        }
        self.value.iter().position(Option::is_none).map(|v| (v, false))
    }

    fn run(mut self) -> Result<GroundResult, GroundError> {
        loop {
            let conflict = match self.propagate() {
                Some(c) => Some(c),
                None => {
                    let eg = self.theory_graph();
                    if !eg.is_consistent() {
                        Some(Conflict::Theory)
                    } else if let Some((v, pos)) = self.pick_branch() {
                        self.decisions += 1;
                        if self.decisions > self.limits.max_decisions {
                            return Err(GroundError::ResourceOut(self.limits.max_decisions));
                        }
                        if self.decisions.is_multiple_of(256) {
                            if let Some(d) = self.limits.deadline {
                                if Instant::now() >= d {
                                    return Err(GroundError::Timeout);
                                }
                            }
                        }
                        self.assign(v, pos, Origin::Decision);
                        None
                    } else {
                        let assignment = self
                            .atoms
                            .iter()
                            .zip(&self.value)
                            .map(|(&atom, val)| Literal {
                                positive: val.expect("total assignment"),
                                atom,
                            })
                            .collect();
                        return Ok(GroundResult::SatCandidate(Model { assignment, egraph: eg }));
                    }
                }
            };
            if let Some(conflict) = conflict {
                match conflict {
                    Conflict::Clause(ci) => {
                        self.core.insert(ci);
                        let vars: Vec<usize> = self.clauses[ci].iter().map(|&(v, _)| v).collect();
                        for v in vars {
                            self.explain(v);
                        }
                    }
                    Conflict::Theory => {
                        let vars: Vec<usize> = self.trail.iter().map(|&(v, _)| v).collect();
                        for v in vars {
                            self.explain(v);
                        }
                    }
                }
                if !self.backtrack() {
                    return Ok(GroundResult::Unsat {
                        core: self.core.into_iter().collect(),
                    });
                }
            }
        }
    }
}

/// Decides the ground clause set modulo EUF. On UNSAT the returned core is
/// the set of clauses that took part in the refutation (falsified at a leaf or
/// used for propagation); it is unsatisfiable on its own.
pub fn ground_sat_check(
    bank: &TermBank,
    clauses: &[Clause],
    limits: GroundLimits,
) -> Result<GroundResult, GroundError> {
    debug_assert!(clauses.iter().all(|c| c.is_ground(bank)));
    Dpll::new(bank, clauses, limits).run()
}
