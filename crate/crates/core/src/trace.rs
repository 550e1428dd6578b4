//! Proof-state graphs, usefulness labels, and the JSONL dataset format.

use std::collections::{hash_map::Entry, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Instantiation, RoundContext, SolveObserver, SolveOutcome, Status};
use crate::ground::{ground_sat_check, GroundLimits, GroundResult};
use crate::terms::{Clause, Kind, QuantifiedExpression, TermBank, TermId};

pub const FORMAT_VERSION: u32 = 1;
/// Forward types 0..=4 by argument position, reverse types 5..=9.
pub const EDGE_TYPE_COUNT: usize = 10;
const MAX_POSITION_TYPE: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStateGraph {
    pub round: usize,
    /// Kind index of each node.
    pub nodes: Vec<u8>,
    /// (src, dst, type); messages flow from src to dst.
    pub edges: Vec<(u32, u32, u8)>,
    pub qe_nodes: Vec<u32>,
    pub var_nodes: Vec<Vec<u32>>,
    /// Per QE, per variable: nodes of the ground terms of the variable's sort, by age.
    pub candidates: Vec<Vec<Vec<u32>>>,
}

impl ProofStateGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_qes(&self) -> usize {
        self.qe_nodes.len()
    }

    /// Checks indices, edge types, the reverse-edge bijection and the
    /// shape of the per-QE lists.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.nodes.len() as u32;
        if let Some(k) = self.nodes.iter().find(|&&k| k as usize >= Kind::COUNT) {
            return Err(format!("unknown kind index {k}"));
        }
        let mut fwd: HashMap<(u32, u32, u8), i64> = HashMap::new();
        for &(s, d, t) in &self.edges {
            if s >= n || d >= n {
                return Err(format!("edge ({s}, {d}) out of range"));
            }
            if t as usize >= EDGE_TYPE_COUNT {
                return Err(format!("edge type {t} out of range"));
            }
            if (t as usize) <= MAX_POSITION_TYPE {
                *fwd.entry((s, d, t)).or_default() += 1;
            } else {
                *fwd.entry((d, s, t - 5)).or_default() -= 1;
            }
        }
        if fwd.values().any(|&c| c != 0) {
            return Err("forward and reverse edges are not in bijection".into());
        }
        if self.var_nodes.len() != self.qe_nodes.len() || self.candidates.len() != self.qe_nodes.len() {
            return Err("per-QE lists disagree in length".into());
        }
        for (vars, cands) in self.var_nodes.iter().zip(&self.candidates) {
            if vars.len() != cands.len() {
                return Err("candidate lists do not match variables".into());
            }
        }
        let all = self
            .qe_nodes
            .iter()
            .chain(self.var_nodes.iter().flatten())
            .chain(self.candidates.iter().flatten().flatten());
        if all.into_iter().any(|&i| i >= n) {
            return Err("node reference out of range".into());
        }
        Ok(())
    }
}

/// A graph together with the bank term behind each node (`None` for clause
/// and negation nodes that have no bank counterpart).
#[derive(Clone, Debug)]
pub struct ExportedState {
    pub graph: ProofStateGraph,
    pub node_terms: Vec<Option<TermId>>,
    /// Bank size at export time; terms with smaller ids were available.
    pub bank_len: usize,
}

impl ExportedState {
    /// Index of `term` in the candidate list of variable `var` of QE `qe`.
    pub fn candidate_index(&self, qe: usize, var: usize, term: TermId) -> Option<usize> {
        self.graph.candidates[qe][var]
            .iter()
            .position(|&n| self.node_terms[n as usize] == Some(term))
    }
}

enum Extra {
    Not(TermId),
    Or(Vec<(bool, TermId)>),
}

/// Exports the state of a round: every term reachable from the asserted
/// ground clauses and QEs, plus all ground terms of user sorts. Bank terms
/// come first in age order, then clause structure absent from the bank in
/// clause order.
pub fn export_graph(
    round: usize,
    bank: &TermBank,
    quantified: &[QuantifiedExpression],
    ground: &[Clause],
) -> ExportedState {
    let mut reach: BTreeSet<TermId> = BTreeSet::new();
    let mut stack: Vec<TermId> = Vec::new();
    let mut extras: Vec<Extra> = Vec::new();
    let mut extra_not: HashMap<TermId, usize> = HashMap::new();
    let mut extra_or: HashMap<Vec<(bool, TermId)>, usize> = HashMap::new();

    let lit_node = |bank: &TermBank, positive: bool, atom: TermId| -> Option<TermId> {
        if positive {
            Some(atom)
        } else {
            bank.lookup(Kind::Not, None, &[atom])
        }
    };
    for clause in ground {
        let mut lit_nodes = Vec::new();
        let mut all_in_bank = true;
        for l in &clause.literals {
            stack.push(l.atom);
            match lit_node(bank, l.positive, l.atom) {
                Some(t) => {
                    stack.push(t);
                    lit_nodes.push(t);
                }
                None => {
                    all_in_bank = false;
                    if let Entry::Vacant(e) = extra_not.entry(l.atom) {
                        e.insert(extras.len());
                        extras.push(Extra::Not(l.atom));
                    }
                }
            }
        }
        let or = if all_in_bank {
            bank.lookup(Kind::Or, None, &lit_nodes)
        } else {
            None
        };
        match or {
            Some(t) => {
                stack.push(t);
            }
            None => {
                let key: Vec<(bool, TermId)> = clause.literals.iter().map(|l| (l.positive, l.atom)).collect();
                extra_or.entry(key.clone()).or_insert_with(|| {
                    extras.push(Extra::Or(key));
                    extras.len() - 1
                });
            }
        }
    }
    for qe in quantified {
        stack.push(qe.node);
    }
    for sort in bank.signature().user_sorts() {
        stack.extend_from_slice(bank.ground_terms_of_sort(sort));
    }
    while let Some(t) = stack.pop() {
        if reach.insert(t) {
            stack.extend_from_slice(bank.children(t));
        }
    }

    let mut index: HashMap<TermId, u32> = HashMap::new();
    let mut node_terms: Vec<Option<TermId>> = Vec::new();
    let mut nodes: Vec<u8> = Vec::new();
    for &t in &reach {
        index.insert(t, nodes.len() as u32);
        nodes.push(bank.kind(t).index() as u8);
        node_terms.push(Some(t));
    }
    let mut edges = Vec::new();
    let connect = |edges: &mut Vec<(u32, u32, u8)>, parent: u32, children: &mut dyn Iterator<Item = u32>| {
        for (pos, child) in children.enumerate() {
            let t = pos.min(MAX_POSITION_TYPE) as u8;
            edges.push((parent, child, t));
            edges.push((child, parent, t + 5));
        }
    };
    for &t in &reach {
        let p = index[&t];
        connect(&mut edges, p, &mut bank.children(t).iter().map(|c| index[c]));
    }
    let mut extra_index = Vec::with_capacity(extras.len());
    for e in &extras {
        let p = nodes.len() as u32;
        extra_index.push(p);
        match e {
            Extra::Not(_) => nodes.push(Kind::Not.index() as u8),
            Extra::Or(_) => nodes.push(Kind::Or.index() as u8),
        }
        node_terms.push(None);
    }
    for (i, e) in extras.iter().enumerate() {
        let p = extra_index[i];
        match e {
            Extra::Not(atom) => connect(&mut edges, p, &mut std::iter::once(index[atom])),
            Extra::Or(lits) => {
                let kids: Vec<u32> = lits
                    .iter()
                    .map(|&(pos, atom)| match lit_node(bank, pos, atom) {
                        Some(t) => index[&t],
                        None => extra_index[extra_not[&atom]],
                    })
                    .collect();
                connect(&mut edges, p, &mut kids.into_iter());
            }
        }
    }

    let qe_nodes = quantified.iter().map(|qe| index[&qe.node]).collect();
    let var_nodes = quantified
        .iter()
        .map(|qe| qe.variables.iter().map(|v| index[v]).collect())
        .collect();
    let candidates = quantified
        .iter()
        .map(|qe| {
            qe.variables
                .iter()
                .map(|&v| {
                    bank.ground_terms_of_sort(bank.sort(v))
                        .iter()
                        .map(|t| index[t])
                        .collect()
                })
                .collect()
        })
        .collect();
    ExportedState {
        graph: ProofStateGraph {
            round,
            nodes,
            edges,
            qe_nodes,
            var_nodes,
            candidates,
        },
        node_terms,
        bank_len: bank.len(),
    }
}

/// Observer that exports the state at the start of every round.
#[derive(Default)]
pub struct GraphRecorder {
    pub states: Vec<ExportedState>,
}

impl SolveObserver for GraphRecorder {
    fn round_start(&mut self, ctx: &RoundContext<'_>) {
        self.states
            .push(export_graph(ctx.round, ctx.bank, ctx.quantified, ctx.ground));
    }
}

/// One labeled training example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub problem: String,
    pub round: usize,
    pub graph: ProofStateGraph,
    /// Per QE, 1 if some useful instantiation of it is available and not done.
    pub qe_labels: Vec<u8>,
    /// Per QE: for useful ones, the candidate index of the chosen term of each variable.
    pub term_labels: Vec<Option<Vec<u32>>>,
}

impl Transition {
    pub fn validate(&self) -> Result<(), String> {
        self.graph.validate()?;
        let q = self.graph.num_qes();
        if self.qe_labels.len() != q || self.term_labels.len() != q {
            return Err("label vectors do not match QE count".into());
        }
        for (i, (&l, tl)) in self.qe_labels.iter().zip(&self.term_labels).enumerate() {
            match (l, tl) {
                (0, None) => {}
                (1, Some(idx)) => {
                    let cands = &self.graph.candidates[i];
                    if idx.len() != cands.len() || idx.iter().zip(cands).any(|(&j, c)| j as usize >= c.len()) {
                        return Err(format!("term label of QE {i} out of bounds"));
                    }
                }
                _ => return Err(format!("inconsistent labels for QE {i}")),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("run ended with {0}, not PROVED")]
    NotProved(Status),
    #[error("expected one exported state per round ({rounds}), got {states}")]
    MissingStates { rounds: usize, states: usize },
}

/// Instantiations of a PROVED run needed for the refutation: those whose
/// instances are in the final core, then greedily pruned last-to-first
/// while the input plus the remaining instances stay unsatisfiable.
pub fn useful_instantiations(outcome: &SolveOutcome) -> Result<Vec<Instantiation>, LabelError> {
    if outcome.status != Status::Proved {
        return Err(LabelError::NotProved(outcome.status));
    }
    let state = &outcome.state;
    let flat: Vec<&Instantiation> = outcome.flat_trace().map(|(_, i)| i).collect();
    let core: BTreeSet<usize> = outcome.core.iter().flatten().copied().collect();
    let mut keep: Vec<usize> = (0..flat.len())
        .filter(|k| core.contains(&(state.input_len + k)))
        .collect();
    let input = &state.ground[..state.input_len];
    let unsat_with = |kept: &[usize]| {
        let mut clauses = input.to_vec();
        clauses.extend(kept.iter().map(|&k| state.ground[state.input_len + k].clone()));
        matches!(
            ground_sat_check(&state.bank, &clauses, GroundLimits::default()),
            Ok(GroundResult::Unsat { .. })
        )
    };
    let mut pos = keep.len();
    while pos > 0 {
        pos -= 1;
        let mut trial = keep.clone();
        trial.remove(pos);
        if unsat_with(&trial) {
            keep = trial;
        }
    }
    Ok(keep.into_iter().map(|k| flat[k].clone()).collect())
}

/// Labels every recorded round of a PROVED run. A QE is positive in a round
/// when one of its useful tuples is not yet done and all its terms already
/// exist; one such tuple is drawn uniformly as the term label.
pub fn label_transitions<R: Rng>(
    problem: &str,
    outcome: &SolveOutcome,
    states: &[ExportedState],
    rng: &mut R,
) -> Result<Vec<Transition>, LabelError> {
    let useful = useful_instantiations(outcome)?;
    if states.len() != outcome.rounds {
        return Err(LabelError::MissingStates {
            rounds: outcome.rounds,
            states: states.len(),
        });
    }
    // round in which each instantiation was performed
    let performed: HashMap<&Instantiation, usize> = outcome.flat_trace().map(|(r, i)| (i, r)).collect();
    let nq = outcome.state.quantified.len();
    let mut out = Vec::with_capacity(states.len());
    for (ri, st) in states.iter().enumerate() {
        let round = ri + 1;
        let mut qe_labels = vec![0u8; nq];
        let mut term_labels = vec![None; nq];
        for q in 0..nq {
            let open: Vec<&Instantiation> = useful
                .iter()
                .filter(|i| i.qe.index() == q)
                .filter(|i| performed.get(i).is_none_or(|&r| r >= round))
                .filter(|i| i.tuple.iter().all(|t| t.index() < st.bank_len))
                .collect();
            if open.is_empty() {
                continue;
            }
            let pick = open[rng.gen_range(0..open.len())];
            let idx = pick
                .tuple
                .iter()
                .enumerate()
                .map(|(v, &t)| st.candidate_index(q, v, t).expect("available terms are candidates") as u32)
                .collect();
            qe_labels[q] = 1;
            term_labels[q] = Some(idx);
        }
        out.push(Transition {
            problem: problem.to_string(),
            round,
            graph: st.graph.clone(),
            qe_labels,
            term_labels,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub kind_vocabulary: Vec<String>,
    pub edge_type_count: usize,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn new(seed: u64) -> Self {
        DatasetHeader {
            format_version: FORMAT_VERSION,
            kind_vocabulary: Kind::vocabulary(),
            edge_type_count: EDGE_TYPE_COUNT,
            seed,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported dataset format version {0}")]
    Version(u32),
    #[error("dataset vocabulary or edge types differ from this build")]
    Vocabulary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub transitions: Vec<Transition>,
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, transitions: &[Transition]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    let line = |v: serde_json::Result<String>| v.map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e));
    writeln!(w, "{}", line(serde_json::to_string(header))?)?;
    for t in transitions {
        writeln!(w, "{}", line(serde_json::to_string(t))?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or(DatasetError::Format {
        line: 1,
        msg: "missing header".into(),
    })??;
    let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| {
        // a header with the wrong version is reported as such
        match serde_json::from_str::<serde_json::Value>(&first)
            .ok()
            .and_then(|v| v.get("format_version").and_then(|x| x.as_u64()))
        {
            Some(v) if v != FORMAT_VERSION as u64 => DatasetError::Version(v as u32),
            _ => DatasetError::Format {
                line: 1,
                msg: e.to_string(),
            },
        }
    })?;
    if header.format_version != FORMAT_VERSION {
        return Err(DatasetError::Version(header.format_version));
    }
    if header.kind_vocabulary != Kind::vocabulary() || header.edge_type_count != EDGE_TYPE_COUNT {
        return Err(DatasetError::Vocabulary);
    }
    let mut transitions = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let t: Transition = serde_json::from_str(&l).map_err(|e| DatasetError::Format {
            line: i + 2,
            msg: e.to_string(),
        })?;
        t.validate().map_err(|msg| DatasetError::Format { line: i + 2, msg })?;
        transitions.push(t);
    }
    Ok(Dataset { header, transitions })
}
