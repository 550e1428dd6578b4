//! Instantiation guided by network scores.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Instantiation, InstantiationStrategy, RoundContext};
use crate::enumerate::{candidate_lists, enum_round, first_fresh_tuple};
use crate::gnn::{forward_lenient, GnnParams, Prediction};
use crate::terms::TermId;
use crate::trace::{export_graph, ExportedState};

pub const DEFAULT_THRESHOLD: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuidanceMode {
    DryRun,
    RandomizedDryRun,
    QSampling,
    Threshold,
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidanceMode::DryRun => "dry-run",
            GuidanceMode::RandomizedDryRun => "random-dry-run",
            GuidanceMode::QSampling => "qsampling",
            GuidanceMode::Threshold => "threshold",
        })
    }
}

impl FromStr for GuidanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "dry-run" => GuidanceMode::DryRun,
            "random-dry-run" => GuidanceMode::RandomizedDryRun,
            "qsampling" => GuidanceMode::QSampling,
            "threshold" => GuidanceMode::Threshold,
            other => return Err(format!("unknown guidance mode {other:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    pub threshold: f64,
    pub max_inst_per_qe: usize,
    pub seed: u64,
}

impl GuidanceConfig {
    pub fn new(mode: GuidanceMode) -> Self {
        GuidanceConfig {
            mode,
            threshold: DEFAULT_THRESHOLD,
            max_inst_per_qe: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!("threshold {} is outside [0, 1]", self.threshold));
        }
        if self.max_inst_per_qe == 0 {
            return Err("max_inst_per_qe must be at least 1".into());
        }
        Ok(())
    }
}

/// Indices of the QEs to instantiate this round.
pub fn select_qes<R: Rng>(scores: &[f64], config: &GuidanceConfig, rng: &mut R) -> Vec<usize> {
    match config.mode {
        GuidanceMode::DryRun | GuidanceMode::RandomizedDryRun => (0..scores.len()).collect(),
        GuidanceMode::QSampling => scores
            .iter()
            .enumerate()
            .filter(|&(_, &s)| rng.gen::<f64>() < s)
            .map(|(i, _)| i)
            .collect(),
        GuidanceMode::Threshold => scores
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s >= config.threshold)
            .map(|(i, _)| i)
            .collect(),
    }
}

#[derive(PartialEq)]
struct Entry {
    score: f64,
    tuple: Vec<usize>,
    pos: Vec<usize>,
}

impl Eq for Entry {}

impl Ord for Entry {
    // max-heap: higher score first, then lexicographically smaller tuple
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.tuple.cmp(&self.tuple))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Up to `k` candidate-index tuples, not done, in descending order of the
/// product of per-variable probabilities; equal scores are ordered by
/// candidate index, lexicographically.
pub fn rank_tuples(dists: &[Vec<f64>], is_done: impl Fn(&[usize]) -> bool, k: usize) -> Vec<(Vec<usize>, f64)> {
    if k == 0 || dists.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let order: Vec<Vec<usize>> = dists
        .iter()
        .map(|d| {
            let mut o: Vec<usize> = (0..d.len()).collect();
            o.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
            o
        })
        .collect();
    let entry = |pos: Vec<usize>| {
        let tuple: Vec<usize> = pos.iter().zip(&order).map(|(&p, o)| o[p]).collect();
        let score = tuple.iter().zip(dists).map(|(&i, d)| d[i]).product();
        Entry { score, tuple, pos }
    };
    let mut heap = BinaryHeap::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let root = vec![0; dists.len()];
    seen.insert(root.clone());
    heap.push(entry(root));
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    while let Some(e) = heap.pop() {
        // once k are found, only ties with the k-th score can still enter
        if out.len() >= k && e.score < out[k - 1].1 {
            break;
        }
        for v in 0..e.pos.len() {
            if e.pos[v] + 1 < order[v].len() {
                let mut next = e.pos.clone();
                next[v] += 1;
                if seen.insert(next.clone()) {
                    heap.push(entry(next));
                }
            }
        }
        if !is_done(&e.tuple) {
            out.push((e.tuple, e.score));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(k);
    out
}

/// Guided or dry-run instantiation on top of the enumerative strategy.
pub struct GuidedStrategy {
    pub config: GuidanceConfig,
    params: Option<Arc<GnnParams>>,
    rng: ChaCha8Rng,
    gnn_time: Duration,
}

impl GuidedStrategy {
    /// `params` may be omitted for the dry-run modes, which then skip the
    /// network evaluation.
    pub fn new(config: GuidanceConfig, params: Option<Arc<GnnParams>>) -> Result<Self, String> {
        config.validate()?;
        if params.is_none() && matches!(config.mode, GuidanceMode::QSampling | GuidanceMode::Threshold) {
            return Err(format!("mode {} needs network weights", config.mode));
        }
        Ok(GuidedStrategy {
            config,
            params,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            gnn_time: Duration::ZERO,
        })
    }

    fn predict(&mut self, ctx: &RoundContext<'_>) -> Option<(ExportedState, Prediction)> {
        let params = self.params.clone()?;
        let start = Instant::now();
        let state = export_graph(ctx.round, ctx.bank, ctx.quantified, ctx.ground);
        let pred = forward_lenient(&params, &state.graph).expect("exported graphs are well-formed");
        self.gnn_time += start.elapsed();
        Some((state, pred))
    }
}

impl InstantiationStrategy for GuidedStrategy {
    fn name(&self) -> String {
        self.config.mode.to_string()
    }

    fn instantiate(&mut self, ctx: &RoundContext<'_>) -> Vec<Instantiation> {
        let prediction = self.predict(ctx);
        match self.config.mode {
            GuidanceMode::DryRun => enum_round(ctx.quantified, ctx.bank, ctx.done),
            GuidanceMode::RandomizedDryRun => ctx
                .quantified
                .iter()
                .filter_map(|qe| {
                    let mut lists = candidate_lists(qe, ctx.bank);
                    for l in &mut lists {
                        l.shuffle(&mut self.rng);
                    }
                    first_fresh_tuple(qe, &lists, ctx.done).map(|t| Instantiation::new(qe.id, t))
                })
                .collect(),
            GuidanceMode::QSampling | GuidanceMode::Threshold => {
                let (state, pred) = prediction.expect("guided modes have weights");
                let selected = select_qes(&pred.qe_scores, &self.config, &mut self.rng);
                let mut out = Vec::new();
                for q in selected {
                    let qe = &ctx.quantified[q];
                    let cands = &state.graph.candidates[q];
                    if cands.iter().any(Vec::is_empty) {
                        continue;
                    }
                    let to_terms = |idx: &[usize]| -> Vec<TermId> {
                        idx.iter()
                            .zip(cands)
                            .map(|(&i, c)| state.node_terms[c[i] as usize].expect("candidates are bank terms"))
                            .collect()
                    };
                    let ranked = rank_tuples(
                        &pred.term_probs[q],
                        |idx| ctx.done.contains(qe.id, &to_terms(idx)),
                        self.config.max_inst_per_qe,
                    );
                    out.extend(
                        ranked
                            .into_iter()
                            .map(|(idx, _)| Instantiation::new(qe.id, to_terms(&idx))),
                    );
                }
                out
            }
        }
    }

    fn guidance_time(&self) -> Duration {
        self.gnn_time
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_selection() {
        let cfg = GuidanceConfig::new(GuidanceMode::Threshold);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_qes(&[0.9, 2e-5, 1e-6], &cfg, &mut rng), vec![0, 1]);
    }

    #[test]
    fn qsampling_extremes() {
        let cfg = GuidanceConfig::new(GuidanceMode::QSampling);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(select_qes(&[1.0, 0.0], &cfg, &mut rng), vec![0]);
        }
    }

    #[test]
    fn top_two_products() {
        let d = vec![vec![0.9, 0.1], vec![0.6, 0.4]];
        let r = rank_tuples(&d, |_| false, 2);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].0, vec![0, 0]);
        assert!((r[0].1 - 0.54).abs() < 1e-12);
        assert_eq!(r[1].0, vec![0, 1]);
        assert!((r[1].1 - 0.36).abs() < 1e-12);
    }

    #[test]
    fn single_variable_argmax_and_exhaustion() {
        let d = vec![vec![0.2, 0.5, 0.3]];
        assert_eq!(rank_tuples(&d, |_| false, 1)[0].0, vec![1]);
        assert!(rank_tuples(&d, |_| true, 3).is_empty());
        // done tuples are skipped, not counted
        assert_eq!(rank_tuples(&d, |t| t == [1], 1)[0].0, vec![2]);
    }

    #[test]
    fn ties_follow_candidate_index() {
        let d = vec![vec![0.25; 4], vec![0.5, 0.5]];
        let r: Vec<Vec<usize>> = rank_tuples(&d, |_| false, 3).into_iter().map(|x| x.0).collect();
        assert_eq!(r, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn guided_modes_need_weights() {
        assert!(GuidedStrategy::new(GuidanceConfig::new(GuidanceMode::Threshold), None).is_err());
        assert!(GuidedStrategy::new(GuidanceConfig::new(GuidanceMode::DryRun), None).is_ok());
        let mut bad = GuidanceConfig::new(GuidanceMode::DryRun);
        bad.max_inst_per_qe = 0;
        assert!(bad.validate().is_err());
    }
}
