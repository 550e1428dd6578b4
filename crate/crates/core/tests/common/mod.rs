#![allow(dead_code)]

pub mod euf;

use instguide::gnn::{self, GnnParams};
use instguide::trace::{ProofStateGraph, Transition};
use instguide::Kind;
use rand::Rng;

/// Random well-formed graph: each node gets up to three children, QEs and
/// variables are random nodes, candidate lists are random and nonempty.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> ProofStateGraph {
    let nodes: Vec<u8> = (0..n).map(|_| rng.gen_range(0..Kind::COUNT) as u8).collect();
    let mut edges = Vec::new();
    for p in 0..n {
        let kids = rng.gen_range(0..=3);
        for pos in 0..kids {
            let c = rng.gen_range(0..n);
            // occasionally a far argument position to exercise the shared type
            let pos = if rng.gen_bool(0.15) { pos + 5 } else { pos };
            let t = pos.min(4) as u8;
            edges.push((p as u32, c as u32, t));
            edges.push((c as u32, p as u32, t + 5));
        }
    }
    let nq = rng.gen_range(1..=2);
    let mut qe_nodes = Vec::new();
    let mut var_nodes = Vec::new();
    let mut candidates = Vec::new();
    for _ in 0..nq {
        qe_nodes.push(rng.gen_range(0..n) as u32);
        let nv = rng.gen_range(1..=2);
        let vars: Vec<u32> = (0..nv).map(|_| rng.gen_range(0..n) as u32).collect();
        let cands = (0..nv)
            .map(|_| (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..n) as u32).collect())
            .collect();
        var_nodes.push(vars);
        candidates.push(cands);
    }
    ProofStateGraph {
        round: 1,
        nodes,
        edges,
        qe_nodes,
        var_nodes,
        candidates,
    }
}

pub fn random_transition<R: Rng>(rng: &mut R, n: usize) -> Transition {
    let graph = random_graph(rng, n);
    let mut qe_labels = Vec::new();
    let mut term_labels = Vec::new();
    for cands in &graph.candidates {
        if rng.gen_bool(0.6) {
            qe_labels.push(1);
            term_labels.push(Some(cands.iter().map(|c| rng.gen_range(0..c.len()) as u32).collect()));
        } else {
            qe_labels.push(0);
            term_labels.push(None);
        }
    }
    Transition {
        problem: "random".into(),
        round: 1,
        graph,
        qe_labels,
        term_labels,
    }
}

/// Every entry uniform in (-scale, scale), biases included.
pub fn random_params<R: Rng>(rng: &mut R, k: usize, layers: usize, scale: f64) -> GnnParams {
    let mut p = GnnParams::zeros(k, layers);
    for x in &mut p.data {
        *x = rng.gen_range(-scale..scale);
    }
    p
}

/// Worst relative error of the analytic gradient against central
/// differences, with `|a - b| / max(|a|, |b|, floor)` per coordinate.
pub fn gradient_check(p: &GnnParams, t: &Transition, step: f64, floor: f64) -> (f64, usize) {
    let (_, g) = gnn::loss_and_grad(p, t, 1.0).unwrap();
    let mut worst = (0.0, 0);
    let mut q = p.clone();
    for i in 0..p.data.len() {
        let orig = q.data[i];
        q.data[i] = orig + step;
        let up = gnn::loss(&q, t).unwrap();
        q.data[i] = orig - step;
        let down = gnn::loss(&q, t).unwrap();
        q.data[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let a = g.data[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    worst
}

/// Relabels nodes by `perm` (old index -> new index).
pub fn permute_graph(g: &ProofStateGraph, perm: &[usize]) -> ProofStateGraph {
    let m = |i: u32| perm[i as usize] as u32;
    let mut nodes = vec![0; g.nodes.len()];
    for (i, &k) in g.nodes.iter().enumerate() {
        nodes[perm[i]] = k;
    }
    ProofStateGraph {
        round: g.round,
        nodes,
        edges: g.edges.iter().map(|&(s, d, t)| (m(s), m(d), t)).collect(),
        qe_nodes: g.qe_nodes.iter().map(|&q| m(q)).collect(),
        var_nodes: g.var_nodes.iter().map(|v| v.iter().map(|&x| m(x)).collect()).collect(),
        candidates: g
            .candidates
            .iter()
            .map(|q| q.iter().map(|c| c.iter().map(|&x| m(x)).collect()).collect())
            .collect(),
    }
}
