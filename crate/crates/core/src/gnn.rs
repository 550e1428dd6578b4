//! Mean-max message passing over proof-state graphs, with a QE scoring head
//! and a variable-to-term head, trained by hand-derived backpropagation.
//!
//! Per layer every node `t` collects `s = x_src + e_type` over its incoming
//! edges and updates `x' = relu(W [mean(s); max(s)] + b) + x`. Nodes without
//! incoming edges aggregate to zero. All arithmetic is f64; weight files hold
//! f32.

use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terms::Kind;
use crate::trace::{ProofStateGraph, Transition, EDGE_TYPE_COUNT};

pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_LAYERS: usize = 10;
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("graph does not fit the model: {0}")]
    Dimension(String),
    #[error("variable {var} of QE {qe} has no candidate terms")]
    EmptyCandidates { qe: usize, var: usize },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("weight file format error: {0}")]
    Format(String),
    #[error("unsupported weight file version {0}")]
    Version(u32),
    #[error("weight shape mismatch: {0}")]
    Shape(String),
}

/// All trainable tensors in one flat vector. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams {
    pub k: usize,
    pub layers: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

impl GnnParams {
    pub fn tensors(k: usize, layers: usize) -> Vec<TensorInfo> {
        let t = |name: String, shape: Vec<usize>| TensorInfo { name, shape };
        let mut v = vec![
            t("kind_embeddings".into(), vec![Kind::COUNT, k]),
            t("edge_vectors".into(), vec![EDGE_TYPE_COUNT, k]),
        ];
        for i in 0..layers {
            v.push(t(format!("layer{i}.weight"), vec![k, 2 * k]));
            v.push(t(format!("layer{i}.bias"), vec![k]));
        }
        v.push(t("qe_head.weight".into(), vec![k]));
        v.push(t("qe_head.bias".into(), vec![1]));
        v.push(t("var_proj".into(), vec![k, k]));
        v.push(t("term_proj".into(), vec![k, k]));
        v
    }

    pub fn num_params(k: usize, layers: usize) -> usize {
        Self::tensors(k, layers).iter().map(TensorInfo::len).sum()
    }

    pub fn zeros(k: usize, layers: usize) -> Self {
        GnnParams {
            k,
            layers,
            data: vec![0.0; Self::num_params(k, layers)],
        }
    }

    /// Seeded initialization: embeddings and edge vectors uniform in
    /// (-0.1, 0.1), matrices Xavier-uniform, biases zero.
    pub fn init(k: usize, layers: usize, seed: u64) -> Self {
        let mut p = Self::zeros(k, layers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |p: &mut GnnParams, r: Range<usize>, lim: f64| {
            let u = Uniform::new(-lim, lim);
            for x in &mut p.data[r] {
                *x = u.sample(&mut rng);
            }
        };
        let xavier = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut spans = vec![(p.emb(), 0.1), (p.edge(), 0.1)];
        for i in 0..layers {
            spans.push((p.layer_w(i), xavier(2 * k, k)));
        }
        spans.push((p.qe_w(), xavier(k, 1)));
        spans.push((p.var_proj(), xavier(k, k)));
        spans.push((p.term_proj(), xavier(k, k)));
        for (r, lim) in spans {
            fill(&mut p, r, lim);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.k, self.layers)
    }

    fn layer_base(&self, i: usize) -> usize {
        (Kind::COUNT + EDGE_TYPE_COUNT) * self.k + i * (2 * self.k * self.k + self.k)
    }

    pub fn emb(&self) -> Range<usize> {
        0..Kind::COUNT * self.k
    }

    pub fn edge(&self) -> Range<usize> {
        let s = Kind::COUNT * self.k;
        s..s + EDGE_TYPE_COUNT * self.k
    }

    pub fn layer_w(&self, i: usize) -> Range<usize> {
        let s = self.layer_base(i);
        s..s + 2 * self.k * self.k
    }

    pub fn layer_b(&self, i: usize) -> Range<usize> {
        let s = self.layer_base(i) + 2 * self.k * self.k;
        s..s + self.k
    }

    pub fn qe_w(&self) -> Range<usize> {
        let s = self.layer_base(self.layers);
        s..s + self.k
    }

    pub fn qe_b(&self) -> usize {
        self.layer_base(self.layers) + self.k
    }

    pub fn var_proj(&self) -> Range<usize> {
        let s = self.qe_b() + 1;
        s..s + self.k * self.k
    }

    pub fn term_proj(&self) -> Range<usize> {
        let s = self.var_proj().end;
        s..s + self.k * self.k
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Writes the JSON manifest line followed by little-endian f32 data.
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = WeightManifest {
            format_version: WEIGHTS_FORMAT_VERSION,
            k: self.k,
            layers: self.layers,
            kind_vocabulary: Kind::vocabulary(),
            edge_type_count: EDGE_TYPE_COUNT,
            tensors: Self::tensors(self.k, self.layers),
        };
        let mut out = serde_json::to_vec(&manifest).expect("manifest serializes");
        out.push(b'\n');
        out.reserve(self.data.len() * 4);
        for &x in &self.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GnnError> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| GnnError::Format("missing manifest line".into()))?;
        let value: serde_json::Value =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| GnnError::Format(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == WEIGHTS_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(GnnError::Version(v as u32)),
            None => return Err(GnnError::Format("manifest lacks format_version".into())),
        }
        let m: WeightManifest = serde_json::from_value(value).map_err(|e| GnnError::Format(e.to_string()))?;
        if m.kind_vocabulary != Kind::vocabulary() || m.edge_type_count != EDGE_TYPE_COUNT {
            return Err(GnnError::Shape("kind vocabulary or edge types differ".into()));
        }
        let expected = Self::tensors(m.k, m.layers);
        if m.tensors != expected {
            return Err(GnnError::Shape(format!(
                "tensor index does not match K={} L={}",
                m.k, m.layers
            )));
        }
        let n = Self::num_params(m.k, m.layers);
        let body = &bytes[nl + 1..];
        if body.len() != 4 * n {
            return Err(GnnError::Format(format!(
                "expected {} bytes of weights, found {}",
                4 * n,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(GnnParams {
            k: m.k,
            layers: m.layers,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), GnnError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct WeightManifest {
    format_version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    layers: usize,
    kind_vocabulary: Vec<String>,
    edge_type_count: usize,
    tensors: Vec<TensorInfo>,
}

/// Incoming edges per destination, sources ascending.
struct Incoming {
    start: Vec<usize>,
    src: Vec<usize>,
    ty: Vec<usize>,
}

impl Incoming {
    fn new(g: &ProofStateGraph) -> Self {
        let n = g.num_nodes();
        let mut e: Vec<(usize, usize, usize)> = g
            .edges
            .iter()
            .map(|&(s, d, t)| (d as usize, s as usize, t as usize))
            .collect();
        e.sort_unstable();
        let mut start = vec![0; n + 1];
        for &(d, _, _) in &e {
            start[d + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        Incoming {
            start,
            src: e.iter().map(|x| x.1).collect(),
            ty: e.iter().map(|x| x.2).collect(),
        }
    }

    fn range(&self, n: usize) -> Range<usize> {
        self.start[n]..self.start[n + 1]
    }
}

struct LayerCache {
    h: Vec<f64>,
    z: Vec<f64>,
    // incoming-edge index of the max per (node, coordinate); usize::MAX if none
    arg: Vec<usize>,
}

/// Network outputs for one graph.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub qe_logits: Vec<f64>,
    pub qe_scores: Vec<f64>,
    /// Per QE, per variable, a distribution over that variable's candidates
    /// (empty where the candidate list is empty).
    pub term_probs: Vec<Vec<Vec<f64>>>,
    /// Final node embeddings, row-major `nodes x K`.
    pub embeddings: Vec<f64>,
}

struct Forward {
    pred: Prediction,
    cache: Vec<LayerCache>,
    vproj: Vec<f64>,
    tproj: Vec<f64>,
    incoming: Incoming,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `c (m x n) = a (m x k) * b`, with `b` given by strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the callers pass slices sized for the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_graph(p: &GnnParams, g: &ProofStateGraph) -> Result<(), GnnError> {
    g.validate().map_err(GnnError::Dimension)?;
    let _ = p;
    Ok(())
}

fn run_forward(p: &GnnParams, g: &ProofStateGraph, strict: bool) -> Result<Forward, GnnError> {
    check_graph(p, g)?;
    let k = p.k;
    let n = g.num_nodes();
    let incoming = Incoming::new(g);
    let mut x = vec![0.0; n * k];
    let emb = &p.data[p.emb()];
    for (i, &kind) in g.nodes.iter().enumerate() {
        let kind = kind as usize;
        x[i * k..(i + 1) * k].copy_from_slice(&emb[kind * k..(kind + 1) * k]);
    }
    let edge = &p.data[p.edge()];
    let mut cache = Vec::with_capacity(p.layers);
    for l in 0..p.layers {
        let mut h = vec![0.0; n * 2 * k];
        let mut arg = vec![usize::MAX; n * k];
        for t in 0..n {
            let r = incoming.range(t);
            if r.is_empty() {
                continue;
            }
            let inv = 1.0 / r.len() as f64;
            let (mean, max) = h[t * 2 * k..(t + 1) * 2 * k].split_at_mut(k);
            max.fill(f64::NEG_INFINITY);
            for j in r {
                let xs = &x[incoming.src[j] * k..(incoming.src[j] + 1) * k];
                let e = &edge[incoming.ty[j] * k..(incoming.ty[j] + 1) * k];
                for c in 0..k {
                    let s = xs[c] + e[c];
                    mean[c] += s;
                    if s > max[c] {
                        max[c] = s;
                        arg[t * k + c] = j;
                    }
                }
            }
            for v in mean.iter_mut() {
                *v *= inv;
            }
        }
        let w = &p.data[p.layer_w(l)];
        let b = &p.data[p.layer_b(l)];
        let mut z = vec![0.0; n * k];
        for row in z.chunks_exact_mut(k) {
            row.copy_from_slice(b);
        }
        // z = h W^T + b, W stored k x 2k
        gemm(n, 2 * k, k, &h, 2 * k as isize, 1, w, 1, 2 * k as isize, 1.0, &mut z);
        let mut nx = x.clone();
        for (o, &zi) in nx.iter_mut().zip(&z) {
            *o += zi.max(0.0);
        }
        cache.push(LayerCache { h, z, arg });
        x = nx;
    }

    let qw = &p.data[p.qe_w()];
    let qb = p.data[p.qe_b()];
    let qe_logits: Vec<f64> = g
        .qe_nodes
        .iter()
        .map(|&q| dot(qw, &x[q as usize * k..(q as usize + 1) * k]) + qb)
        .collect();
    let qe_scores = qe_logits.iter().map(|&z| sigmoid(z)).collect();

    // projections of every node: rows of X P^T
    let mut vproj = vec![0.0; n * k];
    let mut tproj = vec![0.0; n * k];
    gemm(
        n,
        k,
        k,
        &x,
        k as isize,
        1,
        &p.data[p.var_proj()],
        1,
        k as isize,
        0.0,
        &mut vproj,
    );
    gemm(
        n,
        k,
        k,
        &x,
        k as isize,
        1,
        &p.data[p.term_proj()],
        1,
        k as isize,
        0.0,
        &mut tproj,
    );
    let mut term_probs = Vec::with_capacity(g.num_qes());
    for (qi, (vars, cands)) in g.var_nodes.iter().zip(&g.candidates).enumerate() {
        let mut per_var = Vec::with_capacity(vars.len());
        for (vi, (&v, cs)) in vars.iter().zip(cands).enumerate() {
            if cs.is_empty() {
                if strict {
                    return Err(GnnError::EmptyCandidates { qe: qi, var: vi });
                }
                per_var.push(Vec::new());
                continue;
            }
            let u = &vproj[v as usize * k..(v as usize + 1) * k];
            let logits: Vec<f64> = cs
                .iter()
                .map(|&c| dot(u, &tproj[c as usize * k..(c as usize + 1) * k]))
                .collect();
            per_var.push(softmax(&logits));
        }
        term_probs.push(per_var);
    }
    Ok(Forward {
        pred: Prediction {
            qe_logits,
            qe_scores,
            term_probs,
            embeddings: x,
        },
        cache,
        vproj,
        tproj,
        incoming,
    })
}

/// Smallest distance of the forward pass from a point where it is not
/// differentiable: pre-activations near zero and near-ties in the max
/// (exact ties are ignored).
#[doc(hidden)]
pub fn nonsmooth_margin(p: &GnnParams, g: &ProofStateGraph) -> Result<f64, GnnError> {
    let f = run_forward(p, g, false)?;
    let k = p.k;
    let mut margin = f64::INFINITY;
    for lc in &f.cache {
        for &z in &lc.z {
            margin = margin.min(z.abs());
        }
    }
    // recompute the per-coordinate top-two gap
    let edge = &p.data[p.edge()];
    let mut x: Vec<f64> = Vec::new();
    let emb = &p.data[p.emb()];
    for &kind in &g.nodes {
        x.extend_from_slice(&emb[kind as usize * k..(kind as usize + 1) * k]);
    }
    for lc in &f.cache {
        for t in 0..g.num_nodes() {
            let r = f.incoming.range(t);
            for c in 0..k {
                let mut vals: Vec<f64> = r
                    .clone()
                    .map(|j| x[f.incoming.src[j] * k + c] + edge[f.incoming.ty[j] * k + c])
                    .collect();
                vals.sort_by(|a, b| b.total_cmp(a));
                if let Some(&second) = vals.iter().find(|&&v| v != vals[0]) {
                    margin = margin.min(vals[0] - second);
                }
            }
        }
        for (xi, &z) in x.iter_mut().zip(&lc.z) {
            *xi += z.max(0.0);
        }
    }
    Ok(margin)
}

/// Scores every QE and every variable's candidate terms.
pub fn forward(p: &GnnParams, g: &ProofStateGraph) -> Result<Prediction, GnnError> {
    run_forward(p, g, true).map(|f| f.pred)
}

/// As [`forward`], but variables without candidates get an empty
/// distribution instead of an error.
pub fn forward_lenient(p: &GnnParams, g: &ProofStateGraph) -> Result<Prediction, GnnError> {
    run_forward(p, g, false).map(|f| f.pred)
}

fn labeled_count(t: &Transition) -> usize {
    t.term_labels.iter().flatten().map(Vec::len).sum()
}

fn loss_of(pred: &Prediction, t: &Transition) -> f64 {
    let nq = pred.qe_logits.len();
    let mut bce = 0.0;
    for (&z, &y) in pred.qe_logits.iter().zip(&t.qe_labels) {
        // -(y ln s + (1-y) ln(1-s)) = softplus(z) - y z
        bce += softplus(z) - y as f64 * z;
    }
    if nq > 0 {
        bce /= nq as f64;
    }
    let nv = labeled_count(t);
    let mut ce = 0.0;
    for (q, lab) in t.term_labels.iter().enumerate() {
        if let Some(lab) = lab {
            for (v, &j) in lab.iter().enumerate() {
                ce -= pred.term_probs[q][v][j as usize].max(f64::MIN_POSITIVE).ln();
            }
        }
    }
    if nv > 0 {
        ce /= nv as f64;
    }
    bce + ce
}

fn check_labels(t: &Transition) -> Result<(), GnnError> {
    t.validate().map_err(GnnError::Dimension)
}

/// Mean BCE over QEs plus mean cross-entropy over labeled variables.
pub fn loss(p: &GnnParams, t: &Transition) -> Result<f64, GnnError> {
    check_labels(t)?;
    let f = run_forward(p, &t.graph, false)?;
    Ok(loss_of(&f.pred, t))
}

/// Loss times `weight` and its exact gradient.
pub fn loss_and_grad(p: &GnnParams, t: &Transition, weight: f64) -> Result<(f64, GnnParams), GnnError> {
    check_labels(t)?;
    let g = &t.graph;
    let fwd = run_forward(p, g, false)?;
    let k = p.k;
    let n = g.num_nodes();
    let mut grad = p.zeros_like();
    let mut dx = vec![0.0; n * k];
    let pred = &fwd.pred;

    let nq = pred.qe_logits.len();
    if nq > 0 {
        let qw = p.qe_w();
        let qb = p.qe_b();
        for (qi, &q) in g.qe_nodes.iter().enumerate() {
            let dz = weight * (pred.qe_scores[qi] - t.qe_labels[qi] as f64) / nq as f64;
            let q = q as usize;
            for c in 0..k {
                grad.data[qw.start + c] += dz * pred.embeddings[q * k + c];
                dx[q * k + c] += dz * p.data[qw.start + c];
            }
            grad.data[qb] += dz;
        }
    }

    let nv = labeled_count(t);
    if nv > 0 {
        // gradients w.r.t. projected rows, then pulled back through P
        let mut dv = vec![0.0; n * k];
        let mut dt = vec![0.0; n * k];
        for (q, lab) in t.term_labels.iter().enumerate() {
            let Some(lab) = lab else { continue };
            for (vi, &j) in lab.iter().enumerate() {
                let v = g.var_nodes[q][vi] as usize;
                let probs = &pred.term_probs[q][vi];
                let u = &fwd.vproj[v * k..(v + 1) * k];
                for (ci, &cnode) in g.candidates[q][vi].iter().enumerate() {
                    let gl = weight * (probs[ci] - if ci == j as usize { 1.0 } else { 0.0 }) / nv as f64;
                    let c = cnode as usize;
                    for d in 0..k {
                        dv[v * k + d] += gl * fwd.tproj[c * k + d];
                        dt[c * k + d] += gl * u[d];
                    }
                }
            }
        }
        let x = &pred.embeddings;
        // dP += dRows^T X ; dX += dRows P
        let pv = p.var_proj();
        let pt = p.term_proj();
        gemm(
            k,
            n,
            k,
            &dv,
            1,
            k as isize,
            x,
            k as isize,
            1,
            1.0,
            &mut grad.data[pv.clone()],
        );
        gemm(
            k,
            n,
            k,
            &dt,
            1,
            k as isize,
            x,
            k as isize,
            1,
            1.0,
            &mut grad.data[pt.clone()],
        );
        gemm(n, k, k, &dv, k as isize, 1, &p.data[pv], k as isize, 1, 1.0, &mut dx);
        gemm(n, k, k, &dt, k as isize, 1, &p.data[pt], k as isize, 1, 1.0, &mut dx);
    }

    let inc = &fwd.incoming;
    let edge = p.edge();
    for l in (0..p.layers).rev() {
        let lc = &fwd.cache[l];
        let dz: Vec<f64> = dx
            .iter()
            .zip(&lc.z)
            .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
            .collect();
        let wr = p.layer_w(l);
        let br = p.layer_b(l);
        for row in dz.chunks_exact(k) {
            for (gb, &d) in grad.data[br.clone()].iter_mut().zip(row) {
                *gb += d;
            }
        }
        // dW (k x 2k) += dZ^T H
        gemm(
            k,
            n,
            2 * k,
            &dz,
            1,
            k as isize,
            &lc.h,
            2 * k as isize,
            1,
            1.0,
            &mut grad.data[wr.clone()],
        );
        // dH (n x 2k) = dZ W ; dx keeps the residual term
        let mut dh = vec![0.0; n * 2 * k];
        gemm(
            n,
            k,
            2 * k,
            &dz,
            k as isize,
            1,
            &p.data[wr],
            2 * k as isize,
            1,
            0.0,
            &mut dh,
        );
        for t in 0..n {
            let r = inc.range(t);
            if r.is_empty() {
                continue;
            }
            let inv = 1.0 / r.len() as f64;
            let (dmean, dmax) = dh[t * 2 * k..(t + 1) * 2 * k].split_at(k);
            for j in r {
                let s = inc.src[j];
                let ty = inc.ty[j];
                for c in 0..k {
                    let mut ds = dmean[c] * inv;
                    if lc.arg[t * k + c] == j {
                        ds += dmax[c];
                    }
                    dx[s * k + c] += ds;
                    grad.data[edge.start + ty * k + c] += ds;
                }
            }
        }
    }
    let emb = p.emb();
    for (i, &kind) in g.nodes.iter().enumerate() {
        let base = emb.start + kind as usize * k;
        for c in 0..k {
            grad.data[base + c] += dx[i * k + c];
        }
    }
    Ok((weight * loss_of(pred, t), grad))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainLog {
    /// Mean loss of the sampled transitions, per iteration, before its updates.
    pub iteration_loss: Vec<f64>,
}

/// Per iteration, visits every problem once in shuffled order, samples one
/// of its transitions and takes an Adam step on it.
pub fn train(
    params: &mut GnnParams,
    transitions: &[Transition],
    iterations: usize,
    seed: u64,
    lr: f64,
) -> Result<TrainLog, GnnError> {
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, t) in transitions.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == t.problem) {
            Some(g) => g.1.push(i),
            None => groups.push((&t.problem, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(params.data.len(), lr);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    for _ in 0..iterations {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &gi in &order {
            let members = &groups[gi].1;
            let t = &transitions[members[rng.gen_range(0..members.len())]];
            let (l, g) = loss_and_grad(params, t, 1.0)?;
            total += l;
            adam.step(&mut params.data, &g.data);
        }
        log.iteration_loss.push(if order.is_empty() {
            0.0
        } else {
            total / order.len() as f64
        });
    }
    Ok(log)
}

/// Training-set metrics mirroring the usual report: term top-1 accuracy and
/// QE true-positive / true-negative rates at 0.5.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub term_top1: f64,
    pub qe_tpr: f64,
    pub qe_tnr: f64,
    pub mean_loss: f64,
    pub labeled_vars: usize,
    pub positive_qes: usize,
    pub negative_qes: usize,
}

impl Metrics {
    pub fn report(&self) -> String {
        format!(
            "term top-1 accuracy: {:.1}% ({} variables)\nuseful QEs scored above 0.5 (TPR): {:.1}% ({} QEs)\nuseless QEs scored at most 0.5 (TNR): {:.1}% ({} QEs)\ntop-1 / TPR / TNR: {:.1}% / {:.1}% / {:.1}%",
            100.0 * self.term_top1,
            self.labeled_vars,
            100.0 * self.qe_tpr,
            self.positive_qes,
            100.0 * self.qe_tnr,
            self.negative_qes,
            100.0 * self.term_top1,
            100.0 * self.qe_tpr,
            100.0 * self.qe_tnr
        )
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(params: &GnnParams, transitions: &[Transition]) -> Result<Metrics, GnnError> {
    let mut m = Metrics::default();
    let (mut hits, mut tp, mut tn, mut loss_sum) = (0usize, 0usize, 0usize, 0.0);
    for t in transitions {
        check_labels(t)?;
        let pred = forward_lenient(params, &t.graph)?;
        loss_sum += loss_of(&pred, t);
        for (q, (&y, &s)) in t.qe_labels.iter().zip(&pred.qe_scores).enumerate() {
            if y == 1 {
                m.positive_qes += 1;
                tp += (s > 0.5) as usize;
            } else {
                m.negative_qes += 1;
                tn += (s <= 0.5) as usize;
            }
            if let Some(lab) = &t.term_labels[q] {
                for (v, &j) in lab.iter().enumerate() {
                    m.labeled_vars += 1;
                    hits += (argmax(&pred.term_probs[q][v]) == j as usize) as usize;
                }
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    m.term_top1 = ratio(hits, m.labeled_vars);
    m.qe_tpr = ratio(tp, m.positive_qes);
    m.qe_tnr = ratio(tn, m.negative_qes);
    m.mean_loss = if transitions.is_empty() {
        0.0
    } else {
        loss_sum / transitions.len() as f64
    };
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_graph() -> ProofStateGraph {
        // forall x. p(x) over constants c, d: nodes c d x p(x) forall
        ProofStateGraph {
            round: 1,
            nodes: vec![2, 2, 1, 4, 8],
            edges: vec![(3, 2, 0), (2, 3, 5), (4, 2, 0), (2, 4, 5), (4, 3, 1), (3, 4, 6)],
            qe_nodes: vec![4],
            var_nodes: vec![vec![2]],
            candidates: vec![vec![vec![0, 1]]],
        }
    }

    fn tiny_transition() -> Transition {
        Transition {
            problem: "tiny".into(),
            round: 1,
            graph: tiny_graph(),
            qe_labels: vec![1],
            term_labels: vec![Some(vec![1])],
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let p = GnnParams::zeros(4, 3);
        assert_eq!(p.term_proj().end, p.data.len());
        assert_eq!(p.layer_w(1).start, p.layer_b(0).end);
    }

    #[test]
    fn uniform_prediction_losses() {
        let p = GnnParams::zeros(4, 2);
        let t = tiny_transition();
        // ln 2 for the QE plus ln 2 for two candidates
        let l = loss(&p, &t).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let pred = forward(&p, &t.graph).unwrap();
        assert_eq!(pred.qe_scores, vec![0.5]);
    }

    #[test]
    fn empty_candidates_are_reported() {
        let mut g = tiny_graph();
        g.candidates[0][0].clear();
        let p = GnnParams::init(4, 1, 0);
        assert!(matches!(
            forward(&p, &g),
            Err(GnnError::EmptyCandidates { qe: 0, var: 0 })
        ));
        assert!(forward_lenient(&p, &g).unwrap().term_probs[0][0].is_empty());
    }

    #[test]
    fn training_reduces_loss() {
        let mut p = GnnParams::init(8, 2, 1);
        let ts = vec![tiny_transition()];
        let before = loss(&p, &ts[0]).unwrap();
        train(&mut p, &ts, 300, 0, 1e-2).unwrap();
        assert!(loss(&p, &ts[0]).unwrap() < 0.5 * before);
    }

    #[test]
    fn zero_iterations_keep_init() {
        let mut p = GnnParams::init(8, 2, 3);
        let q = p.clone();
        let log = train(&mut p, &[tiny_transition()], 0, 0, DEFAULT_LEARNING_RATE).unwrap();
        assert!(log.iteration_loss.is_empty());
        assert_eq!(p, q);
    }

    #[test]
    fn weight_file_errors() {
        let p = GnnParams::init(4, 2, 0);
        let bytes = p.to_bytes();
        let back = GnnParams::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert!(matches!(
            GnnParams::from_bytes(&bytes[..bytes.len() - 3]),
            Err(GnnError::Format(_))
        ));
        let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).to_string();
        let mut bad = text.replace("\"K\":4", "\"K\":5").into_bytes();
        bad.push(b'\n');
        bad.extend_from_slice(&bytes[text.len() + 1..]);
        assert!(matches!(GnnParams::from_bytes(&bad), Err(GnnError::Shape(_))));
        let mut v2 = text
            .replace("\"format_version\":1", "\"format_version\":2")
            .into_bytes();
        v2.push(b'\n');
        assert!(matches!(GnnParams::from_bytes(&v2), Err(GnnError::Version(2))));
    }
}
