//! Brute-force EUF reference: naive congruence closure, truth-table
//! satisfiability and bottom-up pattern evaluation, all over a private term
//! representation that shares nothing with the library.

use std::collections::HashMap;
use std::fmt::Write;

use instguide::{Clause, Kind, TermBank, TermId};
use rand::seq::SliceRandom;
use rand::Rng;

pub const DECLS: &str = "(declare-sort S) (declare-fun a () S) (declare-fun b () S) (declare-fun c () S)
(declare-fun f (S) S) (declare-fun g (S S) S) (declare-fun p (S) Bool) (declare-fun r (S) Bool)\n";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub sym: String,
    pub args: Vec<usize>,
}

/// Subterm-closed set of ground terms; arguments always precede their parents.
#[derive(Clone, Debug, Default)]
pub struct Universe {
    pub nodes: Vec<Node>,
    index: HashMap<Node, usize>,
}

impl Universe {
    pub fn intern(&mut self, sym: &str, args: Vec<usize>) -> usize {
        let n = Node {
            sym: sym.to_string(),
            args,
        };
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        self.nodes.push(n.clone());
        self.index.insert(n, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    /// Constants `a`, `b`, `c` and random `f`/`g` applications, `size` terms of sort S in all.
    pub fn random<R: Rng>(rng: &mut R, size: usize) -> Self {
        let mut u = Universe::default();
        for k in ["a", "b", "c"] {
            u.intern(k, vec![]);
        }
        let mut guard = 0;
        while u.sort_s().count() < size && guard < 1000 {
            guard += 1;
            let s: Vec<usize> = u.sort_s().collect();
            let x = *s.choose(rng).unwrap();
            if rng.gen_bool(0.5) {
                u.intern("f", vec![x]);
            } else {
                let y = *s.choose(rng).unwrap();
                u.intern("g", vec![x, y]);
            }
        }
        u
    }

    /// Terms of sort S, excluding predicate applications.
    pub fn sort_s(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| !matches!(self.nodes[i].sym.as_str(), "p" | "r"))
    }

    pub fn render(&self, i: usize) -> String {
        let n = &self.nodes[i];
        if n.args.is_empty() {
            return n.sym.clone();
        }
        let args: Vec<String> = n.args.iter().map(|&a| self.render(a)).collect();
        format!("({} {})", n.sym, args.join(" "))
    }

    /// Class representative of every node after merging `eqs` and closing
    /// under congruence by repeated pairwise comparison.
    pub fn closure(&self, eqs: &[(usize, usize)]) -> Vec<usize> {
        let mut rep: Vec<usize> = (0..self.nodes.len()).collect();
        let merge = |rep: &mut Vec<usize>, x: usize, y: usize| {
            let (rx, ry) = (rep[x], rep[y]);
            if rx != ry {
                for r in rep.iter_mut() {
                    if *r == ry {
                        *r = rx;
                    }
                }
            }
        };
        for &(x, y) in eqs {
            merge(&mut rep, x, y);
        }
        loop {
            let mut changed = false;
            for i in 0..self.nodes.len() {
                for j in i + 1..self.nodes.len() {
                    let (ni, nj) = (&self.nodes[i], &self.nodes[j]);
                    if rep[i] != rep[j]
                        && !ni.args.is_empty()
                        && ni.sym == nj.sym
                        && ni.args.len() == nj.args.len()
                        && ni.args.iter().zip(&nj.args).all(|(&x, &y)| rep[x] == rep[y])
                    {
                        merge(&mut rep, i, j);
                        changed = true;
                    }
                }
            }
            if !changed {
                return rep;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Atom {
    Eq(usize, usize),
    /// Index of a `p(t)` node.
    P(usize),
}

/// Ground clause set over a universe; literals are `(atom index, polarity)`.
#[derive(Clone, Debug)]
pub struct EufProblem {
    pub u: Universe,
    pub atoms: Vec<Atom>,
    pub clauses: Vec<Vec<(usize, bool)>>,
}

impl EufProblem {
    /// At most `max_atoms` atoms and `max_terms` ground terms, predicate atoms included.
    pub fn random<R: Rng>(rng: &mut R, max_atoms: usize, max_terms: usize) -> Self {
        let n_atoms = rng.gen_range(1..=max_atoms);
        let size = rng.gen_range(3..=max_terms - n_atoms);
        let mut u = Universe::random(rng, size);
        let s: Vec<usize> = u.sort_s().collect();
        let mut atoms = Vec::new();
        let mut guard = 0;
        while atoms.len() < n_atoms && guard < 100 {
            guard += 1;
            let x = *s.choose(rng).unwrap();
            let atom = if rng.gen_bool(0.6) {
                let y = *s.choose(rng).unwrap();
                if x == y {
                    continue;
                }
                Atom::Eq(x.min(y), x.max(y))
            } else {
                Atom::P(u.intern("p", vec![x]))
            };
            if !atoms.contains(&atom) {
                atoms.push(atom);
            }
        }
        let clauses = (0..rng.gen_range(1..=7))
            .map(|_| {
                (0..rng.gen_range(1..=3))
                    .map(|_| (rng.gen_range(0..atoms.len()), rng.gen_bool(0.5)))
                    .collect()
            })
            .collect();
        EufProblem { u, atoms, clauses }
    }

    fn render_atom(&self, a: usize) -> String {
        match self.atoms[a] {
            Atom::Eq(x, y) => format!("(= {} {})", self.u.render(x), self.u.render(y)),
            Atom::P(i) => self.u.render(i),
        }
    }

    pub fn to_native(&self) -> String {
        let mut s = String::from(DECLS);
        for c in &self.clauses {
            let lits: Vec<String> = c
                .iter()
                .map(|&(a, pos)| {
                    if pos {
                        self.render_atom(a)
                    } else {
                        format!("(not {})", self.render_atom(a))
                    }
                })
                .collect();
            writeln!(s, "(assert (or {}))", lits.join(" ")).unwrap();
        }
        s
    }

    /// Whether `values` (one per atom) is consistent modulo congruence.
    pub fn consistent(&self, values: &[bool]) -> bool {
        let eqs: Vec<(usize, usize)> = self
            .atoms
            .iter()
            .zip(values)
            .filter_map(|(a, &v)| match a {
                Atom::Eq(x, y) if v => Some((*x, *y)),
                _ => None,
            })
            .collect();
        let rep = self.u.closure(&eqs);
        for (a, &v) in self.atoms.iter().zip(values) {
            if let Atom::Eq(x, y) = a {
                if !v && rep[*x] == rep[*y] {
                    return false;
                }
            }
        }
        for (i, (a, &v)) in self.atoms.iter().zip(values).enumerate() {
            for (b, &w) in self.atoms.iter().zip(values).skip(i + 1) {
                if let (Atom::P(x), Atom::P(y)) = (a, b) {
                    if rep[*x] == rep[*y] && v != w {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Satisfiability by enumerating every assignment of the atoms.
    pub fn brute_force_sat(&self) -> bool {
        let n = self.atoms.len();
        (0u32..1 << n).any(|mask| {
            let values: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            self.clauses.iter().all(|c| c.iter().any(|&(a, pos)| values[a] == pos)) && self.consistent(&values)
        })
    }
}

/// Trigger pattern over variables `x` (0) and `y` (1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pat {
    Var(usize),
    App(&'static str, Vec<Pat>),
}

impl Pat {
    pub fn render(&self) -> String {
        match self {
            Pat::Var(0) => "x".into(),
            Pat::Var(_) => "y".into(),
            Pat::App(s, args) if args.is_empty() => s.to_string(),
            Pat::App(s, args) => {
                let a: Vec<String> = args.iter().map(Pat::render).collect();
                format!("({} {})", s, a.join(" "))
            }
        }
    }

    pub fn has_var(&self, v: usize) -> bool {
        match self {
            Pat::Var(w) => *w == v,
            Pat::App(_, args) => args.iter().any(|a| a.has_var(v)),
        }
    }

    /// Random `f`/`g` pattern of depth 1 to `max_depth` mentioning variable `v`.
    pub fn random<R: Rng>(rng: &mut R, v: usize, max_depth: usize) -> Self {
        loop {
            let depth = rng.gen_range(1..=max_depth);
            let p = Self::gen(rng, v, depth);
            if p.has_var(v) {
                return p;
            }
        }
    }

    fn gen<R: Rng>(rng: &mut R, v: usize, depth: usize) -> Self {
        let leaf = |rng: &mut R| {
            if rng.gen_bool(0.7) {
                Pat::Var(v)
            } else {
                Pat::App(["a", "b", "c"][rng.gen_range(0..3)], vec![])
            }
        };
        let arg = |rng: &mut R| {
            if depth > 1 && rng.gen_bool(0.5) {
                Self::gen(rng, v, depth - 1)
            } else {
                leaf(rng)
            }
        };
        if rng.gen_bool(0.5) {
            Pat::App("f", vec![arg(rng)])
        } else {
            Pat::App("g", vec![arg(rng), arg(rng)])
        }
    }

    /// Class of the instantiated pattern among existing terms, if some
    /// existing term is congruent to it.
    pub fn eval(&self, u: &Universe, rep: &[usize], tuple: &[usize]) -> Option<usize> {
        match self {
            Pat::Var(v) => Some(rep[tuple[*v]]),
            Pat::App(s, args) => {
                let cls: Vec<usize> = args.iter().map(|a| a.eval(u, rep, tuple)).collect::<Option<_>>()?;
                u.nodes
                    .iter()
                    .enumerate()
                    .find(|(_, n)| {
                        n.sym == *s && n.args.len() == cls.len() && n.args.iter().zip(&cls).all(|(&a, &c)| rep[a] == c)
                    })
                    .map(|(i, _)| rep[i])
            }
        }
    }
}

/// Every tuple over the S terms of `u` under which all patterns evaluate.
pub fn brute_force_matches(u: &Universe, rep: &[usize], pats: &[Pat], nvars: usize) -> Vec<Vec<usize>> {
    let s: Vec<usize> = u.sort_s().collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; nvars];
    loop {
        let tuple: Vec<usize> = idx.iter().map(|&i| s[i]).collect();
        if pats.iter().all(|p| p.eval(u, rep, &tuple).is_some()) {
            out.push(tuple);
        }
        let mut k = nvars;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < s.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Re-expresses ground clauses of a bank over a fresh universe, so that the
/// brute-force check can judge solver output.
pub fn from_bank(bank: &TermBank, clauses: &[Clause]) -> EufProblem {
    fn term(bank: &TermBank, u: &mut Universe, t: TermId) -> usize {
        let args: Vec<usize> = bank.children(t).iter().map(|&c| term(bank, u, c)).collect();
        let name = &bank
            .signature()
            .decl(bank.node(t).symbol.expect("applications carry symbols"))
            .name;
        u.intern(name, args)
    }
    let mut u = Universe::default();
    let mut atoms: Vec<Atom> = Vec::new();
    let mut out = Vec::new();
    for c in clauses {
        let mut lits = Vec::new();
        for l in &c.literals {
            let atom = match bank.kind(l.atom) {
                Kind::Equality => {
                    let ch = bank.children(l.atom);
                    let (x, y) = (term(bank, &mut u, ch[0]), term(bank, &mut u, ch[1]));
                    Atom::Eq(x.min(y), x.max(y))
                }
                _ => Atom::P(term(bank, &mut u, l.atom)),
            };
            let i = atoms.iter().position(|a| *a == atom).unwrap_or_else(|| {
                atoms.push(atom);
                atoms.len() - 1
            });
            lits.push((i, l.positive));
        }
        out.push(lits);
    }
    EufProblem { u, atoms, clauses: out }
}
