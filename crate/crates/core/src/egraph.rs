//! Congruence closure over ground terms.
//!
//! Union-find with per-class member and use lists plus a signature table, in
//! the style of Downey–Sethi–Tarjan. Predicate atoms are ordinary Bool-sorted
//! nodes: asserting `p(a)` merges it with the TRUE node, and TRUE/FALSE are
//! kept apart by a disequality, so congruence also propagates through
//! predicates. The graph is not backtrackable; callers clone a base graph.

use std::collections::HashMap;

use crate::terms::{Kind, Literal, SymbolId, TermBank, TermId};

/// Canonical representative of an e-class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(usize);

type Op = (Kind, Option<SymbolId>);

#[derive(Clone, Debug, Default)]
pub struct EGraph {
    index: HashMap<TermId, usize>,
    terms: Vec<TermId>,
    ops: Vec<Op>,
    args: Vec<Vec<usize>>,
    parent: Vec<usize>,
    members: Vec<Vec<usize>>,
    uses: Vec<Vec<usize>>,
    sigs: HashMap<(Op, Vec<usize>), usize>,
    by_symbol: HashMap<SymbolId, Vec<usize>>,
    diseqs: Vec<(usize, usize)>,
    truth: Option<(usize, usize)>,
    pending: Vec<(usize, usize)>,
}

impl EGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, t: TermId) -> bool {
        self.index.contains_key(&t)
    }

    /// All terms in insertion order.
    pub fn terms(&self) -> impl Iterator<Item = TermId> + '_ {
        self.terms.iter().copied().filter(|t| self.index.contains_key(t))
    }

    fn root(&self, mut n: usize) -> usize {
        while self.parent[n] != n {
            n = self.parent[n];
        }
        n
    }

    pub fn find(&self, t: TermId) -> Option<ClassId> {
        self.index.get(&t).map(|&n| ClassId(self.root(n)))
    }

    pub fn are_equal(&self, s: TermId, t: TermId) -> bool {
        matches!((self.find(s), self.find(t)), (Some(a), Some(b)) if a == b)
    }

    pub fn class_members(&self, class: ClassId) -> impl Iterator<Item = TermId> + '_ {
        self.members[class.0]
            .iter()
            .map(|&n| self.terms[n])
            .filter(|t| self.index.contains_key(t))
    }

    pub fn num_classes(&self) -> usize {
        (0..self.terms.len()).filter(|&n| self.parent[n] == n).count()
    }

    /// Terms whose head symbol is `sym`.
    pub fn terms_with_symbol(&self, sym: SymbolId) -> impl Iterator<Item = TermId> + '_ {
        self.by_symbol.get(&sym).into_iter().flatten().map(|&n| self.terms[n])
    }

    /// The class of an existing application `sym(c1..cn)` over the given
    /// argument classes, if one exists.
    pub fn lookup_app(&self, kind: Kind, sym: SymbolId, args: &[ClassId]) -> Option<ClassId> {
        let key = ((kind, Some(sym)), args.iter().map(|c| c.0).collect());
        self.sigs.get(&key).map(|&n| ClassId(self.root(n)))
    }

    /// Adds a ground term and all its subterms.
    pub fn add_term(&mut self, bank: &TermBank, t: TermId) -> ClassId {
        let n = self.add_node(bank, t);
        self.process_pending();
        ClassId(self.root(n))
    }

    fn add_node(&mut self, bank: &TermBank, t: TermId) -> usize {
        if let Some(&n) = self.index.get(&t) {
            return n;
        }
        debug_assert!(bank.is_ground(t), "only ground terms enter the e-graph");
        let node = bank.node(t);
        let children: Vec<usize> = node.children.iter().map(|&c| self.add_node(bank, c)).collect();
        let n = self.terms.len();
        let op = (node.kind, node.symbol);
        self.index.insert(t, n);
        self.terms.push(t);
        self.ops.push(op);
        self.parent.push(n);
        self.members.push(vec![n]);
        self.uses.push(Vec::new());
        if let Some(sym) = node.symbol {
            self.by_symbol.entry(sym).or_default().push(n);
        }
        if !children.is_empty() {
            let mut seen = Vec::with_capacity(children.len());
            for &c in &children {
                let r = self.root(c);
                if !seen.contains(&r) {
                    seen.push(r);
                    self.uses[r].push(n);
                }
            }
            let key = (op, seen_roots(self, &children));
            match self.sigs.get(&key) {
                Some(&other) => self.pending.push((n, other)),
                None => {
                    self.sigs.insert(key, n);
                }
            }
        }
        self.args.push(children);
        n
    }

    /// Merges the classes of `s` and `t` and restores congruence closure.
    pub fn assert_equal(&mut self, bank: &TermBank, s: TermId, t: TermId) {
        let a = self.add_node(bank, s);
        let b = self.add_node(bank, t);
        self.pending.push((a, b));
        self.process_pending();
    }

    /// Records that `s` and `t` must stay in different classes.
    pub fn assert_distinct(&mut self, bank: &TermBank, s: TermId, t: TermId) {
        let a = self.add_node(bank, s);
        let b = self.add_node(bank, t);
        self.process_pending();
        self.diseqs.push((a, b));
    }

    /// Makes sure TRUE and FALSE are present and kept apart.
    pub fn ensure_truth(&mut self, bank: &TermBank) {
        self.truth_nodes(bank);
    }

    fn truth_nodes(&mut self, bank: &TermBank) -> (usize, usize) {
        if let Some(tf) = self.truth {
            return tf;
        }
        let t = bank.lookup(Kind::True, None, &[]).map(|i| self.add_node(bank, i));
        let f = bank.lookup(Kind::False, None, &[]).map(|i| self.add_node(bank, i));
        let (t, f) = match (t, f) {
            (Some(t), Some(f)) => (t, f),
            // the bank lacks one of the constants; use private stand-ins that
            // never show up in `terms` or `class_members`
            (t, f) => (
                t.unwrap_or_else(|| self.fresh_leaf(Kind::True)),
                f.unwrap_or_else(|| self.fresh_leaf(Kind::False)),
            ),
        };
        self.diseqs.push((t, f));
        self.truth = Some((t, f));
        (t, f)
    }

    fn fresh_leaf(&mut self, kind: Kind) -> usize {
        let n = self.terms.len();
        self.terms.push(TermId(u32::MAX - kind.index() as u32));
        self.ops.push((kind, None));
        self.parent.push(n);
        self.members.push(vec![n]);
        self.uses.push(Vec::new());
        self.args.push(Vec::new());
        n
    }

    /// Asserts a ground literal: equalities merge or separate their sides,
    /// other atoms are merged with TRUE or FALSE.
    pub fn assert_literal(&mut self, bank: &TermBank, lit: Literal) {
        if bank.kind(lit.atom) == Kind::Equality {
            let (s, t) = (bank.children(lit.atom)[0], bank.children(lit.atom)[1]);
            if lit.positive {
                self.assert_equal(bank, s, t);
            } else {
                self.assert_distinct(bank, s, t);
            }
            return;
        }
        let (tn, fn_) = self.truth_nodes(bank);
        let a = self.add_node(bank, lit.atom);
        self.pending.push((a, if lit.positive { tn } else { fn_ }));
        self.process_pending();
    }

    /// False iff some asserted disequality (including TRUE ≠ FALSE) has been merged.
    pub fn is_consistent(&self) -> bool {
        self.diseqs.iter().all(|&(a, b)| self.root(a) != self.root(b))
    }

    fn process_pending(&mut self) {
        while let Some((a, b)) = self.pending.pop() {
            let (mut ra, mut rb) = (self.root(a), self.root(b));
            if ra == rb {
                continue;
            }
            if self.members[ra].len() < self.members[rb].len() {
                std::mem::swap(&mut ra, &mut rb);
            }
            // rb is absorbed into ra
            self.parent[rb] = ra;
            let moved = std::mem::take(&mut self.members[rb]);
            self.members[ra].extend(moved);
            let uses = std::mem::take(&mut self.uses[rb]);
            for &p in &uses {
                let key = (self.ops[p], seen_roots(self, &self.args[p]));
                match self.sigs.get(&key) {
                    Some(&q) if self.root(q) != self.root(p) => self.pending.push((p, q)),
                    Some(_) => {}
                    None => {
                        self.sigs.insert(key, p);
                    }
                }
            }
            self.uses[ra].extend(uses);
        }
    }
}

fn seen_roots(eg: &EGraph, children: &[usize]) -> Vec<usize> {
    children.iter().map(|&c| eg.root(c)).collect()
}

/// Adds `s` and `t` to the graph and merges their classes.
pub fn cc_assert_equality(eg: &mut EGraph, bank: &TermBank, s: TermId, t: TermId) {
    eg.assert_equal(bank, s, t);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::{Signature, BOOL_SORT};

    struct Fixture {
        bank: TermBank,
        a: TermId,
        b: TermId,
        fa: TermId,
        fb: TermId,
        ffa: TermId,
        pa: TermId,
        pb: TermId,
    }

    fn fixture() -> Fixture {
        let mut sig = Signature::default();
        let s = sig.declare_sort("S").unwrap();
        let a = sig.declare_symbol("a", vec![], s).unwrap();
        let b = sig.declare_symbol("b", vec![], s).unwrap();
        let f = sig.declare_symbol("f", vec![s], s).unwrap();
        let p = sig.declare_symbol("p", vec![s], BOOL_SORT).unwrap();
        let mut bank = TermBank::new(sig);
        let a = bank.mk_app(a, &[]).unwrap();
        let b = bank.mk_app(b, &[]).unwrap();
        let fa = bank.mk_app(f, &[a]).unwrap();
        let fb = bank.mk_app(f, &[b]).unwrap();
        let ffa = bank.mk_app(f, &[fa]).unwrap();
        let pa = bank.mk_app(p, &[a]).unwrap();
        let pb = bank.mk_app(p, &[b]).unwrap();
        Fixture {
            bank,
            a,
            b,
            fa,
            fb,
            ffa,
            pa,
            pb,
        }
    }

    #[test]
    fn congruence_after_merge() {
        let fx = fixture();
        let mut eg = EGraph::new();
        for t in [fx.fa, fx.fb, fx.ffa] {
            eg.add_term(&fx.bank, t);
        }
        assert!(!eg.are_equal(fx.fa, fx.fb));
        cc_assert_equality(&mut eg, &fx.bank, fx.a, fx.b);
        assert!(eg.are_equal(fx.fa, fx.fb));
        assert!(!eg.are_equal(fx.fa, fx.ffa));
        cc_assert_equality(&mut eg, &fx.bank, fx.a, fx.fa);
        // a = f(a) implies f(a) = f(f(a))
        assert!(eg.are_equal(fx.ffa, fx.b));
    }

    #[test]
    fn congruence_for_terms_added_after_merge() {
        let fx = fixture();
        let mut eg = EGraph::new();
        cc_assert_equality(&mut eg, &fx.bank, fx.a, fx.b);
        eg.add_term(&fx.bank, fx.fa);
        eg.add_term(&fx.bank, fx.fb);
        assert!(eg.are_equal(fx.fa, fx.fb));
    }

    #[test]
    fn self_equality_keeps_class_count() {
        let fx = fixture();
        let mut eg = EGraph::new();
        eg.add_term(&fx.bank, fx.ffa);
        let before = eg.num_classes();
        cc_assert_equality(&mut eg, &fx.bank, fx.fa, fx.fa);
        assert_eq!(eg.num_classes(), before);
    }

    #[test]
    fn find_is_idempotent() {
        let fx = fixture();
        let mut eg = EGraph::new();
        cc_assert_equality(&mut eg, &fx.bank, fx.fa, fx.b);
        let class = eg.find(fx.b).unwrap();
        let rep = eg.class_members(class).next().unwrap();
        assert_eq!(eg.find(rep), Some(class));
    }

    #[test]
    fn predicate_congruence_conflict() {
        let mut fx = fixture();
        fx.bank.mk_true();
        fx.bank.mk_false();
        let mut eg = EGraph::new();
        eg.assert_literal(&fx.bank, Literal::pos(fx.pa));
        eg.assert_literal(&fx.bank, Literal::neg(fx.pb));
        assert!(eg.is_consistent());
        cc_assert_equality(&mut eg, &fx.bank, fx.a, fx.b);
        assert!(!eg.is_consistent());
    }

    #[test]
    fn lookup_existing_application() {
        let fx = fixture();
        let mut eg = EGraph::new();
        eg.add_term(&fx.bank, fx.fa);
        let f = fx.bank.node(fx.fa).symbol.unwrap();
        let ca = eg.find(fx.a).unwrap();
        assert_eq!(eg.lookup_app(Kind::FunctionApply, f, &[ca]), eg.find(fx.fa));
        eg.add_term(&fx.bank, fx.b);
        let cb = eg.find(fx.b).unwrap();
        assert_eq!(eg.lookup_app(Kind::FunctionApply, f, &[cb]), None);
    }
}
