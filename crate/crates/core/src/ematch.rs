//! E-matching: trigger selection and matching modulo an e-graph.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::egraph::{ClassId, EGraph};
use crate::engine::{DoneSet, Instantiation, InstantiationStrategy, RoundContext};
use crate::terms::{Kind, QeId, QuantifiedExpression, Substitution, TermBank, TermId};

/// Matches kept per QE per round.
pub const DEFAULT_MATCH_CAP: usize = 1000;

/// A single pattern or a multi-pattern jointly covering the QE variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trigger {
    pub qe: QeId,
    pub patterns: Vec<TermId>,
}

impl Trigger {
    pub fn is_multi(&self) -> bool {
        self.patterns.len() > 1
    }

    pub fn display(&self, bank: &TermBank) -> String {
        let ps: Vec<String> = self.patterns.iter().map(|&p| bank.display(p)).collect();
        format!("{{{}}}", ps.join(", "))
    }
}

fn is_app(kind: Kind) -> bool {
    matches!(kind, Kind::FunctionApply | Kind::PredicateApply)
}

/// Application subterms of the body that contain variables, with the
/// shallowest depth at which each occurs (atoms sit at depth 0).
fn pattern_candidates(bank: &TermBank, qe: &QuantifiedExpression) -> Vec<(TermId, usize)> {
    let mut depth: HashMap<TermId, usize> = HashMap::new();
    let mut order = Vec::new();
    let mut stack: Vec<(TermId, usize)> = qe.body.literals.iter().rev().map(|l| (l.atom, 0)).collect();
    while let Some((t, d)) = stack.pop() {
        if bank.is_ground(t) {
            continue;
        }
        if is_app(bank.kind(t)) {
            match depth.get_mut(&t) {
                Some(old) if *old <= d => continue,
                Some(old) => *old = d,
                None => {
                    depth.insert(t, d);
                    order.push(t);
                }
            }
        }
        for &c in bank.children(t).iter().rev() {
            stack.push((c, d + 1));
        }
    }
    order.into_iter().map(|t| (t, depth[&t])).collect()
}

/// Picks the triggers of a QE.
///
/// Single patterns covering every variable are preferred: among those, the
/// shallowest ones, and of these the tallest (so `p(f(x))` beats `lt(x, zero)`
/// and `f(x)`). Each such pattern is its own trigger. When no single pattern
/// covers, one multi-pattern is assembled greedily.
pub fn select_triggers(bank: &TermBank, qe: &QuantifiedExpression) -> Vec<Trigger> {
    let vars: BTreeSet<TermId> = qe.variables.iter().copied().collect();
    if vars.is_empty() {
        return Vec::new();
    }
    let cands: Vec<(TermId, usize, BTreeSet<TermId>)> = pattern_candidates(bank, qe)
        .into_iter()
        .map(|(t, d)| (t, d, bank.free_vars(t).into_iter().collect()))
        .collect();
    let covering: Vec<&(TermId, usize, BTreeSet<TermId>)> =
        cands.iter().filter(|(_, _, fv)| fv.is_superset(&vars)).collect();
    if let Some(min_d) = covering.iter().map(|c| c.1).min() {
        let shallow: Vec<TermId> = covering.iter().filter(|c| c.1 == min_d).map(|c| c.0).collect();
        let max_h = shallow.iter().map(|&t| bank.height(t)).max().unwrap_or(0);
        return shallow
            .into_iter()
            .filter(|&t| bank.height(t) == max_h)
            .map(|t| Trigger {
                qe: qe.id,
                patterns: vec![t],
            })
            .collect();
    }
    let mut covered = BTreeSet::new();
    let mut patterns = Vec::new();
    let mut pool: Vec<&(TermId, usize, BTreeSet<TermId>)> = cands.iter().collect();
    while covered != vars {
        // most new variables first, then shallowest, then first occurring
        let best = pool
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.2.difference(&covered).count(), c.1))
            .filter(|&(_, gain, _)| gain > 0)
            .min_by_key(|&(i, gain, d)| (std::cmp::Reverse(gain), d, i));
        let Some((i, _, _)) = best else {
            // some variable occurs only under equality at top level
            return Vec::new();
        };
        let c = pool.remove(i);
        covered.extend(c.2.iter().copied());
        patterns.push(c.0);
    }
    vec![Trigger { qe: qe.id, patterns }]
}

struct Matcher<'a> {
    bank: &'a TermBank,
    eg: &'a EGraph,
}

impl Matcher<'_> {
    /// All extensions of `sub` under which `pat` lies in `class`.
    fn match_class(
        &self,
        pat: TermId,
        class: ClassId,
        sub: &HashMap<TermId, TermId>,
        out: &mut Vec<HashMap<TermId, TermId>>,
    ) {
        let node = self.bank.node(pat);
        if node.kind == Kind::BoundVariable {
            match sub.get(&pat) {
                Some(&t) => {
                    if self.eg.find(t) == Some(class) {
                        out.push(sub.clone());
                    }
                }
                None => {
                    for m in self.eg.class_members(class) {
                        if self.bank.sort(m) == node.sort {
                            let mut s = sub.clone();
                            s.insert(pat, m);
                            out.push(s);
                        }
                    }
                }
            }
            return;
        }
        for m in self.eg.class_members(class) {
            let mn = self.bank.node(m);
            if mn.kind != node.kind || mn.symbol != node.symbol || mn.children.len() != node.children.len() {
                continue;
            }
            let mut partial = vec![sub.clone()];
            for (&pc, &mc) in node.children.iter().zip(&mn.children) {
                let cc = self.eg.find(mc).expect("children of e-graph terms are in the e-graph");
                let mut next = Vec::new();
                for s in &partial {
                    self.match_class(pc, cc, s, &mut next);
                }
                partial = next;
                if partial.is_empty() {
                    break;
                }
            }
            out.extend(partial);
        }
    }

    fn root_classes(&self, pat: TermId) -> Vec<ClassId> {
        let node = self.bank.node(pat);
        let Some(sym) = node.symbol else {
            return Vec::new();
        };
        let mut seen = HashSet::new();
        self.eg
            .terms_with_symbol(sym)
            .filter_map(|t| self.eg.find(t))
            .filter(|c| seen.insert(*c))
            .collect()
    }
}

/// Every substitution, over terms of `eg`, that makes each pattern of the
/// trigger congruent to an existing term. Tuples follow `qe.variables`.
pub fn ematch(trigger: &Trigger, qe: &QuantifiedExpression, eg: &EGraph, bank: &TermBank) -> Vec<Substitution> {
    let m = Matcher { bank, eg };
    let mut subs = vec![HashMap::new()];
    for &pat in &trigger.patterns {
        let roots = m.root_classes(pat);
        let mut next = Vec::new();
        for s in &subs {
            for &c in &roots {
                m.match_class(pat, c, s, &mut next);
            }
        }
        subs = next;
        if subs.is_empty() {
            break;
        }
    }
    let mut tuples: Vec<Vec<TermId>> = subs
        .into_iter()
        .filter_map(|s| qe.variables.iter().map(|v| s.get(v).copied()).collect())
        .collect();
    tuples.sort();
    tuples.dedup();
    tuples
        .into_iter()
        .map(|t| Substitution::from_tuple(&qe.variables, &t))
        .collect()
}

/// New matches of all triggers of all QEs, at most `cap` per QE.
pub fn ematch_round(
    qes: &[QuantifiedExpression],
    triggers: &[Vec<Trigger>],
    eg: &EGraph,
    bank: &TermBank,
    done: &DoneSet,
    cap: usize,
) -> Vec<Instantiation> {
    let mut out = Vec::new();
    for (qe, trigs) in qes.iter().zip(triggers) {
        let mut tuples = BTreeSet::new();
        for t in trigs {
            for s in ematch(t, qe, eg, bank) {
                let tuple = s.tuple(&qe.variables).expect("matches bind every variable");
                if !done.contains(qe.id, &tuple) {
                    tuples.insert(tuple);
                }
            }
        }
        out.extend(tuples.into_iter().take(cap).map(|t| Instantiation::new(qe.id, t)));
    }
    out
}

/// E-matching instantiation with cached triggers.
#[derive(Clone, Debug)]
pub struct EmatchStrategy {
    pub cap: usize,
    triggers: Option<Vec<Vec<Trigger>>>,
}

impl Default for EmatchStrategy {
    fn default() -> Self {
        EmatchStrategy {
            cap: DEFAULT_MATCH_CAP,
            triggers: None,
        }
    }
}

impl InstantiationStrategy for EmatchStrategy {
    fn name(&self) -> String {
        "ematch".into()
    }

    fn instantiate(&mut self, ctx: &RoundContext<'_>) -> Vec<Instantiation> {
        let triggers = self
            .triggers
            .get_or_insert_with(|| ctx.quantified.iter().map(|qe| select_triggers(ctx.bank, qe)).collect());
        ematch_round(ctx.quantified, triggers, ctx.egraph, ctx.bank, ctx.done, self.cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{solve_loop, Limits, NoObserver, Status};
    use crate::parser::{parse_native, Problem};

    fn triggers_of(src: &str) -> (Problem, Vec<String>) {
        let p = parse_native(src).unwrap();
        let ts = select_triggers(&p.bank, &p.quantified[0])
            .iter()
            .map(|t| t.display(&p.bank))
            .collect();
        (p, ts)
    }

    const LT: &str = "(declare-sort S) (declare-fun zero () S) (declare-fun a () S) (declare-fun n17 () S)
        (declare-fun f (S) S) (declare-fun p (S) Bool) (declare-fun lt (S S) Bool)";

    #[test]
    fn picks_predicate_level_pattern() {
        let (_, ts) = triggers_of(&format!(
            "{LT} (assert-forall ((x S)) (or (not (p (f x))) (lt x zero)))"
        ));
        assert_eq!(ts, vec!["{(p (f x))}"]);
    }

    #[test]
    fn whole_atom_over_inner_term() {
        let (_, ts) = triggers_of(
            "(declare-sort S) (declare-fun f (S) S) (declare-fun q (S) Bool)
             (assert-forall ((x S)) (q (f x)))",
        );
        assert_eq!(ts, vec!["{(q (f x))}"]);
    }

    #[test]
    fn multi_pattern_when_nothing_covers() {
        let (_, ts) = triggers_of(
            "(declare-sort S) (declare-fun r (S) Bool) (declare-fun s (S) Bool)
             (assert-forall ((x S) (y S)) (or (r x) (s y)))",
        );
        assert_eq!(ts, vec!["{(r x), (s y)}"]);
    }

    #[test]
    fn no_trigger_without_applications() {
        let (_, ts) = triggers_of(
            "(declare-sort S) (declare-fun c () S)
             (assert-forall ((x S)) (= x c))",
        );
        assert!(ts.is_empty());
    }

    #[test]
    fn matches_modulo_equality() {
        let p = parse_native(&format!(
            "{LT} (assert (= a (f n17))) (assert (p a)) (assert (not (lt n17 zero)))
             (assert-forall ((x S)) (or (not (p (f x))) (lt x zero)))"
        ))
        .unwrap();
        let out = solve_loop(&p, &mut EmatchStrategy::default(), Limits::default(), &mut NoObserver);
        assert_eq!(out.status, Status::Proved);
        assert_eq!(out.rounds, 1);
        assert_eq!(out.trace[0].len(), 1);
        assert_eq!(out.state.bank.display(out.trace[0][0].tuple[0]), "n17");
    }

    #[test]
    fn empty_egraph_matches_nothing() {
        let (p, _) = triggers_of(
            "(declare-sort S) (declare-fun f (S) S) (declare-fun q (S) Bool)
             (assert-forall ((x S)) (q (f x)))",
        );
        let t = select_triggers(&p.bank, &p.quantified[0]);
        assert!(ematch(&t[0], &p.quantified[0], &EGraph::new(), &p.bank).is_empty());
    }

    #[test]
    fn three_matches_in_one_round() {
        let p = parse_native(
            "(declare-sort S) (declare-fun c1 () S) (declare-fun c2 () S) (declare-fun c3 () S)
             (declare-fun g (S) S) (declare-fun q (S) Bool) (declare-fun r (S) Bool)
             (assert (q (g c1))) (assert (q (g c2))) (assert (q (g c3)))
             (assert-forall ((x S)) (or (not (q (g x))) (r x)))",
        )
        .unwrap();
        let out = solve_loop(&p, &mut EmatchStrategy::default(), Limits::rounds(1), &mut NoObserver);
        assert_eq!(out.trace[0].len(), 3);
        // a second round finds nothing new
        let out = solve_loop(&p, &mut EmatchStrategy::default(), Limits::default(), &mut NoObserver);
        assert_eq!(out.status, Status::GaveUp);
        assert_eq!(out.instantiation_count(), 3);
    }
}
