//! Hash-consed term bank, signatures, clauses and quantified expressions.
//!
//! Every expression the prover touches lives in a [`TermBank`] and is referred
//! to by a dense [`TermId`]. Structurally identical nodes share one id, and
//! each node carries an age taken from a single monotone counter, so terms
//! from the parsed input are always older than terms created by instantiation.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(
    /// Handle of a node in a [`TermBank`].
    TermId
);
id_type!(SortId);
id_type!(SymbolId);

/// Node kinds. The order of this list fixes the embedding rows of the GNN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    /// Free (non-bound) variable. Clausal input never produces it; it is kept
    /// in the vocabulary so embedding tables stay stable.
    Variable,
    BoundVariable,
    Constant,
    FunctionApply,
    PredicateApply,
    Equality,
    Not,
    Or,
    Forall,
    True,
    False,
}

impl Kind {
    pub const ALL: [Kind; 11] = [
        Kind::Variable,
        Kind::BoundVariable,
        Kind::Constant,
        Kind::FunctionApply,
        Kind::PredicateApply,
        Kind::Equality,
        Kind::Not,
        Kind::Or,
        Kind::Forall,
        Kind::True,
        Kind::False,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Variable => "VARIABLE",
            Kind::BoundVariable => "BOUND_VARIABLE",
            Kind::Constant => "CONSTANT",
            Kind::FunctionApply => "FUNCTION_APPLY",
            Kind::PredicateApply => "PREDICATE_APPLY",
            Kind::Equality => "EQUALITY",
            Kind::Not => "NOT",
            Kind::Or => "OR",
            Kind::Forall => "FORALL",
            Kind::True => "TRUE",
            Kind::False => "FALSE",
        }
    }

    pub fn vocabulary() -> Vec<String> {
        Self::ALL.iter().map(|k| k.name().to_string()).collect()
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("symbol `{symbol}` expects {expected} arguments, got {found}")]
    Arity {
        symbol: String,
        expected: usize,
        found: usize,
    },
    #[error("sort mismatch: expected `{expected}`, found `{found}` ({context})")]
    Sort {
        expected: String,
        found: String,
        context: String,
    },
    #[error("malformed {kind} node: {reason}")]
    Malformed { kind: Kind, reason: String },
    #[error("variable {0:?} is not mapped by the substitution")]
    Unmapped(TermId),
    #[error("substitution image {0:?} is not ground")]
    NonGround(TermId),
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
}

/// Declared symbol: argument sorts and result sort. Predicates return the
/// builtin Bool sort.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolDecl {
    pub name: String,
    pub args: Vec<SortId>,
    pub result: SortId,
}

impl SymbolDecl {
    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

/// Sorts and symbols of a problem. Sort 0 is always the builtin `Bool`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    sorts: Vec<String>,
    sort_index: HashMap<String, SortId>,
    symbols: Vec<SymbolDecl>,
    symbol_index: HashMap<String, SymbolId>,
}

pub const BOOL_SORT: SortId = SortId(0);

impl Default for Signature {
    fn default() -> Self {
        let mut sig = Signature {
            sorts: Vec::new(),
            sort_index: HashMap::new(),
            symbols: Vec::new(),
            symbol_index: HashMap::new(),
        };
        sig.sorts.push("Bool".to_string());
        sig.sort_index.insert("Bool".to_string(), BOOL_SORT);
        sig
    }
}

impl Signature {
    pub fn declare_sort(&mut self, name: &str) -> Result<SortId, TermError> {
        if self.sort_index.contains_key(name) {
            return Err(TermError::Duplicate(name.to_string()));
        }
        let id = SortId(self.sorts.len() as u32);
        self.sorts.push(name.to_string());
        self.sort_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn declare_symbol(&mut self, name: &str, args: Vec<SortId>, result: SortId) -> Result<SymbolId, TermError> {
        if self.symbol_index.contains_key(name) {
            return Err(TermError::Duplicate(name.to_string()));
        }
        let id = SymbolId(self.symbols.len() as u32);
        self.symbols.push(SymbolDecl {
            name: name.to_string(),
            args,
            result,
        });
        self.symbol_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn sort(&self, name: &str) -> Option<SortId> {
        self.sort_index.get(name).copied()
    }

    pub fn sort_name(&self, sort: SortId) -> &str {
        &self.sorts[sort.index()]
    }

    /// User-declared sorts, excluding Bool.
    pub fn user_sorts(&self) -> impl Iterator<Item = SortId> + '_ {
        (1..self.sorts.len()).map(|i| SortId(i as u32))
    }

    pub fn symbol(&self, name: &str) -> Option<SymbolId> {
        self.symbol_index.get(name).copied()
    }

    pub fn decl(&self, symbol: SymbolId) -> &SymbolDecl {
        &self.symbols[symbol.index()]
    }

    pub fn symbols(&self) -> impl Iterator<Item = (SymbolId, &SymbolDecl)> {
        self.symbols.iter().enumerate().map(|(i, d)| (SymbolId(i as u32), d))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermNode {
    pub kind: Kind,
    pub symbol: Option<SymbolId>,
    pub children: Vec<TermId>,
    pub sort: SortId,
    pub age: u64,
    pub ground: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct NodeKey {
    kind: Kind,
    symbol: Option<SymbolId>,
    children: Vec<TermId>,
    // distinguishes bound variables, which are never shared
    var: Option<u32>,
}

/// The bank of all nodes of one problem instance.
#[derive(Clone, Debug)]
pub struct TermBank {
    sig: Signature,
    nodes: Vec<TermNode>,
    intern: HashMap<NodeKey, TermId>,
    var_names: HashMap<TermId, String>,
    // ground non-Bool terms per sort, in creation (= age) order
    by_sort: HashMap<SortId, Vec<TermId>>,
    next_age: u64,
}

impl TermBank {
    pub fn new(sig: Signature) -> Self {
        TermBank {
            sig,
            nodes: Vec::new(),
            intern: HashMap::new(),
            var_names: HashMap::new(),
            by_sort: HashMap::new(),
            next_age: 0,
        }
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn signature_mut(&mut self) -> &mut Signature {
        &mut self.sig
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: TermId) -> &TermNode {
        &self.nodes[id.index()]
    }

    pub fn kind(&self, id: TermId) -> Kind {
        self.node(id).kind
    }

    pub fn sort(&self, id: TermId) -> SortId {
        self.node(id).sort
    }

    pub fn age(&self, id: TermId) -> u64 {
        self.node(id).age
    }

    pub fn is_ground(&self, id: TermId) -> bool {
        self.node(id).ground
    }

    pub fn children(&self, id: TermId) -> &[TermId] {
        &self.node(id).children
    }

    pub fn ids(&self) -> impl Iterator<Item = TermId> {
        (0..self.nodes.len()).map(|i| TermId(i as u32))
    }

    pub fn var_name(&self, var: TermId) -> Option<&str> {
        self.var_names.get(&var).map(String::as_str)
    }

    fn push(&mut self, key: NodeKey, sort: SortId, ground: bool) -> TermId {
        let id = TermId(self.nodes.len() as u32);
        let kind = key.kind;
        self.nodes.push(TermNode {
            kind,
            symbol: key.symbol,
            children: key.children.clone(),
            sort,
            age: self.next_age,
            ground,
        });
        self.next_age += 1;
        if ground && matches!(kind, Kind::Constant | Kind::FunctionApply) {
            self.by_sort.entry(sort).or_default().push(id);
        }
        self.intern.insert(key, id);
        id
    }

    /// Creates a fresh bound variable. Bound variables are never shared, so
    /// two quantified expressions never alias each other's variables.
    pub fn mk_bound_var(&mut self, name: &str, sort: SortId) -> TermId {
        let key = NodeKey {
            kind: Kind::BoundVariable,
            symbol: None,
            children: Vec::new(),
            var: Some(self.nodes.len() as u32),
        };
        let id = self.push(key, sort, false);
        self.var_names.insert(id, name.to_string());
        id
    }

    /// Interns a node, returning the existing handle when the same structure
    /// is already present.
    pub fn mk_term(&mut self, kind: Kind, symbol: Option<SymbolId>, children: &[TermId]) -> Result<TermId, TermError> {
        let malformed = |reason: &str| TermError::Malformed {
            kind,
            reason: reason.to_string(),
        };
        let sort = match kind {
            Kind::Variable | Kind::BoundVariable => {
                return Err(malformed("variables are created with mk_bound_var"));
            }
            Kind::Constant | Kind::FunctionApply | Kind::PredicateApply => {
                let sym = symbol.ok_or_else(|| malformed("missing symbol"))?;
                let decl = self.sig.decl(sym);
                if decl.arity() != children.len() {
                    return Err(TermError::Arity {
                        symbol: decl.name.clone(),
                        expected: decl.arity(),
                        found: children.len(),
                    });
                }
                let is_pred = decl.result == BOOL_SORT;
                let expected_kind = match (decl.arity(), is_pred) {
                    (_, true) => Kind::PredicateApply,
                    (0, false) => Kind::Constant,
                    (_, false) => Kind::FunctionApply,
                };
                if kind != expected_kind {
                    return Err(malformed(&format!(
                        "`{}` must be built as {}",
                        decl.name, expected_kind
                    )));
                }
                for (i, (&child, &want)) in children.iter().zip(&decl.args).enumerate() {
                    let found = self.sort(child);
                    if found != want {
                        return Err(TermError::Sort {
                            expected: self.sig.sort_name(want).to_string(),
                            found: self.sig.sort_name(found).to_string(),
                            context: format!("argument {} of `{}`", i + 1, decl.name),
                        });
                    }
                }
                decl.result
            }
            Kind::Equality => {
                if children.len() != 2 {
                    return Err(malformed("equality takes two children"));
                }
                let (a, b) = (self.sort(children[0]), self.sort(children[1]));
                if a != b || a == BOOL_SORT {
                    return Err(TermError::Sort {
                        expected: self.sig.sort_name(a).to_string(),
                        found: self.sig.sort_name(b).to_string(),
                        context: "equality".to_string(),
                    });
                }
                BOOL_SORT
            }
            Kind::Not => {
                if children.len() != 1 || self.sort(children[0]) != BOOL_SORT {
                    return Err(malformed("negation takes one Bool child"));
                }
                BOOL_SORT
            }
            Kind::Or => {
                if children.iter().any(|&c| self.sort(c) != BOOL_SORT) {
                    return Err(malformed("disjuncts must be Bool"));
                }
                BOOL_SORT
            }
            Kind::Forall => {
                let Some((&body, vars)) = children.split_last() else {
                    return Err(malformed("forall needs a body"));
                };
                if vars.iter().any(|&v| self.kind(v) != Kind::BoundVariable) {
                    return Err(malformed("binder list must hold bound variables"));
                }
                if self.sort(body) != BOOL_SORT {
                    return Err(malformed("body must be Bool"));
                }
                BOOL_SORT
            }
            Kind::True | Kind::False => {
                if !children.is_empty() {
                    return Err(malformed("constants take no children"));
                }
                BOOL_SORT
            }
        };
        let takes_symbol = matches!(kind, Kind::Constant | Kind::FunctionApply | Kind::PredicateApply);
        if !takes_symbol && symbol.is_some() {
            return Err(malformed("unexpected symbol"));
        }
        let key = NodeKey {
            kind,
            symbol,
            children: children.to_vec(),
            var: None,
        };
        if let Some(&id) = self.intern.get(&key) {
            return Ok(id);
        }
        let ground = match kind {
            // a closed quantified formula has no free variables but is not a
            // candidate term either
            Kind::Forall => true,
            _ => children.iter().all(|&c| self.is_ground(c)),
        };
        Ok(self.push(key, sort, ground))
    }

    /// The id of an already interned node, without creating it.
    pub fn lookup(&self, kind: Kind, symbol: Option<SymbolId>, children: &[TermId]) -> Option<TermId> {
        self.intern
            .get(&NodeKey {
                kind,
                symbol,
                children: children.to_vec(),
                var: None,
            })
            .copied()
    }

    pub fn mk_app(&mut self, symbol: SymbolId, args: &[TermId]) -> Result<TermId, TermError> {
        let decl = self.sig.decl(symbol);
        let kind = if decl.result == BOOL_SORT {
            Kind::PredicateApply
        } else if decl.args.is_empty() {
            Kind::Constant
        } else {
            Kind::FunctionApply
        };
        self.mk_term(kind, Some(symbol), args)
    }

    pub fn mk_true(&mut self) -> TermId {
        self.mk_term(Kind::True, None, &[]).expect("TRUE is well-formed")
    }

    pub fn mk_false(&mut self) -> TermId {
        self.mk_term(Kind::False, None, &[]).expect("FALSE is well-formed")
    }

    /// Ground terms of `sort` in ascending age. Only constants and function
    /// applications count; atoms and clause structure live in Bool.
    pub fn ground_terms_of_sort(&self, sort: SortId) -> &[TermId] {
        self.by_sort.get(&sort).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Bound variables occurring in `t`, in first-occurrence order.
    pub fn free_vars(&self, t: TermId) -> Vec<TermId> {
        let mut out = Vec::new();
        self.collect_vars(t, &mut out);
        out
    }

    fn collect_vars(&self, t: TermId, out: &mut Vec<TermId>) {
        let node = self.node(t);
        if node.ground {
            return;
        }
        if node.kind == Kind::BoundVariable {
            if !out.contains(&t) {
                out.push(t);
            }
            return;
        }
        for &c in &node.children {
            self.collect_vars(c, out);
        }
    }

    /// Height of the term tree; leaves have height 0.
    pub fn height(&self, t: TermId) -> usize {
        self.children(t).iter().map(|&c| self.height(c) + 1).max().unwrap_or(0)
    }

    /// Simultaneously replaces bound variables according to `map`, interning
    /// every new node. Variables not in `map` are left in place.
    pub fn substitute(&mut self, t: TermId, map: &HashMap<TermId, TermId>) -> Result<TermId, TermError> {
        let node = self.node(t);
        if node.ground {
            return Ok(t);
        }
        if node.kind == Kind::BoundVariable {
            return Ok(map.get(&t).copied().unwrap_or(t));
        }
        let (kind, symbol) = (node.kind, node.symbol);
        let children = node.children.clone();
        let mut new_children = Vec::with_capacity(children.len());
        for c in children {
            new_children.push(self.substitute(c, map)?);
        }
        self.mk_term(kind, symbol, &new_children)
    }

    /// Interns the OR node for a clause.
    pub fn clause_term(&mut self, clause: &Clause) -> Result<TermId, TermError> {
        let mut lits = Vec::with_capacity(clause.literals.len());
        for lit in &clause.literals {
            lits.push(if lit.positive {
                lit.atom
            } else {
                self.mk_term(Kind::Not, None, &[lit.atom])?
            });
        }
        self.mk_term(Kind::Or, None, &lits)
    }

    pub fn display(&self, t: TermId) -> String {
        let mut s = String::new();
        self.write_term(t, &mut s);
        s
    }

    fn write_term(&self, t: TermId, out: &mut String) {
        let node = self.node(t);
        let name = |sym: Option<SymbolId>| sym.map(|s| self.sig.decl(s).name.as_str());
        match node.kind {
            Kind::BoundVariable | Kind::Variable => {
                out.push_str(self.var_name(t).unwrap_or("?"));
            }
            Kind::Constant => out.push_str(name(node.symbol).unwrap_or("?")),
            Kind::True => out.push_str("true"),
            Kind::False => out.push_str("false"),
            _ => {
                let head = match node.kind {
                    Kind::FunctionApply | Kind::PredicateApply => name(node.symbol).unwrap_or("?").to_string(),
                    Kind::Equality => "=".to_string(),
                    Kind::Not => "not".to_string(),
                    Kind::Or => "or".to_string(),
                    _ => "forall".to_string(),
                };
                out.push('(');
                out.push_str(&head);
                for &c in &node.children {
                    out.push(' ');
                    self.write_term(c, out);
                }
                out.push(')');
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub positive: bool,
    pub atom: TermId,
}

impl Literal {
    pub fn pos(atom: TermId) -> Self {
        Literal { positive: true, atom }
    }

    pub fn neg(atom: TermId) -> Self {
        Literal { positive: false, atom }
    }
}

/// Disjunction of literals over PREDICATE_APPLY, EQUALITY, TRUE or FALSE atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Clause {
    pub literals: Vec<Literal>,
}

impl Clause {
    pub fn new(literals: Vec<Literal>) -> Self {
        Clause { literals }
    }

    pub fn is_ground(&self, bank: &TermBank) -> bool {
        self.literals.iter().all(|l| bank.is_ground(l.atom))
    }

    pub fn display(&self, bank: &TermBank) -> String {
        let lits: Vec<String> = self
            .literals
            .iter()
            .map(|l| {
                if l.positive {
                    bank.display(l.atom)
                } else {
                    format!("(not {})", bank.display(l.atom))
                }
            })
            .collect();
        format!("(or {})", lits.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QeId(pub u32);

impl QeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A universally quantified clause asserted at top level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantifiedExpression {
    pub id: QeId,
    pub variables: Vec<TermId>,
    pub body: Clause,
    /// The FORALL node `(forall v1 .. vn body)`.
    pub node: TermId,
}

impl QuantifiedExpression {
    /// Builds a QE, checking that the binder list covers every variable in the body.
    pub fn new(bank: &mut TermBank, id: QeId, variables: Vec<TermId>, body: Clause) -> Result<Self, TermError> {
        for lit in &body.literals {
            for v in bank.free_vars(lit.atom) {
                if !variables.contains(&v) {
                    return Err(TermError::Malformed {
                        kind: Kind::Forall,
                        reason: format!("variable {} is not bound", bank.display(v)),
                    });
                }
            }
        }
        let body_term = bank.clause_term(&body)?;
        let mut children = variables.clone();
        children.push(body_term);
        let node = bank.mk_term(Kind::Forall, None, &children)?;
        Ok(QuantifiedExpression {
            id,
            variables,
            body,
            node,
        })
    }

    pub fn variable_sorts(&self, bank: &TermBank) -> Vec<SortId> {
        self.variables.iter().map(|&v| bank.sort(v)).collect()
    }

    /// Instantiates the body with a tuple aligned to `variables`.
    pub fn instantiate(&self, bank: &mut TermBank, tuple: &[TermId]) -> Result<Clause, TermError> {
        let sub = Substitution::from_tuple(&self.variables, tuple);
        apply_substitution(bank, self, &sub)
    }
}

/// Mapping from bound variables to ground terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution {
    pub map: HashMap<TermId, TermId>,
}

impl Substitution {
    pub fn from_tuple(vars: &[TermId], tuple: &[TermId]) -> Self {
        Substitution {
            map: vars.iter().copied().zip(tuple.iter().copied()).collect(),
        }
    }

    pub fn get(&self, var: TermId) -> Option<TermId> {
        self.map.get(&var).copied()
    }

    /// The images of `vars` in order, if all are mapped.
    pub fn tuple(&self, vars: &[TermId]) -> Option<Vec<TermId>> {
        vars.iter().map(|v| self.get(*v)).collect()
    }
}

/// Ground instance of `qe` under `sub`. All variables must be mapped to
/// ground terms of the same sort.
pub fn apply_substitution(
    bank: &mut TermBank,
    qe: &QuantifiedExpression,
    sub: &Substitution,
) -> Result<Clause, TermError> {
    for &v in &qe.variables {
        let image = sub.get(v).ok_or(TermError::Unmapped(v))?;
        if !bank.is_ground(image) {
            return Err(TermError::NonGround(image));
        }
        if bank.sort(image) != bank.sort(v) {
            return Err(TermError::Sort {
                expected: bank.signature().sort_name(bank.sort(v)).to_string(),
                found: bank.signature().sort_name(bank.sort(image)).to_string(),
                context: format!("image of {}", bank.display(v)),
            });
        }
    }
    let mut literals = Vec::with_capacity(qe.body.literals.len());
    for lit in &qe.body.literals {
        literals.push(Literal {
            positive: lit.positive,
            atom: bank.substitute(lit.atom, &sub.map)?,
        });
    }
    Ok(Clause::new(literals))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> (TermBank, SortId, SymbolId, SymbolId, SymbolId, SymbolId) {
        let mut sig = Signature::default();
        let s = sig.declare_sort("S").unwrap();
        let c = sig.declare_symbol("c", vec![], s).unwrap();
        let d = sig.declare_symbol("d", vec![], s).unwrap();
        let f = sig.declare_symbol("f", vec![s], s).unwrap();
        let q = sig.declare_symbol("q", vec![s], BOOL_SORT).unwrap();
        (TermBank::new(sig), s, c, d, f, q)
    }

    #[test]
    fn hash_consing_returns_same_handle() {
        let (mut b, _, c, _, f, _) = bank();
        let c1 = b.mk_app(c, &[]).unwrap();
        let fc1 = b.mk_app(f, &[c1]).unwrap();
        let c2 = b.mk_app(c, &[]).unwrap();
        let fc2 = b.mk_term(Kind::FunctionApply, Some(f), &[c2]).unwrap();
        assert_eq!(fc1, fc2);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let (mut b, _, c, d, f, _) = bank();
        let c = b.mk_app(c, &[]).unwrap();
        let d = b.mk_app(d, &[]).unwrap();
        let err = b.mk_term(Kind::FunctionApply, Some(f), &[c, d]).unwrap_err();
        assert!(matches!(
            err,
            TermError::Arity {
                expected: 1,
                found: 2,
                ..
            }
        ));
    }

    #[test]
    fn sort_mismatch_is_rejected() {
        let (mut b, _, c, _, f, q) = bank();
        let c = b.mk_app(c, &[]).unwrap();
        let qc = b.mk_app(q, &[c]).unwrap();
        assert!(matches!(b.mk_app(f, &[qc]), Err(TermError::Sort { .. })));
    }

    #[test]
    fn proliferation_creates_inner_subterm() {
        let (mut b, s, c, _, f, q) = bank();
        let x = b.mk_bound_var("x", s);
        let fx = b.mk_app(f, &[x]).unwrap();
        let ffx = b.mk_app(f, &[fx]).unwrap();
        let atom = b.mk_app(q, &[ffx]).unwrap();
        let qe = QuantifiedExpression::new(&mut b, QeId(0), vec![x], Clause::new(vec![Literal::pos(atom)])).unwrap();
        let c = b.mk_app(c, &[]).unwrap();
        let before = b.ground_terms_of_sort(s).to_vec();
        assert_eq!(before, vec![c]);
        qe.instantiate(&mut b, &[c]).unwrap();
        let fc = b.mk_app(f, &[c]).unwrap();
        let ffc = b.mk_app(f, &[fc]).unwrap();
        assert_eq!(b.ground_terms_of_sort(s), &[c, fc, ffc]);
        assert!(b.age(c) < b.age(fc) && b.age(fc) < b.age(ffc));
    }

    #[test]
    fn substitution_into_first_round_example() {
        let (mut b, s, c, _, f, q) = bank();
        let x = b.mk_bound_var("x", s);
        let fx = b.mk_app(f, &[x]).unwrap();
        let qfx = b.mk_app(q, &[fx]).unwrap();
        let qe = QuantifiedExpression::new(&mut b, QeId(0), vec![x], Clause::new(vec![Literal::pos(qfx)])).unwrap();
        let c = b.mk_app(c, &[]).unwrap();
        let inst = apply_substitution(&mut b, &qe, &Substitution::from_tuple(&[x], &[c])).unwrap();
        assert_eq!(inst.display(&b), "(or (q (f c)))");
        assert!(inst.is_ground(&b));
    }

    #[test]
    fn ground_literal_is_left_unchanged() {
        let (mut b, s, c, _, _, q) = bank();
        let x = b.mk_bound_var("x", s);
        let c = b.mk_app(c, &[]).unwrap();
        let qx = b.mk_app(q, &[x]).unwrap();
        let qc = b.mk_app(q, &[c]).unwrap();
        let body = Clause::new(vec![Literal::neg(qx), Literal::pos(qc)]);
        let qe = QuantifiedExpression::new(&mut b, QeId(0), vec![x], body).unwrap();
        let inst = qe.instantiate(&mut b, &[c]).unwrap();
        assert_eq!(inst.literals[1], Literal::pos(qc));
    }

    #[test]
    fn substitution_errors() {
        let (mut b, s, _, _, _, q) = bank();
        let x = b.mk_bound_var("x", s);
        let y = b.mk_bound_var("y", s);
        let qx = b.mk_app(q, &[x]).unwrap();
        let qe = QuantifiedExpression::new(&mut b, QeId(0), vec![x], Clause::new(vec![Literal::pos(qx)])).unwrap();
        assert_eq!(
            apply_substitution(&mut b, &qe, &Substitution::default()),
            Err(TermError::Unmapped(x))
        );
        assert_eq!(
            apply_substitution(&mut b, &qe, &Substitution::from_tuple(&[x], &[y])),
            Err(TermError::NonGround(y))
        );
    }

    #[test]
    fn unbound_variable_in_body_is_rejected() {
        let (mut b, s, _, _, _, q) = bank();
        let x = b.mk_bound_var("x", s);
        let qx = b.mk_app(q, &[x]).unwrap();
        let err = QuantifiedExpression::new(&mut b, QeId(0), vec![], Clause::new(vec![Literal::pos(qx)]));
        assert!(err.is_err());
    }

    #[test]
    fn unknown_sort_has_no_terms() {
        let (b, ..) = bank();
        assert!(b.ground_terms_of_sort(SortId(42)).is_empty());
    }
}
