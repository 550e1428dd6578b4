//! Instantiation-based prover for clausal first-order logic with equality,
//! with enumerative instantiation guided by a graph neural network trained on
//! the prover's own e-matching proofs.

pub mod egraph;
pub mod ematch;
pub mod engine;
pub mod enumerate;
pub mod gnn;
pub mod ground;
pub mod guided;
pub mod harness;
pub mod parser;
pub mod terms;
pub mod trace;

pub use egraph::{cc_assert_equality, ClassId, EGraph};
pub use ematch::{ematch, ematch_round, select_triggers, EmatchStrategy, Trigger};
pub use engine::{
    solve_loop, DoneSet, Instantiation, InstantiationStrategy, Limits, NoObserver, RoundContext, SolveObserver,
    SolveOutcome, SolverState, Status,
};
pub use enumerate::{enum_next_tuple, enum_round, EnumStrategy};
pub use ground::{ground_sat_check, GroundError, GroundLimits, GroundResult, Model};
pub use parser::{load_problem, parse_native, parse_tptp_cnf, ParseError, Problem};
pub use terms::{
    apply_substitution, Clause, Kind, Literal, QeId, QuantifiedExpression, Signature, SortId, Substitution, SymbolId,
    TermBank, TermError, TermId,
};
