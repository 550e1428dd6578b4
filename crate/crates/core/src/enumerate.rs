//! Enumerative instantiation under the age heuristic.

use crate::engine::{DoneSet, Instantiation, InstantiationStrategy, RoundContext};
use crate::terms::{QuantifiedExpression, TermBank, TermId};

/// Per-variable candidate lists, each in ascending age.
pub fn candidate_lists(qe: &QuantifiedExpression, bank: &TermBank) -> Vec<Vec<TermId>> {
    qe.variables
        .iter()
        .map(|&v| bank.ground_terms_of_sort(bank.sort(v)).to_vec())
        .collect()
}

/// Least tuple over `lists` (lexicographic, last position fastest) that is
/// not done. Works for any candidate order, not only age order.
pub fn first_fresh_tuple(qe: &QuantifiedExpression, lists: &[Vec<TermId>], done: &DoneSet) -> Option<Vec<TermId>> {
    if lists.iter().any(Vec::is_empty) {
        return None;
    }
    let n = lists.len();
    let mut idx = vec![0usize; n];
    loop {
        let tuple: Vec<TermId> = idx.iter().zip(lists).map(|(&i, l)| l[i]).collect();
        if !done.contains(qe.id, &tuple) {
            return Some(tuple);
        }
        // odometer step
        let mut pos = n;
        loop {
            if pos == 0 {
                return None;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < lists[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

pub fn enum_next_tuple(qe: &QuantifiedExpression, bank: &TermBank, done: &DoneSet) -> Option<Vec<TermId>> {
    first_fresh_tuple(qe, &candidate_lists(qe, bank), done)
}

pub fn enum_round(qes: &[QuantifiedExpression], bank: &TermBank, done: &DoneSet) -> Vec<Instantiation> {
    qes.iter()
        .filter_map(|qe| enum_next_tuple(qe, bank, done).map(|t| Instantiation::new(qe.id, t)))
        .collect()
}

/// Plain enumeration.
#[derive(Clone, Copy, Debug, Default)]
pub struct EnumStrategy;

impl InstantiationStrategy for EnumStrategy {
    fn name(&self) -> String {
        "enum".into()
    }

    fn instantiate(&mut self, ctx: &RoundContext<'_>) -> Vec<Instantiation> {
        enum_round(ctx.quantified, ctx.bank, ctx.done)
    }
}
