mod common;

use std::collections::{BTreeSet, HashSet};

use common::euf::{EufProblem, Pat, Universe, DECLS};
use instguide::{parse_native, parse_tptp_cnf, Kind, TermBank, TermId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn build(bank: &mut TermBank, u: &Universe, i: usize) -> TermId {
    let args: Vec<TermId> = u.nodes[i].args.iter().map(|&a| build(bank, u, a)).collect();
    let sym = bank.signature().symbol(&u.nodes[i].sym).unwrap();
    bank.mk_app(sym, &args).unwrap()
}

fn build_pat(bank: &mut TermBank, pat: &Pat, x: TermId) -> TermId {
    match pat {
        Pat::Var(_) => x,
        Pat::App(s, args) => {
            let args: Vec<TermId> = args.iter().map(|a| build_pat(bank, a, x)).collect();
            let sym = bank.signature().symbol(s).unwrap();
            bank.mk_app(sym, &args).unwrap()
        }
    }
}

fn declared_bank() -> TermBank {
    parse_native(DECLS).unwrap().bank
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interning_is_idempotent(seed in any::<u64>(), size in 3usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Universe::random(&mut rng, size);
        let mut bank = declared_bank();
        let first: Vec<TermId> = (0..u.nodes.len()).map(|i| build(&mut bank, &u, i)).collect();
        let len = bank.len();
        // rebuilding in reverse order creates nothing new
        let second: Vec<TermId> = (0..u.nodes.len()).rev().map(|i| build(&mut bank, &u, i)).collect();
        prop_assert_eq!(bank.len(), len);
        prop_assert!(first.iter().eq(second.iter().rev()));
        // the generic constructor agrees with mk_app
        for (i, &t) in first.iter().enumerate() {
            let n = &u.nodes[i];
            let kind = if n.args.is_empty() { Kind::Constant } else { Kind::FunctionApply };
            let args: Vec<TermId> = n.args.iter().map(|&a| first[a]).collect();
            let sym = bank.signature().symbol(&n.sym);
            prop_assert_eq!(bank.mk_term(kind, sym, &args).unwrap(), t);
        }
        // and so does parsing, within one problem
        let text: String = (0..u.nodes.len()).map(|i| format!("(assert (r {}))\n(assert (r {}))\n", u.render(i), u.render(i))).collect();
        let p = parse_native(&format!("{DECLS}{text}")).unwrap();
        let atoms: Vec<TermId> = p.ground_clauses.iter().map(|c| c.literals[0].atom).collect();
        for pair in atoms.chunks(2) {
            prop_assert_eq!(pair[0], pair[1]);
        }
    }

    #[test]
    fn ages_grow_with_creation(seed in any::<u64>(), size in 3usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Universe::random(&mut rng, size);
        let mut bank = declared_bank();
        let mut newest = None;
        for i in 0..u.nodes.len() {
            let before = bank.len();
            let t = build(&mut bank, &u, i);
            if bank.len() > before {
                prop_assert!(newest.is_none_or(|m| bank.age(t) > bank.age(m)));
                newest = Some(t);
            }
        }
        let ids: Vec<TermId> = bank.ids().collect();
        for w in ids.windows(2) {
            prop_assert!(bank.age(w[1]) > bank.age(w[0]));
        }
    }

    #[test]
    fn substitution_commutes_with_interning(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Universe::random(&mut rng, 8);
        let pat = Pat::random(&mut rng, 0, 3);
        let ground: String = (0..u.nodes.len()).map(|i| format!("(assert (r {}))\n", u.render(i))).collect();
        let mut p = parse_native(&format!("{DECLS}{ground}(assert-forall ((x S)) (r {}))", pat.render())).unwrap();
        let pick = rng.gen_range(0..u.nodes.len());
        let t = build(&mut p.bank, &u, pick);
        let qe = p.quantified[0].clone();
        let clause = qe.instantiate(&mut p.bank, &[t]).unwrap();
        let inner = build_pat(&mut p.bank, &pat, t);
        let r = p.bank.signature().symbol("r").unwrap();
        let direct = p.bank.mk_app(r, &[inner]).unwrap();
        prop_assert_eq!(clause.literals[0].atom, direct);
    }

    #[test]
    fn native_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = EufProblem::random(&mut rng, 6, 14);
        let mut text = e.to_native();
        for _ in 0..rng.gen_range(0..3) {
            let pat = Pat::random(&mut rng, 0, 2);
            let lit = if rng.gen_bool(0.5) { format!("(not (p {}))", pat.render()) } else { format!("(= {} a)", pat.render()) };
            text.push_str(&format!("(assert-forall ((x S)) (or {lit} (r x)))\n"));
        }
        let a = parse_native(&text).unwrap();
        let b = parse_native(&a.to_native()).unwrap();
        prop_assert_eq!(a.to_native(), b.to_native());
        prop_assert_eq!(a.ground_clauses.len(), b.ground_clauses.len());
        prop_assert_eq!(a.quantified.len(), b.quantified.len());
        for (x, y) in a.ground_clauses.iter().zip(&b.ground_clauses) {
            prop_assert_eq!(x.display(&a.bank), y.display(&b.bank));
        }
        for (x, y) in a.quantified.iter().zip(&b.quantified) {
            prop_assert_eq!(x.body.display(&a.bank), y.body.display(&b.bank));
            prop_assert_eq!(x.variables.len(), y.variables.len());
        }
    }

    #[test]
    fn tptp_variables_are_bound_once(seed in any::<u64>(), clauses in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["X", "Y", "Z", "a", "b"];
        let mut text = String::new();
        let mut expected = Vec::new();
        for i in 0..clauses {
            let mut vars = BTreeSet::new();
            let mut arg = |rng: &mut ChaCha8Rng| {
                let n = names[rng.gen_range(0..names.len())];
                if n.starts_with(char::is_uppercase) {
                    vars.insert(n);
                }
                n
            };
            let lits: Vec<String> = (0..rng.gen_range(1..=3))
                .map(|_| match rng.gen_range(0..3) {
                    0 => format!("p({})", arg(&mut rng)),
                    1 => format!("~q({},{})", arg(&mut rng), arg(&mut rng)),
                    _ => format!("f({}) = {}", arg(&mut rng), arg(&mut rng)),
                })
                .collect();
            text.push_str(&format!("cnf(c{i}, axiom, {}).\n", lits.join(" | ")));
            expected.push(vars.len());
        }
        let p = parse_tptp_cnf(&text).unwrap();
        let quantified: Vec<usize> = expected.iter().copied().filter(|&n| n > 0).collect();
        prop_assert_eq!(p.quantified.len(), quantified.len());
        prop_assert_eq!(p.ground_clauses.len(), expected.len() - quantified.len());
        let mut all = HashSet::new();
        for (qe, n) in p.quantified.iter().zip(quantified) {
            prop_assert_eq!(qe.variables.len(), n);
            for &v in &qe.variables {
                prop_assert_eq!(p.bank.kind(v), Kind::BoundVariable);
                prop_assert!(all.insert(v), "variable shared between QEs");
            }
            let free: BTreeSet<TermId> = qe.body.literals.iter().flat_map(|l| p.bank.free_vars(l.atom)).collect();
            prop_assert_eq!(free, qe.variables.iter().copied().collect::<BTreeSet<_>>());
        }
    }
}
