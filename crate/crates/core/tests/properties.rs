//! Property tests for the term solver, the CHR engine, the translation of
//! declarations and type inference.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use chrtc::chr::{step, ChrState, ClassConstraint, DeriveError, Engine, GoalItem, Program, RuleKind, SelectionPolicy, Step};
use chrtc::desugar::{build_ruleset, DesugarOptions, RuleSet};
use chrtc::herbrand::{match_head, Substitution, Term, Var};
use chrtc::inference::{check_ambiguity, check_signature, infer_program, present, Ambiguity, InferOptions, TypeEnv, TypeScheme};
use chrtc::syntax::{parse_program, parse_rule, parse_type_scheme};

fn rules_of(src: &str) -> RuleSet {
    build_ruleset(&parse_program(src).unwrap(), &DesugarOptions::default()).unwrap_or_else(|e| panic!("{e}"))
}

// ---------------------------------------------------------------------------
// terms

fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![Just(Term::con("a")), Just(Term::var("x")), Just(Term::var("y")), Just(Term::var("z"))];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Term::app("f", vec![l, r])),
            inner.prop_map(|t| Term::app("g", vec![t])),
        ]
    })
}

fn unifier(s: &Term, t: &Term) -> Option<Substitution> {
    let mut th = Substitution::new();
    th.unify_terms(s, t).ok().map(|_| th)
}

proptest! {
    #[test]
    fn unifiers_are_idempotent_and_pass_the_occurs_check(s in term(), t in term()) {
        if let Some(th) = unifier(&s, &t) {
            prop_assert_eq!(th.apply(&s), th.apply(&t));
            prop_assert_eq!(th.apply(&th.apply(&s)), th.apply(&s));
            for (v, img) in th.iter() {
                for w in th.domain() {
                    prop_assert!(!img.occurs(w), "{} occurs in the image of {}", w, v);
                }
            }
        }
    }

    #[test]
    fn equations_are_symmetric(s in term(), t in term()) {
        match (unifier(&s, &t), unifier(&t, &s)) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                // equal up to orientation: each is an instance of the other
                for v in ["x", "y", "z"].map(Term::var) {
                    prop_assert_eq!(a.apply(&b.apply(&v)), a.apply(&v));
                    prop_assert_eq!(b.apply(&a.apply(&v)), b.apply(&v));
                }
            }
            (a, b) => prop_assert!(false, "satisfiability differs: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn matching_is_one_sided(p in term(), c in term(), h_img in term()) {
        // pattern variables renamed apart from the candidate's
        let rename: BTreeMap<Var, Var> = ["x", "y", "z"].iter().map(|n| (Var::new(n), Var::with_stamp(n, 99))).collect();
        let pattern = ClassConstraint::new("C", vec![p.rename(&rename)]);
        let candidate = ClassConstraint::new("C", vec![c]);
        let h = if h_img.occurs(&Var::new("z")) { Substitution::new() } else { Substitution::from_pairs([(Var::new("z"), h_img)]).unwrap() };
        if let Some(theta) = match_head(&pattern, &candidate, &h) {
            prop_assert_eq!(theta.apply_constraint(&pattern), h.apply_constraint(&candidate));
            prop_assert!(theta.domain().all(|v| v.stamp() == 99));
        }
    }
}

// ---------------------------------------------------------------------------
// engine

const ORD: &str = "class Eq t\nS1 @ class Eq t => Ord t\nS2 @ instance Eq t => Eq [t]\nS3 @ instance Ord t => Ord [t]\ninstance Eq Int\ninstance Ord Int\n";
const COLLECTS: &str = "T1 @ class Collects e ce | ce ~> e\n";
const RECORDS: &str = "class Rec r l b\nclass Rec r2 l b => Ext r1 l b r2\n\
    rule functionality @ Rec r l b1, Rec r l b2 ==> b1 = b2\n\
    rule false_extension @ Ext r1 l b1 r2, Rec r1 l b2 <=> False\n";

fn type_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![Just(Term::con("Int")), Just(Term::con("Bool")), Just(Term::var("a")), Just(Term::var("b")), Just(Term::var("c"))];
    leaf.prop_recursive(3, 8, 1, |inner| inner.prop_map(Term::list))
}

fn goal_for(classes: Vec<(&'static str, usize)>) -> impl Strategy<Value = Vec<GoalItem>> {
    let n = classes.len();
    let item = prop_oneof![
        4 => (0..n, prop::collection::vec(type_term(), 4)).prop_map(move |(i, args)| {
            let (class, arity) = classes[i];
            GoalItem::Class(ClassConstraint::new(class, args[..arity].to_vec()))
        }),
        1 => (prop_oneof![Just("a"), Just("b")], type_term()).prop_map(|(v, t)| GoalItem::eq(Term::var(v), t)),
    ];
    prop::collection::vec(item, 1..5)
}

fn protected(goal: &[GoalItem]) -> BTreeSet<Var> {
    let mut vs = Vec::new();
    goal.iter().for_each(|g| g.collect_vars(&mut vs));
    vs.into_iter().collect()
}

fn outcome(p: &Program, goal: &[GoalItem], policy: &mut SelectionPolicy) -> Option<chrtc::chr::CanonicalForm> {
    match Engine::new(p).fuel(2_000).record_trace(false).run_with(ChrState::new(goal.to_vec(), protected(goal)), policy) {
        Ok(f) => Some(f.canonical()),
        Err(DeriveError::Unsatisfiable { .. }) => Some(chrtc::chr::CanonicalForm::Unsatisfiable),
        Err(DeriveError::FuelExceeded { .. }) => None,
    }
}

/// Every state along the default derivation keeps its protected
/// variables, an idempotent Herbrand store and tokens over live entries.
fn check_state_invariants(p: &Program, goal: &[GoalItem]) -> Result<(), TestCaseError> {
    let v = protected(goal);
    let mut state = ChrState::new(goal.to_vec(), v.clone());
    for _ in 0..500 {
        match step(&state, p) {
            Step::Next { state: next, .. } => state = next,
            _ => return Ok(()),
        }
        prop_assert_eq!(state.protected(), &v);
        let h = state.herbrand();
        for (_, t) in h.iter() {
            prop_assert_eq!(h.apply(t), t.clone());
        }
        let ids: BTreeSet<u64> = state.store().map(|e| e.id).collect();
        for tok in state.tokens() {
            prop_assert!(tok.ids.iter().all(|i| ids.contains(i)), "token {:?} refers to a removed entry", tok);
            prop_assert_eq!(tok.ids.len(), p.rule(&tok.rule).unwrap().head.len());
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_orders_agree_on_confluent_programs(goal in goal_for(vec![("Eq", 1), ("Ord", 1)]), seed in any::<u64>()) {
        let rs = rules_of(ORD);
        let reference = outcome(&rs.solving, &goal, &mut SelectionPolicy::Leftmost);
        for s in 0..100u64 {
            prop_assert_eq!(&outcome(&rs.solving, &goal, &mut SelectionPolicy::seeded(seed.wrapping_add(s))), &reference);
        }
    }

    #[test]
    fn random_orders_agree_with_functional_dependencies(goal in goal_for(vec![("Collects", 2)]), seed in any::<u64>()) {
        let rs = rules_of(COLLECTS);
        let reference = outcome(&rs.solving, &goal, &mut SelectionPolicy::Leftmost);
        for s in 0..100u64 {
            prop_assert_eq!(&outcome(&rs.solving, &goal, &mut SelectionPolicy::seeded(seed.wrapping_add(s))), &reference);
        }
    }

    #[test]
    fn states_keep_their_invariants(goal in goal_for(vec![("Eq", 1), ("Ord", 1), ("Rec", 3), ("Ext", 4)])) {
        for src in [ORD, RECORDS] {
            check_state_invariants(&rules_of(src).solving, &goal)?;
        }
    }

    #[test]
    fn final_states_are_variants_under_renaming(goal in goal_for(vec![("Eq", 1), ("Ord", 1), ("Collects", 2)]), offset in 1u32..50) {
        // renaming unprotected variables or permuting the store does not change the canonical form
        let rs = rules_of(&format!("{ORD}{COLLECTS}"));
        let Ok(fin) = chrtc::chr::derive(goal.clone(), &rs.solving, protected(&goal), 2_000) else { return Ok(()) };
        let store = fin.constraints();
        let free: BTreeSet<Var> = store.iter().flat_map(|c| c.vars()).filter(|v| !fin.protected().contains(v)).collect();
        let rename: BTreeMap<Var, Var> = free.iter().map(|v| (v.clone(), Var::with_stamp(format!("{}q", v.name()), v.stamp() + offset))).collect();
        let mut renamed: Vec<ClassConstraint> = store.iter().map(|c| c.rename(&rename)).collect();
        renamed.reverse();
        let h = fin.herbrand().restrict(fin.protected().iter());
        let h = Substitution::from_pairs(h.iter().map(|(v, t)| (v.clone(), t.rename(&rename)))).unwrap();
        prop_assert_eq!(chrtc::chr::canonicalize(&renamed, &h, fin.protected()), fin.canonical());
    }
}

// ---------------------------------------------------------------------------
// translation

const PRELUDE: &str = "
class Eq t where
  (==) :: t -> t -> Bool
S1, P1 @ class Eq t => Ord t where
  (<) :: t -> t -> Bool
class Num a where
  (+) :: a -> a -> a
class (Eq a, Num a) => Real a
T1 @ class Collects e ce | ce ~> e
class F a b c | a b ~> c, c ~> a
S2 @ instance Eq t => Eq [t]
S3 @ instance Ord t => Ord [t]
instance Eq Int
instance Ord Int
instance Num Int
instance Eq Bool
instance (Eq a, Eq b) => Eq (a, b)
tail :: [a] -> [a]
init :: [a] -> [a]
";

#[test]
fn generated_rules_round_trip() {
    let rs = rules_of(PRELUDE);
    for r in rs.all_rules() {
        let printed = r.to_string();
        assert_eq!(&parse_rule(&printed).unwrap_or_else(|e| panic!("{printed}: {e}")), r, "{printed}");
    }
}

#[test]
fn presentation_rules_drop_one_constraint() {
    let rs = rules_of(PRELUDE);
    assert!(!rs.presentation.is_empty());
    for r in rs.presentation.rules() {
        assert_eq!(r.kind, RuleKind::Simplification);
        let goal: Vec<GoalItem> = r.head.iter().cloned().map(GoalItem::Class).collect();
        let one = Program::new(vec![r.clone()]).unwrap();
        let fin = chrtc::chr::derive(goal.clone(), &one, protected(&goal), 100).unwrap();
        assert_eq!(fin.constraints().len(), r.head.len() - 1, "{r}");
    }
}

/// Ground types over `Int`, `Bool`, lists and pairs, up to `depth`.
fn ground_types(depth: usize) -> Vec<Term> {
    let mut all = vec![Term::con("Int"), Term::con("Bool")];
    for _ in 0..depth {
        let mut next = all.clone();
        for t in &all {
            next.push(Term::list(t.clone()));
        }
        for a in &all {
            for b in &all {
                next.push(Term::tuple(vec![a.clone(), b.clone()]));
            }
        }
        next.sort();
        next.dedup();
        all = next;
    }
    all
}

#[test]
fn instance_rules_agree_with_the_closure_of_the_instances() {
    let src = "class Eq t\nclass Eq t => Ord t\ninstance Eq t => Eq [t]\ninstance Ord t => Ord [t]\n\
               instance Eq Int\ninstance Ord Int\ninstance Eq Bool\ninstance (Eq a, Eq b) => Eq (a, b)\n";
    let prog = parse_program(src).unwrap();
    let rs = build_ruleset(&prog, &DesugarOptions::default()).unwrap();
    let universe = ground_types(2);
    // brute-force closure: an instance holds when its head matches and its context holds
    let mut holds: BTreeSet<ClassConstraint> = BTreeSet::new();
    loop {
        let mut grew = false;
        for inst in prog.instances() {
            for t in &universe {
                let target = ClassConstraint::new(inst.class.clone(), vec![t.clone()]);
                let Some(theta) = match_head(&inst.head(), &target, &Substitution::new()) else { continue };
                if inst.context.iter().all(|c| holds.contains(&theta.apply_constraint(c))) && holds.insert(target) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    for class in ["Eq", "Ord"] {
        for t in &universe {
            let c = ClassConstraint::new(class, vec![t.clone()]);
            let solved = chrtc::chr::derive(vec![GoalItem::Class(c.clone())], &rs.solving, BTreeSet::new(), 1_000).map(|f| f.constraints().is_empty());
            assert_eq!(solved.unwrap_or(false), holds.contains(&c), "{c}");
        }
    }
}

// ---------------------------------------------------------------------------
// inference

fn context() -> impl Strategy<Value = Vec<ClassConstraint>> {
    let class = prop_oneof![Just("Eq"), Just("Ord"), Just("Num"), Just("Real")];
    let arg = prop_oneof![Just(Term::var("a")), Just(Term::var("b")), Just(Term::list(Term::var("a")))];
    prop::collection::vec((class, arg).prop_map(|(c, t)| ClassConstraint::new(c, vec![t])), 0..5)
}

fn solved_context(ctx: &[ClassConstraint], rs: &RuleSet) -> chrtc::chr::CanonicalForm {
    let goal: Vec<GoalItem> = ctx.iter().cloned().map(GoalItem::Class).collect();
    let v = [Var::new("a"), Var::new("b")].into_iter().collect();
    chrtc::chr::derive(goal, &rs.solving, v, 1_000).unwrap().canonical()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn presentation_is_display_only(ctx in context()) {
        let rs = rules_of(PRELUDE);
        let body = Term::arrow(Term::var("a"), Term::var("b"));
        let scheme = TypeScheme { vars: vec![Var::new("a"), Var::new("b")], context: ctx.clone(), body };
        let shown = present(&scheme, &rs, 1_000);
        prop_assert!(shown.context.len() <= ctx.len());
        prop_assert_eq!(solved_context(&shown.context, &rs), solved_context(&ctx, &rs));
    }
}

/// Small expressions over the prelude's functions, as source text.
fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        Just("1".to_string()),
        Just("True".to_string()),
        Just("[]".to_string()),
        Just("tail".to_string()),
        Just("init".to_string()),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} < {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} == {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} {b})")),
            inner.clone().prop_map(|a| format!("[{a}]")),
            (inner.clone(), inner).prop_map(|(a, b)| format!("(\\z -> {a}) {b}")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn printed_schemes_are_valid_signatures(body in expr()) {
        let src = format!("{PRELUDE}\nf x y = {body}\n");
        let prog = parse_program(&src).unwrap();
        let rs = build_ruleset(&prog, &DesugarOptions::default()).unwrap();
        let report = infer_program(&prog, &rs, &InferOptions::default());
        let b = report.binding("f").unwrap();
        if let Some(printed) = b.rendered() {
            let scheme = parse_type_scheme(printed.split_once(":: ").unwrap().1).unwrap();
            let expr = &prog.bindings().next().unwrap().body;
            let checked = check_signature(&scheme, expr, &TypeEnv::for_program(&prog, &rs), &rs, 10_000);
            prop_assert!(checked.is_ok(), "{}: {:?}", printed, checked);
        }
    }
}

/// Method types for a two-parameter class, mentioning at least one parameter.
fn method_type() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![Just(Term::var("e")), Just(Term::var("ce")), Just(Term::con("Int")), Just(Term::var("x"))];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![(inner.clone(), inner.clone()).prop_map(|(a, b)| Term::arrow(a, b)), inner.prop_map(Term::list)]
    })
    .prop_filter("mentions a class parameter", |t| t.vars().iter().any(|v| v.name() == "e" || v.name() == "ce"))
}

fn method_ambiguity(with_fundep: bool, ty: &Term) -> Ambiguity {
    let header = if with_fundep { "T1 @ class Collects e ce | ce ~> e" } else { "class Collects e ce" };
    let rs = rules_of(&format!("{header}\n"));
    let mut vars = ty.vars();
    vars.sort();
    vars.dedup();
    let scheme = TypeScheme { vars, context: vec![ClassConstraint::new("Collects", vec![Term::var("e"), Term::var("ce")])], body: ty.clone() };
    check_ambiguity(&scheme, &rs, 1_000)
}

proptest! {
    #[test]
    fn fundeps_never_introduce_ambiguity(ty in method_type()) {
        if method_ambiguity(false, &ty).is_unambiguous() {
            prop_assert!(method_ambiguity(true, &ty).is_unambiguous(), "{}", ty);
        }
    }
}

#[test]
fn collects_methods_are_no_more_ambiguous_with_the_fundep() {
    let methods = "  empty :: ce\n  insert :: e -> ce -> ce\n  member :: e -> ce -> Bool\n  toList :: ce -> [e]\n";
    let report = |header: &str| {
        let src = format!("{header} where\n{methods}");
        let p = parse_program(&src).unwrap();
        let rs = build_ruleset(&p, &DesugarOptions::default()).unwrap();
        infer_program(&p, &rs, &InferOptions::default())
    };
    let plain = report("class Collects e ce");
    let fd = report("T1 @ class Collects e ce | ce ~> e");
    for m in &plain.methods {
        let with = fd.method(&m.name).unwrap();
        assert!(!m.ambiguity.is_unambiguous() || with.ambiguity.is_unambiguous(), "{}", m.name);
    }
}

#[test]
fn cli_output_is_deterministic() {
    let corpus = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    for files in [vec!["records.hs"], vec!["prelude.hs", "ord_list.hs"], vec!["collects.hs"]] {
        let mut args = vec!["chrtc".to_string(), "infer".into(), "--format".into(), "records".into()];
        args.extend(files.iter().map(|f| corpus.join(f).display().to_string()));
        let file = files.join(" ");
        let args = args.as_slice();
        let a = chrtc::cli::run(args);
        let b = chrtc::cli::run(args);
        assert_eq!((a.stdout, a.stderr, a.code), (b.stdout, b.stderr, b.code), "{file}");
    }
}
