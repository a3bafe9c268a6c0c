use std::collections::{BTreeMap, BTreeSet};

use crate::chr::{canonicalize, CanonicalForm, ClassConstraint};
use crate::herbrand::{Substitution, Term, Var, SKOLEM_PREFIX};

use super::TypeScheme;

fn letter_name(k: usize) -> String {
    let letter = (b'a' + (k % 26) as u8) as char;
    if k < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", k / 26)
    }
}

fn erase(t: &Term, names: &BTreeMap<Var, Var>) -> Term {
    match t {
        Term::Var(v) => names.get(v).map_or_else(|| Term::con("?"), |n| Term::Var(n.clone())),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| erase(a, names)).collect()),
    }
}

/// The display names of a scheme's variables: `a, b, c, ..` by first
/// occurrence in the body, then in the context taken least-first.
pub fn display_renaming(s: &TypeScheme) -> BTreeMap<Var, Var> {
    let mut names: BTreeMap<Var, Var> = BTreeMap::new();
    let mut next = 0;
    let mut name = |v: &Var, names: &mut BTreeMap<Var, Var>| {
        if !names.contains_key(v) {
            names.insert(v.clone(), Var::new(letter_name(next)));
            next += 1;
        }
    };
    for v in s.body.vars() {
        name(&v, &mut names);
    }
    let key = |c: &ClassConstraint, names: &BTreeMap<Var, Var>| (c.args.iter().map(|a| erase(a, names)).collect::<Vec<_>>(), c.class.clone());
    let mut rest: Vec<ClassConstraint> = s.context.clone();
    while !rest.is_empty() {
        let (i, _) = rest.iter().enumerate().min_by_key(|(_, c)| key(c, &names)).expect("non-empty");
        for v in rest.remove(i).vars() {
            name(&v, &mut names);
        }
    }
    for v in &s.vars {
        name(v, &mut names);
    }
    names
}

/// Rename a scheme's variables for display and sort the context by its arguments.
pub fn display_scheme(s: &TypeScheme) -> TypeScheme {
    let names = display_renaming(s);
    let mut context: Vec<ClassConstraint> = s.context.iter().map(|c| c.rename(&names)).collect();
    context.sort_by_key(|c| (c.args.clone(), c.class.clone()));
    context.dedup();
    let vars = s.vars.iter().map(|v| names[v].clone()).collect();
    TypeScheme { vars, context, body: s.body.rename(&names) }
}

/// `name :: (C1, C2) => τ` with deterministic variable names.
pub fn render_scheme(name: &str, s: &TypeScheme) -> String {
    format!("{} :: {}", render_name(name), display_scheme(s))
}

fn render_name(name: &str) -> String {
    if name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_') {
        name.to_string()
    } else {
        format!("({name})")
    }
}

/// A key equal for two schemes iff they agree up to renaming of quantified
/// variables, with the context read as a set.
pub fn scheme_key(s: &TypeScheme) -> CanonicalForm {
    let mut store = vec![ClassConstraint::new("=>", vec![s.body.clone()])];
    store.extend(s.context.iter().cloned());
    let free: BTreeSet<Var> = s.free_vars();
    canonicalize(&store, &Substitution::new(), &free)
}

pub fn alpha_equivalent(a: &TypeScheme, b: &TypeScheme) -> bool {
    scheme_key(a) == scheme_key(b)
}

/// Replace skolem constants by variables of the same name (for messages).
pub fn unskolemize(t: &Term) -> Term {
    match t {
        Term::App(f, args) if args.is_empty() && f.starts_with(SKOLEM_PREFIX) => Term::var(&f[SKOLEM_PREFIX.len_utf8()..]),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(unskolemize).collect()),
        Term::Var(_) => t.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_type_scheme;

    fn scheme(src: &str) -> TypeScheme {
        parse_type_scheme(src).unwrap()
    }

    #[test]
    fn names_follow_first_occurrence() {
        let s = scheme("Ord t1 => [t1] -> [t1] -> Bool");
        assert_eq!(render_scheme("f", &s), "f :: Ord a => [a] -> [a] -> Bool");
        let g = scheme("(Ext ty tl ts te, Rec tx tl ts) => tx -> ty -> tl -> te");
        assert_eq!(render_scheme("g", &g), "g :: (Rec a c e, Ext b c e d) => a -> b -> c -> d");
        assert_eq!(render_scheme("+", &scheme("Num a => a -> a -> a")), "(+) :: Num a => a -> a -> a");
    }

    #[test]
    fn context_only_variables_are_named_last() {
        let s = scheme("Collects e ce => ce");
        assert_eq!(render_scheme("empty", &s), "empty :: Collects b a => a");
    }

    #[test]
    fn alpha_equivalence_ignores_names_and_order() {
        assert!(alpha_equivalent(&scheme("(Integral a, Fractional a) => a -> a -> a"), &scheme("(Fractional x, Integral x) => x -> x -> x")));
        assert!(!alpha_equivalent(&scheme("Ord a => a -> a -> Bool"), &scheme("Ord a => [a] -> [a] -> Bool")));
        assert!(!alpha_equivalent(&scheme("(Rec a A b, Rec a B c) => a -> (b, c)"), &scheme("(Rec a A b, Rec a B b) => a -> (b, b)")));
    }
}
