use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::herbrand::{Substitution, Term, Var};
use crate::pretty;

use super::rule::ClassConstraint;

/// Orderings tried per store before falling back to the plain sort order.
const MAX_ORDERINGS: usize = 40_320;

/// Canonical representation of a final state: two final states are variants
/// (equal up to renaming of unprotected variables, with conjunction treated
/// as a set) iff their canonical forms are equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CanonicalForm {
    Unsatisfiable,
    State {
        /// Bindings of protected variables, sorted by variable.
        herbrand: Vec<(Var, Term)>,
        store: Vec<ClassConstraint>,
    },
}

impl CanonicalForm {
    pub fn store(&self) -> &[ClassConstraint] {
        match self {
            CanonicalForm::Unsatisfiable => &[],
            CanonicalForm::State { store, .. } => store,
        }
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonicalForm::Unsatisfiable => write!(f, "False"),
            CanonicalForm::State { herbrand, store } => {
                let eqs: Vec<String> = herbrand.iter().map(|(v, t)| format!("{v} = {t}")).collect();
                write!(f, "store: {} | h: {}", pretty::conjunction(store), pretty::conjunction(&eqs))
            }
        }
    }
}

fn erase(t: &Term, protected: &BTreeSet<Var>) -> Term {
    match t {
        Term::Var(v) if protected.contains(v) => t.clone(),
        Term::Var(_) => Term::con("?"),
        Term::App(n, args) => Term::App(n.clone(), args.iter().map(|a| erase(a, protected)).collect()),
    }
}

fn erase_constraint(c: &ClassConstraint, protected: &BTreeSet<Var>) -> ClassConstraint {
    c.map_args(|t| erase(t, protected))
}

/// Canonical form of a store (already normalised by `h`) under `h` and `protected`.
pub fn canonicalize(store: &[ClassConstraint], h: &Substitution, protected: &BTreeSet<Var>) -> CanonicalForm {
    // Re-orient variable-to-variable bindings so that every class of
    // protected variables bound to the same variable is represented by its
    // least member, whichever way unification happened to orient them.
    let images: Vec<(Var, Term)> = protected.iter().map(|x| (x.clone(), h.apply_var(x))).collect();
    let mut classes: BTreeMap<Var, BTreeSet<Var>> = BTreeMap::new();
    for (x, img) in &images {
        if let Term::Var(y) = img {
            classes.entry(y.clone()).or_default().insert(x.clone());
        }
    }
    let reorient: BTreeMap<Var, Var> = classes
        .into_iter()
        .filter_map(|(y, members)| {
            let rep = members.into_iter().next().expect("non-empty class");
            (rep != y).then_some((y, rep))
        })
        .collect();
    let herbrand: Vec<(Var, Term)> = images
        .iter()
        .map(|(x, img)| (x.clone(), img.rename(&reorient)))
        .filter(|(x, t)| *t != Term::Var(x.clone()))
        .collect();
    let mut constraints: Vec<ClassConstraint> = Vec::new();
    for c in store {
        let c = c.rename(&reorient);
        if !constraints.contains(&c) {
            constraints.push(c);
        }
    }

    // Sort by shape with unprotected variables erased; ties are resolved by
    // trying every ordering inside each tie group and keeping the least result.
    constraints.sort_by_cached_key(|c| erase_constraint(c, protected));
    let mut groups: Vec<Vec<ClassConstraint>> = Vec::new();
    for c in constraints {
        match groups.last_mut() {
            Some(g) if erase_constraint(&g[0], protected) == erase_constraint(&c, protected) => g.push(c),
            _ => groups.push(vec![c]),
        }
    }
    let orderings = groups.iter().try_fold(1usize, |acc, g| {
        let f = (1..=g.len()).try_fold(1usize, |a, k| a.checked_mul(k))?;
        acc.checked_mul(f)
    });

    let mut best: Option<(Vec<(Var, Term)>, Vec<ClassConstraint>)> = None;
    let mut consider = |order: &[ClassConstraint]| {
        let candidate = rename_by_occurrence(&herbrand, order, protected);
        if best.as_ref().map_or(true, |b| candidate < *b) {
            best = Some(candidate);
        }
    };
    match orderings {
        Some(n) if n <= MAX_ORDERINGS => {
            let mut current = Vec::new();
            each_ordering(&groups, 0, &mut current, &mut consider);
        }
        _ => {
            let flat: Vec<ClassConstraint> = groups.into_iter().flatten().collect();
            consider(&flat);
        }
    }
    let (herbrand, store) = best.expect("at least one ordering");
    CanonicalForm::State { herbrand, store }
}

fn each_ordering(groups: &[Vec<ClassConstraint>], gi: usize, current: &mut Vec<ClassConstraint>, f: &mut impl FnMut(&[ClassConstraint])) {
    if gi == groups.len() {
        f(current);
        return;
    }
    let mut group = groups[gi].clone();
    permute(&mut group, 0, &mut |perm| {
        let len = current.len();
        current.extend_from_slice(perm);
        each_ordering(groups, gi + 1, current, f);
        current.truncate(len);
    });
}

fn permute(items: &mut Vec<ClassConstraint>, k: usize, f: &mut impl FnMut(&[ClassConstraint])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, f);
        items.swap(k, i);
    }
}

fn rename_by_occurrence(
    herbrand: &[(Var, Term)],
    store: &[ClassConstraint],
    protected: &BTreeSet<Var>,
) -> (Vec<(Var, Term)>, Vec<ClassConstraint>) {
    let mut seen = Vec::new();
    for (_, t) in herbrand {
        t.collect_vars(&mut seen);
    }
    for c in store {
        c.collect_vars(&mut seen);
    }
    let map: BTreeMap<Var, Var> = seen
        .into_iter()
        .filter(|v| !protected.contains(v))
        .enumerate()
        .map(|(i, v)| (v, Var::with_stamp("?", i as u32 + 1)))
        .collect();
    (
        herbrand.iter().map(|(x, t)| (x.clone(), t.rename(&map))).collect(),
        store.iter().map(|c| c.rename(&map)).collect(),
    )
}
