//! Concrete syntax for terms, constraints and rules.
//!
//! The rule format is the one accepted back by the parser:
//! `name @ H1, .., Hn <=> g | B1, .., Bm` (or `==>`), with `True`/`False`
//! literals and the guard omitted when trivial.

use std::fmt::{self, Display, Formatter};

use crate::chr::{Body, ChrRule, ClassConstraint, GoalItem, RuleKind};
use crate::herbrand::{is_tuple_name, Guard, Substitution, Term, ARROW, LIST, SKOLEM_PREFIX, TYAPP};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Top,
    ArrowLeft,
    Arg,
}

fn write_term(t: &Term, prec: Prec, f: &mut Formatter<'_>) -> fmt::Result {
    match t {
        Term::Var(v) => write!(f, "{v}"),
        Term::App(name, args) => {
            let name: &str = name;
            match (name, args.as_slice()) {
                (ARROW, [a, b]) => {
                    let paren = prec > Prec::Top;
                    if paren {
                        write!(f, "(")?;
                    }
                    write_term(a, Prec::ArrowLeft, f)?;
                    write!(f, " -> ")?;
                    write_term(b, Prec::Top, f)?;
                    if paren {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                (LIST, [a]) => {
                    write!(f, "[")?;
                    write_term(a, Prec::Top, f)?;
                    write!(f, "]")
                }
                (n, elems) if is_tuple_name(n) && !elems.is_empty() => {
                    write!(f, "(")?;
                    for (i, e) in elems.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write_term(e, Prec::Top, f)?;
                    }
                    write!(f, ")")
                }
                (TYAPP, [head, arg]) => {
                    let paren = prec == Prec::Arg;
                    if paren {
                        write!(f, "(")?;
                    }
                    // application is left-associative: the head never needs parentheses
                    match head {
                        Term::App(h, _) if &**h == TYAPP => write_term(head, Prec::ArrowLeft, f)?,
                        _ => write_term(head, Prec::Arg, f)?,
                    }
                    write!(f, " ")?;
                    write_term(arg, Prec::Arg, f)?;
                    if paren {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                (n, []) => write!(f, "{}", n.strip_prefix(SKOLEM_PREFIX).unwrap_or(n)),
                (n, args) => {
                    let paren = prec == Prec::Arg;
                    if paren {
                        write!(f, "(")?;
                    }
                    write!(f, "{n}")?;
                    for a in args {
                        write!(f, " ")?;
                        write_term(a, Prec::Arg, f)?;
                    }
                    if paren {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
    }
}

impl Display for Term {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_term(self, Prec::Top, f)
    }
}

impl Display for ClassConstraint {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.class)?;
        for a in &self.args {
            write!(f, " ")?;
            write_term(a, Prec::Arg, f)?;
        }
        Ok(())
    }
}

impl Display for GoalItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            GoalItem::Class(c) => write!(f, "{c}"),
            GoalItem::Eq(e) => write!(f, "{} = {}", e.left, e.right),
        }
    }
}

impl Display for Guard {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Eq(a, b) => write!(f, "{a} = {b}"),
            Guard::Neq(a, b) => write!(f, "{a} /= {b}"),
        }
    }
}

impl Display for Body {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Body::False => write!(f, "False"),
            Body::Items(items) => write!(f, "{}", conjunction(items)),
        }
    }
}

impl Display for ChrRule {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {}", self.name, comma_list(&self.head))?;
        let arrow = match self.kind {
            RuleKind::Simplification => "<=>",
            RuleKind::Propagation => "==>",
        };
        write!(f, " {arrow} ")?;
        if !self.guard.is_empty() {
            write!(f, "{} | ", comma_list(&self.guard))?;
        }
        write!(f, "{}", self.body)
    }
}

/// `a, b, c`
pub fn comma_list<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// A conjunction, `True` when empty.
pub fn conjunction<T: Display>(items: &[T]) -> String {
    if items.is_empty() {
        "True".to_string()
    } else {
        comma_list(items)
    }
}

/// Bindings of a substitution as equations, `True` when empty.
pub fn substitution(s: &Substitution) -> String {
    let eqs: Vec<String> = s.iter().map(|(v, t)| format!("{v} = {t}")).collect();
    if eqs.is_empty() {
        "True".to_string()
    } else {
        eqs.join(", ")
    }
}
