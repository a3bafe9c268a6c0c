use std::collections::BTreeSet;
use std::fmt;

use crate::chr::ClassConstraint;
use crate::herbrand::{Term, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Literal {
    Int(i64),
    Char(char),
    Str(String),
}

/// Expressions of the small Haskell-like language.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    /// An upper-case constructor: `True`, `False`, or a label `A` whose type is `A`.
    Con(String),
    Lit(Literal),
    App(Box<Expr>, Box<Expr>),
    Lam(Vec<String>, Box<Expr>),
    Let(Vec<LetBinding>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn app(f: Expr, arg: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(arg))
    }

    pub fn apps(f: Expr, args: impl IntoIterator<Item = Expr>) -> Expr {
        args.into_iter().fold(f, Expr::app)
    }

    pub fn lam(params: Vec<String>, body: Expr) -> Expr {
        if params.is_empty() {
            body
        } else {
            Expr::Lam(params, Box::new(body))
        }
    }

    /// Free term variables.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Expr::Con(_) | Expr::Lit(_) => {}
            Expr::App(f, a) => {
                f.collect_free(bound, out);
                a.collect_free(bound, out);
            }
            Expr::Lam(ps, body) => {
                let n = bound.len();
                bound.extend(ps.iter().cloned());
                body.collect_free(bound, out);
                bound.truncate(n);
            }
            Expr::Let(bs, body) => {
                let n = bound.len();
                bound.extend(bs.iter().map(|b| b.name.clone()));
                for b in bs {
                    b.body.collect_free(bound, out);
                }
                body.collect_free(bound, out);
                bound.truncate(n);
            }
            Expr::If(c, t, e) => {
                c.collect_free(bound, out);
                t.collect_free(bound, out);
                e.collect_free(bound, out);
            }
            Expr::List(es) | Expr::Tuple(es) => es.iter().for_each(|e| e.collect_free(bound, out)),
        }
    }
}

/// `name = body` inside `let`/`where`, parameters already folded into a lambda.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LetBinding {
    pub name: String,
    pub body: Expr,
    pub signature: Option<TypeScheme>,
}

/// A qualified type `forall vars. context => body`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeScheme {
    pub vars: Vec<Var>,
    pub context: Vec<ClassConstraint>,
    pub body: Term,
}

impl TypeScheme {
    pub fn mono(body: Term) -> Self {
        TypeScheme { vars: Vec::new(), context: Vec::new(), body }
    }

    /// Quantify every variable of the context and body (implicit `forall`).
    pub fn closed(context: Vec<ClassConstraint>, body: Term) -> Self {
        let mut vars = body.vars();
        context.iter().for_each(|c| c.collect_vars(&mut vars));
        TypeScheme { vars, context, body }
    }

    /// Variables not bound by the quantifier.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut vs = self.body.vars();
        self.context.iter().for_each(|c| c.collect_vars(&mut vs));
        vs.into_iter().filter(|v| !self.vars.contains(v)).collect()
    }
}

impl fmt::Display for TypeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.context.len() {
            0 => write!(f, "{}", self.body),
            1 => write!(f, "{} => {}", self.context[0], self.body),
            _ => write!(f, "({}) => {}", crate::pretty::comma_list(&self.context), self.body),
        }
    }
}
