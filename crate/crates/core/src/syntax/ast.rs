use std::fmt;

use crate::chr::{ChrRule, ClassConstraint};
use crate::herbrand::{Term, Var};
use crate::inference::{Expr, TypeScheme};

/// 1-based source position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Loc {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// `(from..) ~> to`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunDep {
    pub from: Vec<Var>,
    pub to: Var,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodSig {
    pub name: String,
    /// The signature as written; class parameters appear free.
    pub context: Vec<ClassConstraint>,
    pub ty: Term,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDecl {
    /// `L1, L2 @` prefix naming the generated rules in order: superclass
    /// propagation, functional dependencies, then presentation rules.
    pub labels: Vec<String>,
    pub name: String,
    pub params: Vec<Var>,
    pub context: Vec<ClassConstraint>,
    pub fundeps: Vec<FunDep>,
    pub methods: Vec<MethodSig>,
    pub loc: Loc,
}

impl ClassDecl {
    pub fn head(&self) -> ClassConstraint {
        ClassConstraint::new(self.name.clone(), self.params.iter().cloned().map(Term::Var).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceDecl {
    /// Optional `label @` naming the generated simplification rule.
    pub label: Option<String>,
    pub class: String,
    pub args: Vec<Term>,
    pub context: Vec<ClassConstraint>,
    pub loc: Loc,
}

impl InstanceDecl {
    pub fn head(&self) -> ClassConstraint {
        ClassConstraint::new(self.class.clone(), self.args.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRule {
    pub rule: ChrRule,
    pub loc: Loc,
}

/// `name :: context => type`; without a binding it declares a primitive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    pub name: String,
    pub scheme: TypeScheme,
    pub loc: Loc,
}

/// A top-level `name params = body`, parameters folded into a lambda.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binding {
    pub name: String,
    pub body: Expr,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decl {
    Class(ClassDecl),
    Instance(InstanceDecl),
    Rule(RawRule),
    Signature(Signature),
    Binding(Binding),
}

/// A parsed source program: declarations in source order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SurfaceProgram {
    pub decls: Vec<Decl>,
}

impl SurfaceProgram {
    pub fn classes(&self) -> impl Iterator<Item = &ClassDecl> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Class(c) => Some(c),
            _ => None,
        })
    }

    pub fn instances(&self) -> impl Iterator<Item = &InstanceDecl> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Instance(i) => Some(i),
            _ => None,
        })
    }

    pub fn rules(&self) -> impl Iterator<Item = &RawRule> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Rule(r) => Some(r),
            _ => None,
        })
    }

    pub fn signatures(&self) -> impl Iterator<Item = &Signature> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Signature(s) => Some(s),
            _ => None,
        })
    }

    pub fn bindings(&self) -> impl Iterator<Item = &Binding> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Binding(b) => Some(b),
            _ => None,
        })
    }

    /// Concatenate programs (several source files checked together).
    pub fn extend(&mut self, other: SurfaceProgram) {
        self.decls.extend(other.decls);
    }
}
