use std::collections::{BTreeMap, BTreeSet};

use crate::chr::{ChrState, DeriveError, Engine, FinalState, GoalItem};
use crate::desugar::RuleSet;
use crate::herbrand::{Term, Var};

use super::{sccs, Literal, TypeEnv, TypeError, TypeScheme};
use super::expr::Expr;

/// Constraint generator: hands out fresh type variables and collects the
/// equations and class constraints of the expressions it walks.
#[derive(Clone, Debug)]
pub struct Generator<'r> {
    rules: &'r RuleSet,
    fuel: usize,
    next_stamp: u32,
    constraints: Vec<GoalItem>,
}

impl<'r> Generator<'r> {
    pub fn new(rules: &'r RuleSet, fuel: usize) -> Self {
        let stamp = rules.solving.max_stamp().max(rules.presentation.max_stamp());
        Generator { rules, fuel, next_stamp: stamp + 1, constraints: Vec::new() }
    }

    pub fn fresh_var(&mut self, name: &str) -> Var {
        let v = Var::with_stamp(name, self.next_stamp);
        self.next_stamp += 1;
        v
    }

    pub fn fresh(&mut self) -> Term {
        Term::Var(self.fresh_var("t"))
    }

    /// Keep fresh names clear of variables already in circulation.
    pub fn reserve(&mut self, vars: impl IntoIterator<Item = Var>) {
        for v in vars {
            self.next_stamp = self.next_stamp.max(v.stamp() + 1);
        }
    }

    pub fn constraints(&self) -> &[GoalItem] {
        &self.constraints
    }

    pub fn take_constraints(&mut self) -> Vec<GoalItem> {
        std::mem::take(&mut self.constraints)
    }

    pub fn push(&mut self, item: GoalItem) {
        self.constraints.push(item);
    }

    pub fn instantiate(&mut self, scheme: &TypeScheme) -> Term {
        let map: BTreeMap<Var, Var> = scheme.vars.iter().map(|v| (v.clone(), self.fresh_var(v.name()))).collect();
        for c in &scheme.context {
            self.constraints.push(GoalItem::Class(c.rename(&map)));
        }
        scheme.body.rename(&map)
    }

    fn unify(&mut self, a: Term, b: Term) {
        if a != b {
            self.constraints.push(GoalItem::eq(a, b));
        }
    }

    /// Derive `goal` under the solving rules; fresh names stay clear of the result.
    pub fn solve(&mut self, goal: Vec<GoalItem>, protected: BTreeSet<Var>) -> Result<FinalState, DeriveError> {
        let mut vars = Vec::new();
        goal.iter().for_each(|g| g.collect_vars(&mut vars));
        self.reserve(vars);
        let engine = Engine::new(&self.rules.solving).fuel(self.fuel).record_trace(false);
        let state = ChrState::new(goal.clone(), protected.clone());
        match engine.run(state) {
            Ok(fin) => {
                self.reserve(fin.herbrand().vars());
                let mut vs = Vec::new();
                fin.constraints().iter().for_each(|c| c.collect_vars(&mut vs));
                self.reserve(vs);
                Ok(fin)
            }
            // replay with a trace for the diagnostic
            Err(_) => Engine::new(&self.rules.solving).fuel(self.fuel).record_trace(true).run(ChrState::new(goal, protected)),
        }
    }

    /// Type of `e` under `env`; its constraints are appended to the generator.
    pub fn generate(&mut self, e: &Expr, env: &TypeEnv) -> Result<Term, TypeError> {
        match e {
            Expr::Var(x) => match env.get(x) {
                Some(s) => {
                    let s = s.clone();
                    Ok(self.instantiate(&s))
                }
                None => Err(TypeError::UnboundVariable { name: x.clone() }),
            },
            Expr::Con(c) => Ok(match c.as_str() {
                "True" | "False" => Term::con("Bool"),
                other => Term::con(other),
            }),
            Expr::Lit(Literal::Int(_)) => {
                let t = self.fresh();
                self.constraints.push(GoalItem::Class(crate::chr::ClassConstraint::new("Num", vec![t.clone()])));
                Ok(t)
            }
            Expr::Lit(Literal::Char(_)) => Ok(Term::con("Char")),
            Expr::Lit(Literal::Str(_)) => Ok(Term::list(Term::con("Char"))),
            Expr::App(f, a) => {
                let tf = self.generate(f, env)?;
                let ta = self.generate(a, env)?;
                let r = self.fresh();
                self.unify(tf, Term::arrow(ta, r.clone()));
                Ok(r)
            }
            Expr::Lam(params, body) => {
                let mut inner = env.clone();
                let mut args = Vec::new();
                for p in params {
                    let t = self.fresh();
                    inner.insert(p.clone(), TypeScheme::mono(t.clone()));
                    args.push(t);
                }
                let tb = self.generate(body, &inner)?;
                Ok(Term::arrows(args, tb))
            }
            Expr::Let(bindings, body) => {
                let inner = self.let_group(bindings, env)?;
                self.generate(body, &inner)
            }
            Expr::If(c, t, f) => {
                let tc = self.generate(c, env)?;
                self.unify(tc, Term::con("Bool"));
                let tt = self.generate(t, env)?;
                let tf = self.generate(f, env)?;
                self.unify(tt.clone(), tf);
                Ok(tt)
            }
            Expr::List(es) => {
                let elem = self.fresh();
                for e in es {
                    let te = self.generate(e, env)?;
                    self.unify(elem.clone(), te);
                }
                Ok(Term::list(elem))
            }
            Expr::Tuple(es) => {
                let ts = es.iter().map(|e| self.generate(e, env)).collect::<Result<Vec<_>, _>>()?;
                Ok(Term::tuple(ts))
            }
        }
    }

    /// Type local bindings in dependency order, generalising each group.
    fn let_group(&mut self, bindings: &[super::LetBinding], env: &TypeEnv) -> Result<TypeEnv, TypeError> {
        let mut env = env.clone();
        let names: Vec<String> = bindings.iter().map(|b| b.name.clone()).collect();
        let signed: BTreeSet<&str> = bindings.iter().filter(|b| b.signature.is_some()).map(|b| b.name.as_str()).collect();
        for b in bindings {
            if let Some(s) = &b.signature {
                env.insert(b.name.clone(), self.rules.prepare_scheme(s));
            }
        }
        let deps: Vec<Vec<usize>> = bindings
            .iter()
            .map(|b| {
                let fv = b.body.free_vars();
                names.iter().enumerate().filter(|(_, n)| fv.contains(*n) && !signed.contains(n.as_str())).map(|(i, _)| i).collect()
            })
            .collect();
        for group in sccs(bindings.len(), |i| deps[i].clone()) {
            let (plain, with_sig): (Vec<usize>, Vec<usize>) = group.into_iter().partition(|&i| bindings[i].signature.is_none());
            if !plain.is_empty() {
                let mut mono = env.clone();
                let tys: Vec<Term> = plain.iter().map(|_| self.fresh()).collect();
                for (&i, t) in plain.iter().zip(&tys) {
                    mono.insert(bindings[i].name.clone(), TypeScheme::mono(t.clone()));
                }
                for (&i, t) in plain.iter().zip(&tys) {
                    let tb = self.generate(&bindings[i].body, &mono)?;
                    self.unify(t.clone(), tb);
                }
                let schemes = self.generalize(&tys, &env, &bindings[plain[0]].name)?;
                for (&i, s) in plain.iter().zip(schemes) {
                    env.insert(bindings[i].name.clone(), s);
                }
            }
            for i in with_sig {
                // checked for consistency like any other use of the declared type
                let declared = env.get(&bindings[i].name).cloned().expect("signature inserted");
                let tb = self.generate(&bindings[i].body, &env)?;
                let inst = self.instantiate(&declared);
                self.unify(inst, tb);
            }
        }
        Ok(env)
    }

    /// Solve everything collected so far and generalise `tys` over the
    /// variables the environment does not mention. Constraints that mention
    /// only generalised variables move into the schemes; the rest stay.
    fn generalize(&mut self, tys: &[Term], env: &TypeEnv, binding: &str) -> Result<Vec<TypeScheme>, TypeError> {
        let goal = self.take_constraints();
        let protected = env.protected();
        let fin = self.solve(goal, protected.clone()).map_err(|e| TypeError::from_derive(binding, e, self.rules))?;
        let h = fin.herbrand().clone();
        // the solved state, re-expressed as a goal
        for (v, t) in h.iter() {
            self.constraints.push(GoalItem::eq(Term::Var(v.clone()), t.clone()));
        }
        let fixed: BTreeSet<Var> = protected.iter().flat_map(|v| h.apply_var(v).vars()).collect();
        let store = fin.constraints();
        let mut out = Vec::new();
        let mut moved = BTreeSet::new();
        for t in tys {
            let body = h.apply(t);
            let (scheme, used) = close_over(body, &store, &fixed);
            moved.extend(used);
            out.push(scheme);
        }
        for (i, c) in store.iter().enumerate() {
            if !moved.contains(&i) || c.vars().iter().any(|v| fixed.contains(v)) {
                self.constraints.push(GoalItem::Class(c.clone()));
            }
        }
        Ok(out)
    }
}

/// Quantify `body` over everything not in `fixed`, taking the store
/// constraints connected to the body's variables (and those connected to
/// nothing fixed, which would otherwise be lost).
pub(crate) fn close_over(body: Term, store: &[crate::chr::ClassConstraint], fixed: &BTreeSet<Var>) -> (TypeScheme, Vec<usize>) {
    let mut reach: BTreeSet<Var> = body.vars().into_iter().filter(|v| !fixed.contains(v)).collect();
    let mut taken = vec![false; store.len()];
    loop {
        let mut grew = false;
        for (i, c) in store.iter().enumerate() {
            if !taken[i] && c.vars().iter().any(|v| reach.contains(v)) {
                taken[i] = true;
                reach.extend(c.vars().into_iter().filter(|v| !fixed.contains(v)));
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    for (i, c) in store.iter().enumerate() {
        let vs = c.vars();
        if !taken[i] && !vs.is_empty() && vs.iter().all(|v| !fixed.contains(v)) {
            taken[i] = true;
        }
    }
    let used: Vec<usize> = (0..store.len()).filter(|&i| taken[i]).collect();
    let context: Vec<_> = used.iter().map(|&i| store[i].clone()).collect();
    let mut vars = body.vars();
    context.iter().for_each(|c| c.collect_vars(&mut vars));
    let mut seen = BTreeSet::new();
    vars.retain(|v| !fixed.contains(v) && seen.insert(v.clone()));
    (TypeScheme { vars, context, body }, used)
}

/// Constraints generated for `e` under `env`, without any solving (local
/// `let`s are still generalised, which needs the rules).
pub fn generate(e: &Expr, env: &TypeEnv, rules: &RuleSet) -> Result<(Term, Vec<GoalItem>), TypeError> {
    let mut g = Generator::new(rules, crate::chr::DEFAULT_FUEL);
    g.reserve(env.all_vars());
    let t = g.generate(e, env)?;
    Ok((t, g.take_constraints()))
}
