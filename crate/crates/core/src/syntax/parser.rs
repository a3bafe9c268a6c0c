use std::collections::BTreeMap;

use crate::chr::{Body, ChrRule, ClassConstraint, GoalItem};
use crate::herbrand::{Guard, Term, Var, ARROW, LIST, TYAPP};
use crate::inference::{Expr, LetBinding, Literal, TypeScheme};

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::ParseError;

type PResult<T> = Result<T, ParseError>;

const KEYWORDS: &[&str] = &["class", "instance", "where", "rule", "let", "in", "if", "then", "else"];

/// Operators that are punctuation of the grammar rather than functions.
const RESERVED_OPS: &[&str] = &["=", "|", "->", "=>", "::", "@", "\\", "<-", "..", "~>", "<=>", "==>"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Assoc {
    Left,
    Right,
    Non,
}

fn fixity(op: &str) -> (u8, Assoc) {
    match op {
        "$" => (0, Assoc::Right),
        "||" => (2, Assoc::Right),
        "&&" => (3, Assoc::Right),
        "==" | "/=" | "<" | "<=" | ">" | ">=" | "elem" | "notElem" => (4, Assoc::Non),
        "++" | ":" => (5, Assoc::Right),
        "+" | "-" => (6, Assoc::Left),
        "*" | "/" | "div" | "mod" | "quot" | "rem" => (7, Assoc::Left),
        "^" => (8, Assoc::Right),
        "." => (9, Assoc::Right),
        _ => (9, Assoc::Left),
    }
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    /// Enclosing layout columns; a line starting at or left of the top one ends the construct.
    layout: Vec<usize>,
    /// Index of the token opening the current declaration or block item; never a stop.
    anchor: usize,
}

enum LocalItem {
    Sig(Vec<String>, TypeScheme, Loc),
    Bind(LetBinding),
}

impl<'t> Parser<'t> {
    fn new(toks: &'t [Token], col: usize) -> Self {
        Parser { toks, pos: 0, layout: vec![col], anchor: 0 }
    }

    fn peek(&self) -> &'t Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, n: usize) -> &'t Token {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> &'t Token {
        let t = self.peek();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn loc(&self) -> Loc {
        self.peek().loc
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::new(self.loc(), msg))
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.err(format!("expected {wanted}, found {}", self.peek().tok.describe()))
    }

    fn stop_at(&self, i: usize) -> bool {
        let i = i.min(self.toks.len() - 1);
        let t = &self.toks[i];
        t.tok == Tok::Eof || (i != self.anchor && t.bol && t.loc.col <= *self.layout.last().expect("layout stack"))
    }

    fn at_stop(&self) -> bool {
        self.stop_at(self.pos)
    }

    fn is_op(&self, op: &str) -> bool {
        !self.at_stop() && matches!(&self.peek().tok, Tok::Op(s) if s == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        !self.at_stop() && matches!(&self.peek().tok, Tok::Lower(s) if s == kw)
    }

    fn is(&self, tok: &Tok) -> bool {
        !self.at_stop() && self.peek().tok == *tok
    }

    fn eat_op(&mut self, op: &str) -> bool {
        let yes = self.is_op(op);
        if yes {
            self.next();
        }
        yes
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.unexpected(&format!("`{op}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.next();
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.is(&tok) {
            self.next();
            Ok(())
        } else {
            self.unexpected(&tok.describe())
        }
    }

    fn lower_ident(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Lower(s) if !KEYWORDS.contains(&s.as_str()) && !self.at_stop() => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn upper_ident(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Upper(s) if !self.at_stop() => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.unexpected("a capitalised name"),
        }
    }

    /// Scan ahead (same construct, bracket depth 0) for `target` before any `stops`.
    fn ahead_at_depth0(&self, target: &str, stops: &[&str]) -> bool {
        let mut depth = 0i32;
        let mut i = self.pos;
        while i < self.toks.len() {
            let t = &self.toks[i];
            if i > self.pos && self.stop_at(i) || t.tok == Tok::Eof {
                return false;
            }
            match &t.tok {
                Tok::LParen | Tok::LBracket | Tok::LBrace => depth += 1,
                Tok::RParen | Tok::RBracket | Tok::RBrace => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                }
                Tok::Op(s) if depth == 0 && s == target => return true,
                Tok::Op(s) if depth == 0 && stops.contains(&s.as_str()) => return false,
                Tok::Lower(s) if depth == 0 && stops.contains(&s.as_str()) => return false,
                _ => {}
            }
            i += 1;
        }
        false
    }

    fn block<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        if self.is(&Tok::LBrace) {
            self.next();
            self.layout.push(0);
            while !self.is(&Tok::RBrace) {
                out.push(item(self)?);
                if self.is(&Tok::Semi) {
                    self.next();
                } else if !self.is(&Tok::RBrace) {
                    return self.unexpected("`;` or `}`");
                }
            }
            self.layout.pop();
            self.expect(Tok::RBrace)?;
            return Ok(out);
        }
        if self.at_stop() {
            return Ok(out);
        }
        let col = self.loc().col;
        self.layout.push(col);
        loop {
            self.anchor = self.pos;
            out.push(item(self)?);
            if self.peek().tok == Tok::Semi && !self.at_stop() {
                self.next();
                if self.at_stop() && !self.continues_block(col) {
                    break;
                }
                continue;
            }
            if self.continues_block(col) {
                continue;
            }
            break;
        }
        self.layout.pop();
        Ok(out)
    }

    fn continues_block(&self, col: usize) -> bool {
        let t = self.peek();
        t.tok != Tok::Eof && t.bol && t.loc.col == col
    }

    // ---- declarations ----

    fn program(&mut self) -> PResult<SurfaceProgram> {
        let mut decls = Vec::new();
        while self.peek().tok != Tok::Eof {
            let t = self.peek();
            if t.loc.col != 1 {
                return self.err("top-level declarations must start in column 1");
            }
            self.anchor = self.pos;
            self.decl(&mut decls)?;
            if !self.at_stop() {
                return self.unexpected("end of declaration");
            }
        }
        Ok(SurfaceProgram { decls })
    }

    fn labels(&mut self) -> Vec<String> {
        let save = self.pos;
        let mut labels = Vec::new();
        loop {
            match &self.peek().tok {
                Tok::Lower(s) | Tok::Upper(s) if !KEYWORDS.contains(&s.as_str()) => {
                    labels.push(s.clone());
                    self.pos += 1;
                }
                _ => break,
            }
            if self.peek().tok == Tok::Comma {
                self.pos += 1;
                continue;
            }
            break;
        }
        if !labels.is_empty() && matches!(&self.peek().tok, Tok::Op(s) if s == "@") {
            self.pos += 1;
            labels
        } else {
            self.pos = save;
            Vec::new()
        }
    }

    fn decl(&mut self, out: &mut Vec<Decl>) -> PResult<()> {
        let loc = self.loc();
        let labels = self.labels();
        match &self.peek().tok {
            Tok::Lower(k) if k == "class" => {
                self.next();
                out.push(Decl::Class(self.class_decl(labels, loc)?));
            }
            Tok::Lower(k) if k == "instance" => {
                self.next();
                if labels.len() > 1 {
                    return Err(ParseError::new(loc, "an instance declaration takes a single label"));
                }
                out.push(Decl::Instance(self.instance_decl(labels.into_iter().next(), loc)?));
            }
            _ if !labels.is_empty() => return self.unexpected("`class` or `instance` after a label"),
            Tok::Lower(k) if k == "rule" => {
                self.next();
                let rule = self.rule()?;
                out.push(Decl::Rule(RawRule { rule, loc }));
            }
            _ => {
                if self.ahead_at_depth0("::", &["="]) {
                    let (names, scheme) = self.signature()?;
                    for name in names {
                        out.push(Decl::Signature(Signature { name, scheme: scheme.clone(), loc }));
                    }
                } else {
                    let b = self.binding()?;
                    out.push(Decl::Binding(Binding { name: b.name, body: b.body, loc }));
                }
            }
        }
        Ok(())
    }

    fn context_prefix(&mut self) -> PResult<Vec<ClassConstraint>> {
        if !self.ahead_at_depth0("=>", &["where", "|", "=", "::"]) {
            return Ok(Vec::new());
        }
        let ctx = self.context()?;
        self.expect_op("=>")?;
        Ok(ctx)
    }

    fn context(&mut self) -> PResult<Vec<ClassConstraint>> {
        if self.is(&Tok::LParen) {
            // `(C a, D b)`, `()`, or a single parenthesised constraint
            let save = self.pos;
            self.next();
            let mut out = Vec::new();
            if self.is(&Tok::RParen) {
                self.next();
                return Ok(out);
            }
            loop {
                out.push(self.constraint()?);
                if self.is(&Tok::Comma) {
                    self.next();
                    continue;
                }
                break;
            }
            if self.is(&Tok::RParen) {
                self.next();
                return Ok(out);
            }
            self.pos = save;
        }
        Ok(vec![self.constraint()?])
    }

    fn constraint(&mut self) -> PResult<ClassConstraint> {
        let loc = self.loc();
        let t = self.btype()?;
        term_to_constraint(t).ok_or_else(|| ParseError::new(loc, "expected a class constraint `C t1 .. tn`"))
    }

    fn class_decl(&mut self, labels: Vec<String>, loc: Loc) -> PResult<ClassDecl> {
        let context = self.context_prefix()?;
        let name = self.upper_ident()?;
        let mut params = Vec::new();
        while matches!(&self.peek().tok, Tok::Lower(s) if !KEYWORDS.contains(&s.as_str())) && !self.at_stop() {
            params.push(Var::new(self.lower_ident()?));
        }
        if params.is_empty() {
            return self.unexpected("a class parameter");
        }
        let mut fundeps = Vec::new();
        if self.eat_op("|") {
            loop {
                let mut from = Vec::new();
                while !self.is_op("~>") && !self.is_op("->") {
                    from.push(Var::new(self.lower_ident()?));
                }
                self.next();
                let mut to = Vec::new();
                while matches!(&self.peek().tok, Tok::Lower(s) if !KEYWORDS.contains(&s.as_str())) && !self.at_stop() {
                    to.push(Var::new(self.lower_ident()?));
                }
                if to.is_empty() {
                    return self.unexpected("a dependent class parameter");
                }
                // `a ~> b c` is shorthand for `a ~> b, a ~> c`
                for t in to {
                    fundeps.push(FunDep { from: from.clone(), to: t });
                }
                if self.is(&Tok::Comma) {
                    self.next();
                    continue;
                }
                break;
            }
        }
        let mut methods = Vec::new();
        if self.is_kw("where") {
            self.next();
            let groups = self.block(|p| {
                let loc = p.loc();
                let (names, scheme) = p.signature()?;
                Ok(names.into_iter().map(|name| MethodSig { name, context: scheme.context.clone(), ty: scheme.body.clone(), loc }).collect::<Vec<_>>())
            })?;
            methods = groups.into_iter().flatten().collect();
        }
        Ok(ClassDecl { labels, name, params, context, fundeps, methods, loc })
    }

    fn instance_decl(&mut self, label: Option<String>, loc: Loc) -> PResult<InstanceDecl> {
        let context = self.context_prefix()?;
        let class = self.upper_ident()?;
        let mut args = Vec::new();
        while self.starts_atype() {
            args.push(self.atype()?);
        }
        if args.is_empty() {
            return self.unexpected("an instance argument");
        }
        if self.is_kw("where") {
            // method bodies play no part in the constraint system
            self.next();
            while !self.at_stop() {
                self.next();
            }
        }
        Ok(InstanceDecl { label, class, args, context, loc })
    }

    fn rule(&mut self) -> PResult<ChrRule> {
        let name = match &self.peek().tok {
            Tok::Lower(s) | Tok::Upper(s) if !self.at_stop() => s.clone(),
            _ => return self.unexpected("a rule name"),
        };
        self.next();
        self.expect_op("@")?;
        let mut head = vec![self.constraint()?];
        while self.is(&Tok::Comma) {
            self.next();
            head.push(self.constraint()?);
        }
        let propagation = if self.eat_op("==>") {
            true
        } else if self.eat_op("<=>") {
            false
        } else {
            return self.unexpected("`<=>` or `==>`");
        };
        let mut guard = Vec::new();
        if self.ahead_at_depth0("|", &[]) {
            loop {
                if self.is(&Tok::Upper("True".into())) {
                    self.next();
                } else {
                    let l = self.ty()?;
                    if self.eat_op("=") {
                        guard.push(Guard::Eq(l, self.ty()?));
                    } else if self.eat_op("/=") {
                        guard.push(Guard::Neq(l, self.ty()?));
                    } else {
                        return self.unexpected("`=` or `/=` in a guard");
                    }
                }
                if self.is(&Tok::Comma) {
                    self.next();
                    continue;
                }
                break;
            }
            self.expect_op("|")?;
        }
        let body = self.body()?;
        Ok(if propagation { ChrRule::propagation(name, head, guard, body) } else { ChrRule::simplification(name, head, guard, body) })
    }

    fn body(&mut self) -> PResult<Body> {
        let mut items = Vec::new();
        let mut is_false = false;
        loop {
            if self.is(&Tok::Upper("False".into())) && !self.starts_atype_at(1) {
                self.next();
                is_false = true;
            } else if self.is(&Tok::Upper("True".into())) && !self.starts_atype_at(1) && !matches!(&self.peek_at(1).tok, Tok::Op(s) if s == "=") {
                self.next();
            } else {
                items.push(self.goal_item()?);
            }
            if self.is(&Tok::Comma) {
                self.next();
                continue;
            }
            break;
        }
        Ok(if is_false { Body::False } else { Body::Items(items) })
    }

    fn goal_item(&mut self) -> PResult<GoalItem> {
        let loc = self.loc();
        let t = self.ty()?;
        if self.eat_op("=") {
            return Ok(GoalItem::eq(t, self.ty()?));
        }
        term_to_constraint(t).map(GoalItem::Class).ok_or_else(|| ParseError::new(loc, "expected a class constraint or an equation"))
    }

    fn signature(&mut self) -> PResult<(Vec<String>, TypeScheme)> {
        let mut names = vec![self.value_name()?];
        while self.is(&Tok::Comma) {
            self.next();
            names.push(self.value_name()?);
        }
        self.expect_op("::")?;
        Ok((names, self.scheme()?))
    }

    /// `name` or `(op)`
    fn value_name(&mut self) -> PResult<String> {
        if self.is(&Tok::LParen) {
            if let (Tok::Op(op), Tok::RParen) = (&self.peek_at(1).tok, &self.peek_at(2).tok) {
                let op = op.clone();
                self.pos += 3;
                return Ok(op);
            }
        }
        self.lower_ident()
    }

    fn scheme(&mut self) -> PResult<TypeScheme> {
        let context = self.context_prefix()?;
        let body = self.ty()?;
        Ok(TypeScheme::closed(context, body))
    }

    // ---- types ----

    fn starts_atype_at(&self, n: usize) -> bool {
        let t = self.peek_at(n);
        if self.stop_at(self.pos + n) {
            return false;
        }
        match &t.tok {
            Tok::Lower(s) => !KEYWORDS.contains(&s.as_str()),
            Tok::Upper(_) | Tok::LParen | Tok::LBracket => true,
            _ => false,
        }
    }

    fn starts_atype(&self) -> bool {
        self.starts_atype_at(0)
    }

    fn ty(&mut self) -> PResult<Term> {
        let t = self.btype()?;
        if self.eat_op("->") {
            return Ok(Term::arrow(t, self.ty()?));
        }
        Ok(t)
    }

    fn btype(&mut self) -> PResult<Term> {
        if let Tok::Upper(name) = &self.peek().tok {
            if self.at_stop() {
                return self.unexpected("a type");
            }
            let name = name.clone();
            self.next();
            let mut args = Vec::new();
            while self.starts_atype() {
                args.push(self.atype()?);
            }
            return Ok(named_type(name, args));
        }
        let loc = self.loc();
        let head = self.atype()?;
        let mut args = Vec::new();
        while self.starts_atype() {
            args.push(self.atype()?);
        }
        if args.is_empty() {
            return Ok(head);
        }
        match head {
            Term::Var(_) => Ok(args.into_iter().fold(head, |f, a| Term::app(TYAPP, vec![f, a]))),
            _ => Err(ParseError::new(loc, "only constructors and type variables can be applied")),
        }
    }

    fn atype(&mut self) -> PResult<Term> {
        if self.at_stop() {
            return self.unexpected("a type");
        }
        match self.peek().tok.clone() {
            Tok::Lower(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                Ok(Term::var(s))
            }
            Tok::Upper(s) => {
                self.next();
                Ok(named_type(s, Vec::new()))
            }
            Tok::LBracket => {
                self.next();
                let t = self.ty()?;
                self.expect(Tok::RBracket)?;
                Ok(Term::list(t))
            }
            Tok::LParen => {
                self.next();
                if self.is(&Tok::RParen) {
                    self.next();
                    return Ok(Term::tuple(Vec::new()));
                }
                let mut elems = vec![self.ty()?];
                while self.is(&Tok::Comma) {
                    self.next();
                    elems.push(self.ty()?);
                }
                self.expect(Tok::RParen)?;
                Ok(if elems.len() == 1 { elems.pop().expect("one element") } else { Term::tuple(elems) })
            }
            _ => self.unexpected("a type"),
        }
    }

    // ---- bindings and expressions ----

    fn binding(&mut self) -> PResult<LetBinding> {
        let name = self.value_name()?;
        let mut params = Vec::new();
        while !self.is_op("=") {
            params.push(self.lower_ident()?);
        }
        self.expect_op("=")?;
        let body = self.expr()?;
        let body = if self.is_kw("where") {
            self.next();
            let locals = self.local_block()?;
            if locals.is_empty() {
                body
            } else {
                Expr::Let(locals, Box::new(body))
            }
        } else {
            body
        };
        Ok(LetBinding { name, body: Expr::lam(params, body), signature: None })
    }

    fn local_block(&mut self) -> PResult<Vec<LetBinding>> {
        let items = self.block(|p| {
            let loc = p.loc();
            if p.ahead_at_depth0("::", &["="]) {
                let (names, scheme) = p.signature()?;
                Ok(LocalItem::Sig(names, scheme, loc))
            } else {
                Ok(LocalItem::Bind(p.binding()?))
            }
        })?;
        let mut sigs: BTreeMap<String, (TypeScheme, Loc)> = BTreeMap::new();
        let mut out = Vec::new();
        for item in items {
            match item {
                LocalItem::Sig(names, scheme, loc) => {
                    for n in names {
                        sigs.insert(n, (scheme.clone(), loc));
                    }
                }
                LocalItem::Bind(b) => out.push(b),
            }
        }
        for (name, (scheme, loc)) in sigs {
            match out.iter_mut().find(|b: &&mut LetBinding| b.name == name) {
                Some(b) => b.signature = Some(scheme),
                None => return Err(ParseError::new(loc, format!("signature for `{name}` lacks an accompanying binding"))),
            }
        }
        Ok(out)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.op_expr(0)
    }

    fn special_expr(&mut self) -> PResult<Option<Expr>> {
        if self.is_op("\\") {
            self.next();
            let mut params = Vec::new();
            while !self.is_op("->") {
                params.push(self.lower_ident()?);
            }
            self.next();
            if params.is_empty() {
                return self.unexpected("a lambda parameter");
            }
            return Ok(Some(Expr::lam(params, self.expr()?)));
        }
        if self.is_kw("let") {
            self.next();
            let bs = self.local_block()?;
            self.expect_kw("in")?;
            let body = self.expr()?;
            return Ok(Some(Expr::Let(bs, Box::new(body))));
        }
        if self.is_kw("if") {
            self.next();
            let c = self.expr()?;
            self.expect_kw("then")?;
            let t = self.expr()?;
            self.expect_kw("else")?;
            let e = self.expr()?;
            return Ok(Some(Expr::If(Box::new(c), Box::new(t), Box::new(e))));
        }
        Ok(None)
    }

    fn peek_operator(&self) -> Option<(String, usize)> {
        if self.at_stop() {
            return None;
        }
        match &self.peek().tok {
            Tok::Op(s) if !RESERVED_OPS.contains(&s.as_str()) => Some((s.clone(), 1)),
            Tok::Backtick => match (&self.peek_at(1).tok, &self.peek_at(2).tok) {
                (Tok::Lower(s), Tok::Backtick) => Some((s.clone(), 3)),
                _ => None,
            },
            _ => None,
        }
    }

    fn op_expr(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.application()?;
        while let Some((op, width)) = self.peek_operator() {
            let (prec, assoc) = fixity(&op);
            if prec < min_prec {
                break;
            }
            self.pos += width;
            let next_min = if assoc == Assoc::Right { prec } else { prec + 1 };
            let rhs = self.op_expr(next_min)?;
            lhs = Expr::apps(Expr::Var(op.clone()), [lhs, rhs]);
            if assoc == Assoc::Non {
                if let Some((op2, _)) = self.peek_operator() {
                    if fixity(&op2).0 == prec {
                        return self.err(format!("`{op}` and `{op2}` are non-associative and cannot be chained"));
                    }
                }
            }
        }
        Ok(lhs)
    }

    fn starts_atom(&self) -> bool {
        if self.at_stop() {
            return false;
        }
        match &self.peek().tok {
            Tok::Lower(s) => !KEYWORDS.contains(&s.as_str()),
            Tok::Upper(_) | Tok::Int(_) | Tok::Char(_) | Tok::Str(_) | Tok::LParen | Tok::LBracket => true,
            _ => false,
        }
    }

    fn application(&mut self) -> PResult<Expr> {
        if let Some(e) = self.special_expr()? {
            return Ok(e);
        }
        if !self.starts_atom() {
            return self.unexpected("an expression");
        }
        let mut e = self.atom()?;
        loop {
            if self.starts_atom() {
                let a = self.atom()?;
                e = Expr::app(e, a);
            } else if let Some(special) = self.special_expr()? {
                // `f \x -> ..` style trailing argument
                e = Expr::app(e, special);
                break;
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().tok.clone() {
            Tok::Lower(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                Ok(Expr::Var(s))
            }
            Tok::Upper(s) => {
                self.next();
                Ok(Expr::Con(s))
            }
            Tok::Int(n) => {
                self.next();
                Ok(Expr::Lit(Literal::Int(n)))
            }
            Tok::Char(c) => {
                self.next();
                Ok(Expr::Lit(Literal::Char(c)))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Tok::LParen => {
                if let (Tok::Op(op), Tok::RParen) = (&self.peek_at(1).tok, &self.peek_at(2).tok) {
                    let op = op.clone();
                    self.pos += 3;
                    return Ok(Expr::Var(op));
                }
                self.next();
                self.layout.push(0);
                let result = (|| {
                    if self.is(&Tok::RParen) {
                        self.next();
                        return Ok(Expr::Tuple(Vec::new()));
                    }
                    let mut elems = vec![self.expr()?];
                    while self.is(&Tok::Comma) {
                        self.next();
                        elems.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    Ok(if elems.len() == 1 { elems.pop().expect("one element") } else { Expr::Tuple(elems) })
                })();
                self.layout.pop();
                result
            }
            Tok::LBracket => {
                self.next();
                self.layout.push(0);
                let result = (|| {
                    let mut elems = Vec::new();
                    if !self.is(&Tok::RBracket) {
                        elems.push(self.expr()?);
                        while self.is(&Tok::Comma) {
                            self.next();
                            elems.push(self.expr()?);
                        }
                    }
                    self.expect(Tok::RBracket)?;
                    Ok(Expr::List(elems))
                })();
                self.layout.pop();
                result
            }
            _ => self.unexpected("an expression"),
        }
    }
}

fn named_type(name: String, args: Vec<Term>) -> Term {
    if name == "String" && args.is_empty() {
        Term::list(Term::con("Char"))
    } else {
        Term::app(name, args)
    }
}

fn term_to_constraint(t: Term) -> Option<ClassConstraint> {
    match t {
        Term::App(name, args) if !args.is_empty() && name.starts_with(|c: char| c.is_ascii_uppercase()) => {
            Some(ClassConstraint::new(name.to_string(), args))
        }
        _ => None,
    }
}

fn finish<T>(p: &mut Parser<'_>, value: T) -> PResult<T> {
    if p.peek().tok != Tok::Eof {
        return p.unexpected("end of input");
    }
    Ok(value)
}

/// Parse a source file. Arities are validated per file; see [`validate_arities`]
/// for checking several files together.
pub fn parse_program(src: &str) -> PResult<SurfaceProgram> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks, 1);
    let prog = p.program()?;
    validate_arities(&prog)?;
    Ok(prog)
}

pub fn parse_type(src: &str) -> PResult<Term> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks, 0);
    let t = p.ty()?;
    finish(&mut p, t)
}

pub fn parse_type_scheme(src: &str) -> PResult<TypeScheme> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks, 0);
    let s = p.scheme()?;
    finish(&mut p, s)
}

/// A goal: comma-separated constraints and equations, or `True`.
pub fn parse_goal(src: &str) -> PResult<Vec<GoalItem>> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks, 0);
    let body = p.body()?;
    let body = finish(&mut p, body)?;
    match body {
        Body::Items(items) => Ok(items),
        Body::False => Err(ParseError::new(Loc { line: 1, col: 1 }, "a goal cannot be False")),
    }
}

pub fn parse_constraints(src: &str) -> PResult<Vec<ClassConstraint>> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks, 0);
    let ctx = p.context()?;
    finish(&mut p, ctx)
}

/// A single rule in dump syntax, with or without the leading `rule` keyword.
pub fn parse_rule(src: &str) -> PResult<ChrRule> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks, 0);
    if p.is_kw("rule") {
        p.next();
    }
    let r = p.rule()?;
    finish(&mut p, r)
}

/// Check that every constructor and every class is used with one arity.
pub fn validate_arities(prog: &SurfaceProgram) -> PResult<()> {
    let mut cons: BTreeMap<String, usize> = BTreeMap::new();
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    let mut check_term = |t: &Term, loc: Loc| -> PResult<()> {
        let mut res = Ok(());
        t.for_each_constructor(&mut |name, arity| {
            if res.is_err() || name == ARROW || name == LIST || name == TYAPP {
                return;
            }
            match cons.get(name) {
                Some(&a) if a != arity => {
                    res = Err(ParseError::new(loc, format!("constructor `{name}` used with {arity} arguments, elsewhere with {a}")))
                }
                Some(_) => {}
                None => {
                    cons.insert(name.to_string(), arity);
                }
            }
        });
        res
    };
    let mut terms: Vec<(Term, Loc)> = Vec::new();
    let mut constraints: Vec<(ClassConstraint, Loc)> = Vec::new();
    for d in &prog.decls {
        match d {
            Decl::Class(c) => {
                constraints.push((c.head(), c.loc));
                constraints.extend(c.context.iter().map(|k| (k.clone(), c.loc)));
                for m in &c.methods {
                    terms.push((m.ty.clone(), m.loc));
                    constraints.extend(m.context.iter().map(|k| (k.clone(), m.loc)));
                }
            }
            Decl::Instance(i) => {
                constraints.push((i.head(), i.loc));
                constraints.extend(i.context.iter().map(|k| (k.clone(), i.loc)));
            }
            Decl::Rule(r) => {
                constraints.extend(r.rule.head.iter().map(|k| (k.clone(), r.loc)));
                for g in &r.rule.guard {
                    match g {
                        Guard::Eq(a, b) | Guard::Neq(a, b) => {
                            terms.push((a.clone(), r.loc));
                            terms.push((b.clone(), r.loc));
                        }
                    }
                }
                for item in r.rule.body.items() {
                    match item {
                        GoalItem::Class(k) => constraints.push((k.clone(), r.loc)),
                        GoalItem::Eq(e) => {
                            terms.push((e.left.clone(), r.loc));
                            terms.push((e.right.clone(), r.loc));
                        }
                    }
                }
            }
            Decl::Signature(s) => {
                terms.push((s.scheme.body.clone(), s.loc));
                constraints.extend(s.scheme.context.iter().map(|k| (k.clone(), s.loc)));
            }
            Decl::Binding(b) => collect_local_signatures(&b.body, b.loc, &mut terms, &mut constraints),
        }
    }
    for (c, loc) in &constraints {
        match classes.get(&c.class) {
            Some(&a) if a != c.args.len() => {
                return Err(ParseError::new(*loc, format!("class `{}` used with {} arguments, elsewhere with {a}", c.class, c.args.len())))
            }
            Some(_) => {}
            None => {
                classes.insert(c.class.clone(), c.args.len());
            }
        }
        for a in &c.args {
            check_term(a, *loc)?;
        }
    }
    for (t, loc) in &terms {
        check_term(t, *loc)?;
    }
    Ok(())
}

fn collect_local_signatures(e: &Expr, loc: Loc, terms: &mut Vec<(Term, Loc)>, constraints: &mut Vec<(ClassConstraint, Loc)>) {
    match e {
        Expr::Let(bs, body) => {
            for b in bs {
                if let Some(s) = &b.signature {
                    terms.push((s.body.clone(), loc));
                    constraints.extend(s.context.iter().map(|k| (k.clone(), loc)));
                }
                collect_local_signatures(&b.body, loc, terms, constraints);
            }
            collect_local_signatures(body, loc, terms, constraints);
        }
        Expr::App(f, a) => {
            collect_local_signatures(f, loc, terms, constraints);
            collect_local_signatures(a, loc, terms, constraints);
        }
        Expr::Lam(_, b) => collect_local_signatures(b, loc, terms, constraints),
        Expr::If(c, t, f) => {
            for x in [c, t, f] {
                collect_local_signatures(x, loc, terms, constraints);
            }
        }
        Expr::List(es) | Expr::Tuple(es) => es.iter().for_each(|x| collect_local_signatures(x, loc, terms, constraints)),
        Expr::Var(_) | Expr::Con(_) | Expr::Lit(_) => {}
    }
}
