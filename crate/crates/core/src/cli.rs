//! The `chrtc` command line: parse source files, run the pipeline and print
//! rules, confluence verdicts, derivations or inferred types.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chr::{render_trace, ChrState, DeriveError, Engine, SelectionPolicy, DEFAULT_FUEL};
use crate::confluence::{check_confluence, ConfluenceVerdict};
use crate::desugar::{build_ruleset, DesugarOptions, RuleSet};
use crate::herbrand::Var;
use crate::inference::{display_renaming, infer_program, render_scheme, Ambiguity, InferOptions, ProgramReport, TypeScheme};
use crate::pretty;
use crate::syntax::{parse_goal, parse_program, Decl, SurfaceProgram};

#[derive(Debug, Parser)]
#[command(name = "chrtc", version, about = "CHR-based type-class checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Step budget for every derivation.
    #[arg(long, global = true, default_value_t = DEFAULT_FUEL)]
    pub fuel: usize,
    /// Encode type-variable applications `f a` as `Kind1` constraints.
    #[arg(long, global = true)]
    pub kind_constraints: bool,
    /// Treat possibly ambiguous types as errors (exit 3).
    #[arg(long, global = true)]
    pub strict_ambiguity: bool,
    /// Print derivation traces.
    #[arg(long, global = true)]
    pub trace: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Pick transitions at random with this seed instead of leftmost-first.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    /// One `key=value` line per fact.
    Records,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Infer and check the types of all top-level bindings.
    Infer { #[arg(required = true)] files: Vec<PathBuf> },
    /// Print the CHR program generated from the declarations.
    Rules { #[arg(required = true)] files: Vec<PathBuf> },
    /// Check the generated CHR program for confluence.
    Confluence { #[arg(required = true)] files: Vec<PathBuf> },
    /// Derive a goal to its final state.
    Derive {
        /// Constraints and equations, e.g. `Ord [t1]` or `U a b, V a c`.
        #[arg(long)]
        goal: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Report the ambiguity verdict of every method and binding.
    Ambiguity { #[arg(required = true)] files: Vec<PathBuf> },
}

/// What a run printed and its exit status.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Output {
    fn fail(mut self, code: i32, message: impl AsRef<str>) -> Output {
        let _ = writeln!(self.stderr, "error: {}", message.as_ref());
        self.code = self.code.max(code);
        self
    }
}

/// Run the command line given by `args` (including the program name).
pub fn run<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                Output { stdout: String::new(), stderr: text, code: 1 }
            } else {
                Output { stdout: text, stderr: String::new(), code: 0 }
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Output {
    let out = Output::default();
    let files = match &cli.command {
        Command::Infer { files } | Command::Rules { files } | Command::Confluence { files } | Command::Ambiguity { files } => files,
        Command::Derive { files, .. } => files,
    };
    let sources = match load(files) {
        Ok(s) => s,
        Err(message) => return out.fail(1, message),
    };
    let f = &cli.flags;
    match &cli.command {
        Command::Infer { .. } => cmd_infer(&sources, f, out),
        Command::Rules { .. } => cmd_rules(&sources.program, f, out),
        Command::Confluence { .. } => cmd_confluence(&sources.program, f, out),
        Command::Derive { goal, .. } => cmd_derive(&sources.program, goal, f, out),
        Command::Ambiguity { .. } => cmd_ambiguity(&sources, f, out),
    }
}

/// Source files parsed and concatenated, remembering which file each
/// declaration came from.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub program: SurfaceProgram,
    /// Path and end index (exclusive) of each file's declarations.
    files: Vec<(PathBuf, usize)>,
}

impl Sources {
    /// The file declaring the first declaration satisfying `pred`.
    pub fn file_of(&self, pred: impl Fn(&Decl) -> bool) -> Option<&Path> {
        let i = self.program.decls.iter().position(pred)?;
        self.files.iter().find(|(_, end)| i < *end).map(|(p, _)| p.as_path())
    }

    fn prefix(&self, pred: impl Fn(&Decl) -> bool) -> String {
        self.file_of(pred).map_or_else(String::new, |p| format!("{}:", p.display()))
    }

    fn binding_prefix(&self, name: &str) -> String {
        self.prefix(|d| matches!(d, Decl::Binding(b) if b.name == name))
    }

    fn method_prefix(&self, name: &str) -> String {
        self.prefix(|d| matches!(d, Decl::Class(c) if c.methods.iter().any(|m| m.name == name)))
    }
}

/// Parse and concatenate source files.
pub fn load(files: &[PathBuf]) -> Result<Sources, String> {
    let mut sources = Sources::default();
    for path in files {
        let src = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let p = parse_program(&src).map_err(|e| format!("{}:{e}", path.display()))?;
        sources.program.extend(p);
        sources.files.push((path.clone(), sources.program.decls.len()));
    }
    crate::syntax::validate_arities(&sources.program).map_err(|e| format!("{e}"))?;
    Ok(sources)
}

fn ruleset(program: &SurfaceProgram, f: &Flags, check: bool, out: &mut Output) -> Option<RuleSet> {
    let opts = DesugarOptions { kind_constraints: f.kind_constraints, fuel: f.fuel, check_confluence: check };
    match build_ruleset(program, &opts) {
        Ok(rs) => {
            for w in &rs.warnings {
                let _ = writeln!(out.stderr, "warning: {w}");
            }
            Some(rs)
        }
        Err(e) => {
            let _ = writeln!(out.stderr, "error: {e}");
            out.code = out.code.max(e.exit_code());
            None
        }
    }
}

fn record(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let value = value.to_string().replace('\n', "\\n");
    let _ = writeln!(out, "{key}={value}");
}

fn display_vars(scheme: &TypeScheme, vars: &[Var]) -> String {
    let names = display_renaming(scheme);
    let shown: Vec<Var> = vars.iter().map(|v| names.get(v).cloned().unwrap_or_else(|| v.clone())).collect();
    pretty::comma_list(&shown)
}

fn ambiguity_text(scheme: &TypeScheme, a: &Ambiguity) -> String {
    match a {
        Ambiguity::Unambiguous => "unambiguous".into(),
        Ambiguity::PossiblyAmbiguous(vs) => format!("possibly ambiguous in {}", display_vars(scheme, vs)),
    }
}

fn cmd_infer(sources: &Sources, f: &Flags, mut out: Output) -> Output {
    let program = &sources.program;
    let Some(rules) = ruleset(program, f, true, &mut out) else { return out };
    let report = infer_program(program, &rules, &InferOptions { fuel: f.fuel });
    let severity = if f.strict_ambiguity { "error" } else { "warning" };
    match f.format {
        Format::Text => {
            for m in &report.methods {
                if !m.ambiguity.is_unambiguous() {
                    let _ = writeln!(
                        out.stderr,
                        "{}{}: {severity}: method `{}` of class `{}`: {} is {}",
                        sources.method_prefix(&m.name),
                        rules.methods[&m.name].loc,
                        m.name,
                        m.class,
                        render_scheme(&m.name, &m.scheme),
                        ambiguity_text(&m.scheme, &m.ambiguity)
                    );
                }
            }
            for b in &report.bindings {
                match &b.result {
                    Ok(i) => {
                        let _ = writeln!(out.stdout, "{}", render_scheme(&b.name, &i.presented));
                        if !i.ambiguity.is_unambiguous() {
                            let _ = writeln!(out.stderr, "{}{}: {severity}: `{}` is {}", sources.binding_prefix(&b.name), b.loc, b.name, ambiguity_text(&i.solved, &i.ambiguity));
                        }
                    }
                    Err(e) => {
                        let _ = writeln!(out.stderr, "{}{}: error: in `{}`: {e}", sources.binding_prefix(&b.name), b.loc, b.name);
                        if f.trace {
                            if let crate::inference::BindingError::Type(t) = e {
                                out.stderr.push_str(&render_trace(t.trace()));
                            }
                        }
                    }
                }
            }
        }
        Format::Records => infer_records(&report, &mut out.stdout),
    }
    out.code = out.code.max(report.exit_code(f.strict_ambiguity));
    out
}

fn infer_records(report: &ProgramReport, s: &mut String) {
    for m in &report.methods {
        record(s, &format!("method.{}.class", m.name), &m.class);
        record(s, &format!("method.{}.scheme", m.name), crate::inference::display_scheme(&m.scheme));
        record(s, &format!("method.{}.ambiguity", m.name), ambiguity_text(&m.scheme, &m.ambiguity));
    }
    for b in &report.bindings {
        match &b.result {
            Ok(i) => {
                record(s, &format!("binding.{}.scheme", b.name), crate::inference::display_scheme(&i.presented));
                record(s, &format!("binding.{}.ambiguity", b.name), ambiguity_text(&i.solved, &i.ambiguity));
                record(s, &format!("binding.{}.signature", b.name), if i.declared { "checked" } else { "none" });
            }
            Err(e) => record(s, &format!("binding.{}.error", b.name), format!("{}: {e}", b.loc)),
        }
    }
}

fn cmd_rules(program: &SurfaceProgram, f: &Flags, mut out: Output) -> Output {
    let Some(rules) = ruleset(program, f, false, &mut out) else { return out };
    match f.format {
        Format::Text => {
            for r in rules.solving.rules() {
                let _ = writeln!(out.stdout, "{r}");
            }
            if !rules.presentation.is_empty() {
                let _ = writeln!(out.stdout, "-- presentation");
                for r in rules.presentation.rules() {
                    let _ = writeln!(out.stdout, "{r}");
                }
            }
        }
        Format::Records => {
            for (kind, p) in [("solving", &rules.solving), ("presentation", &rules.presentation)] {
                for r in p.rules() {
                    record(&mut out.stdout, &format!("rule.{}", r.name), r);
                    record(&mut out.stdout, &format!("rule.{}.kind", r.name), kind);
                    record(&mut out.stdout, &format!("rule.{}.origin", r.name), rules.origin(&r.name));
                }
            }
        }
    }
    out
}

fn cmd_confluence(program: &SurfaceProgram, f: &Flags, mut out: Output) -> Output {
    let Some(rules) = ruleset(program, f, false, &mut out) else { return out };
    let verdict = check_confluence(&rules.solving, f.fuel);
    let termination = if rules.termination.passed() { "passed".to_string() } else { rules.termination.failures.join("; ") };
    match f.format {
        Format::Text => {
            let _ = writeln!(out.stdout, "{verdict}");
            if let Some(w) = verdict.witness() {
                let _ = writeln!(out.stdout, "{}: {}", w.pair.first, rules.origin(&w.pair.first));
                let _ = writeln!(out.stdout, "{}: {}", w.pair.second, rules.origin(&w.pair.second));
            }
            let _ = writeln!(out.stdout, "termination precheck: {termination}");
        }
        Format::Records => {
            let s = &mut out.stdout;
            match &verdict {
                ConfluenceVerdict::Confluent { pairs } => {
                    record(s, "confluence", "confluent");
                    record(s, "critical_pairs", pairs);
                }
                ConfluenceVerdict::NonConfluent(w) => {
                    record(s, "confluence", "non-confluent");
                    record(s, "witness.first", &w.pair.first);
                    record(s, "witness.second", &w.pair.second);
                    record(s, "witness.store", pretty::conjunction(&w.pair.heads));
                    for (side, o) in [("first", &w.first), ("second", &w.second)] {
                        let result = o.failure.as_ref().map_or_else(|| o.canonical.to_string(), |why| format!("False ({why})"));
                        record(s, &format!("witness.{side}.result"), result);
                    }
                }
                ConfluenceVerdict::Inconclusive { reason } => {
                    record(s, "confluence", "inconclusive");
                    record(s, "reason", reason);
                }
            }
            record(s, "termination", &termination);
        }
    }
    out.code = match verdict {
        ConfluenceVerdict::Confluent { .. } => 0,
        ConfluenceVerdict::NonConfluent(_) => 1,
        ConfluenceVerdict::Inconclusive { .. } => 4,
    };
    out
}

fn cmd_derive(program: &SurfaceProgram, goal: &str, f: &Flags, mut out: Output) -> Output {
    let Some(rules) = ruleset(program, f, false, &mut out) else { return out };
    let goal = match parse_goal(goal) {
        Ok(g) => g,
        Err(e) => return out.fail(1, format!("goal:{e}")),
    };
    let mut vars = Vec::new();
    goal.iter().for_each(|g| g.collect_vars(&mut vars));
    let protected: BTreeSet<Var> = vars.into_iter().collect();
    let mut policy = match f.seed {
        Some(seed) => SelectionPolicy::seeded(seed),
        None => SelectionPolicy::Leftmost,
    };
    let result = Engine::new(&rules.solving).fuel(f.fuel).record_trace(f.trace).run_with(ChrState::new(goal, protected), &mut policy);
    let records = f.format == Format::Records;
    match result {
        Ok(fin) => {
            if f.trace {
                out.stdout.push_str(&render_trace(fin.trace()));
            }
            let store = pretty::conjunction(&fin.constraints());
            let h = pretty::substitution(&fin.residual());
            if records {
                record(&mut out.stdout, "result", "final");
                record(&mut out.stdout, "store", store);
                record(&mut out.stdout, "h", h);
                record(&mut out.stdout, "canonical", fin.canonical());
            } else {
                let _ = writeln!(out.stdout, "store: {store}");
                let _ = writeln!(out.stdout, "h: {h}");
            }
            for n in fin.notes() {
                let _ = writeln!(out.stderr, "note: {n}");
            }
        }
        Err(e) => {
            if f.trace {
                out.stdout.push_str(&render_trace(e.trace()));
            }
            let code = match &e {
                DeriveError::Unsatisfiable { reason, .. } => {
                    if records {
                        record(&mut out.stdout, "result", "unsatisfiable");
                        record(&mut out.stdout, "reason", reason);
                    } else {
                        let _ = writeln!(out.stdout, "unsatisfiable: {reason}");
                    }
                    if let crate::chr::UnsatReason::FalseBody { rule } = reason {
                        let _ = writeln!(out.stderr, "note: rule `{rule}` comes from {}", rules.origin(rule));
                    }
                    2
                }
                DeriveError::FuelExceeded { .. } => {
                    let _ = writeln!(out.stderr, "error: {e}");
                    4
                }
            };
            out.code = out.code.max(code);
        }
    }
    out
}

fn cmd_ambiguity(sources: &Sources, f: &Flags, mut out: Output) -> Output {
    let program = &sources.program;
    let Some(rules) = ruleset(program, f, true, &mut out) else { return out };
    let report = infer_program(program, &rules, &InferOptions { fuel: f.fuel });
    let mut any = false;
    let mut line = |out: &mut Output, kind: &str, name: &str, scheme: &TypeScheme, a: &Ambiguity| {
        any |= !a.is_unambiguous();
        match f.format {
            Format::Text => {
                let _ = writeln!(out.stdout, "{}: {}", render_scheme(name, scheme), ambiguity_text(scheme, a));
            }
            Format::Records => record(&mut out.stdout, &format!("{kind}.{name}.ambiguity"), ambiguity_text(scheme, a)),
        }
    };
    for m in &report.methods {
        line(&mut out, "method", &m.name, &m.scheme, &m.ambiguity);
    }
    for b in &report.bindings {
        match &b.result {
            Ok(i) => line(&mut out, "binding", &b.name, &i.solved, &i.ambiguity),
            Err(e) => {
                let _ = writeln!(out.stderr, "{}{}: error: in `{}`: {e}", sources.binding_prefix(&b.name), b.loc, b.name);
            }
        }
    }
    let mut code = report.exit_code(f.strict_ambiguity);
    if any && f.strict_ambiguity {
        code = code.max(3);
    }
    out.code = out.code.max(code);
    out
}
