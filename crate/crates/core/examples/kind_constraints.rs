//! Constructor classes: type applications `f a` become `Kind1` constraints
//! with built-in rules when kind constraints are enabled.

use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::inference::{infer_program, InferOptions};
use chrtc::syntax::parse_program;

const SRC: &str = "
class Functor f where
  fmap :: (a -> b) -> f a -> f b

twice h x = fmap h (fmap h x)
";

fn main() {
    let program = parse_program(SRC).unwrap();
    let opts = DesugarOptions { kind_constraints: true, ..DesugarOptions::default() };
    let rules = build_ruleset(&program, &opts).unwrap_or_else(|e| panic!("{e}"));
    println!("built-in rules:");
    for r in rules.solving.rules().iter().filter(|r| rules.origin(&r.name).contains("builtin")) {
        println!("  {r}");
    }
    let report = infer_program(&program, &rules, &InferOptions::default());
    for m in &report.methods {
        println!("{} :: {}", m.name, m.scheme);
    }
    for b in &report.bindings {
        println!("{}", b.rendered().unwrap());
    }
}
