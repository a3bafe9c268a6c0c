//! Expressing that no type is both Integral and Fractional, and a Dividable
//! class whose instances are chosen by that distinction.

use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::inference::{infer_program, InferOptions};
use chrtc::syntax::parse_program;

const PRELUDE: &str = "
class Num a where
  (+) :: a -> a -> a
class Num a => Fractional a where
  (/) :: a -> a -> a
class Num a => Integral a where
  div :: a -> a -> a
";

fn run(title: &str, extra: &str) {
    let src = format!("{PRELUDE}{extra}");
    let program = parse_program(&src).unwrap();
    let rules = build_ruleset(&program, &DesugarOptions::default()).unwrap_or_else(|e| panic!("{e}"));
    let report = infer_program(&program, &rules, &InferOptions::default());
    println!("== {title}");
    for b in &report.bindings {
        match b.rendered() {
            Some(s) => println!("{s}"),
            None => println!("{}: {}", b.name, b.result.as_ref().unwrap_err()),
        }
    }
}

fn main() {
    let mixed = "f x y = x / y + x `div` y\n";
    run("open world", mixed);
    run("disjoint", &format!("rule IF @ Integral t, Fractional t <=> False\n{mixed}"));
    run(
        "dividable",
        "rule IF @ Integral t, Fractional t <=> False\n\
         class Num a => Dividable a where\n  dividedBy :: a -> a -> a\n\
         rule DI2 @ Dividable t, Integral t <=> Integral t\n\
         rule DF2 @ Dividable t, Fractional t <=> Fractional t\n\
         halfish :: Dividable a => a -> a\nhalfish x = x `dividedBy` 2\n\
         third x = x `dividedBy` 3 + x `div` 1\n",
    );
}
