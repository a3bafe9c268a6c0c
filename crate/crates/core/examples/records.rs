//! Extensible records encoded with classes `Rec` and `Ext` and hand-written
//! rules for field functionality and extension.

use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::inference::{infer_program, InferOptions};
use chrtc::syntax::parse_program;

const SRC: &str = "
class Rec r l b where
  select :: r -> l -> b
  update :: r -> l -> b -> r
class_defn, ext_pres @ class Rec r2 l b => Ext r1 l b r2 where
  extend :: r1 -> l -> b -> r2
rule functionality @ Rec r l b1, Rec r l b2 ==> b1 = b2
rule false_extension @ Ext r1 l b1 r2, Rec r1 l b2 <=> False
rule extension @ Ext r1 l1 b1 r2, Rec r2 l2 b2 ==> l1 /= l2 | Rec r1 l2 b2
(==) :: a -> a -> Bool

f x = (select x (A), select x (B))
g x y l = extend y l (select x l)
h x y = if x == y then [select x (A), select y (B)] else []
relabel x = extend x (A) True `select` (A)
bad x = (select x (A), extend x (A) True)
";

fn main() {
    let program = parse_program(SRC).unwrap();
    let rules = build_ruleset(&program, &DesugarOptions::default()).unwrap_or_else(|e| panic!("{e}"));
    let report = infer_program(&program, &rules, &InferOptions::default());
    for b in &report.bindings {
        match b.rendered() {
            Some(s) => println!("{s}"),
            None => println!("{}: {}", b.name, b.result.as_ref().unwrap_err()),
        }
    }
}
