//! Inferring types against a small prelude, including a binding with a
//! signature and the superclass constraint hidden by presentation.

use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::inference::{infer_program, InferOptions};
use chrtc::syntax::parse_program;

const SRC: &str = r#"
class Eq t where
  (==) :: t -> t -> Bool
S1, P1 @ class Eq t => Ord t where
  (<) :: t -> t -> Bool
class Num a where
  (+) :: a -> a -> a
S2 @ instance Eq t => Eq [t]
S3 @ instance Ord t => Ord [t]
instance Eq Int
instance Ord Int
instance Num Int
tail :: [a] -> [a]
init :: [a] -> [a]

f g h = c where
  a = tail g
  b = init h
  c = a < b

member x ys = [x] == ys

inc :: Num a => a -> a
inc x = x + 1

same x = x == 'c'
"#;

fn main() {
    let program = parse_program(SRC).unwrap();
    let rules = build_ruleset(&program, &DesugarOptions::default()).unwrap();
    let report = infer_program(&program, &rules, &InferOptions::default());
    for b in &report.bindings {
        match b.rendered() {
            Some(s) => println!("{s}"),
            None => println!("{}: {}", b.name, b.result.as_ref().unwrap_err()),
        }
    }
}
