//! A collection class with and without the dependency `ce ~> e`, and a
//! dependency inherited through a superclass.

use chrtc::chr::{derive, DEFAULT_FUEL};
use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::inference::{infer_program, InferOptions};
use chrtc::syntax::{parse_goal, parse_program};

fn infer(title: &str, src: &str) {
    let program = parse_program(src).unwrap();
    let rules = build_ruleset(&program, &DesugarOptions::default()).unwrap();
    let report = infer_program(&program, &rules, &InferOptions::default());
    println!("== {title}");
    for b in &report.bindings {
        println!("{}", b.rendered().unwrap());
    }
}

fn main() {
    let body = "  empty :: ce\n  insert :: e -> ce -> ce\n\nf x y c = insert x z where z = insert y c\n";
    infer("no dependency", &format!("class Collects e ce where\n{body}"));
    infer("ce ~> e", &format!("T1 @ class Collects e ce | ce ~> e where\n{body}"));

    let src = "class U a b | a ~> b\nclass U a b => V a b\n";
    let rules = build_ruleset(&parse_program(src).unwrap(), &DesugarOptions::default()).unwrap();
    let goal = parse_goal("U a b, V a c").unwrap();
    let protected = ["a", "b", "c"].map(chrtc::herbrand::Var::new).into();
    let fin = derive(goal, &rules.solving, protected, DEFAULT_FUEL).unwrap();
    println!("== inherited\nU a b, V a c  =>  {}", fin.canonical());
}
