//! The ambiguity check on method types: `empty :: Collects e ce => ce` does
//! not determine `e` unless the class declares `ce ~> e`.

use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::inference::{check_ambiguity, infer_program, InferOptions};
use chrtc::syntax::{parse_program, parse_type_scheme};

fn main() {
    for header in ["class Collects e ce", "T1 @ class Collects e ce | ce ~> e"] {
        let src = format!("{header} where\n  empty :: ce\n  insert :: e -> ce -> ce\n");
        let program = parse_program(&src).unwrap();
        let rules = build_ruleset(&program, &DesugarOptions::default()).unwrap();
        let report = infer_program(&program, &rules, &InferOptions::default());
        println!("== {header}");
        for m in &report.methods {
            println!("{} :: {}  -- {}", m.name, m.scheme, m.ambiguity);
        }
        println!("strict exit code: {}", report.exit_code(true));
    }

    let rules = build_ruleset(&parse_program("class Eq t\nclass Show t\n").unwrap(), &DesugarOptions::default()).unwrap();
    for s in ["(Eq a, Show b) => a -> a", "(Eq a, Show a) => a -> String"] {
        let scheme = parse_type_scheme(s).unwrap();
        println!("{s}  -- {}", check_ambiguity(&scheme, &rules, 1_000));
    }
}
