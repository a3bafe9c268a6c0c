//! Checking instance declarations for consistency: a confluent set, and one
//! whose critical pair leaves different residues.

use chrtc::confluence::check_confluence;
use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::syntax::parse_program;

fn verdict(title: &str, src: &str) {
    let opts = DesugarOptions { check_confluence: false, ..DesugarOptions::default() };
    let rules = build_ruleset(&parse_program(src).unwrap(), &opts).unwrap();
    println!("== {title}\n{}\n", check_confluence(&rules.solving, opts.fuel));
}

fn main() {
    let base = "class Eq t\nS1 @ class Eq t => Ord t\nS2 @ instance Eq t => Eq [t]\n";
    verdict("Ord [t] needs Ord t", &format!("{base}S3 @ instance Ord t => Ord [t]\n"));
    verdict("Ord [t] for any t", &format!("{base}S4 @ instance Ord [t]\n"));
    // build_ruleset runs the same check by default and rejects the second program
    let err = build_ruleset(&parse_program(&format!("{base}S4 @ instance Ord [t]\n")).unwrap(), &DesugarOptions::default()).unwrap_err();
    println!("rejected with exit code {}", err.exit_code());
}
