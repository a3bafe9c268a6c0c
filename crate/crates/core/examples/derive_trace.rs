//! Deriving `Ord [t1]` under the list instances, in the default order and in
//! a randomly chosen one; both end in the same canonical state.

use chrtc::chr::{render_trace, ChrState, Engine, SelectionPolicy};
use chrtc::desugar::{build_ruleset, DesugarOptions};
use chrtc::herbrand::Var;
use chrtc::syntax::{parse_goal, parse_program};

const SRC: &str = "
class Eq t
S1 @ class Eq t => Ord t
S2 @ instance Eq t => Eq [t]
S3 @ instance Ord t => Ord [t]
";

fn main() {
    let rules = build_ruleset(&parse_program(SRC).unwrap(), &DesugarOptions::default()).unwrap();
    let goal = parse_goal("Ord [t1]").unwrap();
    let engine = Engine::new(&rules.solving);
    let state = || ChrState::new(goal.clone(), [Var::new("t1")].into());

    let leftmost = engine.run(state()).unwrap();
    print!("default order:\n{}", render_trace(leftmost.trace()));
    println!("  => {}\n", leftmost.canonical());

    let random = engine.run_with(state(), &mut SelectionPolicy::seeded(0)).unwrap();
    print!("seed 0:\n{}", render_trace(random.trace()));
    println!("  => {}\n", random.canonical());
    assert_eq!(leftmost.canonical(), random.canonical());
}
