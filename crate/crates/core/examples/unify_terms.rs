//! Solving Herbrand equations: most general unifiers, clashes and the occurs check.

use chrtc::herbrand::{unify, Equation, Substitution};
use chrtc::syntax::parse_type;

fn main() {
    let cases = [("a -> [b]", "Int -> c"), ("(a, a)", "(Int, Bool)"), ("a", "[a]"), ("f a", "Maybe Int")];
    for (l, r) in cases {
        let eq = Equation::new(parse_type(l).unwrap(), parse_type(r).unwrap());
        match unify(&[eq], &Substitution::new()) {
            Ok(s) => println!("{l} = {r}\n  mgu: {}", chrtc::pretty::substitution(&s)),
            Err(e) => println!("{l} = {r}\n  fails: {e}"),
        }
    }
}
