//! Solving a geometric program directly: maximize the volume of a box with
//! bounded wall and floor area and an aspect-ratio limit.

use dmimo::optimizer::gp::{solve_gp, GpProblem, Monomial, Posynomial};

fn main() {
    // variables h, w, d
    let (h, w, d) = (0, 1, 2);
    let problem = GpProblem {
        num_vars: 3,
        // minimize 1/(h w d)
        objective: Monomial::new(1.0, vec![(h, -1.0), (w, -1.0), (d, -1.0)]),
        constraints: vec![
            // walls: 2(hw + hd) <= 100
            Posynomial::new(vec![Monomial::new(0.02, vec![(h, 1.0), (w, 1.0)]), Monomial::new(0.02, vec![(h, 1.0), (d, 1.0)])]),
            // floor: wd <= 10
            Posynomial::new(vec![Monomial::new(0.1, vec![(w, 1.0), (d, 1.0)])]),
            // h/w <= 2
            Posynomial::new(vec![Monomial::new(0.5, vec![(h, 1.0), (w, -1.0)])]),
        ],
    };
    match solve_gp(&problem, None) {
        Ok(sol) => {
            println!("h = {:.4}, w = {:.4}, d = {:.4}", sol.x[h], sol.x[w], sol.x[d]);
            println!("volume = {:.4}", 1.0 / sol.objective);
        }
        Err(e) => println!("solver failed: {e}"),
    }
}
