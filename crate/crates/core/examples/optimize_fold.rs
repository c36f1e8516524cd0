//! Optimizes the gripper path of a towel half fold and prints the LM log.
//!
//! `cargo run --release --example optimize_fold -- [ITERATIONS]`

use drapekit::trajectory::fixtures::towel_half_fold;
use drapekit::trajectory::optimize_trajectory;

fn main() -> drapekit::Result<()> {
    let iterations = std::env::args().nth(1).map_or(3, |s| s.parse().expect("iterations"));
    let mut task = towel_half_fold(0.035)?;
    task.lm.max_iterations = iterations;
    let res = optimize_trajectory(&task)?;
    println!("initial: cost {:.3}, dissimilarity {:.4} m", res.initial.cost, res.initial.dissimilarity);
    println!("final:   cost {:.3}, dissimilarity {:.4} m", res.last.cost, res.last.dissimilarity);
    println!("{} iterations, {} simulations", res.iterations, res.simulations);
    for c in &res.curves {
        println!("control points: {:?}", c.points.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>());
    }
    Ok(())
}
