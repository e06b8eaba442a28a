//! Solves one channel and prints every outer iteration.
//!
//! ```text
//! cargo run --release --example trace -- <amplitude> [dark_current]
//! ```

use std::time::Instant;

use poisson_capacity::{solve_with_observer, ChannelParams, SolverConfig};

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let amplitude = *args.first().expect("usage: trace <amplitude> [dark_current]");
    let dark_current = args.get(1).copied().unwrap_or(0.0);
    let params = ChannelParams::new(amplitude, dark_current).expect("valid channel");

    let clock = Instant::now();
    let result = solve_with_observer(&params, &SolverConfig::default(), None, |e| {
        eprintln!(
            "[{:7.2}s] iteration {:3}  n = {:2}  I = {:.12}  gap = {:.3e}  {}",
            clock.elapsed().as_secs_f64(),
            e.iteration,
            e.support_size,
            e.information,
            e.duality_gap,
            match e.action {
                None => "valid".to_string(),
                Some(action) => format!("{action:?}"),
            }
        );
    })
    .expect("solve");

    println!(
        "C = {} nats, gap = {:.3e}, converged = {}, {:.2}s",
        result.capacity_nats,
        result.duality_gap,
        result.converged,
        clock.elapsed().as_secs_f64()
    );
    for (x, p) in result.distribution.points().iter().zip(result.distribution.probs()) {
        println!("  {x:>20.12}  {p:.12}");
    }
}
