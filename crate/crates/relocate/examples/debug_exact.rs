use relocate::generator::{generate, GenParams};
use relocate::mip::SolveLimits;
use relocate::time_expanded::solve_exact;
use std::time::Instant;

fn main() {
    for seed in 0..8u64 {
        let params = GenParams {
            stations: 10,
            overfull: 2,
            underfull: 2,
            horizon: 30,
            convoy_capacity: 5,
            drivers: 3,
            plane_size: 24.0,
            surplus_range: (5, 5),
            capacity_slack: (0, 1),
            seed,
        };
        let instance = generate(&params).unwrap();
        let t = Instant::now();
        let result = solve_exact(&instance, &SolveLimits::with_time_limit(120.0)).unwrap();
        println!(
            "seed {seed} diam {}: {} obj {} bound {:.1} nodes {} iters {} in {:.1}s",
            instance.metric.diameter(),
            result.solution.status,
            result.solution.objective,
            result.solution.bound,
            result.solution.stats.nodes,
            result.solution.stats.simplex_iterations,
            t.elapsed().as_secs_f64()
        );
    }
}
