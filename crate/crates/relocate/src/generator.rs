//! Random instance generation.
//!
//! Stations are scattered uniformly on a square plane with the depot at the
//! center. Each station connects to its three nearest neighbors with
//! rounded Euclidean weights (minimum 1), and minimum-spanning-tree edges
//! are added so the graph is always connected. Surpluses and deficits are
//! drawn from a range and balanced so totals match.
//!
//! Generation is a pure function of the parameters: the generator carries
//! its own PRNG so identical parameters produce byte-identical instances
//! across builds and platforms.

use thiserror::Error;

use crate::instance::{Instance, StationId, WeightedGraph};

/// Parameters of one random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub stations: usize,
    pub overfull: usize,
    pub underfull: usize,
    pub horizon: u32,
    pub convoy_capacity: u32,
    pub drivers: u32,
    /// Side length of the square the stations are scattered on.
    pub plane_size: f64,
    /// Per-station surplus/deficit magnitude, drawn inclusive.
    pub surplus_range: (u64, u64),
    /// Extra station capacity beyond `z0 + zT + L`, drawn inclusive.
    pub capacity_slack: (u64, u64),
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            stations: 20,
            overfull: 4,
            underfull: 4,
            horizon: 60,
            convoy_capacity: 5,
            drivers: 2,
            plane_size: 100.0,
            surplus_range: (1, 3),
            capacity_slack: (0, 0),
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("generation failed: {0}")]
    GenerationFailed(String),
}

/// SplitMix64: tiny, fast, and stable across platforms.
#[derive(Debug, Clone)]
pub(crate) struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, bound)`.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // rejection sampling kills modulo bias
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Uniform in `[lo, hi]`.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

fn validate(params: &GenParams) -> Result<(), GeneratorError> {
    let fail = |msg: &str| Err(GeneratorError::GenerationFailed(msg.to_string()));
    if params.stations == 0 {
        return fail("at least one station required");
    }
    if params.overfull + params.underfull >= params.stations {
        return fail("overfull + underfull stations must be fewer than total stations");
    }
    if (params.overfull == 0) != (params.underfull == 0) {
        return fail("overfull and underfull counts must be zero together or positive together");
    }
    if params.horizon == 0 || params.convoy_capacity == 0 || params.drivers == 0 {
        return fail("horizon, convoy capacity, and driver count must be positive");
    }
    if params.surplus_range.0 == 0 || params.surplus_range.0 > params.surplus_range.1 {
        return fail("surplus range must be an inclusive range of positive integers");
    }
    if params.capacity_slack.0 > params.capacity_slack.1 {
        return fail("capacity slack range inverted");
    }
    if params.plane_size <= 0.0 {
        return fail("plane size must be positive");
    }
    // both sides must be able to meet at a common total
    let (lo, hi) = params.surplus_range;
    let (o, u) = (params.overfull as u64, params.underfull as u64);
    if o > 0 && (o * lo > u * hi || u * lo > o * hi) {
        return fail("surplus range cannot balance the overfull/underfull split");
    }
    Ok(())
}

/// Generates a random instance. Deterministic under the seed: the same
/// parameters always produce the identical instance.
pub fn generate(params: &GenParams) -> Result<Instance, GeneratorError> {
    validate(params)?;
    let mut rng = Rng::new(params.seed);
    let n = params.stations;
    let size = params.plane_size;

    // depot at the plane center, stations scattered uniformly
    let mut position: Vec<(f64, f64)> = Vec::with_capacity(n);
    position.push((size / 2.0, size / 2.0));
    for _ in 1..n {
        position.push((rng.unit() * size, rng.unit() * size));
    }
    let euclid = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let weight = |a: usize, b: usize| (euclid(position[a], position[b]).round() as u64).max(1);

    // three nearest neighbors per station
    let mut edge_set = std::collections::BTreeSet::new();
    for v in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&u| u != v).collect();
        others.sort_by(|&a, &b| {
            euclid(position[v], position[a])
                .partial_cmp(&euclid(position[v], position[b]))
                .unwrap()
                .then(a.cmp(&b))
        });
        for &u in others.iter().take(3) {
            edge_set.insert((v.min(u), v.max(u)));
        }
    }
    // minimum-spanning-tree edges guarantee connectivity
    if n > 1 {
        let mut in_tree = vec![false; n];
        let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); n];
        in_tree[0] = true;
        for u in 1..n {
            best[u] = (euclid(position[0], position[u]), 0);
        }
        for _ in 1..n {
            let v = (0..n)
                .filter(|&v| !in_tree[v])
                .min_by(|&a, &b| best[a].0.partial_cmp(&best[b].0).unwrap().then(a.cmp(&b)))
                .expect("tree incomplete");
            in_tree[v] = true;
            edge_set.insert((v.min(best[v].1), v.max(best[v].1)));
            for u in 0..n {
                if !in_tree[u] {
                    let d = euclid(position[v], position[u]);
                    if d < best[u].0 {
                        best[u] = (d, v);
                    }
                }
            }
        }
    }
    let edges: Vec<(StationId, StationId, u64)> = edge_set
        .into_iter()
        .map(|(u, v)| (StationId(u), StationId(v), weight(u, v)))
        .collect();
    let graph = WeightedGraph::new(n, edges)
        .map_err(|e| GeneratorError::GenerationFailed(e.to_string()))?;

    // unbalanced stations: random distinct non-depot picks
    let mut candidates: Vec<usize> = (1..n).collect();
    rng.shuffle(&mut candidates);
    let overfull: Vec<usize> = candidates[..params.overfull].to_vec();
    let underfull: Vec<usize> = candidates[params.overfull..params.overfull + params.underfull].to_vec();

    let (lo, hi) = params.surplus_range;
    let mut surplus: Vec<u64> = (0..params.overfull).map(|_| rng.range(lo, hi)).collect();
    let mut deficit: Vec<u64> = (0..params.underfull).map(|_| rng.range(lo, hi)).collect();
    // rebalance the smaller total up toward the larger within the range
    for _ in 0..(params.overfull + params.underfull) * hi as usize + 1 {
        let s: u64 = surplus.iter().sum();
        let d: u64 = deficit.iter().sum();
        if s == d {
            break;
        }
        let (grow, shrink, target) = if s < d {
            (&mut surplus, &mut deficit, d)
        } else {
            (&mut deficit, &mut surplus, s)
        };
        let current: u64 = grow.iter().sum();
        if let Some(slot) = grow.iter_mut().find(|v| **v < hi) {
            *slot += (hi - *slot).min(target - current);
        } else if let Some(slot) = shrink.iter_mut().find(|v| **v > lo) {
            *slot -= (*slot - lo).min(current.abs_diff(target));
        } else {
            return Err(GeneratorError::GenerationFailed(
                "cannot balance surpluses within the given range".into(),
            ));
        }
    }
    let s: u64 = surplus.iter().sum();
    let d: u64 = deficit.iter().sum();
    if s != d {
        return Err(GeneratorError::GenerationFailed(
            "cannot balance surpluses within the given range".into(),
        ));
    }

    let mut z0 = vec![0u64; n];
    let mut zt = vec![0u64; n];
    for v in 0..n {
        let base = rng.range(0, 2);
        z0[v] = base;
        zt[v] = base;
    }
    for (i, &v) in overfull.iter().enumerate() {
        z0[v] += surplus[i];
    }
    for (i, &v) in underfull.iter().enumerate() {
        zt[v] += deficit[i];
    }
    let cap: Vec<u64> = (0..n)
        .map(|v| {
            let slack = rng.range(params.capacity_slack.0, params.capacity_slack.1);
            z0[v] + zt[v] + params.convoy_capacity as u64 + slack
        })
        .collect();

    Instance::new(
        graph,
        cap,
        z0,
        zt,
        params.drivers,
        params.convoy_capacity,
        params.horizon,
        StationId(0),
    )
    .map_err(|e| GeneratorError::GenerationFailed(e.to_string()))
}

/// Regenerates the same instance with a different horizon; everything else
/// (layout, states, capacities) is reproduced from the seed.
pub fn generate_with_horizon(
    params: &GenParams,
    horizon: u32,
) -> Result<Instance, GeneratorError> {
    let mut params = params.clone();
    params.horizon = horizon;
    generate(&params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{derive_tasks, instance_to_json, validate_instance};

    #[test]
    fn same_seed_same_bytes() {
        let params = GenParams {
            stations: 30,
            overfull: 6,
            underfull: 5,
            seed: 42,
            ..GenParams::default()
        };
        let a = generate(&params).unwrap();
        let b = generate(&params).unwrap();
        assert_eq!(instance_to_json(&a), instance_to_json(&b));
        let c = generate(&GenParams { seed: 43, ..params }).unwrap();
        assert_ne!(instance_to_json(&a), instance_to_json(&c));
    }

    #[test]
    fn output_is_valid_and_counts_match() {
        for seed in 0..25 {
            let params = GenParams {
                stations: 24,
                overfull: 5,
                underfull: 3,
                seed,
                ..GenParams::default()
            };
            let instance = generate(&params).unwrap();
            assert!(validate_instance(&instance).is_empty());
            let tasks = derive_tasks(&instance);
            let over = tasks.iter().filter(|t| t.x > 0).count();
            let under = tasks.iter().filter(|t| t.x < 0).count();
            assert_eq!((over, under), (5, 3), "seed {seed}");
            assert_eq!(instance.station_count(), 24);
            // connectivity implied: Instance::new builds the full metric
            assert!(instance.metric.diameter() > 0);
        }
    }

    #[test]
    fn metric_closure_satisfies_triangle_inequality() {
        let params = GenParams {
            stations: 15,
            overfull: 3,
            underfull: 3,
            seed: 9,
            ..GenParams::default()
        };
        let instance = generate(&params).unwrap();
        let n = instance.station_count();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let (i, j, l) = (StationId(i), StationId(j), StationId(l));
                    assert!(instance.dist(i, l) <= instance.dist(i, j) + instance.dist(j, l));
                    if i != j {
                        assert!(instance.dist(i, j) >= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn experiment_scale_shape_generates() {
        // 50 stations, 10 overfull / 10 underfull, T = 100, L = 5, k = 10
        let params = GenParams {
            stations: 50,
            overfull: 10,
            underfull: 10,
            horizon: 100,
            convoy_capacity: 5,
            drivers: 10,
            plane_size: 60.0,
            surplus_range: (1, 4),
            capacity_slack: (0, 2),
            seed: 1,
        };
        let instance = generate(&params).unwrap();
        assert!(validate_instance(&instance).is_empty());
        assert_eq!(instance.k, 10);
        assert_eq!(instance.capacity_l, 5);
        assert_eq!(instance.horizon, 100);
    }

    #[test]
    fn unsatisfiable_params_fail() {
        let params = GenParams {
            stations: 5,
            overfull: 3,
            underfull: 2,
            ..GenParams::default()
        };
        assert!(matches!(
            generate(&params),
            Err(GeneratorError::GenerationFailed(_))
        ));
        // 1 x [1,1] surplus cannot meet 2 x [1,1] deficits
        let params = GenParams {
            stations: 10,
            overfull: 1,
            underfull: 2,
            surplus_range: (1, 1),
            ..GenParams::default()
        };
        assert!(matches!(
            generate(&params),
            Err(GeneratorError::GenerationFailed(_))
        ));
    }
}
