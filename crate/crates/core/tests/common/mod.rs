//! Seeded instance generators and a brute-force enumerator that reads the raw
//! energy tables directly, independent of the library's own oracle.
#![allow(dead_code)]

use convex_bp::{FactorDef, Graph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn table(rng: &mut ChaCha8Rng, size: usize, scale: f64) -> Vec<f64> {
    let n = Normal::new(0.0, scale).unwrap();
    (0..size).map(|_| n.sample(rng)).collect()
}

/// Random graph with at most `max_vars` variables, factors of arity 1 to 3
/// and 2 or 3 states per variable. Every variable is covered by some factor.
pub fn random_graph(rng: &mut ChaCha8Rng, max_vars: usize) -> Graph {
    let n = rng.random_range(2..=max_vars);
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
    let mut factors = Vec::new();
    let mut covered = vec![false; n];
    let count = rng.random_range(n / 2 + 1..=2 * n);
    for _ in 0..count {
        let arity = rng.random_range(1..=3.min(n));
        let mut scope: Vec<usize> = Vec::new();
        while scope.len() < arity {
            let v = rng.random_range(0..n);
            if !scope.contains(&v) {
                scope.push(v);
            }
        }
        for &v in &scope {
            covered[v] = true;
        }
        let size = scope.iter().map(|&v| cards[v]).product();
        factors.push(FactorDef::new(scope, table(rng, size, 1.0)));
    }
    for v in (0..n).filter(|&v| !covered[v]) {
        factors.push(FactorDef::new(vec![v], table(rng, cards[v], 1.0)));
    }
    Graph::from_tables(&cards, factors).unwrap()
}

/// Random tree on at most `max_nodes` variables with up to `max_states`
/// states, pairwise edge factors and a unary factor on roughly half the nodes.
pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize, max_states: usize) -> Graph {
    let n = rng.random_range(2..=max_nodes);
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=max_states)).collect();
    let mut factors = Vec::new();
    for v in 1..n {
        let parent = rng.random_range(0..v);
        let scope = if rng.random_bool(0.5) { vec![parent, v] } else { vec![v, parent] };
        factors.push(FactorDef::new(scope, table(rng, cards[parent] * cards[v], 1.0)));
    }
    for v in 0..n {
        if rng.random_bool(0.5) {
            factors.push(FactorDef::new(vec![v], table(rng, cards[v], 0.5)));
        }
    }
    Graph::from_tables(&cards, factors).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub enum Topology {
    Grid,
    Cycle,
    Tree,
    Sparse,
    Dense,
    Triples,
}

pub const TOPOLOGIES: [Topology; 6] =
    [Topology::Grid, Topology::Cycle, Topology::Tree, Topology::Sparse, Topology::Dense, Topology::Triples];

/// Binary instance with at most 12 variables. Half of the instances use small
/// integer energies so that ties and frustrated cycles are common.
pub fn random_binary(rng: &mut ChaCha8Rng, topology: Topology) -> Graph {
    let n = match topology {
        Topology::Grid => 9,
        Topology::Dense => rng.random_range(4..=6),
        _ => rng.random_range(4..=12),
    };
    let mut scopes: Vec<Vec<usize>> = Vec::new();
    match topology {
        Topology::Grid => {
            for r in 0..3 {
                for c in 0..3 {
                    let i = 3 * r + c;
                    if c < 2 {
                        scopes.push(vec![i, i + 1]);
                    }
                    if r < 2 {
                        scopes.push(vec![i, i + 3]);
                    }
                }
            }
        }
        Topology::Cycle => scopes.extend((0..n).map(|i| vec![i, (i + 1) % n])),
        Topology::Tree => scopes.extend((1..n).map(|v| vec![rng.random_range(0..v), v])),
        Topology::Sparse => {
            scopes.extend((1..n).map(|v| vec![rng.random_range(0..v), v]));
            for _ in 0..n / 2 {
                let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
                if a != b && !scopes.iter().any(|s| s.contains(&a) && s.contains(&b)) {
                    scopes.push(vec![a, b]);
                }
            }
        }
        Topology::Dense => {
            for a in 0..n {
                for b in a + 1..n {
                    scopes.push(vec![a, b]);
                }
            }
        }
        Topology::Triples => {
            for _ in 0..n / 2 + 1 {
                let mut s: Vec<usize> = Vec::new();
                while s.len() < 3 {
                    let v = rng.random_range(0..n);
                    if !s.contains(&v) {
                        s.push(v);
                    }
                }
                scopes.push(s);
            }
            scopes.extend((1..n).map(|v| vec![rng.random_range(0..v), v]));
        }
    }
    let integer = rng.random_bool(0.5);
    let mut factors: Vec<FactorDef<f64>> = scopes
        .into_iter()
        .map(|s| {
            let size = 1 << s.len();
            let e = if integer {
                (0..size).map(|_| rng.random_range(-2i32..=2) as f64).collect()
            } else {
                table(rng, size, 1.0)
            };
            FactorDef::new(s, e)
        })
        .collect();
    for v in 0..n {
        let e = if integer { vec![0.0, rng.random_range(-1i32..=1) as f64] } else { table(rng, 2, 0.4) };
        factors.push(FactorDef::new(vec![v], e));
    }
    Graph::from_tables(&vec![2; n], factors).unwrap()
}

/// Energy of `x` summed straight from the factor tables (first scope
/// variable most significant).
pub fn energy(graph: &Graph, x: &[usize]) -> f64 {
    graph
        .factor_defs()
        .iter()
        .map(|f| {
            let mut idx = 0;
            for &v in &f.scope {
                idx = idx * graph.cardinality(v) + x[v];
            }
            f.energies[idx]
        })
        .sum()
}

/// Every assignment with its energy, in reverse lexicographic order.
pub fn all_assignments(graph: &Graph) -> Vec<(Vec<usize>, f64)> {
    let cards = graph.cardinalities();
    let total: usize = cards.iter().product();
    (0..total)
        .rev()
        .map(|mut k| {
            let mut x = vec![0; cards.len()];
            for i in (0..cards.len()).rev() {
                x[i] = k % cards[i];
                k /= cards[i];
            }
            let e = energy(graph, &x);
            (x, e)
        })
        .collect()
}

/// Minimum energy and how many assignments attain it.
pub fn min_energy(graph: &Graph) -> (f64, usize) {
    let all = all_assignments(graph);
    let best = all.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
    (best, all.iter().filter(|a| a.1 == best).count())
}

/// Exact variable marginals of `exp(-E/T)`.
pub fn marginals(graph: &Graph, t: f64) -> Vec<Vec<f64>> {
    let all = all_assignments(graph);
    let best = all.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
    let mut out: Vec<Vec<f64>> = graph.cardinalities().iter().map(|&c| vec![0.0; c]).collect();
    let mut z = 0.0;
    for (x, e) in &all {
        let w = (-(e - best) / t).exp();
        z += w;
        for (v, &s) in x.iter().enumerate() {
            out[v][s] += w;
        }
    }
    for row in &mut out {
        for p in row.iter_mut() {
            *p /= z;
        }
    }
    out
}
