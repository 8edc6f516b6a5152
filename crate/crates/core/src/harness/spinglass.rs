//! Ising spin glasses on a non-toroidal grid.
//!
//! Spins take values in {-1, +1}, stored as states {0, 1}. The energy is
//! `sum_i J_ii x_i + sum_(i,j) J_ij x_i x_j` over 4-neighbour edges with
//! Gaussian fields and couplings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::HarnessError;
use crate::model::{build_graph, FactorDef, FactorGraph, VariableDef};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinGlassSpec {
    pub rows: usize,
    pub cols: usize,
    pub sigma_field: f64,
    pub sigma_coupling: f64,
    pub seed: u64,
}

impl Default for SpinGlassSpec {
    fn default() -> Self {
        Self { rows: 3, cols: 3, sigma_field: 0.4, sigma_coupling: 1.0, seed: 0 }
    }
}

/// Spin value of a state.
pub fn spin(state: usize) -> f64 {
    if state == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Grid edges in row-major order, right neighbour before down neighbour.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                out.push((i, i + 1));
            }
            if r + 1 < rows {
                out.push((i, i + cols));
            }
        }
    }
    out
}

/// Unary factors for every site (in site order), then one pairwise factor per edge.
pub fn generate_spin_glass<S: Scalar>(spec: &SpinGlassSpec) -> Result<FactorGraph<S>, HarnessError> {
    if spec.rows == 0 || spec.cols == 0 || spec.rows * spec.cols < 2 {
        return Err(HarnessError::InvalidSpec("grid needs at least two sites".into()));
    }
    if !(spec.sigma_field >= 0.0 && spec.sigma_coupling >= 0.0) {
        return Err(HarnessError::InvalidSpec("standard deviations must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let field = Normal::new(0.0, spec.sigma_field).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
    let coupling = Normal::new(0.0, spec.sigma_coupling).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
    let n = spec.rows * spec.cols;
    let mut factors = Vec::new();
    for i in 0..n {
        let j: f64 = field.sample(&mut rng);
        factors.push(FactorDef::new(vec![i], (0..2).map(|s| S::lit(j * spin(s))).collect()));
    }
    for (i, k) in grid_edges(spec.rows, spec.cols) {
        let j: f64 = coupling.sample(&mut rng);
        let table = (0..4).map(|cell| S::lit(j * spin(cell / 2) * spin(cell % 2))).collect();
        factors.push(FactorDef::new(vec![i, k], table));
    }
    let vars = (0..n).map(|i| VariableDef::new(format!("s{}_{}", i / spec.cols, i % spec.cols), 2)).collect();
    Ok(build_graph(vars, factors)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = SpinGlassSpec { seed: 11, ..Default::default() };
        let g: FactorGraph<f64> = generate_spin_glass(&spec).unwrap();
        assert_eq!(g.num_variables(), 9);
        assert_eq!(g.num_factors(), 21);
        assert_eq!((0..21).filter(|&a| g.arity(a) == 1).count(), 9);
        assert_eq!(generate_spin_glass::<f64>(&spec).unwrap(), g);
        let pair = g.factor(9).energies();
        assert_eq!(pair[0], pair[3]);
        assert_eq!(pair[1], -pair[0]);
    }

    #[test]
    fn zero_coupling_is_independent() {
        let spec = SpinGlassSpec { sigma_coupling: 0.0, seed: 3, ..Default::default() };
        let g: FactorGraph<f64> = generate_spin_glass(&spec).unwrap();
        assert!(g.factors()[9..].iter().all(|f| f.energies().iter().all(|&e| e == 0.0)));
    }
}
