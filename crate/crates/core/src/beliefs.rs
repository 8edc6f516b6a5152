//! Beliefs, fixed-point residuals and free-energy evaluation.
//!
//! A [`BeliefSet`] whose factor tables sum-marginalize onto its variable
//! vectors is a feasible point of the local-polytope LP, so the same type is
//! used for BP beliefs and LP pseudo-marginals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::counting::CountingNumbers;
use crate::engine::{MessageState, Semiring};
use crate::model::{for_each_assignment, FactorGraph};
use crate::scalar::{normalize_log_weights, x_ln_x, Scalar};

/// Largest joint space enumerated exhaustively by [`admissibility_residual`].
pub const ADMISSIBILITY_PROBES: usize = 4096;
const PROBE_SEED: u64 = 0xad31_5510;

/// Default relative tie tolerance.
pub const DEFAULT_TIE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("belief for {0} has no mass: contradictory zero-potential structure")]
    AllZeroBelief(String),
    #[error("model and beliefs disagree on support at probe assignment {0:?}")]
    SupportMismatch(Vec<usize>),
    #[error("message state does not match the graph layout")]
    LayoutMismatch,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
}

/// Normalized factor and variable beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet<S> {
    /// `b_alpha`, laid out like the factor's energy table.
    pub factors: Vec<Vec<S>>,
    /// `b_i`, one vector per variable.
    pub variables: Vec<Vec<S>>,
}

fn normalize<S: Scalar>(v: &mut [S]) {
    let total: S = v.iter().copied().sum();
    if total > S::zero() {
        v.iter_mut().for_each(|x| *x = *x / total);
    }
}

impl<S: Scalar> BeliefSet<S> {
    pub fn uniform(graph: &FactorGraph<S>) -> Self {
        Self {
            factors: graph
                .factors()
                .iter()
                .map(|f| vec![S::one() / S::lit(f.table_size() as f64); f.table_size()])
                .collect(),
            variables: graph
                .cardinalities()
                .iter()
                .map(|&c| vec![S::one() / S::lit(c as f64); c])
                .collect(),
        }
    }

    /// Point-mass beliefs on assignment `x`.
    pub fn delta(graph: &FactorGraph<S>, x: &[usize]) -> Self {
        let factors = graph
            .factors()
            .iter()
            .map(|f| {
                let mut t = vec![S::zero(); f.table_size()];
                t[f.cell_of(x)] = S::one();
                t
            })
            .collect();
        let variables = graph
            .cardinalities()
            .iter()
            .zip(x)
            .map(|(&c, &s)| {
                let mut v = vec![S::zero(); c];
                v[s] = S::one();
                v
            })
            .collect();
        Self { factors, variables }
    }

    /// Shape check plus nonnegativity and unit mass within `1e-9`.
    pub fn is_valid_for(&self, graph: &FactorGraph<S>) -> bool {
        let tol = S::lit(1e-9);
        let ok = |t: &Vec<S>| {
            t.iter().all(|&v| v >= S::zero()) && (t.iter().copied().sum::<S>() - S::one()).abs() <= tol
        };
        self.factors.len() == graph.num_factors()
            && self.variables.len() == graph.num_variables()
            && self.factors.iter().zip(graph.factors()).all(|(t, f)| t.len() == f.table_size() && ok(t))
            && self.variables.iter().enumerate().all(|(i, v)| v.len() == graph.cardinality(i) && ok(v))
    }

    /// Per-variable argmax, lowest state index on exact ties.
    pub fn argmax_assignment(&self) -> Vec<usize> {
        self.variables.iter().map(|v| argmax(v)).collect()
    }
}

pub(crate) fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Computes beliefs from log messages:
/// `b_i ∝ prod_alpha m_{alpha i}`, `b_alpha ∝ psi^{1/T} prod_i m_{i alpha}`.
/// The max semiring always uses `T = 1`.
pub fn beliefs_from_messages<S: Scalar>(
    graph: &FactorGraph<S>,
    messages: &MessageState<S>,
    temperature: S,
    semiring: Semiring,
) -> Result<BeliefSet<S>, BeliefError> {
    if !messages.matches(graph) {
        return Err(BeliefError::LayoutMismatch);
    }
    let t = match semiring {
        Semiring::Sum => temperature,
        Semiring::Max => S::one(),
    };
    if !(t > S::zero()) {
        return Err(BeliefError::NonPositiveTemperature(t.as_f64()));
    }
    let mut factors = Vec::with_capacity(graph.num_factors());
    for (a, f) in graph.factors().iter().enumerate() {
        let mut logs = vec![S::zero(); f.table_size()];
        for (cell, l) in logs.iter_mut().enumerate() {
            let e = f.energies()[cell];
            *l = if e == S::infinity() {
                S::neg_infinity()
            } else {
                let mut acc = -e / t;
                for p in 0..f.arity() {
                    acc = acc + messages.var_to_factor(a, p)[f.state_at(cell, p)];
                }
                acc
            };
        }
        let mut out = vec![S::zero(); logs.len()];
        if !normalize_log_weights(&logs, &mut out) {
            return Err(BeliefError::AllZeroBelief(format!("factor {a}")));
        }
        factors.push(out);
    }
    let mut variables = Vec::with_capacity(graph.num_variables());
    for i in 0..graph.num_variables() {
        let mut logs = vec![S::zero(); graph.cardinality(i)];
        for &(a, p) in graph.factors_of(i) {
            for (l, &m) in logs.iter_mut().zip(messages.factor_to_var(a, p)) {
                *l = *l + m;
            }
        }
        let mut out = vec![S::zero(); logs.len()];
        if !normalize_log_weights(&logs, &mut out) {
            return Err(BeliefError::AllZeroBelief(format!("variable {i}")));
        }
        variables.push(out);
    }
    Ok(BeliefSet { factors, variables })
}

fn probe_set<S: Scalar>(graph: &FactorGraph<S>) -> Vec<Vec<usize>> {
    let cards = graph.cardinalities();
    match graph.joint_state_count() {
        Some(n) if n <= ADMISSIBILITY_PROBES as u128 => {
            let mut out = Vec::with_capacity(n as usize);
            for_each_assignment(cards, |x| out.push(x.to_vec()));
            out
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
            (0..ADMISSIBILITY_PROBES)
                .map(|_| cards.iter().map(|&c| rng.random_range(0..c)).collect())
                .collect()
        }
    }
}

/// Largest violation of admissibility over pairs of probe assignments:
/// `|(log P(x) - log P(x'))/T - sum_a c_a Δlog b_a - sum_i c_i Δlog b_i|`.
///
/// Differences between assignments remove the unknown normalizer. Probe
/// assignments that both the model and the beliefs rule out are skipped.
pub fn admissibility_residual<S: Scalar>(
    graph: &FactorGraph<S>,
    beliefs: &BeliefSet<S>,
    counts: &CountingNumbers<S>,
    temperature: S,
) -> Result<S, BeliefError> {
    if !(temperature > S::zero()) {
        return Err(BeliefError::NonPositiveTemperature(temperature.as_f64()));
    }
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    for x in probe_set(graph) {
        let energy = graph.energy_unchecked(&x);
        let mut zero_belief = false;
        let mut g = -energy / temperature;
        for (a, f) in graph.factors().iter().enumerate() {
            let c = counts.c_alpha[a];
            if c != S::zero() {
                let b = beliefs.factors[a][f.cell_of(&x)];
                if b <= S::zero() {
                    zero_belief = true;
                } else {
                    g = g - c * b.ln();
                }
            }
        }
        for (i, &s) in x.iter().enumerate() {
            let c = counts.c_i[i];
            if c != S::zero() {
                let b = beliefs.variables[i][s];
                if b <= S::zero() {
                    zero_belief = true;
                } else {
                    g = g - c * b.ln();
                }
            }
        }
        let model_zero = energy == S::infinity();
        match (model_zero, zero_belief) {
            (true, true) => continue,
            (false, false) => {
                lo = lo.min(g);
                hi = hi.max(g);
            }
            _ => return Err(BeliefError::SupportMismatch(x)),
        }
    }
    Ok(if hi >= lo { hi - lo } else { S::zero() })
}

fn projected<S: Scalar>(graph: &FactorGraph<S>, table: &[S], a: usize, p: usize, use_max: bool) -> Vec<S> {
    let f = graph.factor(a);
    let mut out = vec![S::zero(); f.cards()[p]];
    for (cell, &b) in table.iter().enumerate() {
        let s = f.state_at(cell, p);
        out[s] = if use_max { out[s].max(b) } else { out[s] + b };
    }
    out
}

/// `max |sum_{x_a \ i} b_a - b_i|` over all factor/variable/state triples.
pub fn marginalization_residual<S: Scalar>(graph: &FactorGraph<S>, beliefs: &BeliefSet<S>) -> S {
    let mut worst = S::zero();
    for (a, f) in graph.factors().iter().enumerate() {
        for (p, &v) in f.scope().iter().enumerate() {
            let m = projected(graph, &beliefs.factors[a], a, p, false);
            for (x, y) in m.iter().zip(&beliefs.variables[v]) {
                worst = worst.max((*x - *y).abs());
            }
        }
    }
    worst
}

fn scale_to_unit_max<S: Scalar>(v: &mut [S]) {
    let max = v.iter().copied().fold(S::zero(), S::max);
    if max > S::zero() {
        v.iter_mut().for_each(|x| *x = *x / max);
    }
}

/// `max |max_{x_a \ i} b_a - b_i|` with both sides rescaled to a maximum of 1.
pub fn max_marginalization_residual<S: Scalar>(graph: &FactorGraph<S>, beliefs: &BeliefSet<S>) -> S {
    let mut worst = S::zero();
    for (a, f) in graph.factors().iter().enumerate() {
        for (p, &v) in f.scope().iter().enumerate() {
            let mut m = projected(graph, &beliefs.factors[a], a, p, true);
            let mut b = beliefs.variables[v].clone();
            scale_to_unit_max(&mut m);
            scale_to_unit_max(&mut b);
            for (x, y) in m.iter().zip(&b) {
                worst = worst.max((*x - *y).abs());
            }
        }
    }
    worst
}

/// Expected energy `sum_a sum_x b_a(x) E_a(x)`; zero-belief cells contribute
/// nothing even when their energy is infinite.
pub fn lp_objective<S: Scalar>(graph: &FactorGraph<S>, beliefs: &BeliefSet<S>) -> S {
    let mut total = S::zero();
    for (f, table) in graph.factors().iter().zip(&beliefs.factors) {
        for (&b, &e) in table.iter().zip(f.energies()) {
            if b > S::zero() {
                if e == S::infinity() {
                    return S::infinity();
                }
                total = total + b * e;
            }
        }
    }
    total
}

/// Approximate entropy `sum_a c_a H_a + sum_i c_i H_i`.
pub fn approximate_entropy<S: Scalar>(beliefs: &BeliefSet<S>, counts: &CountingNumbers<S>) -> S {
    let h = |t: &Vec<S>| -t.iter().map(|&b| x_ln_x(b)).sum::<S>();
    let fa: S = beliefs.factors.iter().zip(&counts.c_alpha).map(|(t, &c)| c * h(t)).sum();
    let vi: S = beliefs.variables.iter().zip(&counts.c_i).map(|(t, &c)| c * h(t)).sum();
    fa + vi
}

/// Free energy `U - T * H~` with `H~` the counting-number entropy combination.
pub fn free_energy<S: Scalar>(
    graph: &FactorGraph<S>,
    beliefs: &BeliefSet<S>,
    counts: &CountingNumbers<S>,
    temperature: S,
) -> S {
    lp_objective(graph, beliefs) - temperature * approximate_entropy(beliefs, counts)
}

fn sharpen_table<S: Scalar>(t: &[S], tie_tol: S) -> Vec<S> {
    let max = t.iter().copied().fold(S::zero(), S::max);
    let cut = max - tie_tol * max;
    let mut out: Vec<S> = t.iter().map(|&v| if max > S::zero() && v >= cut { S::one() } else { S::zero() }).collect();
    normalize(&mut out);
    out
}

/// Uniform over the cells within `tie_tol * max` of each table's maximum.
pub fn sharpen<S: Scalar>(beliefs: &BeliefSet<S>, tie_tol: S) -> BeliefSet<S> {
    BeliefSet {
        factors: beliefs.factors.iter().map(|t| sharpen_table(t, tie_tol)).collect(),
        variables: beliefs.variables.iter().map(|t| sharpen_table(t, tie_tol)).collect(),
    }
}

fn power_table<S: Scalar>(t: &[S], temperature: S) -> Vec<S> {
    // work in logs so tiny entries survive large exponents
    let logs: Vec<S> = t.iter().map(|&v| if v > S::zero() { temperature * v.ln() } else { S::neg_infinity() }).collect();
    let mut out = vec![S::zero(); t.len()];
    if !normalize_log_weights(&logs, &mut out) {
        return t.to_vec();
    }
    out
}

/// Raises every cell to the power `temperature` and renormalizes.
pub fn temperature_power<S: Scalar>(beliefs: &BeliefSet<S>, temperature: S) -> BeliefSet<S> {
    BeliefSet {
        factors: beliefs.factors.iter().map(|t| power_table(t, temperature)).collect(),
        variables: beliefs.variables.iter().map(|t| power_table(t, temperature)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FactorDef;

    fn two_node() -> FactorGraph<f64> {
        FactorGraph::from_tables(&[2, 2], vec![FactorDef::new(vec![0, 1], vec![0.0, 0.0, 0.0, f64::INFINITY])])
            .unwrap()
    }

    fn sum_fixed_point() -> BeliefSet<f64> {
        let t = 1.0 / 3.0;
        BeliefSet { factors: vec![vec![t, t, t, 0.0]], variables: vec![vec![2.0 * t, t]; 2] }
    }

    fn max_fixed_point() -> BeliefSet<f64> {
        let t = 1.0 / 3.0;
        BeliefSet { factors: vec![vec![t, t, t, 0.0]], variables: vec![vec![0.5, 0.5]; 2] }
    }

    #[test]
    fn sharpen_examples() {
        let b = BeliefSet { factors: vec![], variables: vec![vec![0.6, 0.4], vec![0.4, 0.4, 0.2], vec![0.0, 1.0]] };
        let s = sharpen(&b, 1e-6);
        assert_eq!(s.variables[0], vec![1.0, 0.0]);
        assert_eq!(s.variables[1], vec![0.5, 0.5, 0.0]);
        assert_eq!(s.variables[2], vec![0.0, 1.0]);
        assert_eq!(sharpen(&s, 1e-6), s);
    }

    #[test]
    fn temperature_power_examples() {
        let b: BeliefSet<f64> = BeliefSet { factors: vec![], variables: vec![vec![0.8, 0.2]] };
        assert_eq!(temperature_power(&b, 1.0), b);
        let p = temperature_power(&b, 2.0);
        assert!((p.variables[0][0] - 16.0 / 17.0).abs() < 1e-15);
        assert!((p.variables[0][1] - 1.0 / 17.0).abs() < 1e-15);

        // two-node sum-product beliefs approach the max-product ones as T -> 0
        let small = temperature_power(&sum_fixed_point(), 1e-6);
        assert!((small.variables[0][0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn marginalization_residuals_of_two_node_fixed_points() {
        let g = two_node();
        assert!(marginalization_residual(&g, &sum_fixed_point()) < 1e-15);
        assert!(max_marginalization_residual(&g, &max_fixed_point()) < 1e-15);
        // sum-product fixed point: max-row is (1, 1) after rescale, b_1 is (1, 1/2)
        let r = max_marginalization_residual(&g, &sum_fixed_point());
        assert!((r - 0.5).abs() < 1e-15);
        // sharpened max-product beliefs are not sum-marginalizable
        let s = sharpen(&max_fixed_point(), 1e-6);
        assert!((marginalization_residual(&g, &s) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn lp_objective_ignores_zero_cells() {
        let g = two_node();
        assert_eq!(lp_objective(&g, &sum_fixed_point()), 0.0);
        assert_eq!(lp_objective(&g, &BeliefSet::delta(&g, &[1, 1])), f64::INFINITY);
    }

    #[test]
    fn delta_beliefs_have_zero_entropy() {
        let g = FactorGraph::from_tables(
            &[2, 3],
            vec![FactorDef::new(vec![0, 1], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]), FactorDef::new(vec![1], vec![1.0, 2.0, 3.0])],
        )
        .unwrap();
        let counts = crate::counting::bethe(&g);
        let d = BeliefSet::delta(&g, &[1, 2]);
        for t in [0.1f64, 1.0, 10.0] {
            assert!((free_energy(&g, &d, &counts, t) - g.total_energy(&[1, 2]).unwrap()).abs() < 1e-15);
        }
        assert!(max_marginalization_residual(&g, &d) == 0.0);
        assert!(marginalization_residual(&g, &d) == 0.0);
    }

    #[test]
    fn admissibility_detects_perturbation() {
        let g = two_node();
        let counts = crate::counting::bethe(&g);
        let b = sum_fixed_point();
        assert!(admissibility_residual(&g, &b, &counts, 1.0).unwrap() < 1e-12);
        let mut bad = b.clone();
        bad.factors[0] = vec![1.0 / 3.0 + 0.1, 1.0 / 3.0 - 0.1, 1.0 / 3.0, 0.0];
        assert!(admissibility_residual(&g, &bad, &counts, 1.0).unwrap() > 0.01);
        let mut mismatch = b.clone();
        mismatch.factors[0] = vec![0.5, 0.5, 0.0, 0.0];
        assert!(matches!(
            admissibility_residual(&g, &mismatch, &counts, 1.0),
            Err(BeliefError::SupportMismatch(_))
        ));
    }
}
