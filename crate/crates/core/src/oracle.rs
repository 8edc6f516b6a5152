//! Exhaustive references: exact MAP, exact marginals, and ML decoding.
//!
//! Everything here reads raw energy tables directly and shares no code with
//! the message-passing engine or the belief module's projections.

use thiserror::Error;

use crate::beliefs::BeliefSet;
use crate::harness::ldpc::LdpcCode;
use crate::model::{Assignment, FactorGraph};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("joint state space of {needed} exceeds the budget of {budget}")]
    BudgetExceeded { needed: f64, budget: u128 },
    #[error("received word has {actual} bits, code has {expected}")]
    WordLength { expected: usize, actual: usize },
}

/// Cap on the number of joint states an oracle may enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_joint_states: u128,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_joint_states: 1 << 22 }
    }
}

fn check_budget<S: Scalar>(graph: &FactorGraph<S>, budget: OracleBudget) -> Result<(), OracleError> {
    match graph.joint_state_count() {
        Some(n) if n <= budget.max_joint_states => Ok(()),
        n => Err(OracleError::BudgetExceeded {
            needed: n.map_or(f64::INFINITY, |n| n as f64),
            budget: budget.max_joint_states,
        }),
    }
}

/// Odometer over joint states, first variable slowest.
struct Odometer {
    cards: Vec<usize>,
    x: Vec<usize>,
    done: bool,
}

impl Odometer {
    fn new(cards: &[usize]) -> Self {
        Self { cards: cards.to_vec(), x: vec![0; cards.len()], done: false }
    }

    fn advance(&mut self) {
        for k in (0..self.cards.len()).rev() {
            self.x[k] += 1;
            if self.x[k] < self.cards[k] {
                return;
            }
            self.x[k] = 0;
        }
        self.done = true;
    }
}

fn raw_energy<S: Scalar>(graph: &FactorGraph<S>, x: &[usize]) -> S {
    let mut total = S::zero();
    for f in graph.factors() {
        let mut idx = 0;
        for (&v, &c) in f.scope().iter().zip(f.cards()) {
            idx = idx * c + x[v];
        }
        total = total + f.energies()[idx];
    }
    total
}

/// Exact minimizer of the total energy; the lexicographically smallest wins ties.
pub fn brute_force_map<S: Scalar>(
    graph: &FactorGraph<S>,
    budget: OracleBudget,
) -> Result<(Assignment, S), OracleError> {
    check_budget(graph, budget)?;
    let mut od = Odometer::new(graph.cardinalities());
    let mut best = (od.x.clone(), S::infinity());
    let mut first = true;
    while !od.done {
        let e = raw_energy(graph, &od.x);
        if first || e < best.1 {
            best = (od.x.clone(), e);
            first = false;
        }
        od.advance();
    }
    Ok((Assignment(best.0), best.1))
}

/// Exact Gibbs marginals of `exp(-E/T)` and `log Z`.
pub fn brute_force_marginals<S: Scalar>(
    graph: &FactorGraph<S>,
    temperature: S,
    budget: OracleBudget,
) -> Result<(BeliefSet<S>, S), OracleError> {
    check_budget(graph, budget)?;
    let mut log_w = Vec::new();
    let mut od = Odometer::new(graph.cardinalities());
    while !od.done {
        log_w.push(-raw_energy(graph, &od.x) / temperature);
        od.advance();
    }
    let max = log_w.iter().copied().fold(S::neg_infinity(), S::max);
    let z: S = log_w.iter().map(|&l| (l - max).exp()).sum();
    let log_z = max + z.ln();

    let mut beliefs = BeliefSet {
        factors: graph.factors().iter().map(|f| vec![S::zero(); f.table_size()]).collect(),
        variables: graph.cardinalities().iter().map(|&c| vec![S::zero(); c]).collect(),
    };
    let mut od = Odometer::new(graph.cardinalities());
    for &l in &log_w {
        let p = (l - log_z).exp();
        if p > S::zero() {
            for (f, table) in graph.factors().iter().zip(beliefs.factors.iter_mut()) {
                let mut idx = 0;
                for (&v, &c) in f.scope().iter().zip(f.cards()) {
                    idx = idx * c + od.x[v];
                }
                table[idx] = table[idx] + p;
            }
            for (v, &s) in beliefs.variables.iter_mut().zip(&od.x) {
                v[s] = v[s] + p;
            }
        }
        od.advance();
    }
    Ok((beliefs, log_z))
}

/// Row-reduces the parity checks over GF(2) and returns a basis of the code.
pub fn codeword_basis(code: &LdpcCode) -> Vec<Vec<u8>> {
    let n = code.n;
    let mut rows: Vec<Vec<u8>> = code
        .check_scopes
        .iter()
        .map(|s| {
            let mut r = vec![0u8; n];
            for &b in s {
                r[b] ^= 1;
            }
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        let Some(sel) = (rank..rows.len()).find(|&r| rows[r][col] == 1) else { continue };
        rows.swap(rank, sel);
        for r in 0..rows.len() {
            if r != rank && rows[r][col] == 1 {
                for c in 0..n {
                    rows[r][c] ^= rows[rank][c];
                }
            }
        }
        pivots.push(col);
        rank += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&fc| {
            let mut v = vec![0u8; n];
            v[fc] = 1;
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = rows[r][fc];
            }
            v
        })
        .collect()
}

/// Nearest codeword with its distance and the number of codewords at that distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlDecode {
    pub codeword: Vec<u8>,
    pub distance: usize,
    pub ties: usize,
}

/// Maximum-likelihood decoding on a binary symmetric channel with `p < 1/2`:
/// the codeword nearest in Hamming distance, lexicographically smallest on ties.
pub fn ml_decode(code: &LdpcCode, received: &[u8], budget: OracleBudget) -> Result<Vec<u8>, OracleError> {
    ml_decode_with_ties(code, received, budget).map(|d| d.codeword)
}

/// [`ml_decode`] that also counts the codewords attaining the minimum distance.
pub fn ml_decode_with_ties(code: &LdpcCode, received: &[u8], budget: OracleBudget) -> Result<MlDecode, OracleError> {
    if received.len() != code.n {
        return Err(OracleError::WordLength { expected: code.n, actual: received.len() });
    }
    let basis = codeword_basis(code);
    let k = basis.len();
    if k >= 64 || (1u128 << k) > budget.max_joint_states {
        return Err(OracleError::BudgetExceeded { needed: 2f64.powi(k as i32), budget: budget.max_joint_states });
    }
    let mut word = vec![0u8; code.n];
    let dist = |w: &[u8]| w.iter().zip(received).filter(|(a, b)| a != b).count();
    let mut best = MlDecode { codeword: word.clone(), distance: dist(&word), ties: 1 };
    // Gray-code walk: flip one basis vector per step
    for step in 1u64..(1u64 << k) {
        let j = step.trailing_zeros() as usize;
        for (w, b) in word.iter_mut().zip(&basis[j]) {
            *w ^= b;
        }
        let d = dist(&word);
        if d < best.distance {
            best = MlDecode { codeword: word.clone(), distance: d, ties: 1 };
        } else if d == best.distance {
            best.ties += 1;
            if word < best.codeword {
                best.codeword.clone_from(&word);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FactorDef;

    fn two_node() -> FactorGraph<f64> {
        FactorGraph::from_tables(&[2, 2], vec![FactorDef::new(vec![0, 1], vec![0.0, 0.0, 0.0, f64::INFINITY])])
            .unwrap()
    }

    #[test]
    fn two_node_map_and_marginals() {
        let g = two_node();
        let (x, e) = brute_force_map(&g, OracleBudget::default()).unwrap();
        assert_eq!(x.0, vec![0, 0]);
        assert_eq!(e, 0.0);
        let (b, log_z) = brute_force_marginals(&g, 1.0, OracleBudget::default()).unwrap();
        assert!((b.variables[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((log_z - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_marginals() {
        let g = FactorGraph::from_tables(&[3, 2], vec![FactorDef::new(vec![0, 1], vec![0.4; 6])]).unwrap();
        let (b, log_z) = brute_force_marginals(&g, 2.0, OracleBudget::default()).unwrap();
        assert!((log_z - (6f64.ln() - 0.2)).abs() < 1e-14);
        for v in &b.variables[0] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_variable_map() {
        let g = FactorGraph::from_tables(&[4], vec![FactorDef::new(vec![0], vec![0.3, -1.0, 2.0, -1.0])]).unwrap();
        let (x, e) = brute_force_map(&g, OracleBudget::default()).unwrap();
        assert_eq!(x.0, vec![1]);
        assert_eq!(e, -1.0);
    }

    #[test]
    fn budget_enforced() {
        let g = FactorGraph::from_tables(&[2; 5], (0..5).map(|i| FactorDef::new(vec![i], vec![0.0f64; 2])).collect())
            .unwrap();
        let small = OracleBudget { max_joint_states: 16 };
        assert!(matches!(brute_force_map(&g, small), Err(OracleError::BudgetExceeded { .. })));
        assert!(matches!(brute_force_marginals(&g, 1.0, small), Err(OracleError::BudgetExceeded { .. })));
    }

    fn hamming74() -> LdpcCode {
        LdpcCode::new(7, vec![vec![0, 1, 2, 4], vec![0, 1, 3, 5], vec![0, 2, 3, 6]]).unwrap()
    }

    #[test]
    fn hamming_basis_and_decoding() {
        let code = hamming74();
        let basis = codeword_basis(&code);
        assert_eq!(basis.len(), 4);
        assert!(basis.iter().all(|w| code.is_codeword(w)));
        let zero = vec![0u8; 7];
        assert_eq!(ml_decode(&code, &zero, OracleBudget::default()).unwrap(), zero);
        let cw = basis[0].clone();
        for flip in 0..7 {
            let mut r = cw.clone();
            r[flip] ^= 1;
            assert_eq!(ml_decode(&code, &r, OracleBudget::default()).unwrap(), cw);
        }
    }
}
