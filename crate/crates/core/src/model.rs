//! Discrete factor graphs stored as energy tables.
//!
//! A factor's table is laid out with the last scope variable varying fastest
//! (the same order UAI files use). Energies may be `+inf`, which encodes a zero
//! potential; `-inf` and NaN are rejected at build time.

use std::collections::HashMap;
use std::ops::Deref;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("factor {factor} references unknown variable {variable}")]
    DanglingVariableRef { factor: usize, variable: usize },
    #[error("factor {factor} lists variable {variable} more than once")]
    DuplicateScopeVariable { factor: usize, variable: usize },
    #[error("factor {factor} has {actual} table entries, expected {expected}")]
    TableSizeMismatch { factor: usize, expected: usize, actual: usize },
    #[error("factor {factor} has a -inf or NaN energy at cell {cell}")]
    NegativeInfiniteEnergy { factor: usize, cell: usize },
    #[error("factor {factor} has an empty scope")]
    EmptyScope { factor: usize },
    #[error("variable {variable} has cardinality {cardinality}, need at least 2")]
    CardinalityTooSmall { variable: usize, cardinality: usize },
    #[error("variable {variable} does not appear in any factor")]
    IsolatedVariable { variable: usize },
    #[error("duplicate variable name {0:?}")]
    DuplicateName(String),
    #[error("assignment has length {actual}, graph has {expected} variables")]
    AssignmentLength { expected: usize, actual: usize },
    #[error("state {state} out of range for variable {variable} (cardinality {cardinality})")]
    InvalidAssignment { variable: usize, state: usize, cardinality: usize },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
}

/// Raw variable description handed to [`build_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct VariableDef {
    pub name: String,
    pub cardinality: usize,
}

impl VariableDef {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Self { name: name.into(), cardinality }
    }
}

/// Raw factor description: scope as dense variable ids plus its energy table.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDef<S> {
    pub scope: Vec<usize>,
    pub energies: Vec<S>,
}

impl<S> FactorDef<S> {
    pub fn new(scope: Vec<usize>, energies: Vec<S>) -> Self {
        Self { scope, energies }
    }
}

/// One factor of a validated graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor<S> {
    scope: Vec<usize>,
    cards: Vec<usize>,
    strides: Vec<usize>,
    energies: Vec<S>,
}

impl<S: Scalar> Factor<S> {
    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    /// Cardinalities of the scope variables, in scope order.
    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn energies(&self) -> &[S] {
        &self.energies
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    pub fn table_size(&self) -> usize {
        self.energies.len()
    }

    /// Position of `variable` within the scope.
    pub fn position_of(&self, variable: usize) -> Option<usize> {
        self.scope.iter().position(|&v| v == variable)
    }

    /// Flat table index of the cell selected by a full-graph assignment.
    pub fn cell_of(&self, states: &[usize]) -> usize {
        self.scope
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| states[v] * s)
            .sum()
    }

    /// Flat table index of per-position states.
    pub fn cell_from_local(&self, local: &[usize]) -> usize {
        local.iter().zip(&self.strides).map(|(&x, &s)| x * s).sum()
    }

    /// State of the scope variable at `pos` in table cell `cell`.
    #[inline]
    pub fn state_at(&self, cell: usize, pos: usize) -> usize {
        (cell / self.strides[pos]) % self.cards[pos]
    }

    /// Decodes a flat cell index into per-position states.
    pub fn decode(&self, cell: usize, out: &mut [usize]) {
        for pos in 0..self.scope.len() {
            out[pos] = self.state_at(cell, pos);
        }
    }
}

/// An assignment of a state index to every variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<usize>);

impl Deref for Assignment {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Immutable discrete factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph<S> {
    cards: Vec<usize>,
    names: Vec<String>,
    factors: Vec<Factor<S>>,
    // (factor, position in scope) for every factor containing the variable
    var_factors: Vec<Vec<(usize, usize)>>,
}

/// Validates raw descriptions and builds a [`FactorGraph`].
pub fn build_graph<S: Scalar>(
    variables: Vec<VariableDef>,
    factors: Vec<FactorDef<S>>,
) -> Result<FactorGraph<S>, ModelError> {
    let mut seen = HashMap::new();
    for (i, v) in variables.iter().enumerate() {
        if v.cardinality < 2 {
            return Err(ModelError::CardinalityTooSmall { variable: i, cardinality: v.cardinality });
        }
        if seen.insert(v.name.clone(), i).is_some() {
            return Err(ModelError::DuplicateName(v.name.clone()));
        }
    }
    let cards: Vec<usize> = variables.iter().map(|v| v.cardinality).collect();
    let mut var_factors = vec![Vec::new(); cards.len()];
    let mut built = Vec::with_capacity(factors.len());
    for (a, f) in factors.into_iter().enumerate() {
        if f.scope.is_empty() {
            return Err(ModelError::EmptyScope { factor: a });
        }
        for (p, &v) in f.scope.iter().enumerate() {
            if v >= cards.len() {
                return Err(ModelError::DanglingVariableRef { factor: a, variable: v });
            }
            if f.scope[..p].contains(&v) {
                return Err(ModelError::DuplicateScopeVariable { factor: a, variable: v });
            }
        }
        let fcards: Vec<usize> = f.scope.iter().map(|&v| cards[v]).collect();
        let expected: usize = fcards.iter().product();
        if f.energies.len() != expected {
            return Err(ModelError::TableSizeMismatch { factor: a, expected, actual: f.energies.len() });
        }
        if let Some(cell) = f.energies.iter().position(|e| e.is_nan() || *e == S::neg_infinity()) {
            return Err(ModelError::NegativeInfiniteEnergy { factor: a, cell });
        }
        let mut strides = vec![1; fcards.len()];
        for p in (0..fcards.len().saturating_sub(1)).rev() {
            strides[p] = strides[p + 1] * fcards[p + 1];
        }
        for (p, &v) in f.scope.iter().enumerate() {
            var_factors[v].push((a, p));
        }
        built.push(Factor { scope: f.scope, cards: fcards, strides, energies: f.energies });
    }
    if let Some(i) = var_factors.iter().position(|l| l.is_empty()) {
        return Err(ModelError::IsolatedVariable { variable: i });
    }
    Ok(FactorGraph {
        cards,
        names: variables.into_iter().map(|v| v.name).collect(),
        factors: built,
        var_factors,
    })
}

impl<S: Scalar> FactorGraph<S> {
    /// Builds a graph from cardinalities alone, naming variables `x0, x1, ...`.
    pub fn from_tables(cards: &[usize], factors: Vec<FactorDef<S>>) -> Result<Self, ModelError> {
        let vars = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| VariableDef::new(format!("x{i}"), c))
            .collect();
        build_graph(vars, factors)
    }

    pub fn num_variables(&self) -> usize {
        self.cards.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.cards[i]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn variable_id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn factor(&self, a: usize) -> &Factor<S> {
        &self.factors[a]
    }

    pub fn factors(&self) -> &[Factor<S>] {
        &self.factors
    }

    /// `(factor, position)` pairs of the factors containing variable `i`.
    pub fn factors_of(&self, i: usize) -> &[(usize, usize)] {
        &self.var_factors[i]
    }

    /// Number of factors containing variable `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.var_factors[i].len()
    }

    /// Number of variables in factor `a`.
    pub fn arity(&self, a: usize) -> usize {
        self.factors[a].arity()
    }

    pub fn is_pairwise(&self) -> bool {
        self.factors.iter().all(|f| f.arity() <= 2)
    }

    /// Size of the joint state space, `None` on overflow.
    pub fn joint_state_count(&self) -> Option<u128> {
        self.cards.iter().try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
    }

    /// Variables sharing at least one factor with `i` (excluding `i`), sorted.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.var_factors[i]
            .iter()
            .flat_map(|&(a, _)| self.factors[a].scope.iter().copied())
            .filter(|&j| j != i)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn check_assignment(&self, x: &[usize]) -> Result<(), ModelError> {
        if x.len() != self.cards.len() {
            return Err(ModelError::AssignmentLength { expected: self.cards.len(), actual: x.len() });
        }
        for (i, (&s, &c)) in x.iter().zip(&self.cards).enumerate() {
            if s >= c {
                return Err(ModelError::InvalidAssignment { variable: i, state: s, cardinality: c });
            }
        }
        Ok(())
    }

    /// Sum of factor energies at `x`; `+inf` if any factor forbids `x`.
    pub fn total_energy(&self, x: &[usize]) -> Result<S, ModelError> {
        self.check_assignment(x)?;
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &[usize]) -> S {
        self.factors.iter().fold(S::zero(), |acc, f| acc + f.energies[f.cell_of(x)])
    }

    /// Per-factor potentials `exp(-E/T)`, each scaled so its largest entry is 1.
    /// `+inf` energies map to exactly 0 at every temperature.
    pub fn potential_power(&self, temperature: S) -> Result<Vec<Vec<S>>, ModelError> {
        if !(temperature > S::zero()) {
            return Err(ModelError::NonPositiveTemperature(temperature.as_f64()));
        }
        Ok(self
            .factors
            .iter()
            .map(|f| {
                let min = f.energies.iter().copied().fold(S::infinity(), S::min);
                f.energies
                    .iter()
                    .map(|&e| {
                        if e == S::infinity() {
                            S::zero()
                        } else {
                            (-(e - min) / temperature).exp()
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// Copy of the graph without factor `a`. Fails if a variable is left isolated.
    pub fn without_factor(&self, a: usize) -> Result<Self, ModelError> {
        let vars = self
            .names
            .iter()
            .zip(&self.cards)
            .map(|(n, &c)| VariableDef::new(n.clone(), c))
            .collect();
        let factors = self
            .factors
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != a)
            .map(|(_, f)| FactorDef::new(f.scope.clone(), f.energies.clone()))
            .collect();
        build_graph(vars, factors)
    }

    /// Raw definitions, for serialization or rebuilding.
    pub fn factor_defs(&self) -> Vec<FactorDef<S>> {
        self.factors
            .iter()
            .map(|f| FactorDef::new(f.scope.clone(), f.energies.clone()))
            .collect()
    }
}

/// Iterates all joint assignments of `cards` in lexicographic order
/// (last variable fastest), calling `visit` on each.
pub(crate) fn for_each_assignment(cards: &[usize], mut visit: impl FnMut(&[usize])) {
    let n = cards.len();
    let mut x = vec![0usize; n];
    loop {
        visit(&x);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            x[k] += 1;
            if x[k] < cards[k] {
                break;
            }
            x[k] = 0;
        }
    }
}
