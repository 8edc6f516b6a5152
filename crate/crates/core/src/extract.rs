//! MAP extraction from max-product fixed points with convex counting numbers.
//!
//! The cascade tries, in order: no ties (per-variable argmax), a consistent
//! maximizer of every factor belief, exact maximization over the tied
//! subgraph, and partial optimality under uniform boundary beliefs.
//!
//! Every tier relies on the decomposition
//! `Pr(x) ∝ prod_a b_a^{d_a} prod_{i,a} (b_a / b_i)^{c_ia} prod_i b_i^{d_i}`
//! supplied by the convexity certificate: an assignment maximizing each
//! factor of that product separately maximizes `Pr`.

use serde::Serialize;
use thiserror::Error;

use crate::beliefs::{admissibility_residual, argmax, max_marginalization_residual, BeliefSet, DEFAULT_TIE_TOL};
use crate::counting::{ConvexityCertificate, CountingNumbers};
use crate::engine::MessageState;
use crate::model::{Assignment, FactorGraph};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("beliefs are not a converged max-product fixed point (max-marginalization residual {residual:e})")]
    NotConverged { residual: f64 },
    #[error("extraction requires a convexity certificate")]
    NoCertificate,
    #[error("certificate does not decompose the given counting numbers")]
    CertificateMismatch,
    #[error("variable {0} is tied; no-ties extraction does not apply")]
    HasTies(usize),
    #[error("factor {0} belief is not maximized by the argmax assignment")]
    FactorNotMaximized(usize),
    #[error("maximizer search exceeded {0} nodes")]
    SearchLimitExceeded(usize),
    #[error("no assignment maximizes every factor belief (frustrated cycle)")]
    NoConsistentMaximizer,
    #[error("tied component has {states:e} joint states, cap is {cap}")]
    ComponentTooLarge { states: f64, cap: u64 },
    #[error("term {0} outside the tied subgraph is not maximized by the combined assignment")]
    BoundaryCheckFailed(String),
    #[error("tied-subgraph objective has no finite maximizer")]
    EmptyObjective,
    #[error("factor {0} is not pairwise")]
    NonPairwiseFactor(usize),
    #[error("boundary variable {0} has a non-uniform belief")]
    BoundaryNotUniform(usize),
    #[error("assignment has infinite energy")]
    InfeasibleAssignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Tier {
    NoTies,
    FrustrationFree,
    TiedSubgraph,
    PartialUniformBoundary,
    Failed,
}

impl Tier {
    /// Tiers that certify a complete MAP assignment.
    pub fn is_complete(self) -> bool {
        matches!(self, Tier::NoTies | Tier::FrustrationFree | Tier::TiedSubgraph)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig<S> {
    /// Relative tie tolerance, shared with [`crate::beliefs::sharpen`].
    pub tie_tol: S,
    /// Node budget of the maximizer search.
    pub search_limit: usize,
    /// Largest joint state space searched per tied component.
    pub component_cap: u64,
    /// Convergence tolerance of the run that produced the beliefs; extraction
    /// refuses inputs whose max-marginalization residual exceeds ten times it.
    pub convergence_tol: S,
}

impl<S: Scalar> Default for ExtractConfig<S> {
    fn default() -> Self {
        Self {
            tie_tol: S::lit(DEFAULT_TIE_TOL),
            search_limit: 1_000_000,
            component_cap: 1 << 20,
            convergence_tol: S::lit(1e-8),
        }
    }
}

/// A max-product fixed point together with the counting numbers that produced it.
#[derive(Debug, Clone, Copy)]
pub struct ExtractInput<'a, S> {
    pub graph: &'a FactorGraph<S>,
    pub beliefs: &'a BeliefSet<S>,
    pub converged: bool,
    pub counts: &'a CountingNumbers<S>,
    pub certificate: Option<&'a ConvexityCertificate<S>>,
}

impl<'a, S: Scalar> ExtractInput<'a, S> {
    pub fn from_run(
        graph: &'a FactorGraph<S>,
        run: &'a (MessageState<S>, BeliefSet<S>),
        counts: &'a CountingNumbers<S>,
        certificate: Option<&'a ConvexityCertificate<S>>,
    ) -> Self {
        Self { graph, beliefs: &run.1, converged: run.0.converged, counts, certificate }
    }
}

/// Tied and non-tied variables, sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TiePartition {
    pub tied: Vec<usize>,
    pub non_tied: Vec<usize>,
    /// Tied variables sharing a factor with a non-tied one.
    pub boundary: Vec<usize>,
    /// States within the tie tolerance of each variable's maximum. Non-tied
    /// variables have exactly one.
    pub tied_states: Vec<Vec<usize>>,
}

impl TiePartition {
    pub fn is_tied(&self, i: usize) -> bool {
        self.tied_states[i].len() > 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `None` when the beliefs and the model disagree on support.
    pub admissibility: Option<f64>,
    pub max_marginalization: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExtractDetail {
    pub tied: usize,
    pub boundary: usize,
    /// Joint state counts of the tied components searched exhaustively.
    pub component_states: Vec<u64>,
    pub search_nodes: usize,
    /// Which tied-subgraph objective succeeded: `"literal"` or `"enlarged"`.
    pub objective: Option<&'static str>,
    /// Why earlier tiers did not apply.
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapCertificate<S> {
    /// `None` marks variables the tier leaves undetermined.
    pub assignment: Vec<Option<usize>>,
    pub tier: Tier,
    pub certificate_used: Option<ConvexityCertificate<S>>,
    pub residuals: Residuals,
    pub detail: ExtractDetail,
}

impl<S> MapCertificate<S> {
    /// The assignment when every variable is determined.
    pub fn complete_assignment(&self) -> Option<Assignment> {
        self.assignment.iter().copied().collect::<Option<Vec<_>>>().map(Assignment)
    }
}

/// States within `tie_tol` (relative to the max) of each variable's maximum.
pub fn detect_ties<S: Scalar>(graph: &FactorGraph<S>, beliefs: &BeliefSet<S>, tie_tol: S) -> TiePartition {
    let tied_states: Vec<Vec<usize>> = beliefs
        .variables
        .iter()
        .map(|b| {
            let max = b.iter().copied().fold(S::zero(), S::max);
            let cut = max - tie_tol * max;
            b.iter().enumerate().filter(|&(_, &v)| v >= cut).map(|(s, _)| s).collect()
        })
        .collect();
    let (tied, non_tied): (Vec<usize>, Vec<usize>) = (0..graph.num_variables()).partition(|&i| tied_states[i].len() > 1);
    let boundary = tied
        .iter()
        .copied()
        .filter(|&i| graph.neighbors(i).iter().any(|&j| tied_states[j].len() <= 1))
        .collect();
    TiePartition { tied, non_tied, boundary, tied_states }
}

fn is_max_cell<S: Scalar>(table: &[S], cell: usize, tol: S) -> bool {
    let max = table.iter().copied().fold(S::zero(), S::max);
    max > S::zero() && table[cell] >= max - tol * max
}

struct Prepared<S> {
    residuals: Residuals,
    certificate: ConvexityCertificate<S>,
}

fn prepare<S: Scalar>(input: &ExtractInput<'_, S>, config: &ExtractConfig<S>) -> Result<Prepared<S>, ExtractError> {
    let graph = input.graph;
    let max_marg = max_marginalization_residual(graph, input.beliefs);
    let admissibility = admissibility_residual(graph, input.beliefs, input.counts, S::one()).ok().map(S::as_f64);
    let residuals = Residuals { admissibility, max_marginalization: max_marg.as_f64() };
    let guard = S::lit(10.0) * config.convergence_tol;
    if !input.converged || !(max_marg <= guard) {
        return Err(ExtractError::NotConverged { residual: max_marg.as_f64() });
    }
    let certificate = input.certificate.ok_or(ExtractError::NoCertificate)?;
    if !certificate.verifies(graph, input.counts) {
        return Err(ExtractError::CertificateMismatch);
    }
    Ok(Prepared { residuals, certificate: certificate.clone() })
}

fn certified<S: Scalar>(
    graph: &FactorGraph<S>,
    x: Vec<usize>,
    tier: Tier,
    prep: Prepared<S>,
    detail: ExtractDetail,
) -> Result<MapCertificate<S>, ExtractError> {
    if graph.total_energy(&x).map_or(true, |e| e == S::infinity()) {
        return Err(ExtractError::InfeasibleAssignment);
    }
    Ok(MapCertificate {
        assignment: x.into_iter().map(Some).collect(),
        tier,
        certificate_used: Some(prep.certificate),
        residuals: prep.residuals,
        detail,
    })
}

/// Per-variable argmax when no variable is tied.
pub fn extract_no_ties<S: Scalar>(
    input: &ExtractInput<'_, S>,
    config: &ExtractConfig<S>,
) -> Result<MapCertificate<S>, ExtractError> {
    let prep = prepare(input, config)?;
    let graph = input.graph;
    let partition = detect_ties(graph, input.beliefs, config.tie_tol);
    if let Some(&i) = partition.tied.first() {
        return Err(ExtractError::HasTies(i));
    }
    let x: Vec<usize> = input.beliefs.variables.iter().map(|b| argmax(b)).collect();
    for (a, f) in graph.factors().iter().enumerate() {
        if !is_max_cell(&input.beliefs.factors[a], f.cell_of(&x), config.tie_tol) {
            return Err(ExtractError::FactorNotMaximized(a));
        }
    }
    certified(graph, x, Tier::NoTies, prep, ExtractDetail::default())
}

/// Connected components of `members` under factors touching two or more of them.
fn components<S: Scalar>(graph: &FactorGraph<S>, members: &[usize], inside: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; graph.num_variables()];
    let mut out = Vec::new();
    for &start in members {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            k += 1;
            for &(a, _) in graph.factors_of(v) {
                for &w in graph.factor(a).scope() {
                    if inside(w) && !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

struct MaximizerSearch<'a, S> {
    graph: &'a FactorGraph<S>,
    max_cells: Vec<Vec<usize>>,
    x: Vec<Option<usize>>,
    nodes: usize,
    limit: usize,
}

impl<S: Scalar> MaximizerSearch<'_, S> {
    fn factor_ok(&self, a: usize) -> bool {
        let f = self.graph.factor(a);
        self.max_cells[a].iter().any(|&cell| {
            f.scope().iter().enumerate().all(|(p, &v)| self.x[v].is_none_or(|s| s == f.state_at(cell, p)))
        })
    }

    fn var_ok(&self, v: usize) -> bool {
        self.graph.factors_of(v).iter().all(|&(a, _)| self.factor_ok(a))
    }

    fn solve(&mut self, order: &[usize], domains: &[Vec<usize>]) -> Result<bool, ExtractError> {
        let Some((&v, rest)) = order.split_first() else { return Ok(true) };
        for &s in &domains[v] {
            self.nodes += 1;
            if self.nodes > self.limit {
                return Err(ExtractError::SearchLimitExceeded(self.limit));
            }
            self.x[v] = Some(s);
            if self.var_ok(v) && self.solve(rest, domains)? {
                return Ok(true);
            }
        }
        self.x[v] = None;
        Ok(false)
    }
}

/// Searches for an assignment that maximizes every factor belief, with
/// non-tied variables fixed at their argmax and tied variables ranging over
/// their tied states.
pub fn extract_frustration_free<S: Scalar>(
    input: &ExtractInput<'_, S>,
    partition: &TiePartition,
    config: &ExtractConfig<S>,
) -> Result<MapCertificate<S>, ExtractError> {
    let prep = prepare(input, config)?;
    let graph = input.graph;
    let beliefs = input.beliefs;
    let max_cells = beliefs
        .factors
        .iter()
        .map(|t| {
            let max = t.iter().copied().fold(S::zero(), S::max);
            let cut = max - config.tie_tol * max;
            t.iter().enumerate().filter(|&(_, &v)| max > S::zero() && v >= cut).map(|(c, _)| c).collect()
        })
        .collect();
    let mut search = MaximizerSearch {
        graph,
        max_cells,
        x: partition.tied_states.iter().map(|s| if s.len() == 1 { Some(s[0]) } else { None }).collect(),
        nodes: 0,
        limit: config.search_limit,
    };
    if (0..graph.num_factors()).any(|a| !search.factor_ok(a)) {
        return Err(ExtractError::NoConsistentMaximizer);
    }
    for comp in components(graph, &partition.tied, |v| partition.is_tied(v)) {
        if !search.solve(&comp, &partition.tied_states)? {
            return Err(ExtractError::NoConsistentMaximizer);
        }
    }
    let x: Vec<usize> = search.x.iter().map(|s| s.expect("every variable assigned")).collect();
    let detail = ExtractDetail {
        tied: partition.tied.len(),
        boundary: partition.boundary.len(),
        search_nodes: search.nodes,
        ..ExtractDetail::default()
    };
    certified(graph, x, Tier::FrustrationFree, prep, detail)
}

fn log_or_neg_inf<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        v.ln()
    } else {
        S::neg_infinity()
    }
}

/// One weighted log-belief term of the decomposition, tabulated over a factor's
/// cells or a variable's states.
struct Term<S> {
    weight: S,
    factor: Option<usize>,
    var: usize,
    log_table: Vec<S>,
}

impl<S: Scalar> Term<S> {
    fn eval(&self, graph: &FactorGraph<S>, x: &[usize]) -> S {
        let v = match self.factor {
            Some(a) => self.log_table[graph.factor(a).cell_of(x)],
            None => self.log_table[x[self.var]],
        };
        if v == S::neg_infinity() {
            v
        } else {
            self.weight * v
        }
    }

    fn is_maximized(&self, graph: &FactorGraph<S>, x: &[usize], log_tol: S) -> bool {
        let max = self.log_table.iter().copied().fold(S::neg_infinity(), S::max);
        let at = match self.factor {
            Some(a) => self.log_table[graph.factor(a).cell_of(x)],
            None => self.log_table[x[self.var]],
        };
        max > S::neg_infinity() && at >= max - log_tol
    }
}

fn ratio_table<S: Scalar>(graph: &FactorGraph<S>, beliefs: &BeliefSet<S>, a: usize, p: usize) -> Vec<S> {
    let f = graph.factor(a);
    let bi = &beliefs.variables[f.scope()[p]];
    beliefs.factors[a]
        .iter()
        .enumerate()
        .map(|(cell, &b)| {
            let d = bi[f.state_at(cell, p)];
            if b > S::zero() && d > S::zero() {
                b.ln() - d.ln()
            } else {
                S::neg_infinity()
            }
        })
        .collect()
}

/// All terms of the decomposition with a positive weight, split by whether
/// `include` puts them in the tied-subgraph objective.
fn split_terms<S: Scalar>(
    graph: &FactorGraph<S>,
    beliefs: &BeliefSet<S>,
    cert: &ConvexityCertificate<S>,
    include: impl Fn(TermKind) -> bool,
) -> (Vec<Term<S>>, Vec<(String, Term<S>)>) {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    let mut push = |kind: TermKind, term: Term<S>, name: String, always_check: bool| {
        if include(kind) {
            if term.weight > S::zero() {
                inside.push(term);
            }
        } else if term.weight > S::zero() || always_check {
            outside.push((name, term));
        }
    };
    for (a, f) in graph.factors().iter().enumerate() {
        let log_b = beliefs.factors[a].iter().map(|&b| log_or_neg_inf(b)).collect();
        // factors outside the tied subgraph are checked even at zero weight
        push(TermKind::Factor(a), Term { weight: cert.d_alpha[a], factor: Some(a), var: 0, log_table: log_b }, format!("b_{a}"), true);
        for (p, &i) in f.scope().iter().enumerate() {
            let t = Term { weight: cert.c_i_alpha[a][p], factor: Some(a), var: i, log_table: ratio_table(graph, beliefs, a, p) };
            push(TermKind::Ratio(i, a), t, format!("r_{i},{a}"), false);
        }
    }
    for (i, b) in beliefs.variables.iter().enumerate() {
        let t = Term { weight: cert.d_i[i], factor: None, var: i, log_table: b.iter().map(|&v| log_or_neg_inf(v)).collect() };
        push(TermKind::Variable(i), t, format!("b_x{i}"), false);
    }
    (inside, outside)
}

#[derive(Debug, Clone, Copy)]
enum TermKind {
    Factor(usize),
    Ratio(usize, usize),
    Variable(usize),
}

/// Exhaustive maximization of the in-subgraph terms over one component, over
/// states with positive belief. Lexicographically smallest maximizer wins.
fn maximize_component<S: Scalar>(
    graph: &FactorGraph<S>,
    beliefs: &BeliefSet<S>,
    comp: &[usize],
    terms: &[&Term<S>],
    x: &mut [usize],
) -> Result<(), ExtractError> {
    let mut comp = comp.to_vec();
    comp.sort_unstable();
    let domains: Vec<Vec<usize>> = comp
        .iter()
        .map(|&v| beliefs.variables[v].iter().enumerate().filter(|&(_, &b)| b > S::zero()).map(|(s, _)| s).collect())
        .collect();
    if domains.iter().any(Vec::is_empty) {
        return Err(ExtractError::EmptyObjective);
    }
    let mut idx = vec![0usize; comp.len()];
    let mut best: Option<(S, Vec<usize>)> = None;
    loop {
        for (k, &v) in comp.iter().enumerate() {
            x[v] = domains[k][idx[k]];
        }
        let mut total = S::zero();
        for t in terms {
            total = total + t.eval(graph, x);
            if total == S::neg_infinity() {
                break;
            }
        }
        if total > S::neg_infinity() && best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, comp.iter().map(|&v| x[v]).collect()));
        }
        // odometer, first component variable slowest
        let mut k = comp.len();
        loop {
            if k == 0 {
                let (_, states) = best.ok_or(ExtractError::EmptyObjective)?;
                for (&v, s) in comp.iter().zip(states) {
                    x[v] = s;
                }
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Maximizes the tied-subgraph objective exactly per component, then checks
/// that every term left out of it is maximized by the combined assignment.
///
/// The literal objective keeps `r_ia` and `b_i` only for interior tied
/// variables. If its maximizer fails the outside check, an enlarged objective
/// that also covers boundary variables is tried.
pub fn extract_with_frustrations<S: Scalar>(
    input: &ExtractInput<'_, S>,
    partition: &TiePartition,
    config: &ExtractConfig<S>,
) -> Result<MapCertificate<S>, ExtractError> {
    let prep = prepare(input, config)?;
    let graph = input.graph;
    let beliefs = input.beliefs;
    let tied = |v: usize| partition.is_tied(v);
    let on_boundary = |v: usize| partition.boundary.binary_search(&v).is_ok();
    let factor_inside = |a: usize| graph.factor(a).scope().iter().all(|&v| tied(v));

    let mut detail = ExtractDetail { tied: partition.tied.len(), boundary: partition.boundary.len(), ..Default::default() };
    let base: Vec<usize> = partition.tied_states.iter().map(|s| s[0]).collect();
    let nt_x: Vec<usize> = beliefs.variables.iter().map(|b| argmax(b)).collect();
    let base: Vec<usize> = base.iter().zip(&nt_x).enumerate().map(|(i, (&t, &n))| if tied(i) { t } else { n }).collect();

    let comps: Vec<Vec<usize>> = components(graph, &partition.tied, |v| tied(v));
    for comp in &comps {
        let states = comp.iter().try_fold(1u64, |acc, &v| {
            let live = beliefs.variables[v].iter().filter(|&&b| b > S::zero()).count() as u64;
            acc.checked_mul(live).filter(|&s| s <= config.component_cap)
        });
        match states {
            Some(s) => detail.component_states.push(s),
            None => {
                let states: f64 = comp.iter().map(|&v| graph.cardinality(v) as f64).product();
                return Err(ExtractError::ComponentTooLarge { states, cap: config.component_cap });
            }
        }
    }

    // (1 - tol) relative tolerance on beliefs, doubled for ratios
    let log_tol = S::lit(2.0) * -(S::one() - config.tie_tol).ln();
    let mut last_err = ExtractError::EmptyObjective;
    for (label, enlarged) in [("literal", false), ("enlarged", true)] {
        let include = |kind: TermKind| match kind {
            TermKind::Factor(a) => factor_inside(a),
            TermKind::Ratio(i, a) => factor_inside(a) && tied(i) && (enlarged || !on_boundary(i)),
            TermKind::Variable(i) => tied(i) && (enlarged || !on_boundary(i)),
        };
        let (inside, outside) = split_terms(graph, beliefs, &prep.certificate, include);
        let mut x = base.clone();
        for comp in &comps {
            let terms: Vec<&Term<S>> = inside
                .iter()
                .filter(|t| match t.factor {
                    Some(a) => graph.factor(a).scope().iter().any(|v| comp.contains(v)),
                    None => comp.contains(&t.var),
                })
                .collect();
            maximize_component(graph, beliefs, comp, &terms, &mut x)?;
        }
        match outside.iter().find(|(_, t)| !t.is_maximized(graph, &x, log_tol)) {
            None => {
                detail.objective = Some(label);
                return certified(graph, x, Tier::TiedSubgraph, prep, detail);
            }
            Some((name, _)) => last_err = ExtractError::BoundaryCheckFailed(name.clone()),
        }
    }
    Err(last_err)
}

/// With pairwise factors and fully uniform boundary beliefs, the non-tied
/// argmax is part of a MAP assignment. Tied variables are left undetermined.
pub fn uniform_boundary_partial<S: Scalar>(
    input: &ExtractInput<'_, S>,
    partition: &TiePartition,
    config: &ExtractConfig<S>,
) -> Result<MapCertificate<S>, ExtractError> {
    let prep = prepare(input, config)?;
    let graph = input.graph;
    if let Some(a) = (0..graph.num_factors()).find(|&a| graph.arity(a) > 2) {
        return Err(ExtractError::NonPairwiseFactor(a));
    }
    for &i in &partition.boundary {
        if partition.tied_states[i].len() != graph.cardinality(i) {
            return Err(ExtractError::BoundaryNotUniform(i));
        }
    }
    let assignment = (0..graph.num_variables())
        .map(|i| if partition.is_tied(i) { None } else { Some(argmax(&input.beliefs.variables[i])) })
        .collect();
    Ok(MapCertificate {
        assignment,
        tier: Tier::PartialUniformBoundary,
        certificate_used: Some(prep.certificate),
        residuals: prep.residuals,
        detail: ExtractDetail { tied: partition.tied.len(), boundary: partition.boundary.len(), ..Default::default() },
    })
}

/// Runs the tiers in order and reports the first that succeeds, or `Failed`
/// with every tier's reason.
pub fn extract<S: Scalar>(input: &ExtractInput<'_, S>, config: &ExtractConfig<S>) -> MapCertificate<S> {
    let graph = input.graph;
    let failed = |residuals: Residuals, rejected: Vec<String>| MapCertificate {
        assignment: vec![None; graph.num_variables()],
        tier: Tier::Failed,
        certificate_used: input.certificate.cloned(),
        residuals,
        detail: ExtractDetail { rejected, ..Default::default() },
    };
    let residuals = match prepare(input, config) {
        Ok(p) => p.residuals,
        Err(e) => {
            let max_marg = max_marginalization_residual(graph, input.beliefs).as_f64();
            return failed(Residuals { admissibility: None, max_marginalization: max_marg }, vec![e.to_string()]);
        }
    };
    let partition = detect_ties(graph, input.beliefs, config.tie_tol);
    let mut rejected = Vec::new();
    let attempts: [&dyn Fn() -> Result<MapCertificate<S>, ExtractError>; 4] = [
        &|| extract_no_ties(input, config),
        &|| extract_frustration_free(input, &partition, config),
        &|| extract_with_frustrations(input, &partition, config),
        &|| uniform_boundary_partial(input, &partition, config),
    ];
    for attempt in attempts {
        match attempt() {
            Ok(mut cert) => {
                cert.detail.rejected = rejected;
                return cert;
            }
            Err(e) => rejected.push(e.to_string()),
        }
    }
    let mut out = failed(residuals, rejected);
    out.detail.tied = partition.tied.len();
    out.detail.boundary = partition.boundary.len();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{bethe, default_convex, trivial_convex};
    use crate::engine::{run, InferenceConfig};
    use crate::model::FactorDef;
    use crate::oracle::brute_force_map;

    // binary 4-cycle with couplings J (energy -J when the ends agree) and fields h
    fn cycle(j: [f64; 4], h: [f64; 4]) -> FactorGraph<f64> {
        let mut factors: Vec<_> = (0..4).map(|i| FactorDef::new(vec![i, (i + 1) % 4], vec![-j[i], j[i], j[i], -j[i]])).collect();
        factors.extend((0..4).map(|i| FactorDef::new(vec![i], vec![-h[i], h[i]])));
        FactorGraph::from_tables(&[2; 4], factors).unwrap()
    }

    fn max_run(g: &FactorGraph<f64>, counts: &CountingNumbers<f64>) -> (MessageState<f64>, BeliefSet<f64>) {
        let cfg = InferenceConfig { max_iterations: 100_000, ..InferenceConfig::max_product() };
        let r = run(g, counts, &cfg, None).unwrap();
        assert!(r.0.converged);
        r
    }

    fn map_energy(g: &FactorGraph<f64>) -> f64 {
        brute_force_map(g, Default::default()).unwrap().1
    }

    #[test]
    fn tie_detection() {
        let g = cycle([1.0; 4], [0.0; 4]);
        let mut b = BeliefSet::uniform(&g);
        for v in &mut b.variables {
            *v = vec![0.9, 0.1];
        }
        let p = detect_ties(&g, &b, 1e-6);
        assert!(p.tied.is_empty() && p.boundary.is_empty());
        assert_eq!(p.non_tied, vec![0, 1, 2, 3]);

        b.variables[1] = vec![0.5, 0.5];
        let p = detect_ties(&g, &b, 1e-6);
        assert_eq!((p.tied.clone(), p.boundary.clone()), (vec![1], vec![1]));
        assert_eq!(p.tied_states[1], vec![0, 1]);
        // looser tolerance can only add ties
        let wide = detect_ties(&g, &b, 0.9);
        assert_eq!(wide.tied, vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_node_max_fixed_point_is_all_tied() {
        let g = FactorGraph::from_tables(&[2, 2], vec![FactorDef::new(vec![0, 1], vec![0.0, 0.0, 0.0, f64::INFINITY])]).unwrap();
        let (_, b) = max_run(&g, &bethe(&g));
        let p = detect_ties(&g, &b, 1e-6);
        assert_eq!(p.tied, vec![0, 1]);
        assert!(p.non_tied.is_empty() && p.boundary.is_empty());

        let (t, cert) = trivial_convex(&g);
        let r = max_run(&g, &t);
        let out = extract(&ExtractInput::from_run(&g, &r, &t, Some(&cert)), &ExtractConfig::default());
        assert!(out.tier.is_complete());
        assert_eq!(g.total_energy(&out.complete_assignment().unwrap().0).unwrap(), 0.0);
    }

    #[test]
    fn no_ties_on_a_biased_cycle() {
        let g = cycle([0.5, 0.3, -0.2, 0.4], [0.6, -0.1, 0.2, 0.3]);
        let (d, cert) = default_convex(&g);
        let r = max_run(&g, &d);
        let input = ExtractInput::from_run(&g, &r, &d, Some(&cert));
        let out = extract_no_ties(&input, &ExtractConfig::default()).unwrap();
        assert_eq!(out.tier, Tier::NoTies);
        assert_eq!(g.total_energy(&out.complete_assignment().unwrap().0).unwrap(), map_energy(&g));

        let bare = ExtractInput { certificate: None, ..input };
        assert_eq!(extract_no_ties(&bare, &ExtractConfig::default()).unwrap_err(), ExtractError::NoCertificate);
        let stale = ExtractInput { converged: false, ..input };
        assert!(matches!(extract_no_ties(&stale, &ExtractConfig::default()), Err(ExtractError::NotConverged { .. })));
        assert_eq!(extract(&stale, &ExtractConfig::default()).tier, Tier::Failed);
    }

    #[test]
    fn unfrustrated_cycle_has_consistent_maximizers() {
        // symmetric ferromagnet: every node tied, both uniform assignments are MAPs
        let g = cycle([1.0; 4], [0.0; 4]);
        let (t, cert) = trivial_convex(&g);
        let r = max_run(&g, &t);
        let input = ExtractInput::from_run(&g, &r, &t, Some(&cert));
        let config = ExtractConfig::default();
        let p = detect_ties(&g, &r.1, config.tie_tol);
        assert_eq!(p.tied.len(), 4);
        assert!(matches!(extract_no_ties(&input, &config), Err(ExtractError::HasTies(_))));
        let out = extract_frustration_free(&input, &p, &config).unwrap();
        assert_eq!(out.tier, Tier::FrustrationFree);
        assert_eq!(out.complete_assignment().unwrap().0, vec![0, 0, 0, 0]);
        assert_eq!(g.total_energy(&[0, 0, 0, 0]).unwrap(), map_energy(&g));
    }

    #[test]
    fn frustrated_cycle_needs_the_tied_subgraph() {
        let g = cycle([1.0, 1.0, 1.0, -1.0], [0.0; 4]);
        let (t, cert) = trivial_convex(&g);
        let r = max_run(&g, &t);
        let input = ExtractInput::from_run(&g, &r, &t, Some(&cert));
        let config = ExtractConfig::default();
        let p = detect_ties(&g, &r.1, config.tie_tol);
        assert_eq!(p.tied.len(), 4);
        assert_eq!(extract_frustration_free(&input, &p, &config).unwrap_err(), ExtractError::NoConsistentMaximizer);

        let out = extract_with_frustrations(&input, &p, &config).unwrap();
        assert_eq!(out.tier, Tier::TiedSubgraph);
        let x = out.complete_assignment().unwrap();
        assert_eq!(g.total_energy(&x.0).unwrap(), map_energy(&g));
        assert_eq!(extract(&input, &config).tier, Tier::TiedSubgraph);

        let tight = ExtractConfig { component_cap: 8, ..config };
        assert!(matches!(extract_with_frustrations(&input, &p, &tight), Err(ExtractError::ComponentTooLarge { .. })));
    }

    #[test]
    fn uniform_boundary_checks() {
        let g = cycle([1.0, 1.0, 1.0, -1.0], [0.0; 4]);
        let (t, cert) = trivial_convex(&g);
        let r = max_run(&g, &t);
        let input = ExtractInput::from_run(&g, &r, &t, Some(&cert));
        let config = ExtractConfig::default();
        let mut p = detect_ties(&g, &r.1, config.tie_tol);
        // no non-tied variable, so the boundary is empty and the claim is vacuous
        let out = uniform_boundary_partial(&input, &p, &config).unwrap();
        assert_eq!(out.tier, Tier::PartialUniformBoundary);
        assert!(out.assignment.iter().all(Option::is_none));

        p.boundary = vec![2];
        p.tied_states[2] = vec![0];
        assert_eq!(uniform_boundary_partial(&input, &p, &config).unwrap_err(), ExtractError::BoundaryNotUniform(2));

        let tri = FactorGraph::from_tables(&[2; 3], vec![FactorDef::new(vec![0, 1, 2], vec![0.0, 1.0, 1.0, 0.5, 1.0, 0.5, 0.5, 0.0])]).unwrap();
        let (tt, tcert) = trivial_convex(&tri);
        let r = max_run(&tri, &tt);
        let input = ExtractInput::from_run(&tri, &r, &tt, Some(&tcert));
        let p = detect_ties(&tri, &r.1, config.tie_tol);
        assert_eq!(uniform_boundary_partial(&input, &p, &config).unwrap_err(), ExtractError::NonPairwiseFactor(0));
    }
}
