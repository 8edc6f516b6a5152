//! Two-way reweighted message passing in the sum and max semirings.
//!
//! Messages live in the log domain. For a factor `a` and member `i` with
//! `gamma_i = d_i / (1 - c_i)`:
//!
//! ```text
//! m0_ai(x_i) = (+)_{x_a \ i} psi_a^{1/T}(x_a) prod_{j != i} m_ja(x_j)
//! m0_ia(x_i) = prod_{b != a} m_bi(x_i)
//! m_ai <- m0_ai^gamma m0_ia^(gamma - 1)
//! m_ia <- m0_ia^gamma m0_ai^(gamma - 1)
//! ```
//!
//! where `(+)` is a sum or a max.
//!
//! Read literally with `gamma` as the exponent, these updates only reach
//! admissible fixed points for Bethe counts. Solving the fixed-point equations
//! for general `c_i` gives the exponent `beta_i = gamma_i / (2 gamma_i - 1)
//! = d_i / (2 d_i + c_i - 1)`, which is what the sweeps use; `beta = gamma = 1`
//! for Bethe counts, so ordinary BP is unchanged. Zero potentials are `-inf` logs. A state that
//! either half-message rules out is ruled out in both outgoing messages, which
//! keeps `-inf * (gamma - 1)` from ever producing `+inf` or NaN.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::beliefs::{beliefs_from_messages, BeliefError, BeliefSet};
use crate::counting::{bethe, CountingNumbers};
use crate::model::FactorGraph;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("variable {0} has c_i = 1, gamma is undefined")]
    CiEqualsOne(usize),
    #[error("variable {0} has c_i > 1, unsupported by the reweighted updates")]
    CiAboveOne(usize),
    #[error("factor {0} has c_alpha != 1; rescale the counting numbers first")]
    FactorCountNotOne(usize),
    #[error("variable {0} has 2 d_i + c_i = 1, the reweighting exponent is undefined")]
    SingularReweighting(usize),
    #[error("log message for edge {0} left (-inf, 0]; this is a bug")]
    NumericalOverflow(usize),
    #[error("every state of a message into variable {0} is ruled out: the model has no feasible assignment")]
    Infeasible(usize),
    #[error("invalid inference config: {0}")]
    InvalidConfig(&'static str),
    #[error("counting numbers do not match the graph")]
    CountsMisaligned,
    #[error("warm-start message state does not match the graph")]
    LayoutMismatch,
    #[error(transparent)]
    Beliefs(#[from] BeliefError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semiring {
    Sum,
    Max,
}

/// Update order within one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Edges updated in place, in a seeded random permutation redrawn every sweep.
    Asynchronous { seed: u64 },
    /// All edges computed from the previous sweep's messages.
    Synchronous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig<S> {
    pub semiring: Semiring,
    /// Used by the sum semiring only; max runs at `T = 1`.
    pub temperature: S,
    /// Weight of the previous message in the geometric (log-domain) average.
    pub damping: S,
    /// Upper bound on full sweeps.
    pub max_iterations: usize,
    /// Largest absolute change of any log-message entry over a sweep.
    pub convergence_tol: S,
    pub schedule: Schedule,
}

impl<S: Scalar> Default for InferenceConfig<S> {
    fn default() -> Self {
        Self {
            semiring: Semiring::Sum,
            temperature: S::one(),
            damping: S::lit(0.5),
            max_iterations: 10_000,
            convergence_tol: S::lit(1e-8),
            schedule: Schedule::Asynchronous { seed: 0 },
        }
    }
}

impl<S: Scalar> InferenceConfig<S> {
    pub fn max_product() -> Self {
        Self { semiring: Semiring::Max, ..Self::default() }
    }

    pub fn sum_product(temperature: S) -> Self {
        Self { temperature, ..Self::default() }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.semiring == Semiring::Sum && !(self.temperature > S::zero()) {
            return Err(EngineError::InvalidConfig("sum semiring needs a positive temperature"));
        }
        if !(self.damping >= S::zero() && self.damping < S::one()) {
            return Err(EngineError::InvalidConfig("damping must lie in [0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(EngineError::InvalidConfig("max_iterations must be positive"));
        }
        if !(self.convergence_tol > S::zero()) {
            return Err(EngineError::InvalidConfig("convergence_tol must be positive"));
        }
        Ok(())
    }

    /// Temperature actually used for potentials.
    pub fn effective_temperature(&self) -> S {
        match self.semiring {
            Semiring::Sum => self.temperature,
            Semiring::Max => S::one(),
        }
    }
}

/// Log-domain messages on every (factor, member) edge.
///
/// Edges are numbered factor by factor in scope order. Every message is
/// normalized so its largest entry is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState<S> {
    factor_start: Vec<usize>,
    offsets: Vec<usize>,
    log_f2v: Vec<S>,
    log_v2f: Vec<S>,
    pub iterations_run: usize,
    pub converged: bool,
    pub final_delta: S,
}

impl<S: Scalar> MessageState<S> {
    /// All-zero log messages.
    pub fn uniform(graph: &FactorGraph<S>) -> Self {
        let mut factor_start = Vec::with_capacity(graph.num_factors() + 1);
        let mut offsets = vec![0];
        let mut edges = 0;
        for f in graph.factors() {
            factor_start.push(edges);
            for &c in f.cards() {
                offsets.push(offsets.last().unwrap() + c);
            }
            edges += f.arity();
        }
        factor_start.push(edges);
        let len = *offsets.last().unwrap();
        Self {
            factor_start,
            offsets,
            log_f2v: vec![S::zero(); len],
            log_v2f: vec![S::zero(); len],
            iterations_run: 0,
            converged: false,
            final_delta: S::infinity(),
        }
    }

    pub fn matches(&self, graph: &FactorGraph<S>) -> bool {
        self.factor_start.len() == graph.num_factors() + 1
            && graph.factors().iter().enumerate().all(|(a, f)| {
                let e0 = self.factor_start[a];
                self.factor_start[a + 1] - e0 == f.arity()
                    && f.cards().iter().enumerate().all(|(p, &c)| self.offsets[e0 + p + 1] - self.offsets[e0 + p] == c)
            })
    }

    pub fn num_edges(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    fn edge(&self, a: usize, p: usize) -> usize {
        self.factor_start[a] + p
    }

    #[inline]
    fn range(&self, e: usize) -> std::ops::Range<usize> {
        self.offsets[e]..self.offsets[e + 1]
    }

    /// `log m_{a i}` for the member at scope position `p` of factor `a`.
    pub fn factor_to_var(&self, a: usize, p: usize) -> &[S] {
        &self.log_f2v[self.range(self.edge(a, p))]
    }

    /// `log m_{i a}` for the member at scope position `p` of factor `a`.
    pub fn var_to_factor(&self, a: usize, p: usize) -> &[S] {
        &self.log_v2f[self.range(self.edge(a, p))]
    }

    /// True when every message is max-normalized and NaN free.
    pub fn is_normalized(&self) -> bool {
        (0..self.num_edges()).all(|e| {
            let r = self.range(e);
            [&self.log_f2v[r.clone()], &self.log_v2f[r]].iter().all(|m| {
                let max = m.iter().copied().fold(S::neg_infinity(), S::max);
                max == S::zero() && m.iter().all(|v| !v.is_nan())
            })
        })
    }
}

/// `gamma_i = d_i / (1 - c_i)`.
pub fn gamma<S: Scalar>(graph: &FactorGraph<S>, counts: &CountingNumbers<S>) -> Result<Vec<S>, EngineError> {
    if counts.check_aligned(graph).is_err() {
        return Err(EngineError::CountsMisaligned);
    }
    counts
        .c_i
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c == S::one() {
                Err(EngineError::CiEqualsOne(i))
            } else {
                Ok(S::lit(graph.degree(i) as f64) / (S::one() - c))
            }
        })
        .collect()
}

/// Exponent actually applied by the updates: `gamma / (2 gamma - 1)`.
pub fn reweight_exponent<S: Scalar>(graph: &FactorGraph<S>, counts: &CountingNumbers<S>) -> Result<Vec<S>, EngineError> {
    gamma(graph, counts)?
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let den = S::lit(2.0) * g - S::one();
            if den == S::zero() {
                Err(EngineError::SingularReweighting(i))
            } else {
                Ok(g / den)
            }
        })
        .collect()
}

fn check_counts<S: Scalar>(counts: &CountingNumbers<S>) -> Result<(), EngineError> {
    let tol = S::lit(1e-12);
    if let Some(a) = counts.c_alpha.iter().position(|&c| (c - S::one()).abs() > tol) {
        return Err(EngineError::FactorCountNotOne(a));
    }
    if let Some(i) = counts.c_i.iter().position(|&c| c > S::one()) {
        return Err(EngineError::CiAboveOne(i));
    }
    Ok(())
}

const MAX_INLINE_CARD: usize = 16;

struct Sweeper<'g, S> {
    graph: &'g FactorGraph<S>,
    beta: Vec<S>,
    log_psi: Vec<Vec<S>>,
    semiring: Semiring,
    damping: S,
    edge_of: Vec<(usize, usize)>,
    a0: Vec<S>,
    b0: Vec<S>,
    scratch: Vec<S>,
    out_f2v: Vec<S>,
    out_v2f: Vec<S>,
}

#[inline]
fn reweight<S: Scalar>(g: S, own: S, other: S) -> S {
    if own == S::neg_infinity() || other == S::neg_infinity() {
        S::neg_infinity()
    } else {
        g * own + (g - S::one()) * other
    }
}

fn normalize_log<S: Scalar>(m: &mut [S]) -> bool {
    let max = m.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() || max.is_nan() {
        return false;
    }
    m.iter_mut().for_each(|v| *v = *v - max);
    true
}

impl<'g, S: Scalar> Sweeper<'g, S> {
    fn new(graph: &'g FactorGraph<S>, beta: Vec<S>, config: &InferenceConfig<S>) -> Self {
        let t = config.effective_temperature();
        let log_psi = graph
            .factors()
            .iter()
            .map(|f| f.energies().iter().map(|&e| if e == S::infinity() { S::neg_infinity() } else { -e / t }).collect())
            .collect();
        let edge_of = graph
            .factors()
            .iter()
            .enumerate()
            .flat_map(|(a, f)| (0..f.arity()).map(move |p| (a, p)))
            .collect();
        let max_card = graph.cardinalities().iter().copied().max().unwrap_or(0);
        let max_table = graph.factors().iter().map(|f| f.table_size()).max().unwrap_or(0);
        Self {
            graph,
            beta,
            log_psi,
            semiring: config.semiring,
            damping: config.damping,
            edge_of,
            a0: vec![S::zero(); max_card],
            b0: vec![S::zero(); max_card],
            scratch: vec![S::zero(); max_table],
            out_f2v: vec![S::zero(); max_card],
            out_v2f: vec![S::zero(); max_card],
        }
    }

    /// Computes the new pair of messages on edge `e` from `src` into the
    /// output buffers and returns the largest entry change.
    fn compute_edge(&mut self, e: usize, src: &MessageState<S>) -> Result<S, EngineError> {
        let (a, p) = self.edge_of[e];
        let f = self.graph.factor(a);
        let i = f.scope()[p];
        let card = f.cards()[p];
        let psi = &self.log_psi[a];

        // m0_ai
        let cells = &mut self.scratch[..f.table_size()];
        for (cell, slot) in cells.iter_mut().enumerate() {
            let mut acc = psi[cell];
            if acc != S::neg_infinity() {
                for q in 0..f.arity() {
                    if q != p {
                        acc = acc + src.var_to_factor(a, q)[f.state_at(cell, q)];
                    }
                }
            }
            *slot = acc;
        }
        let stride = f.strides()[p];
        let a0 = &mut self.a0[..card];
        a0.iter_mut().for_each(|v| *v = S::neg_infinity());
        for (c, &v) in cells.iter().enumerate() {
            let x = (c / stride) % card;
            a0[x] = a0[x].max(v);
        }
        if self.semiring == Semiring::Sum {
            // b0 doubles as the accumulator; it is rebuilt just below
            let acc = &mut self.b0[..card];
            acc.iter_mut().for_each(|v| *v = S::zero());
            for (c, &v) in cells.iter().enumerate() {
                let x = (c / stride) % card;
                if a0[x] != S::neg_infinity() {
                    acc[x] = acc[x] + (v - a0[x]).exp();
                }
            }
            for (m, &sum) in a0.iter_mut().zip(acc.iter()) {
                if *m != S::neg_infinity() {
                    *m = *m + sum.ln();
                }
            }
        }

        // m0_ia
        self.b0[..card].iter_mut().for_each(|v| *v = S::zero());
        for &(b, q) in self.graph.factors_of(i) {
            if b != a {
                for (acc, &m) in self.b0[..card].iter_mut().zip(src.factor_to_var(b, q)) {
                    *acc = *acc + m;
                }
            }
        }

        let g = self.beta[i];
        let r = src.range(e);
        let mut delta = S::zero();
        for (which, (own, other)) in [(&self.a0, &self.b0), (&self.b0, &self.a0)].into_iter().enumerate() {
            let mut fresh = [S::zero(); MAX_INLINE_CARD];
            let mut heap;
            let fresh: &mut [S] = if card <= MAX_INLINE_CARD {
                &mut fresh[..card]
            } else {
                heap = vec![S::zero(); card];
                &mut heap
            };
            for x in 0..card {
                fresh[x] = reweight(g, own[x], other[x]);
            }
            if !normalize_log(fresh) {
                return Err(EngineError::Infeasible(i));
            }
            let old = if which == 0 { &src.log_f2v[r.clone()] } else { &src.log_v2f[r.clone()] };
            if self.damping > S::zero() {
                let keep = self.damping;
                for (n, &o) in fresh.iter_mut().zip(old) {
                    *n = if *n == S::neg_infinity() || o == S::neg_infinity() {
                        S::neg_infinity()
                    } else {
                        (S::one() - keep) * *n + keep * o
                    };
                }
                normalize_log(fresh);
            }
            for (n, &o) in fresh.iter().zip(old) {
                if n.is_nan() || *n > S::zero() {
                    return Err(EngineError::NumericalOverflow(e));
                }
                let d = if *n == o { S::zero() } else { (*n - o).abs() };
                delta = delta.max(d);
            }
            let out = if which == 0 { &mut self.out_f2v } else { &mut self.out_v2f };
            out[..card].copy_from_slice(fresh);
        }
        Ok(delta)
    }

    fn write_edge(&self, e: usize, dst: &mut MessageState<S>) {
        let r = dst.range(e);
        let card = r.len();
        dst.log_f2v[r.clone()].copy_from_slice(&self.out_f2v[..card]);
        dst.log_v2f[r].copy_from_slice(&self.out_v2f[..card]);
    }
}

/// Runs message passing to convergence or `max_iterations` sweeps.
///
/// Requires `c_alpha = 1` for every factor and `c_i < 1` for every variable.
pub fn run<S: Scalar>(
    graph: &FactorGraph<S>,
    counts: &CountingNumbers<S>,
    config: &InferenceConfig<S>,
    initial: Option<&MessageState<S>>,
) -> Result<(MessageState<S>, BeliefSet<S>), EngineError> {
    config.validate()?;
    check_counts(counts)?;
    let beta = reweight_exponent(graph, counts)?;
    let mut state = match initial {
        Some(s) if !s.matches(graph) => return Err(EngineError::LayoutMismatch),
        Some(s) => s.clone(),
        None => MessageState::uniform(graph),
    };
    state.iterations_run = 0;
    state.converged = false;
    state.final_delta = S::infinity();

    let mut sweeper = Sweeper::new(graph, beta, config);
    let mut order: Vec<usize> = (0..state.num_edges()).collect();
    let mut rng = match config.schedule {
        Schedule::Asynchronous { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Schedule::Synchronous => None,
    };
    let mut previous = state.clone();
    for sweep in 1..=config.max_iterations {
        let mut delta = S::zero();
        match rng.as_mut() {
            Some(rng) => {
                order.shuffle(rng);
                for &e in &order {
                    delta = delta.max(sweeper.compute_edge(e, &state)?);
                    sweeper.write_edge(e, &mut state);
                }
            }
            None => {
                previous.clone_from(&state);
                for e in 0..state.num_edges() {
                    delta = delta.max(sweeper.compute_edge(e, &previous)?);
                    sweeper.write_edge(e, &mut state);
                }
            }
        }
        state.iterations_run = sweep;
        state.final_delta = delta;
        if delta < config.convergence_tol {
            state.converged = true;
            break;
        }
    }
    let beliefs = beliefs_from_messages(graph, &state, config.temperature, config.semiring)?;
    Ok((state, beliefs))
}

/// Ordinary BP: [`run`] with Bethe counting numbers.
pub fn run_ordinary_bp<S: Scalar>(
    graph: &FactorGraph<S>,
    config: &InferenceConfig<S>,
) -> Result<(MessageState<S>, BeliefSet<S>), EngineError> {
    run(graph, &bethe(graph), config, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{default_convex, trivial_convex};
    use crate::model::FactorDef;
    use crate::oracle::brute_force_marginals;

    fn two_node() -> FactorGraph<f64> {
        FactorGraph::from_tables(&[2, 2], vec![FactorDef::new(vec![0, 1], vec![0.0, 0.0, 0.0, f64::INFINITY])]).unwrap()
    }

    // path 0-1-2 with fields, plus a triangle closing 2-3-4
    fn small_loopy() -> FactorGraph<f64> {
        FactorGraph::from_tables(
            &[2, 3, 2, 2, 2],
            vec![
                FactorDef::new(vec![0], vec![0.3, -0.2]),
                FactorDef::new(vec![0, 1], vec![0.1, 0.7, -0.4, 0.2, 0.0, 0.9]),
                FactorDef::new(vec![1, 2], vec![0.5, -0.3, 0.2, 0.1, -0.6, 0.4]),
                FactorDef::new(vec![2, 3], vec![-0.8, 0.8, 0.8, -0.8]),
                FactorDef::new(vec![3, 4], vec![0.4, -0.4, -0.4, 0.4]),
                FactorDef::new(vec![2, 4], vec![0.6, -0.6, -0.6, 0.6]),
            ],
        )
        .unwrap()
    }

    fn max_abs_diff(a: &BeliefSet<f64>, b: &BeliefSet<f64>) -> f64 {
        let fa = a.factors.iter().chain(&a.variables).flatten();
        let fb = b.factors.iter().chain(&b.variables).flatten();
        fa.zip(fb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn two_node_sum_fixed_point_at_every_temperature() {
        let g = two_node();
        for t in [1.0, 0.1, 0.01] {
            let (s, b) = run(&g, &bethe(&g), &InferenceConfig::sum_product(t), None).unwrap();
            assert!(s.converged);
            for (got, want) in b.factors[0].iter().zip([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]) {
                assert!((got - want).abs() < 1e-8);
            }
            for v in &b.variables {
                assert!((v[0] - 2.0 / 3.0).abs() < 1e-8 && (v[1] - 1.0 / 3.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn two_node_max_fixed_point_is_uniform() {
        let g = two_node();
        let (s, b) = run_ordinary_bp(&g, &InferenceConfig::max_product()).unwrap();
        assert!(s.converged);
        for v in &b.variables {
            assert!((v[0] - 0.5).abs() < 1e-8);
        }
        assert!(b.factors[0][..3].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-8));
        assert_eq!(b.factors[0][3], 0.0);
    }

    #[test]
    fn uniform_potentials_converge_at_once() {
        let g = FactorGraph::<f64>::from_tables(
            &[3, 2, 2],
            vec![FactorDef::new(vec![0, 1], vec![0.0; 6]), FactorDef::new(vec![1, 2], vec![0.0; 4])],
        )
        .unwrap();
        let (s, b) = run_ordinary_bp(&g, &InferenceConfig::sum_product(1.0)).unwrap();
        assert!(s.converged);
        assert_eq!(s.iterations_run, 1);
        assert!(b.variables[0].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn gamma_examples() {
        let g = small_loopy();
        assert!(gamma(&g, &bethe(&g)).unwrap().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let (t, _) = trivial_convex(&g);
        // variable 2 sits in three factors
        assert_eq!(gamma(&g, &t).unwrap()[2], 3.0);
        let (d, _) = default_convex(&g);
        let gd = gamma(&g, &d).unwrap();
        // degree 2, c = -1
        assert_eq!(gd[1], 1.0);
        let beta = reweight_exponent(&g, &d).unwrap();
        for ((b, gm), i) in beta.iter().zip(&gd).zip(0..) {
            assert!((b - gm / (2.0 * gm - 1.0)).abs() < 1e-15, "variable {i}");
        }
    }

    #[test]
    fn count_errors() {
        let g = two_node();
        let mut c = bethe(&g);
        c.c_i[1] = 1.0;
        assert_eq!(gamma(&g, &c), Err(EngineError::CiEqualsOne(1)));
        let mut c = bethe(&g);
        c.c_alpha[0] = 0.5;
        let cfg = InferenceConfig::sum_product(1.0);
        assert_eq!(run(&g, &c, &cfg, None).unwrap_err(), EngineError::FactorCountNotOne(0));

        // a variable seen only by a unary factor: d = 1, so c = -1 gives 2d + c = 1
        let lone = FactorGraph::from_tables(&[2], vec![FactorDef::new(vec![0], vec![0.0, 1.0])]).unwrap();
        let singular = CountingNumbers { c_alpha: vec![1.0], c_i: vec![-1.0] };
        assert_eq!(run(&lone, &singular, &cfg, None).unwrap_err(), EngineError::SingularReweighting(0));

        let bad = InferenceConfig { damping: 1.0, ..cfg };
        assert!(matches!(run(&g, &bethe(&g), &bad, None), Err(EngineError::InvalidConfig(_))));
        let other = small_loopy();
        let warm = MessageState::uniform(&other);
        assert_eq!(run(&g, &bethe(&g), &InferenceConfig::sum_product(1.0), Some(&warm)).unwrap_err(), EngineError::LayoutMismatch);
    }

    #[test]
    fn tree_marginals_are_exact() {
        let g = FactorGraph::from_tables(
            &[2, 3, 2, 2],
            vec![
                FactorDef::new(vec![0, 1], vec![0.1, 0.7, -0.4, 0.2, 0.0, 0.9]),
                FactorDef::new(vec![1, 2], vec![0.5, -0.3, 0.2, 0.1, -0.6, 0.4]),
                FactorDef::new(vec![1, 3], vec![1.0, 0.0, 0.0, 1.5, 0.3, f64::INFINITY]),
                FactorDef::new(vec![3], vec![0.2, -0.1]),
            ],
        )
        .unwrap();
        let (exact, _) = brute_force_marginals(&g, 1.0, Default::default()).unwrap();
        let (s, b) = run_ordinary_bp(&g, &InferenceConfig::sum_product(1.0)).unwrap();
        assert!(s.converged);
        assert!(max_abs_diff(&b, &exact) < 1e-8);
    }

    #[test]
    fn messages_stay_normalized_and_runs_are_deterministic() {
        let g = small_loopy();
        let (d, _) = default_convex(&g);
        let cfg = InferenceConfig { max_iterations: 7, ..InferenceConfig::sum_product(0.3) };
        let (a, _) = run(&g, &d, &cfg, None).unwrap();
        let (b, _) = run(&g, &d, &cfg, None).unwrap();
        assert!(a.is_normalized());
        assert_eq!(a, b);
        let other = InferenceConfig { schedule: Schedule::Asynchronous { seed: 9 }, ..cfg };
        let (c, _) = run(&g, &d, &other, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_points_do_not_depend_on_damping_or_schedule() {
        let g = small_loopy();
        let (d, _) = default_convex(&g);
        let base = InferenceConfig { convergence_tol: 1e-12, max_iterations: 100_000, ..InferenceConfig::sum_product(1.0) };
        let (s0, b0) = run(&g, &d, &base, None).unwrap();
        assert!(s0.converged);
        for cfg in [
            InferenceConfig { damping: 0.0, ..base.clone() },
            InferenceConfig { schedule: Schedule::Synchronous, ..base.clone() },
        ] {
            let (s, b) = run(&g, &d, &cfg, None).unwrap();
            assert!(s.converged);
            assert!(max_abs_diff(&b, &b0) < 1e-6);
        }
    }

    #[test]
    fn warm_start_from_a_fixed_point_is_immediate() {
        let g = small_loopy();
        let (t, _) = trivial_convex(&g);
        let cfg = InferenceConfig::max_product();
        let (s, b) = run(&g, &t, &cfg, None).unwrap();
        assert!(s.converged);
        let (s2, b2) = run(&g, &t, &cfg, Some(&s)).unwrap();
        assert!(s2.converged && s2.iterations_run <= 2);
        assert!(max_abs_diff(&b, &b2) < 1e-8);
    }

    #[test]
    fn single_precision_runs() {
        let g = FactorGraph::<f32>::from_tables(&[2, 2], vec![FactorDef::new(vec![0, 1], vec![0.0, 0.0, 0.0, f32::INFINITY])]).unwrap();
        let cfg = InferenceConfig { convergence_tol: 1e-6, ..InferenceConfig::sum_product(1.0f32) };
        let (s, b) = run(&g, &bethe(&g), &cfg, None).unwrap();
        assert!(s.converged);
        assert!((b.variables[0][0] - 2.0 / 3.0).abs() < 1e-5);
    }
}
