//! LP relaxation by annealing convex sum-product toward zero temperature.
//!
//! As `T -> 0` the fixed-point beliefs of a convex free energy approach an
//! optimum of the local-polytope LP. A geometric schedule with warm-started
//! messages gets there without a cold start at a tiny temperature.

use serde::Serialize;
use thiserror::Error;

use crate::beliefs::{lp_objective, marginalization_residual, BeliefSet};
use crate::counting::{ConvexityCertificate, CountingNumbers};
use crate::engine::{run, EngineError, InferenceConfig, MessageState, Semiring};
use crate::model::FactorGraph;
use crate::scalar::Scalar;

/// Default tie tolerance for classifying annealed beliefs.
///
/// Sum-product beliefs at small `T` sit within `O(T)` of an LP vertex rather
/// than on it, so the max-product tolerance is far too strict here. Integral
/// coordinates leak mass `exp(-gap/T)`, fractional ones stay near `1/2` on
/// binary problems, which leaves a wide margin either side of 0.1.
pub const ANNEAL_TIE_TOL: f64 = 0.1;

/// Sweep budget per stage attempt. Stages that converge at all do so within a
/// few hundred sweeps; the rest creep along a near-neutral direction and only
/// burn time.
pub const ANNEAL_STAGE_ITERATIONS: usize = 2_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnealError {
    #[error("annealing requires a convexity certificate")]
    NoCertificate,
    #[error("certificate does not decompose the given counting numbers")]
    CertificateMismatch,
    #[error("stage at T = {temperature:e} did not converge (last delta {delta:e}) even with heavier damping")]
    StageDiverged { temperature: f64, delta: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealSchedule<S> {
    pub t_start: S,
    pub t_end: S,
    pub ratio: S,
    /// Template for every stage; its temperature is overwritten and its
    /// convergence tolerance is scaled by `max(T, 1e-2)`.
    pub stage_config: InferenceConfig<S>,
    /// Relative tie tolerance used to classify the final beliefs.
    pub tie_tol: S,
    /// Fail on any stage that does not converge, not just the last one.
    ///
    /// Off by default: on loops at intermediate temperatures the messages can
    /// creep along a direction that barely moves the beliefs, at a rate close
    /// to one per sweep, and only the final stage's beliefs are the answer.
    pub strict_stages: bool,
    /// A final stage whose messages never settle is still accepted when its
    /// beliefs marginalize to within this residual.
    ///
    /// At `T = 1e-4` log-messages are of order `1/T`, so rounding alone keeps
    /// the message delta near `1e-8`; on frustrated cycles convergence is also
    /// sublinear. The beliefs settle long before the messages do.
    pub final_marginalization_tol: S,
}

impl<S: Scalar> Default for AnnealSchedule<S> {
    fn default() -> Self {
        Self {
            t_start: S::one(),
            t_end: S::lit(1e-4),
            ratio: S::lit(0.5),
            stage_config: InferenceConfig { max_iterations: ANNEAL_STAGE_ITERATIONS, ..InferenceConfig::default() },
            tie_tol: S::lit(ANNEAL_TIE_TOL),
            strict_stages: false,
            final_marginalization_tol: S::lit(1e-3),
        }
    }
}

impl<S: Scalar> AnnealSchedule<S> {
    fn validate(&self) -> Result<(), AnnealError> {
        if !(self.t_end > S::zero() && self.t_end < self.t_start) {
            return Err(AnnealError::InvalidSchedule("need 0 < t_end < t_start"));
        }
        if !(self.ratio > S::zero() && self.ratio < S::one()) {
            return Err(AnnealError::InvalidSchedule("ratio must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `t_start * ratio^k` while above `t_end`, then `t_end` itself.
    pub fn temperatures(&self) -> Vec<S> {
        let mut out = Vec::new();
        let mut t = self.t_start;
        while t > self.t_end {
            out.push(t);
            t = t * self.ratio;
        }
        out.push(self.t_end);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    Easy,
    Hard,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub temperature: f64,
    pub iterations: usize,
    pub objective: f64,
    pub marginalization_residual: f64,
    /// The stage needed the heavier-damping retry.
    pub retried: bool,
    pub converged: bool,
    pub final_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<S> {
    pub beliefs: BeliefSet<S>,
    pub messages: MessageState<S>,
    pub objective: S,
    pub integrality: Regime,
    pub fractional_vars: Vec<usize>,
    pub stage_trace: Vec<StageRecord>,
    /// Temperature of the stage the beliefs come from. Below `t_end` only when
    /// the last stage broke down and an earlier one was kept.
    pub temperature: S,
}

impl<S: Scalar> LpSolution<S> {
    pub fn total_iterations(&self) -> usize {
        self.stage_trace.iter().map(|s| s.iterations).sum()
    }
}

fn fractional<S: Scalar>(beliefs: &BeliefSet<S>, tie_tol: S) -> Vec<usize> {
    beliefs
        .variables
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            let max = b.iter().copied().fold(S::zero(), S::max);
            b.iter().filter(|&&v| v >= max - tie_tol * max).count() >= 2
        })
        .map(|(i, _)| i)
        .collect()
}

fn regime_of(fractional: usize, total: usize) -> Regime {
    match fractional {
        0 => Regime::Easy,
        f if f == total => Regime::Hard,
        _ => Regime::Intermediate,
    }
}

/// Anneals convex sum-product down the schedule and returns the final beliefs
/// as the LP solution.
///
/// A stage that does not converge is retried once, continuing from where it
/// stopped, with the damping gap halved (`1 - (1 - λ)/2`). If that also fails,
/// earlier stages are recorded as unconverged and still warm-start the next
/// one. A final stage that fails is kept when its beliefs marginalize within
/// `final_marginalization_tol`; otherwise the coldest stage that did is
/// returned, and only when there is none is it an error. Under
/// `strict_stages` any failed stage is an error.
pub fn solve_lp<S: Scalar>(
    graph: &FactorGraph<S>,
    counts: &CountingNumbers<S>,
    certificate: Option<&ConvexityCertificate<S>>,
    schedule: &AnnealSchedule<S>,
) -> Result<LpSolution<S>, AnnealError> {
    schedule.validate()?;
    let cert = certificate.ok_or(AnnealError::NoCertificate)?;
    if !cert.verifies(graph, counts) {
        return Err(AnnealError::CertificateMismatch);
    }
    let floor = S::lit(1e-2);
    let mut warm: Option<MessageState<S>> = None;
    let mut trace = Vec::new();
    let mut last = None;
    // coldest stage whose beliefs marginalize within tolerance
    let mut kept: Option<(S, MessageState<S>, BeliefSet<S>)> = None;
    let temps = schedule.temperatures();
    for &t in &temps {
        let mut config = schedule.stage_config.clone();
        config.semiring = Semiring::Sum;
        config.temperature = t;
        config.convergence_tol = schedule.stage_config.convergence_tol * t.max(floor);
        let mut retried = false;
        let mut result = run(graph, counts, &config, warm.as_ref())?;
        let mut iterations = result.0.iterations_run;
        if !result.0.converged {
            retried = true;
            config.damping = S::one() - (S::one() - config.damping) / S::lit(2.0);
            result = run(graph, counts, &config, Some(&result.0))?;
            iterations += result.0.iterations_run;
            if !result.0.converged && schedule.strict_stages {
                return Err(AnnealError::StageDiverged { temperature: t.as_f64(), delta: result.0.final_delta.as_f64() });
            }
        }
        let (messages, beliefs) = result;
        let residual = marginalization_residual(graph, &beliefs);
        trace.push(StageRecord {
            temperature: t.as_f64(),
            iterations,
            objective: lp_objective(graph, &beliefs).as_f64(),
            marginalization_residual: residual.as_f64(),
            retried,
            converged: messages.converged,
            final_delta: messages.final_delta.as_f64(),
        });
        if messages.converged || residual <= schedule.final_marginalization_tol {
            kept = Some((t, messages.clone(), beliefs.clone()));
        }
        warm = Some(messages.clone());
        last = Some((t, messages, beliefs));
    }
    let (t, messages, beliefs) = match last.expect("schedule has at least one stage") {
        done if done.1.converged => done,
        failed => kept.ok_or(AnnealError::StageDiverged {
            temperature: failed.0.as_f64(),
            delta: failed.1.final_delta.as_f64(),
        })?,
    };
    let fractional_vars = fractional(&beliefs, schedule.tie_tol);
    Ok(LpSolution {
        objective: lp_objective(graph, &beliefs),
        integrality: regime_of(fractional_vars.len(), graph.num_variables()),
        fractional_vars,
        beliefs,
        messages,
        stage_trace: trace,
        temperature: t,
    })
}

/// Easy when no variable is fractional, Hard when all are, Intermediate otherwise.
pub fn classify_regime<S: Scalar>(solution: &LpSolution<S>, tie_tol: S) -> Regime {
    classify_beliefs(&solution.beliefs, tie_tol)
}

/// [`classify_regime`] on bare beliefs, e.g. a max-product fixed point.
pub fn classify_beliefs<S: Scalar>(beliefs: &BeliefSet<S>, tie_tol: S) -> Regime {
    regime_of(fractional(beliefs, tie_tol).len(), beliefs.variables.len())
}

/// The LP bounds the MAP energy from below; it is tight when the LP is integral.
pub fn lp_bound_check<S: Scalar>(solution: &LpSolution<S>, oracle_map_energy: S) -> bool {
    let obj = solution.objective.as_f64();
    let map = oracle_map_energy.as_f64();
    obj <= map + 1e-6 && (solution.integrality != Regime::Easy || (obj - map).abs() <= 1e-4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beliefs::sharpen;
    use crate::counting::{bethe, default_convex, trivial_convex};
    use crate::model::FactorDef;
    use crate::oracle::brute_force_map;

    // every edge of a triangle penalizes (1, 1) by -ln a, a < 1
    fn penalized_triangle(a: f64) -> FactorGraph<f64> {
        let e = -a.ln();
        let factors = [(0, 1), (1, 2), (0, 2)].iter().map(|&(i, j)| FactorDef::new(vec![i, j], vec![0.0, 0.0, 0.0, e])).collect();
        FactorGraph::from_tables(&[2; 3], factors).unwrap()
    }

    #[test]
    fn default_schedule() {
        let s = AnnealSchedule::<f64>::default();
        let t = s.temperatures();
        assert_eq!(t.len(), 15);
        assert_eq!((t[0], t[13], t[14]), (1.0, 0.5f64.powi(13), 1e-4));
        assert!(t.windows(2).all(|w| w[1] < w[0]));

        let bad = AnnealSchedule { t_end: 2.0, ..s.clone() };
        let g = penalized_triangle(0.5);
        let (c, cert) = default_convex(&g);
        assert!(matches!(solve_lp(&g, &c, Some(&cert), &bad), Err(AnnealError::InvalidSchedule(_))));
        let bad = AnnealSchedule { ratio: 1.0, ..s.clone() };
        assert!(matches!(solve_lp(&g, &c, Some(&cert), &bad), Err(AnnealError::InvalidSchedule(_))));
        assert_eq!(solve_lp(&g, &c, None, &s).unwrap_err(), AnnealError::NoCertificate);
        let (t, _) = trivial_convex(&g);
        assert_eq!(solve_lp(&g, &t, Some(&cert), &s).unwrap_err(), AnnealError::CertificateMismatch);
    }

    #[test]
    fn tree_is_easy_and_tight() {
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
        let (c, cert) = default_convex(&g);
        let lp = solve_lp(&g, &c, Some(&cert), &AnnealSchedule::default()).unwrap();
        let (x, e) = brute_force_map(&g, Default::default()).unwrap();
        assert_eq!(lp.integrality, Regime::Easy);
        assert_eq!(classify_regime(&lp, ANNEAL_TIE_TOL), Regime::Easy);
        assert!((lp.objective - e).abs() < 1e-4);
        assert!(lp_bound_check(&lp, e));
        assert_eq!(lp.beliefs.argmax_assignment(), x.0);
        assert!(lp.stage_trace.last().unwrap().marginalization_residual < 1e-6);
        for w in lp.stage_trace[3..].windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-5);
        }
    }

    #[test]
    fn sum_product_recovers_the_lp_where_sharpening_fails() {
        let g = penalized_triangle(0.5);
        let (c, cert) = trivial_convex(&g);
        // max-product settles immediately on beliefs proportional to the potentials
        let (s, b) = run(&g, &c, &InferenceConfig::max_product(), None).unwrap();
        assert!(s.converged && s.iterations_run <= 2);
        let q = sharpen(&b, 1e-6);
        assert!((marginalization_residual(&g, &q) - 1.0 / 6.0).abs() < 1e-9);

        let lp = solve_lp(&g, &c, Some(&cert), &AnnealSchedule::default()).unwrap();
        assert!(lp.objective.abs() < 1e-4);
        assert!(marginalization_residual(&g, &lp.beliefs) < 1e-6);
        assert_eq!(lp.integrality, Regime::Easy);
        assert_eq!(lp.beliefs.argmax_assignment(), vec![0, 0, 0]);
    }

    #[test]
    fn two_node_objective_is_zero() {
        let g = FactorGraph::from_tables(&[2, 2], vec![FactorDef::new(vec![0, 1], vec![0.0, 0.0, 0.0, f64::INFINITY])]).unwrap();
        let (c, cert) = default_convex(&g);
        let lp = solve_lp(&g, &c, Some(&cert), &AnnealSchedule::default()).unwrap();
        assert_eq!(lp.objective, 0.0);
        assert_eq!(lp.beliefs.factors[0][3], 0.0);
        // bethe counts on a single edge are convex too, and exact
        let b = bethe(&g);
        let cert = crate::counting::certify_convexity(&g, &b).unwrap();
        let lp = solve_lp(&g, &b, Some(&cert), &AnnealSchedule::default()).unwrap();
        assert!((lp.beliefs.variables[0][0] - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn regime_classification() {
        let g = penalized_triangle(0.5);
        let delta = BeliefSet::delta(&g, &[0, 1, 0]);
        assert_eq!(classify_beliefs(&delta, 0.1), Regime::Easy);
        let uniform = BeliefSet::uniform(&g);
        assert_eq!(classify_beliefs(&uniform, 0.1), Regime::Hard);
        let mut mixed = delta;
        mixed.variables[1] = vec![0.5, 0.5];
        assert_eq!(classify_beliefs(&mixed, 0.1), Regime::Intermediate);
    }
}
