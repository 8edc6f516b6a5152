//! Counting-number presets and convexity certificates.
//!
//! Every preset here returns `c_alpha = 1` for all factors so the result can be
//! fed straight to the message-passing engine. A [`ConvexityCertificate`] is a
//! nonnegative decomposition of the entropy into `(H_alpha - H_i)`, `H_alpha`
//! and `H_i` terms; finding one is a bipartite transportation problem solved by
//! exact integer max-flow on a 1e-12 grid.

use serde::Serialize;
use thiserror::Error;

use crate::flow::{FlowNetwork, INF_CAP};
use crate::model::FactorGraph;
use crate::scalar::Scalar;

/// Grid used to turn real capacities into integers before running max-flow.
pub const FLOW_GRID: f64 = 1e-12;

/// Tolerance for the two certificate identities.
pub const CERTIFICATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountingError {
    #[error("factor {factor} has arity {arity}; edge-probability counts need pairwise factors")]
    NonPairwiseFactor { factor: usize, arity: usize },
    #[error("edge probability {rho} for factor {factor} outside (0, 1]")]
    RhoOutOfRange { factor: usize, rho: f64 },
    #[error("expected {expected} edge probabilities, got {actual}")]
    RhoLength { expected: usize, actual: usize },
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("counting numbers sized ({factors}, {variables}) do not match the graph")]
    Misaligned { factors: usize, variables: usize },
}

/// Per-factor `c_alpha` and per-variable `c_i` entropy coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingNumbers<S> {
    pub c_alpha: Vec<S>,
    pub c_i: Vec<S>,
}

impl<S: Scalar> CountingNumbers<S> {
    pub fn check_aligned(&self, graph: &FactorGraph<S>) -> Result<(), CountingError> {
        if self.c_alpha.len() != graph.num_factors() || self.c_i.len() != graph.num_variables() {
            return Err(CountingError::Misaligned { factors: self.c_alpha.len(), variables: self.c_i.len() });
        }
        Ok(())
    }

    /// Multiplies every coefficient by `k`.
    pub fn scaled(&self, k: S) -> Self {
        Self {
            c_alpha: self.c_alpha.iter().map(|&c| c * k).collect(),
            c_i: self.c_i.iter().map(|&c| c * k).collect(),
        }
    }
}

/// Nonnegative witness that a counting-number assignment is provably convex.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate<S> {
    /// `c_{i,alpha}` indexed by `[factor][position in scope]`.
    pub c_i_alpha: Vec<Vec<S>>,
    pub d_alpha: Vec<S>,
    pub d_i: Vec<S>,
}

impl<S: Scalar> ConvexityCertificate<S> {
    /// Largest violation of `c_alpha = d_alpha + sum_i c_ia` and
    /// `c_i = d_i - sum_alpha c_ia`. Returns `None` if an entry is negative.
    pub fn identity_error(&self, graph: &FactorGraph<S>, counts: &CountingNumbers<S>) -> Option<f64> {
        let negative = self.d_alpha.iter().chain(&self.d_i).chain(self.c_i_alpha.iter().flatten()).any(|&v| v < S::zero());
        if negative {
            return None;
        }
        let mut worst = 0.0f64;
        let mut covered = vec![S::zero(); graph.num_variables()];
        for (a, f) in graph.factors().iter().enumerate() {
            let row: S = self.c_i_alpha[a].iter().copied().sum();
            worst = worst.max((counts.c_alpha[a] - self.d_alpha[a] - row).abs().as_f64());
            for (p, &v) in f.scope().iter().enumerate() {
                covered[v] = covered[v] + self.c_i_alpha[a][p];
            }
        }
        for (i, &cov) in covered.iter().enumerate() {
            worst = worst.max((counts.c_i[i] - self.d_i[i] + cov).abs().as_f64());
        }
        Some(worst)
    }

    /// True when entries are nonnegative and both identities hold within [`CERTIFICATE_TOL`].
    pub fn verifies(&self, graph: &FactorGraph<S>, counts: &CountingNumbers<S>) -> bool {
        self.identity_error(graph, counts).is_some_and(|e| e <= CERTIFICATE_TOL)
    }
}

/// Why [`certify_convexity`] could not produce a certificate. This never
/// proves non-convexity: the decomposition is only a sufficient condition.
#[derive(Debug, Clone, PartialEq)]
pub enum NotCertified {
    NegativeFactorCount { factor: usize },
    InsufficientFlow { required: f64, achieved: f64 },
    Misaligned,
}

/// Ordinary BP: `c_alpha = 1`, `c_i = 1 - d_i`.
pub fn bethe<S: Scalar>(graph: &FactorGraph<S>) -> CountingNumbers<S> {
    CountingNumbers {
        c_alpha: vec![S::one(); graph.num_factors()],
        c_i: (0..graph.num_variables()).map(|i| S::one() - S::lit(graph.degree(i) as f64)).collect(),
    }
}

/// Tree-reweighted counts from edge appearance probabilities.
///
/// `rho` is indexed by factor; entries of unary factors are ignored. Pairwise
/// factors get `c_alpha = scale * rho` and variables get
/// `c_i = scale * (1 - sum rho) - u_i`, where `u_i` counts unary factors on `i`.
/// Unary factors keep `c_alpha = 1`; their entropy is `H_i`, so the `-u_i`
/// term leaves the total entropy equal to the tree-reweighted one with unary
/// factors treated as node potentials.
pub fn trbp_from_edge_probs<S: Scalar>(
    graph: &FactorGraph<S>,
    rho: &[S],
    scale: S,
) -> Result<CountingNumbers<S>, CountingError> {
    if rho.len() != graph.num_factors() {
        return Err(CountingError::RhoLength { expected: graph.num_factors(), actual: rho.len() });
    }
    if !(scale > S::zero()) {
        return Err(CountingError::NonPositiveScale(scale.as_f64()));
    }
    let mut c_alpha = vec![S::one(); graph.num_factors()];
    let mut rho_sum = vec![S::zero(); graph.num_variables()];
    let mut unary = vec![0usize; graph.num_variables()];
    for (a, f) in graph.factors().iter().enumerate() {
        match f.arity() {
            1 => unary[f.scope()[0]] += 1,
            2 => {
                let r = rho[a];
                if !(r > S::zero() && r <= S::one()) {
                    return Err(CountingError::RhoOutOfRange { factor: a, rho: r.as_f64() });
                }
                c_alpha[a] = scale * r;
                for &v in f.scope() {
                    rho_sum[v] = rho_sum[v] + r;
                }
            }
            arity => return Err(CountingError::NonPairwiseFactor { factor: a, arity }),
        }
    }
    let c_i = rho_sum
        .iter()
        .zip(&unary)
        .map(|(&s, &u)| scale * (S::one() - s) - S::lit(u as f64))
        .collect();
    Ok(CountingNumbers { c_alpha, c_i })
}

/// `c_alpha = 1`, `c_i = -sum_{alpha ∋ i} 1/d_alpha`, with its canonical
/// certificate `c_ia = 1/d_alpha`, `d_alpha = d_i = 0`.
pub fn default_convex<S: Scalar>(graph: &FactorGraph<S>) -> (CountingNumbers<S>, ConvexityCertificate<S>) {
    let c_i_alpha: Vec<Vec<S>> = graph
        .factors()
        .iter()
        .map(|f| vec![S::one() / S::lit(f.arity() as f64); f.arity()])
        .collect();
    let c_i = (0..graph.num_variables())
        .map(|i| -graph.factors_of(i).iter().map(|&(a, _)| S::one() / S::lit(graph.arity(a) as f64)).sum::<S>())
        .collect();
    let counts = CountingNumbers { c_alpha: vec![S::one(); graph.num_factors()], c_i };
    let cert = ConvexityCertificate {
        c_i_alpha,
        d_alpha: vec![S::zero(); graph.num_factors()],
        d_i: vec![S::zero(); graph.num_variables()],
    };
    (counts, cert)
}

/// `c_alpha = 1`, `c_i = 0`: a plain sum of factor entropies.
pub fn trivial_convex<S: Scalar>(graph: &FactorGraph<S>) -> (CountingNumbers<S>, ConvexityCertificate<S>) {
    let counts = CountingNumbers { c_alpha: vec![S::one(); graph.num_factors()], c_i: vec![S::zero(); graph.num_variables()] };
    let cert = ConvexityCertificate {
        c_i_alpha: graph.factors().iter().map(|f| vec![S::zero(); f.arity()]).collect(),
        d_alpha: vec![S::one(); graph.num_factors()],
        d_i: vec![S::zero(); graph.num_variables()],
    };
    (counts, cert)
}

/// Named counting-number choices used by the experiment drivers and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Preset {
    /// Ordinary BP.
    Bethe,
    /// Uniform edge probability on pairwise factors, scaled to `c_alpha = 1`.
    Trbp { rho: f64 },
    DefaultConvex,
    TrivialConvex,
}

impl Preset {
    /// The three convex presets of the spin-glass study.
    pub const CONVEX: [Preset; 3] = [Preset::Trbp { rho: 0.5 }, Preset::DefaultConvex, Preset::TrivialConvex];

    pub fn name(&self) -> String {
        match self {
            Preset::Bethe => "bethe".into(),
            Preset::Trbp { rho } => format!("trbp-{rho}"),
            Preset::DefaultConvex => "default".into(),
            Preset::TrivialConvex => "trivial".into(),
        }
    }

    /// Counting numbers plus a certificate when one exists: the canonical one
    /// for the convex presets, a max-flow search otherwise.
    pub fn counts<S: Scalar>(
        &self,
        graph: &FactorGraph<S>,
    ) -> Result<(CountingNumbers<S>, Option<ConvexityCertificate<S>>), CountingError> {
        Ok(match *self {
            Preset::Bethe => {
                let c = bethe(graph);
                let cert = certify_convexity(graph, &c).ok();
                (c, cert)
            }
            Preset::Trbp { rho } => {
                let r = S::lit(rho);
                let c = trbp_from_edge_probs(graph, &vec![r; graph.num_factors()], S::one() / r)?;
                let cert = certify_convexity(graph, &c).ok();
                (c, cert)
            }
            Preset::DefaultConvex => {
                let (c, cert) = default_convex(graph);
                (c, Some(cert))
            }
            Preset::TrivialConvex => {
                let (c, cert) = trivial_convex(graph);
                (c, Some(cert))
            }
        })
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bethe" | "ordinary" => Ok(Preset::Bethe),
            "default" => Ok(Preset::DefaultConvex),
            "trivial" => Ok(Preset::TrivialConvex),
            "trbp" => Ok(Preset::Trbp { rho: 0.5 }),
            _ => s
                .strip_prefix("trbp-")
                .and_then(|r| r.parse().ok())
                .map(|rho| Preset::Trbp { rho })
                .ok_or_else(|| format!("unknown preset {s:?} (bethe, trbp[-RHO], default, trivial)")),
        }
    }
}

fn to_grid<S: Scalar>(x: S) -> i64 {
    (x.as_f64() / FLOW_GRID).round() as i64
}

/// Searches for a provable-convexity certificate via bipartite max-flow:
/// source -> variable (capacity `max(0, -c_i)`), variable -> containing factor
/// (unbounded), factor -> sink (capacity `c_alpha`).
pub fn certify_convexity<S: Scalar>(
    graph: &FactorGraph<S>,
    counts: &CountingNumbers<S>,
) -> Result<ConvexityCertificate<S>, NotCertified> {
    if counts.check_aligned(graph).is_err() {
        return Err(NotCertified::Misaligned);
    }
    if let Some(factor) = counts.c_alpha.iter().position(|&c| c < S::zero()) {
        return Err(NotCertified::NegativeFactorCount { factor });
    }
    let n = graph.num_variables();
    let m = graph.num_factors();
    let (source, sink) = (n + m, n + m + 1);
    let mut net = FlowNetwork::new(n + m + 2);
    let mut required = 0i64;
    for i in 0..n {
        let need = to_grid((-counts.c_i[i]).max(S::zero()));
        required += need;
        if need > 0 {
            net.add_arc(source, i, need);
        }
    }
    let mut arc_ids: Vec<Vec<Option<usize>>> = Vec::with_capacity(m);
    for (a, f) in graph.factors().iter().enumerate() {
        let ids = f
            .scope()
            .iter()
            .map(|&v| (counts.c_i[v] < S::zero()).then(|| net.add_arc(v, n + a, INF_CAP)))
            .collect();
        arc_ids.push(ids);
        let cap = to_grid(counts.c_alpha[a]);
        if cap > 0 {
            net.add_arc(n + a, sink, cap);
        }
    }
    let achieved = net.max_flow(source, sink);
    // each capacity is rounded to the grid independently, so a saturated
    // network can come up short by up to one unit per node
    let slack = (n + m) as i64;
    if achieved + slack < required {
        return Err(NotCertified::InsufficientFlow {
            required: required as f64 * FLOW_GRID,
            achieved: achieved as f64 * FLOW_GRID,
        });
    }
    let c_i_alpha: Vec<Vec<S>> = arc_ids
        .iter()
        .map(|row| {
            row.iter()
                .map(|id| id.map_or(S::zero(), |id| S::lit(net.flow_on(id) as f64 * FLOW_GRID)))
                .collect()
        })
        .collect();
    let d_alpha = c_i_alpha
        .iter()
        .zip(&counts.c_alpha)
        .map(|(row, &c)| (c - row.iter().copied().sum::<S>()).max(S::zero()))
        .collect();
    let mut covered = vec![S::zero(); n];
    for (a, f) in graph.factors().iter().enumerate() {
        for (p, &v) in f.scope().iter().enumerate() {
            covered[v] = covered[v] + c_i_alpha[a][p];
        }
    }
    let d_i = covered.iter().zip(&counts.c_i).map(|(&cov, &c)| (c + cov).max(S::zero())).collect();
    Ok(ConvexityCertificate { c_i_alpha, d_alpha, d_i })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FactorDef;

    fn grid(rows: usize, cols: usize) -> FactorGraph<f64> {
        let mut factors = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    factors.push(FactorDef::new(vec![i, i + 1], vec![0.0; 4]));
                }
                if r + 1 < rows {
                    factors.push(FactorDef::new(vec![i, i + cols], vec![0.0; 4]));
                }
            }
        }
        FactorGraph::from_tables(&vec![2; rows * cols], factors).unwrap()
    }

    fn neg(c: &[f64]) -> Vec<f64> {
        c.iter().map(|v| -v).collect()
    }

    #[test]
    fn bethe_grid_and_star() {
        let g = grid(3, 3);
        assert_eq!(neg(&bethe(&g).c_i), vec![1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 1.0]);
        let chain = FactorGraph::from_tables(&[2, 2], vec![FactorDef::new(vec![0, 1], vec![0.0; 4])]).unwrap();
        assert_eq!(bethe(&chain).c_i, vec![0.0, 0.0]);
        let star = FactorGraph::from_tables(
            &[2; 5],
            (1..5).map(|l| FactorDef::new(vec![0, l], vec![0.0; 4])).collect(),
        )
        .unwrap();
        assert_eq!(bethe(&star).c_i, vec![-3.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn trbp_presets() {
        let g = grid(3, 3);
        let c = trbp_from_edge_probs(&g, &vec![0.5; g.num_factors()], 2.0).unwrap();
        assert!(c.c_alpha.iter().all(|&a| a == 1.0));
        assert_eq!(neg(&c.c_i), vec![0.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 0.0]);

        let chain = FactorGraph::from_tables(
            &[2; 4],
            (0..3).map(|i| FactorDef::new(vec![i, i + 1], vec![0.0; 4])).collect(),
        )
        .unwrap();
        assert_eq!(trbp_from_edge_probs(&chain, &[1.0; 3], 1.0).unwrap(), bethe(&chain));

        let cycle = FactorGraph::from_tables(
            &[2; 4],
            (0..4).map(|i| FactorDef::new(vec![i, (i + 1) % 4], vec![0.0; 4])).collect(),
        )
        .unwrap();
        let c = trbp_from_edge_probs(&cycle, &[0.75f64; 4], 4.0 / 3.0).unwrap();
        for &a in &c.c_alpha {
            assert!((a - 1.0).abs() < 1e-15);
        }
        for &ci in &c.c_i {
            assert!((ci + 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn trbp_errors() {
        let tri = FactorGraph::from_tables(&[2; 3], vec![FactorDef::new(vec![0, 1, 2], vec![0.0; 8])]).unwrap();
        assert!(matches!(trbp_from_edge_probs(&tri, &[0.5], 1.0), Err(CountingError::NonPairwiseFactor { .. })));
        let g = grid(1, 2);
        assert!(matches!(trbp_from_edge_probs(&g, &[0.0], 1.0), Err(CountingError::RhoOutOfRange { .. })));
        assert!(matches!(trbp_from_edge_probs(&g, &[1.5], 1.0), Err(CountingError::RhoOutOfRange { .. })));
    }

    #[test]
    fn trbp_with_unary_factors_matches_node_potential_form() {
        // path 0-1 plus a unary factor on each node; rho = 1 should give Bethe
        let g = FactorGraph::from_tables(
            &[2, 2],
            vec![
                FactorDef::new(vec![0], vec![0.0; 2]),
                FactorDef::new(vec![0, 1], vec![0.0; 4]),
                FactorDef::new(vec![1], vec![0.0; 2]),
            ],
        )
        .unwrap();
        assert_eq!(trbp_from_edge_probs(&g, &[0.0, 1.0, 0.0], 1.0).unwrap(), bethe(&g));
    }

    #[test]
    fn default_and_trivial_grids() {
        let g = grid(3, 3);
        let (c, cert) = default_convex(&g);
        assert_eq!(neg(&c.c_i), vec![1.0, 1.5, 1.0, 1.5, 2.0, 1.5, 1.0, 1.5, 1.0]);
        assert_eq!(cert.identity_error(&g, &c), Some(0.0));
        let (t, tcert) = trivial_convex(&g);
        assert!(t.c_i.iter().all(|&c| c == 0.0));
        assert_eq!(tcert.identity_error(&g, &t), Some(0.0));

        let tri = FactorGraph::from_tables(&[2; 3], vec![FactorDef::new(vec![0, 1, 2], vec![0.0f64; 8])]).unwrap();
        let (c, _) = default_convex(&tri);
        for &ci in &c.c_i {
            assert!((ci + 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn certification_cases() {
        let g = grid(3, 3);
        let (c, _) = default_convex(&g);
        let cert = certify_convexity(&g, &c).unwrap();
        assert!(cert.verifies(&g, &c));

        match certify_convexity(&g, &bethe(&g)) {
            Err(NotCertified::InsufficientFlow { required, achieved }) => {
                assert!((required - 15.0).abs() < 1e-9);
                assert!(achieved <= 12.0 + 1e-9);
            }
            other => panic!("expected NotCertified, got {other:?}"),
        }

        let pair = grid(1, 2);
        let b = bethe(&pair);
        let cert = certify_convexity(&pair, &b).unwrap();
        assert!(cert.c_i_alpha.iter().flatten().all(|&v| v == 0.0));

        let mut negative = b.clone();
        negative.c_alpha[0] = -0.5;
        assert_eq!(certify_convexity(&pair, &negative), Err(NotCertified::NegativeFactorCount { factor: 0 }));
    }

    #[test]
    fn certificate_scales_with_counts() {
        let g = grid(2, 3);
        let (c, _) = default_convex(&g);
        let a = certify_convexity(&g, &c).unwrap();
        let k = 2.5;
        let scaled = c.scaled(k);
        let b = certify_convexity(&g, &scaled).unwrap();
        assert!(b.verifies(&g, &scaled));
        // both sides are saturated flows, so the totals scale exactly
        let sa: f64 = a.c_i_alpha.iter().flatten().sum();
        let sb: f64 = b.c_i_alpha.iter().flatten().sum();
        assert!((sb - k * sa).abs() < 1e-9);
    }
}
