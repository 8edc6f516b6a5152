//! Experiment drivers: the spin-glass regime study and the LDPC success curve.
//!
//! Instances and trials run in parallel; results are collected in index
//! order so reports are identical for a fixed seed.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ldpc::{bsc_transmit, channel_energy, ldpc_to_graph, LdpcCode};
use super::report::median;
use super::spinglass::{generate_spin_glass, SpinGlassSpec};
use super::HarnessError;
use crate::anneal::{classify_beliefs, lp_bound_check, solve_lp, AnnealSchedule, Regime};
use crate::counting::Preset;
use crate::engine::{run, run_ordinary_bp, InferenceConfig};
use crate::extract::{extract, ExtractConfig, ExtractInput, Tier};
use crate::oracle::{brute_force_map, ml_decode_with_ties, OracleBudget};

/// Knobs shared by both drivers.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// Max-product engine settings; the asynchronous seed is offset per instance.
    pub engine: InferenceConfig<f64>,
    pub schedule: AnnealSchedule<f64>,
    pub extract: ExtractConfig<f64>,
    /// Skip annealing (LDPC curve never anneals).
    pub anneal: bool,
    pub budget: OracleBudget,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            engine: InferenceConfig::max_product(),
            schedule: AnnealSchedule::default(),
            extract: ExtractConfig::default(),
            anneal: true,
            budget: OracleBudget::default(),
        }
    }
}

impl StudyConfig {
    fn engine_for(&self, stream: u64) -> InferenceConfig<f64> {
        let mut c = self.engine.clone();
        if let crate::engine::Schedule::Asynchronous { seed } = c.schedule {
            c.schedule = crate::engine::Schedule::Asynchronous { seed: seed.wrapping_add(stream) };
        }
        c
    }

    fn extract_config(&self) -> ExtractConfig<f64> {
        ExtractConfig { convergence_tol: self.engine.convergence_tol, ..self.extract }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetOutcome {
    pub preset: String,
    pub certified_convex: bool,
    pub lp_regime: Option<Regime>,
    pub lp_objective: Option<f64>,
    pub lp_bound_ok: Option<bool>,
    pub anneal_sweeps: Option<usize>,
    pub anneal_error: Option<String>,
    pub max_converged: bool,
    pub max_sweeps: usize,
    /// Tie structure of the max-product fixed point.
    pub max_regime: Option<Regime>,
    pub tier: Tier,
    pub certified_energy: Option<f64>,
    pub matches_oracle: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinGlassRecord {
    pub instance: usize,
    pub seed: u64,
    pub oracle_energy: f64,
    pub oracle_assignment: Vec<usize>,
    /// Regime of the default-convex annealed LP solution.
    pub regime: Option<Regime>,
    pub ordinary_converged: bool,
    pub ordinary_sweeps: usize,
    pub ordinary_matches_oracle: bool,
    pub presets: Vec<PresetOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyAggregate {
    pub instances: usize,
    pub easy: usize,
    pub hard: usize,
    pub intermediate: usize,
    pub unclassified: usize,
    /// Median max-product sweeps over easy instances, keyed by preset
    /// (`bethe` is ordinary BP).
    pub median_easy_sweeps: BTreeMap<String, f64>,
    pub ordinary_easy_convergence_rate: Option<f64>,
    /// Easy instances where every convex preset certified the oracle MAP.
    pub easy_all_presets_correct: usize,
    /// Certified complete assignments whose energy differs from the oracle.
    pub soundness_violations: usize,
    pub lp_bound_violations: usize,
    /// Instances whose max-product tie structure matches the annealed regime,
    /// counted per preset.
    pub regime_agreement: BTreeMap<String, usize>,
}

impl StudyAggregate {
    pub fn from_records(records: &[SpinGlassRecord]) -> Self {
        let count = |r: Regime| records.iter().filter(|x| x.regime == Some(r)).count();
        let easy: Vec<&SpinGlassRecord> = records.iter().filter(|x| x.regime == Some(Regime::Easy)).collect();
        let mut median_easy_sweeps = BTreeMap::new();
        if let Some(m) = median(&easy.iter().map(|r| r.ordinary_sweeps).collect::<Vec<_>>()) {
            median_easy_sweeps.insert(Preset::Bethe.name(), m);
        }
        let mut regime_agreement = BTreeMap::new();
        if let Some(first) = records.first() {
            for (k, p) in first.presets.iter().enumerate() {
                let sweeps: Vec<usize> = easy.iter().map(|r| r.presets[k].max_sweeps).collect();
                if let Some(m) = median(&sweeps) {
                    median_easy_sweeps.insert(p.preset.clone(), m);
                }
                let agree = records
                    .iter()
                    .filter(|r| r.presets[k].lp_regime.is_some() && r.presets[k].lp_regime == r.presets[k].max_regime)
                    .count();
                regime_agreement.insert(p.preset.clone(), agree);
            }
        }
        Self {
            instances: records.len(),
            easy: easy.len(),
            hard: count(Regime::Hard),
            intermediate: count(Regime::Intermediate),
            unclassified: records.iter().filter(|x| x.regime.is_none()).count(),
            median_easy_sweeps,
            ordinary_easy_convergence_rate: (!easy.is_empty())
                .then(|| easy.iter().filter(|r| r.ordinary_converged).count() as f64 / easy.len() as f64),
            easy_all_presets_correct: easy
                .iter()
                .filter(|r| r.presets.iter().all(|p| p.matches_oracle == Some(true)))
                .count(),
            soundness_violations: records
                .iter()
                .flat_map(|r| &r.presets)
                .filter(|p| p.tier.is_complete() && p.matches_oracle != Some(true))
                .count(),
            lp_bound_violations: records.iter().flat_map(|r| &r.presets).filter(|p| p.lp_bound_ok == Some(false)).count(),
            regime_agreement,
        }
    }

    /// Long-format `metric,preset,value` rows for the CSV aggregate table.
    /// Study-wide metrics leave `preset` empty.
    pub fn rows(&self) -> Vec<AggregateRow> {
        let row = |metric: &str, preset: &str, value: f64| AggregateRow { metric: metric.into(), preset: preset.into(), value };
        let mut out = vec![
            row("instances", "", self.instances as f64),
            row("easy", "", self.easy as f64),
            row("hard", "", self.hard as f64),
            row("intermediate", "", self.intermediate as f64),
            row("unclassified", "", self.unclassified as f64),
            row("easy_all_presets_correct", "", self.easy_all_presets_correct as f64),
            row("soundness_violations", "", self.soundness_violations as f64),
            row("lp_bound_violations", "", self.lp_bound_violations as f64),
        ];
        if let Some(r) = self.ordinary_easy_convergence_rate {
            out.push(row("ordinary_easy_convergence_rate", "", r));
        }
        out.extend(self.median_easy_sweeps.iter().map(|(p, &m)| row("median_easy_sweeps", p, m)));
        out.extend(self.regime_agreement.iter().map(|(p, &n)| row("regime_agreement", p, n as f64)));
        out
    }

    /// Fractions of instances per regime.
    pub fn fractions(&self) -> (f64, f64, f64) {
        let n = self.instances.max(1) as f64;
        (self.easy as f64 / n, self.hard as f64 / n, self.intermediate as f64 / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub metric: String,
    pub preset: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMetadata {
    pub spin_domain: &'static str,
    pub grid: &'static str,
    pub template: SpinGlassSpec,
    pub seed: u64,
    pub presets: Vec<String>,
    pub regime_source: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport<R, A, M> {
    pub metadata: M,
    pub records: Vec<R>,
    pub aggregate: A,
}

pub type StudyReport = ExperimentReport<SpinGlassRecord, StudyAggregate, StudyMetadata>;

fn preset_outcome(
    graph: &crate::model::FactorGraph<f64>,
    preset: Preset,
    oracle_energy: f64,
    config: &StudyConfig,
    stream: u64,
) -> PresetOutcome {
    let mut out = PresetOutcome {
        preset: preset.name(),
        certified_convex: false,
        lp_regime: None,
        lp_objective: None,
        lp_bound_ok: None,
        anneal_sweeps: None,
        anneal_error: None,
        max_converged: false,
        max_sweeps: 0,
        max_regime: None,
        tier: Tier::Failed,
        certified_energy: None,
        matches_oracle: None,
        error: None,
    };
    let (counts, cert) = match preset.counts(graph) {
        Ok(c) => c,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.certified_convex = cert.is_some();
    if config.anneal {
        let mut schedule = config.schedule.clone();
        schedule.stage_config = InferenceConfig { schedule: config.engine_for(stream).schedule, ..schedule.stage_config };
        match solve_lp(graph, &counts, cert.as_ref(), &schedule) {
            Ok(lp) => {
                out.lp_regime = Some(lp.integrality);
                out.lp_objective = Some(lp.objective);
                out.lp_bound_ok = Some(lp_bound_check(&lp, oracle_energy));
                out.anneal_sweeps = Some(lp.total_iterations());
            }
            Err(e) => out.anneal_error = Some(e.to_string()),
        }
    }
    match run(graph, &counts, &config.engine_for(stream), None) {
        Ok(result) => {
            out.max_converged = result.0.converged;
            out.max_sweeps = result.0.iterations_run;
            out.max_regime = Some(classify_beliefs(&result.1, config.extract.tie_tol));
            let cert_out = extract(&ExtractInput::from_run(graph, &result, &counts, cert.as_ref()), &config.extract_config());
            out.tier = cert_out.tier;
            if let Some(x) = cert_out.complete_assignment() {
                let e = graph.total_energy(&x).expect("certified assignment is valid");
                out.certified_energy = Some(e);
                out.matches_oracle = Some(e == oracle_energy);
            }
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Runs `count` spin glasses derived from `template` with seeds `seed + k`.
pub fn run_regime_study(
    count: usize,
    template: &SpinGlassSpec,
    presets: &[Preset],
    seed: u64,
    config: &StudyConfig,
) -> Result<StudyReport, HarnessError> {
    let records = (0..count)
        .into_par_iter()
        .map(|k| -> Result<SpinGlassRecord, HarnessError> {
            let spec = SpinGlassSpec { seed: seed.wrapping_add(k as u64), ..*template };
            let graph = generate_spin_glass::<f64>(&spec)?;
            let (x_map, e_map) =
                brute_force_map(&graph, config.budget).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
            let presets: Vec<PresetOutcome> =
                presets.iter().map(|&p| preset_outcome(&graph, p, e_map, config, k as u64)).collect();
            let (ord_converged, ord_sweeps, ord_ok) = match run_ordinary_bp(&graph, &config.engine_for(k as u64)) {
                Ok((state, beliefs)) => {
                    let x = beliefs.argmax_assignment();
                    (state.converged, state.iterations_run, state.converged && graph.total_energy(&x) == Ok(e_map))
                }
                Err(_) => (false, 0, false),
            };
            let regime = presets
                .iter()
                .find(|p| p.preset == Preset::DefaultConvex.name())
                .or(presets.first())
                .and_then(|p| p.lp_regime);
            Ok(SpinGlassRecord {
                instance: k,
                seed: spec.seed,
                oracle_energy: e_map,
                oracle_assignment: x_map.0,
                regime,
                ordinary_converged: ord_converged,
                ordinary_sweeps: ord_sweeps,
                ordinary_matches_oracle: ord_ok,
                presets,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = StudyAggregate::from_records(&records);
    Ok(ExperimentReport {
        metadata: StudyMetadata {
            spin_domain: "{-1,+1}: state 0 is -1, state 1 is +1",
            grid: "non-toroidal, 4-neighbour",
            template: *template,
            seed,
            presets: presets.iter().map(Preset::name).collect(),
            regime_source: "annealed LP solution of the default convex preset",
        },
        records,
        aggregate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpcTrialRecord {
    pub p: f64,
    pub trial: usize,
    pub flips: usize,
    pub converged: bool,
    pub sweeps: usize,
    pub tier: Tier,
    /// No ties: the LP relaxation is integral.
    pub lp_integral: bool,
    /// A complete MAP certificate was produced.
    pub certified: bool,
    pub decoded_is_codeword: Option<bool>,
    pub decoded_is_transmitted: Option<bool>,
    pub decoded_channel_energy: Option<f64>,
    pub transmitted_channel_energy: f64,
    pub ml_distance: Option<usize>,
    pub ml_ties: Option<usize>,
    /// Certified word equals the ML decode (same distance, and same word when
    /// the ML decode is unique).
    pub matches_ml: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpcCurveRow {
    pub p: f64,
    pub trials: usize,
    pub lp_integral: usize,
    pub certified: usize,
    pub beyond_no_ties: usize,
    pub certified_rate: f64,
    pub lp_integral_rate: f64,
    pub ml_mismatches: usize,
    pub invalid_certified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpcMetadata {
    pub n: usize,
    pub m: usize,
    pub preset: String,
    pub seed: u64,
    pub transmitted: &'static str,
}

pub type LdpcReport = ExperimentReport<LdpcTrialRecord, Vec<LdpcCurveRow>, LdpcMetadata>;

pub fn ldpc_curve_rows(crossovers: &[f64], records: &[LdpcTrialRecord]) -> Vec<LdpcCurveRow> {
    crossovers
        .iter()
        .map(|&p| {
            let rs: Vec<&LdpcTrialRecord> = records.iter().filter(|r| r.p == p).collect();
            let n = rs.len();
            let lp = rs.iter().filter(|r| r.lp_integral).count();
            let cert = rs.iter().filter(|r| r.certified).count();
            LdpcCurveRow {
                p,
                trials: n,
                lp_integral: lp,
                certified: cert,
                beyond_no_ties: rs.iter().filter(|r| r.certified && r.tier != Tier::NoTies).count(),
                certified_rate: cert as f64 / n.max(1) as f64,
                lp_integral_rate: lp as f64 / n.max(1) as f64,
                ml_mismatches: rs.iter().filter(|r| r.matches_ml == Some(false)).count(),
                invalid_certified: rs.iter().filter(|r| r.certified && r.decoded_is_codeword != Some(true)).count(),
            }
        })
        .collect()
}

fn trial_seed(seed: u64, p_index: usize, trial: usize) -> u64 {
    seed ^ ((p_index as u64) << 40) ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Transmits the all-zeros codeword over a BSC and decodes with max-product
/// plus the extraction cascade, `trials` times per crossover probability.
pub fn run_ldpc_curve(
    code: &LdpcCode,
    crossovers: &[f64],
    trials: usize,
    preset: Preset,
    seed: u64,
    config: &StudyConfig,
) -> Result<LdpcReport, HarnessError> {
    if let Some(&p) = crossovers.iter().find(|&&p| !(p > 0.0 && p < 0.5)) {
        return Err(HarnessError::CrossoverOutOfRange(p));
    }
    let zero = vec![0u8; code.n];
    let jobs: Vec<(usize, usize)> = (0..crossovers.len()).flat_map(|k| (0..trials).map(move |t| (k, t))).collect();
    let records = jobs
        .into_par_iter()
        .map(|(k, t)| -> Result<LdpcTrialRecord, HarnessError> {
            let p = crossovers[k];
            let s = trial_seed(seed, k, t);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let received = bsc_transmit(&zero, p, &mut rng);
            let graph = ldpc_to_graph::<f64>(code, &received, p)?;
            let (counts, cert) = preset.counts(&graph).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
            let ml = ml_decode_with_ties(code, &received, config.budget).ok();
            let mut rec = LdpcTrialRecord {
                p,
                trial: t,
                flips: received.iter().filter(|&&b| b == 1).count(),
                converged: false,
                sweeps: 0,
                tier: Tier::Failed,
                lp_integral: false,
                certified: false,
                decoded_is_codeword: None,
                decoded_is_transmitted: None,
                decoded_channel_energy: None,
                transmitted_channel_energy: channel_energy(&zero, &received, p),
                ml_distance: ml.as_ref().map(|m| m.distance),
                ml_ties: ml.as_ref().map(|m| m.ties),
                matches_ml: None,
            };
            let Ok(result) = run(&graph, &counts, &config.engine_for(s), None) else { return Ok(rec) };
            rec.converged = result.0.converged;
            rec.sweeps = result.0.iterations_run;
            let out = extract(&ExtractInput::from_run(&graph, &result, &counts, cert.as_ref()), &config.extract_config());
            rec.tier = out.tier;
            rec.lp_integral = out.tier == Tier::NoTies;
            if let Some(x) = out.complete_assignment() {
                let word: Vec<u8> = x.iter().map(|&s| s as u8).collect();
                rec.certified = true;
                rec.decoded_is_codeword = Some(code.is_codeword(&word));
                rec.decoded_is_transmitted = Some(word == zero);
                rec.decoded_channel_energy = Some(channel_energy(&word, &received, p));
                rec.matches_ml = ml.as_ref().map(|m| {
                    let d = word.iter().zip(&received).filter(|(a, b)| a != b).count();
                    d == m.distance && (m.ties > 1 || word == m.codeword)
                });
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport {
        metadata: LdpcMetadata {
            n: code.n,
            m: code.m,
            preset: preset.name(),
            seed,
            transmitted: "all-zeros codeword",
        },
        aggregate: ldpc_curve_rows(crossovers, &records),
        records,
    })
}
