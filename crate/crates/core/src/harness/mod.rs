//! Stream replay through a [`RunPool`], with per-update metrics, optional
//! invariant checking, and a summary against the static baselines.

mod fixtures;
mod report;
mod stream;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::levels::LevelParams;
use crate::oracle::{load_instance, ElementId, Objective};
use crate::runs::{PoolConfig, RunPool};
use crate::verify;

pub use fixtures::{random_coverage, CoverageShape};
pub use report::{emit_report, read_jsonl, write_csv, write_jsonl, MetricsRecord, ReportFormat};
pub use stream::{
    default_ids, distinct_ids, format_stream, gen_stream, load_stream, parse_stream,
    resolve_stream, write_stream, StreamKind, StreamParams, UpdateOp,
};

/// Brute-force comparison in the summary is skipped above this many live elements.
pub const SUMMARY_BRUTE_FORCE_LIMIT: usize = 16;

/// How many violation messages the summary keeps verbatim.
const MAX_VIOLATION_DETAILS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub level: LevelParams,
    pub seed: u64,
    /// Run the invariant checkers on every instance after every update.
    pub check: bool,
    /// Retrieve a solution after every `retrieve_every`-th update and after the last one.
    pub retrieve_every: usize,
}

impl ExperimentConfig {
    pub fn new(level: LevelParams, seed: u64) -> Self {
        ExperimentConfig {
            level,
            seed,
            check: false,
            retrieve_every: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub updates: u64,
    pub oracle_calls: u64,
    /// `oracle_calls / updates`, 0 for an empty stream.
    pub amortized_oracle_calls: f64,
    pub retrievals: u64,
    pub worst_coverage_ratio: Option<f64>,
    pub mean_coverage_ratio: Option<f64>,
    pub reconstructions: u64,
    pub instances: usize,
    pub invariant_checks: u64,
    pub invariant_violations: u64,
    pub violation_details: Vec<String>,
    pub final_live: usize,
    pub final_cost: Option<f64>,
    pub greedy_cost: Option<f64>,
    pub cost_ratio_vs_greedy: Option<f64>,
    pub brute_force_cost: Option<f64>,
    pub cost_ratio_vs_brute_force: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub records: Vec<MetricsRecord>,
    pub summary: ExperimentSummary,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

/// Checks every instantiated run; returns the number of failures found and
/// appends their descriptions.
fn check_pool(pool: &RunPool, t: u64, details: &mut Vec<String>) -> Result<u64> {
    let runs: Vec<_> = pool.instances().collect();
    let outcomes = runs
        .par_iter()
        .map(|(i, inst)| {
            let levels = verify::check_level_invariants(inst)?;
            let chain = verify::audit_cost_chain(inst)?;
            let mut msgs: Vec<String> = levels
                .violations
                .iter()
                .map(|v| {
                    format!(
                        "t={t} run {i} level {}: {:?}: {}",
                        v.level, v.invariant, v.detail
                    )
                })
                .collect();
            msgs.extend(
                chain
                    .failures
                    .iter()
                    .map(|f| format!("t={t} run {i}: cost chain: {f}")),
            );
            Ok(msgs)
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    let mut found = 0;
    for msg in outcomes.into_iter().flatten() {
        found += 1;
        if details.len() < MAX_VIOLATION_DETAILS {
            details.push(msg);
        }
    }
    Ok(found)
}

/// Replays `ops` from `V = ∅`. The stream is validated before anything runs.
pub fn run_experiment(
    objective: Arc<Objective>,
    ops: &[UpdateOp],
    config: &ExperimentConfig,
) -> Result<Experiment> {
    config.level.validate()?;
    if config.retrieve_every == 0 {
        return Err(Error::InvalidArgument(
            "retrieve_every must be at least 1".into(),
        ));
    }
    let distinct = distinct_ids(ops);
    if distinct > config.level.n_max {
        return Err(Error::InvalidArgument(format!(
            "n_max = {} is below the stream's {distinct} distinct ids",
            config.level.n_max
        )));
    }
    let resolved = resolve_stream(objective.ground(), ops)?;
    let mut pool = RunPool::new(
        Arc::clone(&objective),
        PoolConfig::new(config.level, config.seed),
    )?;
    let mut summary = ExperimentSummary::default();
    let mut records = Vec::with_capacity(ops.len());
    let mut ratio_sum = 0.0;
    let mut last_retrieval = None;

    for (n, (op, &(kind, e))) in ops.iter().zip(&resolved).enumerate() {
        pool.update(kind, e)?;
        if config.check {
            summary.invariant_checks += 1;
            summary.invariant_violations +=
                check_pool(&pool, op.t, &mut summary.violation_details)?;
        }
        let retrieve = (n + 1) % config.retrieve_every == 0 || n + 1 == ops.len();
        let mut record = MetricsRecord {
            t: op.t,
            op: op.to_string(),
            f_v: None,
            chosen_index: None,
            solution_size: None,
            solution_cost: None,
            f_solution: None,
            coverage_ratio: None,
            oracle_calls_cumulative: 0,
            reconstructions_triggered: 0,
        };
        if retrieve {
            let r = pool.solution_retrieval()?;
            let coverage = if r.f_v > 0.0 { r.value / r.f_v } else { 1.0 };
            record.f_v = Some(r.f_v);
            record.chosen_index = r.chosen_index;
            record.solution_size = Some(r.elements.len());
            record.solution_cost = Some(r.cost);
            record.f_solution = Some(r.value);
            record.coverage_ratio = Some(coverage);
            summary.retrievals += 1;
            ratio_sum += coverage;
            summary.worst_coverage_ratio = Some(
                summary
                    .worst_coverage_ratio
                    .map_or(coverage, |w: f64| w.min(coverage)),
            );
            last_retrieval = Some(r);
        }
        record.oracle_calls_cumulative = objective.calls();
        record.reconstructions_triggered = pool.reconstructions();
        records.push(record);
    }

    summary.updates = ops.len() as u64;
    summary.oracle_calls = objective.calls();
    summary.amortized_oracle_calls = if ops.is_empty() {
        0.0
    } else {
        summary.oracle_calls as f64 / ops.len() as f64
    };
    if summary.retrievals > 0 {
        summary.mean_coverage_ratio = Some(ratio_sum / summary.retrievals as f64);
    }
    summary.reconstructions = pool.reconstructions();
    summary.instances = pool.instances().count();
    summary.final_live = pool.live().len();

    if let Some(r) = last_retrieval {
        let live: Vec<ElementId> = pool.live().iter().copied().collect();
        let fork = objective.fork();
        summary.final_cost = Some(r.cost);
        let greedy = fork.cost(&baselines::greedy_cover(&fork, &live, 1.0)?)?;
        summary.greedy_cost = Some(greedy);
        summary.cost_ratio_vs_greedy = ratio(r.cost, greedy);
        if live.len() <= SUMMARY_BRUTE_FORCE_LIMIT {
            let (_, opt) = baselines::brute_force_opt(&fork, &live, 1.0)?;
            summary.brute_force_cost = Some(opt);
            summary.cost_ratio_vs_brute_force = ratio(r.cost, opt);
        }
    }
    Ok(Experiment { records, summary })
}

/// [`run_experiment`] on an instance file and a stream file.
pub fn run_experiment_files(
    instance: impl AsRef<Path>,
    stream: impl AsRef<Path>,
    config: &ExperimentConfig,
) -> Result<Experiment> {
    let objective = Arc::new(load_instance(instance)?);
    let stream = stream.as_ref();
    let ops = load_stream(stream)?;
    resolve_stream(objective.ground(), &ops).map_err(|e| Error::parse(stream, e))?;
    run_experiment(objective, &ops, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::CoverageFunction;

    fn three_sets() -> Arc<Objective> {
        Arc::new(
            CoverageFunction::builder()
                .element("v1", 3.0, ["a", "b", "c"])
                .element("v2", 1.0, ["a", "b"])
                .element("v3", 1.0, ["c"])
                .build(3.0)
                .unwrap(),
        )
    }

    fn config(eps: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(LevelParams::new(eps, 3).unwrap(), 1);
        c.check = true;
        c
    }

    #[test]
    fn empty_stream() {
        let obj = three_sets();
        let exp = run_experiment(Arc::clone(&obj), &[], &config(0.1)).unwrap();
        assert!(exp.records.is_empty());
        assert_eq!(exp.summary.updates, 0);
        assert_eq!(exp.summary.oracle_calls, 0);
        assert_eq!(exp.summary.amortized_oracle_calls, 0.0);
    }

    #[test]
    fn three_sets_insert_only_covers() {
        let obj = three_sets();
        let ids: Vec<String> = ["v1", "v2", "v3"].map(String::from).to_vec();
        let params = StreamParams {
            ops: 3,
            window: 1,
            churn_p: 0.5,
        };
        let ops = gen_stream(StreamKind::InsertOnly, &ids, params, 2).unwrap();
        let exp = run_experiment(obj, &ops, &config(0.05)).unwrap();
        let last = exp.records.last().unwrap();
        assert!(last.coverage_ratio.unwrap() >= 0.85);
        assert_eq!(exp.summary.invariant_violations, 0);
        assert!(exp.summary.cost_ratio_vs_brute_force.is_some());
        let calls: Vec<u64> = exp
            .records
            .iter()
            .map(|r| r.oracle_calls_cumulative)
            .collect();
        assert!(calls.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn retrieval_cadence() {
        let obj = three_sets();
        let ops = parse_stream("+ v1\n+ v2\n+ v3\n- v1\n+ v1\n").unwrap();
        let mut c = config(0.1);
        c.retrieve_every = 2;
        let exp = run_experiment(obj, &ops, &c).unwrap();
        let retrieved: Vec<bool> = exp.records.iter().map(|r| r.f_v.is_some()).collect();
        assert_eq!(retrieved, [false, true, false, true, true]);
    }

    #[test]
    fn config_errors() {
        let obj = three_sets();
        let ops = parse_stream("+ v1\n+ v2\n+ v3\n").unwrap();
        let mut c = config(0.1);
        c.level.n_max = 2;
        assert!(matches!(
            run_experiment(Arc::clone(&obj), &ops, &c),
            Err(Error::InvalidArgument(_))
        ));
        let mut c = config(0.1);
        c.level.eps_del = 0.05;
        assert!(run_experiment(Arc::clone(&obj), &ops, &c).is_err());
        let bad = parse_stream("- v1").unwrap();
        assert!(run_experiment(obj, &bad, &config(0.1)).is_err());
    }

    #[test]
    fn deterministic_records() {
        let shape = CoverageShape {
            elements: 12,
            items: 18,
            max_covers: 4,
            rho: 2.0,
        };
        let obj = Arc::new(random_coverage(shape, 4).unwrap().into_objective().unwrap());
        let params = StreamParams {
            ops: 80,
            window: 1,
            churn_p: 0.4,
        };
        let ops = gen_stream(StreamKind::RandomChurn, &default_ids(12), params, 4).unwrap();
        let mut c = ExperimentConfig::new(LevelParams::new(0.1, 12).unwrap(), 9);
        c.check = true;
        let run = || {
            let mut buf = Vec::new();
            let obj = Arc::new(obj.fork());
            let exp = run_experiment(obj, &ops, &c).unwrap();
            assert_eq!(
                exp.summary.invariant_violations, 0,
                "{:?}",
                exp.summary.violation_details
            );
            write_jsonl(&exp.records, &mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }
}
