//! Parallel threshold runs.
//!
//! Run `i` uses `τ = (1+ε)^i`. Runs are created lazily, the first time an update
//! falls in their index range, and each element is only ever routed to the runs
//! in its own index interval. Retrieval scans the runs whose index lies in the
//! window derived from `f(V)` and returns the cheapest qualifying `G_T \ D`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{LevelParams, Solution, ThresholdInstance};
use crate::oracle::{ElementId, Objective};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Insert,
    Delete,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub level: LevelParams,
    pub seed: u64,
    /// A run qualifies when `f(G_T) ≥ (1 − slack·ε)·f(V)`.
    pub qualification_slack: f64,
}

impl PoolConfig {
    pub fn new(level: LevelParams, seed: u64) -> Self {
        PoolConfig {
            level,
            seed,
            qualification_slack: 1.0,
        }
    }
}

/// Inclusive range of run indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexInterval {
    pub lo: i64,
    pub hi: i64,
}

impl IndexInterval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, i: i64) -> bool {
        self.lo <= i && i <= self.hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }
}

/// `(1+ε)^i`, computed once per index by repeated multiplication (division for
/// negative `i`) and cached.
#[derive(Clone, Debug)]
struct ThresholdLadder {
    base: f64,
    up: Vec<f64>,
    down: Vec<f64>,
}

impl ThresholdLadder {
    fn new(base: f64) -> Self {
        ThresholdLadder {
            base,
            up: vec![1.0],
            down: vec![1.0],
        }
    }

    fn get(&mut self, i: i64) -> f64 {
        let (table, step_up) = if i >= 0 {
            (&mut self.up, true)
        } else {
            (&mut self.down, false)
        };
        let k = i.unsigned_abs() as usize;
        while table.len() <= k {
            let last = *table.last().unwrap();
            table.push(if step_up {
                last * self.base
            } else {
                last / self.base
            });
        }
        table[k]
    }

    /// Largest `i` with `(1+ε)^i ≤ x`, for `x > 0`.
    fn floor_index(&mut self, x: f64) -> i64 {
        let mut i = (x.ln() / self.base.ln()).floor() as i64;
        while self.get(i + 1) <= x {
            i += 1;
        }
        while self.get(i) > x {
            i -= 1;
        }
        i
    }

    /// Smallest `i` with `x ≤ (1+ε)^i`, for `x > 0`.
    fn ceil_index(&mut self, x: f64) -> i64 {
        let mut i = (x.ln() / self.base.ln()).ceil() as i64;
        while self.get(i - 1) >= x {
            i -= 1;
        }
        while self.get(i) < x {
            i += 1;
        }
        i
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Retrieval {
    pub elements: Vec<ElementId>,
    pub value: f64,
    pub cost: f64,
    pub chosen_index: Option<i64>,
    pub f_v: f64,
    /// `f(G_T)` of the chosen run, including its deleted elements.
    pub top_value: f64,
}

/// The family of threshold runs plus the live element set `V`.
pub struct RunPool {
    objective: Arc<Objective>,
    config: PoolConfig,
    ladder: ThresholdLadder,
    instances: BTreeMap<i64, ThresholdInstance>,
    live: BTreeSet<ElementId>,
    intervals: HashMap<ElementId, Option<IndexInterval>>,
    f_v: Option<f64>,
}

impl RunPool {
    pub fn new(objective: Arc<Objective>, config: PoolConfig) -> Result<Self> {
        config.level.validate()?;
        if !(config.qualification_slack >= 0.0) {
            return Err(Error::InvalidArgument(
                "qualification slack must be non-negative".into(),
            ));
        }
        if config.level.n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        Ok(RunPool {
            ladder: ThresholdLadder::new(1.0 + config.level.eps),
            objective,
            config,
            instances: BTreeMap::new(),
            live: BTreeSet::new(),
            intervals: HashMap::new(),
            f_v: None,
        })
    }

    pub fn objective(&self) -> &Arc<Objective> {
        &self.objective
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    /// The live set `V`.
    pub fn live(&self) -> &BTreeSet<ElementId> {
        &self.live
    }

    pub fn instances(&self) -> impl Iterator<Item = (i64, &ThresholdInstance)> {
        self.instances.iter().map(|(&i, inst)| (i, inst))
    }

    pub fn instance(&self, i: i64) -> Option<&ThresholdInstance> {
        self.instances.get(&i)
    }

    pub fn reconstructions(&self) -> u64 {
        self.instances.values().map(|i| i.reconstructions()).sum()
    }

    /// `(1+ε)^i`.
    pub fn threshold(&mut self, i: i64) -> f64 {
        self.ladder.get(i)
    }

    /// Indices `i` with `d(e)·ε/(nρ(1+ε)) ≤ (1+ε)^i ≤ d(e)`; `None` when `d(e) = 0`.
    ///
    /// The first request for an element costs one oracle call for `d(e)`.
    pub fn index_interval(&mut self, e: ElementId) -> Result<Option<IndexInterval>> {
        if let Some(iv) = self.intervals.get(&e) {
            return Ok(*iv);
        }
        let d = self.objective.density(e)?;
        let iv = if d > 0.0 {
            let eps = self.config.level.eps;
            let n = self.config.level.n_max as f64;
            let rho = self.objective.ground().rho();
            let lower = d * eps / (n * rho * (1.0 + eps));
            let iv = IndexInterval {
                lo: self.ladder.ceil_index(lower),
                hi: self.ladder.floor_index(d),
            };
            (!iv.is_empty()).then_some(iv)
        } else {
            None
        };
        self.intervals.insert(e, iv);
        Ok(iv)
    }

    /// `f(V)`, evaluated at most once between updates.
    pub fn f_v(&mut self) -> Result<f64> {
        if let Some(v) = self.f_v {
            return Ok(v);
        }
        let all: Vec<ElementId> = self.live.iter().copied().collect();
        let v = if all.is_empty() {
            0.0
        } else {
            self.objective.evaluate(&all)?
        };
        self.f_v = Some(v);
        Ok(v)
    }

    /// `[⌊log_{1+ε}(f(V)ε/(|V|ρ))⌋, ⌊log_{1+ε}(f(V)ε)⌋]`, or `None` when `V = ∅` or `f(V) = 0`.
    pub fn retrieval_interval(&mut self) -> Result<Option<IndexInterval>> {
        if self.live.is_empty() {
            return Ok(None);
        }
        let f_v = self.f_v()?;
        if !(f_v > 0.0) {
            return Ok(None);
        }
        let eps = self.config.level.eps;
        let rho = self.objective.ground().rho();
        let lo = self
            .ladder
            .floor_index(f_v * eps / (self.live.len() as f64 * rho));
        let hi = self.ladder.floor_index(f_v * eps);
        Ok(Some(IndexInterval { lo, hi }))
    }

    pub fn insert(&mut self, e: ElementId) -> Result<()> {
        self.update(UpdateKind::Insert, e)
    }

    pub fn delete(&mut self, e: ElementId) -> Result<()> {
        self.update(UpdateKind::Delete, e)
    }

    /// Applies one update to `V` and to every run in `e`'s index interval.
    pub fn update(&mut self, kind: UpdateKind, e: ElementId) -> Result<()> {
        if !self.objective.ground().contains(e) {
            return Err(Error::UnknownElement(e.to_string()));
        }
        match kind {
            UpdateKind::Insert if self.live.contains(&e) => {
                return Err(Error::InvalidArgument(format!(
                    "insert of live element `{}`",
                    self.objective.ground().name(e)
                )))
            }
            UpdateKind::Delete if !self.live.contains(&e) => {
                return Err(Error::InvalidArgument(format!(
                    "delete of non-live element `{}`",
                    self.objective.ground().name(e)
                )))
            }
            _ => {}
        }
        let interval = self.index_interval(e)?;
        match kind {
            UpdateKind::Insert => self.live.insert(e),
            UpdateKind::Delete => self.live.remove(&e),
        };
        self.f_v = None;
        let Some(iv) = interval else {
            return Ok(());
        };

        let mut fresh = Vec::new();
        if kind == UpdateKind::Insert {
            for i in iv.lo..=iv.hi {
                if !self.instances.contains_key(&i) {
                    fresh.push(i);
                }
            }
        }
        // Only elements whose interval covers a run ever reach it; a new run
        // starts from exactly those live elements.
        let mut seeds = Vec::with_capacity(fresh.len());
        for &i in &fresh {
            let members = self.members_for(i);
            let tau = self.ladder.get(i);
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(i as u64);
            let inst =
                ThresholdInstance::new(Arc::clone(&self.objective), self.config.level, tau, rng)?;
            self.instances.insert(i, inst);
            seeds.push((i, members));
        }
        let seeds: HashMap<i64, Vec<ElementId>> = seeds.into_iter().collect();

        self.instances
            .range_mut(iv.lo..=iv.hi)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(i, inst)| match seeds.get(i) {
                Some(members) => inst.init(members.iter().copied()),
                None => match kind {
                    UpdateKind::Insert => inst.insert(e),
                    UpdateKind::Delete => inst.delete(e),
                },
            })
            .collect::<Vec<Result<()>>>()
            .into_iter()
            .collect()
    }

    fn members_for(&self, i: i64) -> Vec<ElementId> {
        self.live
            .iter()
            .copied()
            .filter(|e| matches!(self.intervals.get(e), Some(Some(iv)) if iv.contains(i)))
            .collect()
    }

    /// The cheapest `G_T \ D` among runs in the retrieval window with
    /// `f(G_T) ≥ (1 − slack·ε)·f(V)`; ties go to the smaller index.
    pub fn solution_retrieval(&mut self) -> Result<Retrieval> {
        let Some(window) = self.retrieval_interval()? else {
            let f_v = self.f_v()?;
            return Ok(Retrieval {
                elements: Vec::new(),
                value: 0.0,
                cost: 0.0,
                chosen_index: None,
                f_v,
                top_value: 0.0,
            });
        };
        let f_v = self.f_v()?;
        let goal = (1.0 - self.config.qualification_slack * self.config.level.eps) * f_v;
        let mut best: Option<(i64, Vec<ElementId>, f64)> = None;
        for (&i, inst) in self.instances.range(window.lo..=window.hi) {
            if inst.top_value() < goal {
                continue;
            }
            let elements: Vec<ElementId> = inst
                .top_solution()
                .iter()
                .copied()
                .filter(|e| !inst.deleted().contains(e))
                .collect();
            let cost = self.objective.cost(&elements)?;
            if best.as_ref().is_none_or(|(_, _, c)| cost < *c) {
                best = Some((i, elements, cost));
            }
        }
        let (i, elements, cost) = best.ok_or_else(|| {
            Error::InvariantViolation(format!(
                "no run in [{}, {}] reaches f(G_T) >= {goal} (f(V) = {f_v})",
                window.lo, window.hi
            ))
        })?;
        let value = if elements.is_empty() {
            0.0
        } else {
            self.objective.evaluate(&elements)?
        };
        Ok(Retrieval {
            elements,
            value,
            cost,
            chosen_index: Some(i),
            f_v,
            top_value: self.instances[&i].top_value(),
        })
    }

    /// The current solution of run `i`, if it exists.
    pub fn instance_solution(&self, i: i64) -> Result<Option<Solution>> {
        self.instances
            .get(&i)
            .map(|inst| inst.current_solution())
            .transpose()
    }
}
