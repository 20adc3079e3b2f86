//! The single-threshold leveled structure.
//!
//! Level `i` holds the filtered candidates `L_i`, the extended set `L̄_i` (which also
//! buffers insertions since the last rebuild), the cumulative solution `G_i`, the
//! chosen bucket `B_i` and the ordered sample `S_i` drawn from it. Deletions are
//! recorded lazily in `D`; the emitted solution is `G_T \ D`.
//!
//! `levels[0]` carries `L_0`/`L̄_0` and the empty `G_0`; `levels[T + 1]` is the
//! empty terminal level, so `levels.len() == T + 2` at all times.

mod sample_size;
mod step;

use std::collections::BTreeSet;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ElementId, Objective};

pub use sample_size::{apply_and_revert, calc_sample_size, theory_trials};
use step::bucket_by_density;
pub use step::{
    bucketize, draw_sample, filter, scaled_power, select_largest_bucket, BucketChoice, BucketIndex,
    Buckets,
};

/// Default trial count for [`SampleMode::Practical`].
pub const DEFAULT_PRACTICAL_TRIALS: usize = 200;

/// How many simulation trials the sample-size step runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// `⌈4 ε⁻² ln(n¹²/ε)⌉` trials; the only mode with the high-probability guarantee.
    Theory,
    /// A fixed trial count.
    Practical { trials: usize },
}

impl Default for SampleMode {
    fn default() -> Self {
        SampleMode::Practical {
            trials: DEFAULT_PRACTICAL_TRIALS,
        }
    }
}

impl SampleMode {
    fn t_override(self) -> Option<usize> {
        match self {
            SampleMode::Theory => None,
            SampleMode::Practical { trials } => Some(trials),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub eps: f64,
    pub eps_del: f64,
    /// Upper bound on the number of distinct elements ever present.
    pub n_max: usize,
    pub sample_mode: SampleMode,
}

impl LevelParams {
    /// `eps_del` defaults to `eps / 20`, sampling to practical mode.
    pub fn new(eps: f64, n_max: usize) -> Result<Self> {
        let p = LevelParams {
            eps,
            eps_del: eps / 20.0,
            n_max,
            sample_mode: SampleMode::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_eps_del(mut self, eps_del: f64) -> Result<Self> {
        self.eps_del = eps_del;
        self.validate()?;
        Ok(self)
    }

    pub fn with_sample_mode(mut self, mode: SampleMode) -> Result<Self> {
        self.sample_mode = mode;
        self.validate()?;
        Ok(self)
    }

    /// `0 < ε ≤ 1/10` and `0 < ε_del < ε/16`.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 0.1) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 0.1], got {}",
                self.eps
            )));
        }
        if !(self.eps_del > 0.0 && self.eps_del < self.eps / 16.0) {
            return Err(Error::InvalidArgument(format!(
                "eps_del must lie in (0, epsilon/16) = (0, {}), got {}",
                self.eps / 16.0,
                self.eps_del
            )));
        }
        if let SampleMode::Practical { trials: 0 } = self.sample_mode {
            return Err(Error::InvalidArgument(
                "practical sample mode needs at least one trial".into(),
            ));
        }
        Ok(())
    }

    pub fn trials(&self) -> usize {
        match self.sample_mode {
            SampleMode::Theory => theory_trials(self.eps, self.n_max),
            SampleMode::Practical { trials } => trials,
        }
    }
}

/// One element accepted into `G_i`, with the marginal it contributed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Addition {
    pub element: ElementId,
    pub gain: f64,
    pub density: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Level {
    pub(crate) filtered: BTreeSet<ElementId>,
    pub(crate) extended: BTreeSet<ElementId>,
    pub(crate) solution: Vec<ElementId>,
    pub(crate) f_solution: f64,
    pub(crate) bucket: Vec<ElementId>,
    pub(crate) bucket_deleted: usize,
    pub(crate) sample: Vec<ElementId>,
    pub(crate) tau_level: f64,
    pub(crate) bucket_index: BucketIndex,
    pub(crate) additions: Vec<Addition>,
}

impl Level {
    fn fresh(filtered: BTreeSet<ElementId>) -> Self {
        Level {
            extended: filtered.clone(),
            filtered,
            ..Level::default()
        }
    }

    /// `L_i`.
    pub fn filtered(&self) -> &BTreeSet<ElementId> {
        &self.filtered
    }

    /// `L̄_i`.
    pub fn extended(&self) -> &BTreeSet<ElementId> {
        &self.extended
    }

    /// `G_i`, in order of addition.
    pub fn solution(&self) -> &[ElementId] {
        &self.solution
    }

    pub fn solution_value(&self) -> f64 {
        self.f_solution
    }

    /// `B_i`, sorted.
    pub fn bucket(&self) -> &[ElementId] {
        &self.bucket
    }

    /// `S_i`, in sampling order.
    pub fn sample(&self) -> &[ElementId] {
        &self.sample
    }

    pub fn sample_size(&self) -> usize {
        self.sample.len()
    }

    pub fn tau_level(&self) -> f64 {
        self.tau_level
    }

    pub fn bucket_index(&self) -> BucketIndex {
        self.bucket_index
    }

    /// Elements added to `G` at this level (`G_i \ G_{i−1}`), in order.
    pub fn additions(&self) -> &[Addition] {
        &self.additions
    }
}

/// The pre-sample state of a level: everything the draw of `S_i` conditions on.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenSample {
    pub level: usize,
    /// `G_{i−1}` and its value.
    pub prior: Vec<ElementId>,
    pub prior_value: f64,
    pub tau_level: f64,
    pub bucket: Vec<ElementId>,
    pub sample_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub elements: Vec<ElementId>,
    pub value: f64,
    pub cost: f64,
}

impl Solution {
    pub fn empty() -> Self {
        Solution {
            elements: Vec::new(),
            value: 0.0,
            cost: 0.0,
        }
    }
}

/// One threshold run of the dynamic algorithm.
#[derive(Clone, Debug)]
pub struct ThresholdInstance {
    objective: Arc<Objective>,
    params: LevelParams,
    tau: f64,
    pub(crate) levels: Vec<Level>,
    pub(crate) deleted: BTreeSet<ElementId>,
    rng: ChaCha8Rng,
    reconstructions: u64,
}

impl ThresholdInstance {
    /// An empty structure (`T = 0`). Call [`init`](Self::init) to load elements.
    pub fn new(
        objective: Arc<Objective>,
        params: LevelParams,
        tau: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        params.validate()?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "threshold must be positive and finite, got {tau}"
            )));
        }
        Ok(ThresholdInstance {
            objective,
            params,
            tau,
            levels: vec![Level::default(), Level::default()],
            deleted: BTreeSet::new(),
            rng,
            reconstructions: 0,
        })
    }

    pub fn objective(&self) -> &Arc<Objective> {
        &self.objective
    }

    pub fn params(&self) -> &LevelParams {
        &self.params
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `T`, the index of the last nonempty level.
    pub fn top(&self) -> usize {
        self.levels.len() - 2
    }

    /// Levels `0..=T+1`.
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// The deleted-element ledger `D`.
    pub fn deleted(&self) -> &BTreeSet<ElementId> {
        &self.deleted
    }

    /// Reconstructions triggered by insertions and deletions so far.
    pub fn reconstructions(&self) -> u64 {
        self.reconstructions
    }

    /// Whether `e` is currently live here, i.e. in `L̄_0 \ D`.
    pub fn is_live(&self, e: ElementId) -> bool {
        self.levels[0].extended.contains(&e) && !self.deleted.contains(&e)
    }

    /// `G_T`, including elements deleted since they were added.
    pub fn top_solution(&self) -> &[ElementId] {
        &self.levels[self.top()].solution
    }

    /// `f(G_T)` from the cache.
    pub fn top_value(&self) -> f64 {
        self.levels[self.top()].f_solution
    }

    /// Builds the structure from scratch over `v`.
    pub fn init<I: IntoIterator<Item = ElementId>>(&mut self, v: I) -> Result<()> {
        let all: BTreeSet<ElementId> = v.into_iter().collect();
        if let Some(bad) = all.iter().find(|e| !self.objective.ground().contains(**e)) {
            return Err(Error::UnknownElement(bad.to_string()));
        }
        let first = filter(&self.objective, &all, &[], 0.0, self.tau)?;
        self.deleted.clear();
        self.levels = vec![Level::fresh(all), Level::fresh(first)];
        self.reconstruct(1)
    }

    /// Rebuilds levels `start..` on top of the untouched levels below `start`.
    pub fn reconstruct(&mut self, start: usize) -> Result<()> {
        if start == 0 || start > self.top() + 1 {
            return Err(Error::Precondition(format!(
                "reconstruct({start}) outside 1..={}",
                self.top() + 1
            )));
        }
        self.levels.truncate(start + 1);
        let level = &mut self.levels[start];
        let survivors: BTreeSet<ElementId> =
            level.extended.difference(&self.deleted).copied().collect();
        *level = Level::fresh(survivors);

        if start == 1 {
            // Everything above level 0 is being rebuilt without D, so D only
            // matters for L̄_0 from here on; fold it in and clear it.
            let base = &mut self.levels[0];
            for e in &self.deleted {
                base.extended.remove(e);
            }
            base.filtered = base.extended.clone();
            self.deleted.clear();
        }

        let eps = self.params.eps;
        let obj = &*self.objective;
        // d(e|G_i) for e ∈ L_{i+1}, computed while filtering level i
        let mut carried: Option<Vec<(ElementId, f64)>> = None;
        let mut i = start;
        while !self.levels[i].filtered.is_empty() {
            let (g_prev, f_prev) = {
                let prev = &self.levels[i - 1];
                (prev.solution.clone(), prev.f_solution)
            };
            let mut session = obj.session(&g_prev, f_prev)?;
            let candidates = &self.levels[i].filtered;
            let densities = match carried.take() {
                Some(d) => d,
                None => candidates
                    .iter()
                    .map(|&e| Ok((e, session.density(e)?)))
                    .collect::<Result<_>>()?,
            };
            let buckets = bucket_by_density(obj, &densities, self.tau, eps)?;
            let choice = select_largest_bucket(&buckets, self.tau, eps)?;
            let m = calc_sample_size(
                obj,
                &choice.members,
                &g_prev,
                f_prev,
                choice.tau_level,
                eps,
                self.params.n_max,
                &mut self.rng,
                self.params.sample_mode.t_override(),
            )?;
            let sample = draw_sample(&choice.members, m, &mut self.rng);

            let mut solution = g_prev;
            let mut additions = Vec::new();
            for &e in &sample {
                let (gain, _) = session.gain_and_value(e)?;
                let density = gain / obj.weight(e);
                if density >= choice.tau_level {
                    session.add(e)?;
                    solution.push(e);
                    additions.push(Addition {
                        element: e,
                        gain,
                        density,
                    });
                }
            }
            let f_solution = session.value();
            let mut next = Vec::new();
            for &e in candidates {
                let d = session.density(e)?;
                if d >= self.tau {
                    next.push((e, d));
                }
            }
            drop(session);

            let level = &mut self.levels[i];
            level.bucket = choice.members;
            level.bucket_index = choice.index;
            level.tau_level = choice.tau_level;
            level.bucket_deleted = 0;
            level.sample = sample;
            level.solution = solution;
            level.f_solution = f_solution;
            level.additions = additions;
            self.levels
                .push(Level::fresh(next.iter().map(|&(e, _)| e).collect()));
            carried = Some(next);
            i += 1;
        }
        Ok(())
    }

    /// Inserts `e` into the structure.
    pub fn insert(&mut self, e: ElementId) -> Result<()> {
        if !self.objective.ground().contains(e) {
            return Err(Error::UnknownElement(e.to_string()));
        }
        if self.is_live(e) {
            return Err(Error::InvalidArgument(format!("{e} is already live")));
        }
        if self.deleted.remove(&e) {
            for level in &mut self.levels[1..] {
                if level.bucket.binary_search(&e).is_ok() {
                    level.bucket_deleted -= 1;
                }
            }
        }
        self.levels[0].extended.insert(e);

        let top = self.top();
        for i in 1..=top + 1 {
            let prev = &self.levels[i - 1];
            let d = self
                .objective
                .marginal_density(e, &prev.solution, prev.f_solution)?;
            if d < self.tau {
                break;
            }
            let level = &mut self.levels[i];
            level.extended.insert(e);
            if i == top + 1 || 2 * level.extended.len() >= 3 * level.filtered.len() {
                self.reconstructions += 1;
                self.reconstruct(i)?;
                break;
            }
        }
        Ok(())
    }

    /// Deletes the live element `e`.
    pub fn delete(&mut self, e: ElementId) -> Result<()> {
        if !self.is_live(e) {
            return Err(Error::InvalidArgument(format!("{e} is not live")));
        }
        self.deleted.insert(e);
        for level in &mut self.levels[1..] {
            if level.bucket.binary_search(&e).is_ok() {
                level.bucket_deleted += 1;
            }
        }
        let eps_del = self.params.eps_del;
        for i in 1..=self.top() {
            let level = &self.levels[i];
            if level.bucket_deleted as f64 >= eps_del * level.bucket.len() as f64 {
                self.reconstructions += 1;
                self.reconstruct(i)?;
                break;
            }
        }
        Ok(())
    }

    /// `G_T \ D` with its value (one oracle call) and cost.
    pub fn current_solution(&self) -> Result<Solution> {
        let elements: Vec<ElementId> = self
            .top_solution()
            .iter()
            .copied()
            .filter(|e| !self.deleted.contains(e))
            .collect();
        if elements.is_empty() {
            return Ok(Solution::empty());
        }
        let value = self.objective.evaluate(&elements)?;
        let cost = self.objective.cost(&elements)?;
        Ok(Solution {
            elements,
            value,
            cost,
        })
    }

    /// Checkpoint of level `level`'s pre-sample state, for `1 ≤ level ≤ T`.
    pub fn freeze_pre_sample(&self, level: usize) -> Option<FrozenSample> {
        (1..=self.top()).contains(&level).then(|| FrozenSample {
            level,
            prior: self.levels[level - 1].solution.clone(),
            prior_value: self.levels[level - 1].f_solution,
            tau_level: self.levels[level].tau_level,
            bucket: self.levels[level].bucket.clone(),
            sample_size: self.levels[level].sample.len(),
        })
    }
}
