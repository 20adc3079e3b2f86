//! Weighted ground sets and the submodular value oracle.
//!
//! Every evaluation of `f` goes through a [`CountingOracle`]; its call count is the
//! unit in which update cost is measured. Marginal gains are computed against a
//! caller-cached `f(A)` so each one costs exactly one evaluation.

mod coverage;
mod instance;
mod session;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use coverage::{CoverageBuilder, CoverageFunction};
pub use instance::{load_instance, parse_instance, ElementSpec, GraphSpec, InstanceFile};
pub use self_test::{oracle_self_test, SelfTestReport, Violation, ViolationKind};
pub use session::{Checkpoint, IncrementalState, Session};

/// Dense index of an element in its [`GroundSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementId(pub u32);

impl ElementId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundElement {
    pub name: String,
    pub weight: f64,
}

/// The universe of elements with their weights, all in `[1, rho]`.
#[derive(Clone, Debug)]
pub struct GroundSet {
    elements: Vec<GroundElement>,
    by_name: HashMap<String, ElementId>,
    rho: f64,
}

impl GroundSet {
    pub fn new(rho: f64, elements: Vec<GroundElement>) -> Result<Self> {
        if !(rho >= 1.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weight ratio rho must be a finite number >= 1, got {rho}"
            )));
        }
        if elements.len() > u32::MAX as usize {
            return Err(Error::TooLarge(format!("{} elements", elements.len())));
        }
        let mut by_name = HashMap::with_capacity(elements.len());
        for (idx, el) in elements.iter().enumerate() {
            if !(el.weight >= 1.0 && el.weight <= rho) {
                return Err(Error::InvalidArgument(format!(
                    "element `{}` has weight {} outside [1, {rho}]",
                    el.name, el.weight
                )));
            }
            if by_name
                .insert(el.name.clone(), ElementId(idx as u32))
                .is_some()
            {
                return Err(Error::InvalidArgument(format!(
                    "duplicate element id `{}`",
                    el.name
                )));
            }
        }
        Ok(GroundSet {
            elements,
            by_name,
            rho,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn contains(&self, id: ElementId) -> bool {
        id.index() < self.elements.len()
    }

    /// Weight of `id`. Panics on an id from a different ground set.
    #[inline]
    pub fn weight(&self, id: ElementId) -> f64 {
        self.elements[id.index()].weight
    }

    pub fn name(&self, id: ElementId) -> &str {
        &self.elements[id.index()].name
    }

    pub fn id(&self, name: &str) -> Option<ElementId> {
        self.by_name.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<ElementId> {
        self.id(name)
            .ok_or_else(|| Error::UnknownElement(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ElementId> + '_ {
        (0..self.elements.len() as u32).map(ElementId)
    }

    pub fn elements(&self) -> &[GroundElement] {
        &self.elements
    }

    /// Sum of weights of `set`; `cost(∅) = 0`.
    pub fn cost(&self, set: &[ElementId]) -> Result<f64> {
        set.iter().try_fold(0.0, |acc, &e| {
            if self.contains(e) {
                Ok(acc + self.weight(e))
            } else {
                Err(Error::UnknownElement(e.to_string()))
            }
        })
    }
}

/// A normalized monotone submodular set function over dense element ids.
///
/// Implementations must be pure; `value` may be called concurrently. Callers
/// guarantee every id is `< domain_size()`, and sets carry no duplicates.
pub trait SetFunction: Send + Sync {
    fn domain_size(&self) -> usize;

    fn value(&self, set: &[ElementId]) -> f64;

    /// Faster state for repeated marginal queries. Without one, sessions
    /// re-evaluate the whole set per query.
    fn incremental(&self) -> Option<Box<dyn IncrementalState + '_>> {
        None
    }
}

/// Wraps a [`SetFunction`] and counts every evaluation.
pub struct CountingOracle {
    inner: Arc<dyn SetFunction>,
    calls: AtomicU64,
}

impl CountingOracle {
    pub fn new(inner: Arc<dyn SetFunction>) -> Self {
        CountingOracle {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn evaluate(&self, set: &[ElementId]) -> Result<f64> {
        let n = self.inner.domain_size();
        if let Some(bad) = set.iter().find(|e| e.index() >= n) {
            return Err(Error::UnknownElement(bad.to_string()));
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.inner.value(set))
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &Arc<dyn SetFunction> {
        &self.inner
    }

    fn record(&self, n: u64) {
        self.calls.fetch_add(n, Ordering::Relaxed);
    }
}

impl fmt::Debug for CountingOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CountingOracle")
            .field("calls", &self.calls())
            .finish_non_exhaustive()
    }
}

/// A weighted ground set paired with a counted oracle: the problem instance
/// every algorithm in this crate operates on.
#[derive(Debug)]
pub struct Objective {
    ground: Arc<GroundSet>,
    oracle: CountingOracle,
}

impl Objective {
    pub fn new(ground: GroundSet, function: Arc<dyn SetFunction>) -> Result<Self> {
        if function.domain_size() != ground.len() {
            return Err(Error::InvalidArgument(format!(
                "oracle domain has {} elements but ground set has {}",
                function.domain_size(),
                ground.len()
            )));
        }
        Ok(Objective {
            ground: Arc::new(ground),
            oracle: CountingOracle::new(function),
        })
    }

    /// Same ground set and function, with a fresh call counter. Verifiers and
    /// baselines evaluate through a fork so they do not pollute the counts of
    /// the algorithm under measurement.
    pub fn fork(&self) -> Objective {
        Objective {
            ground: Arc::clone(&self.ground),
            oracle: CountingOracle::new(Arc::clone(self.oracle.inner())),
        }
    }

    pub fn ground(&self) -> &GroundSet {
        &self.ground
    }

    pub fn calls(&self) -> u64 {
        self.oracle.calls()
    }

    #[inline]
    pub fn weight(&self, e: ElementId) -> f64 {
        self.ground.weight(e)
    }

    pub fn evaluate(&self, set: &[ElementId]) -> Result<f64> {
        self.oracle.evaluate(set)
    }

    /// Marginal-query session over `base`, given `f_base = f(base)`.
    pub fn session(&self, base: &[ElementId], f_base: f64) -> Result<Session<'_>> {
        Session::new(self, base, f_base)
    }

    pub(crate) fn function(&self) -> &dyn SetFunction {
        &**self.oracle.inner()
    }

    pub(crate) fn record_calls(&self, n: u64) {
        self.oracle.record(n);
    }

    pub fn cost(&self, set: &[ElementId]) -> Result<f64> {
        self.ground.cost(set)
    }

    /// `Δ(e|A)` given `f_a = f(A)`, together with `f(A ∪ {e})`. One oracle call.
    pub fn gain_and_value(&self, e: ElementId, a: &[ElementId], f_a: f64) -> Result<(f64, f64)> {
        if !self.ground.contains(e) {
            return Err(Error::UnknownElement(e.to_string()));
        }
        let value = if a.contains(&e) {
            self.oracle.evaluate(a)?
        } else {
            let mut with = Vec::with_capacity(a.len() + 1);
            with.extend_from_slice(a);
            with.push(e);
            self.oracle.evaluate(&with)?
        };
        let gain = value - f_a;
        if gain < -1e-9 * f_a.abs().max(1.0) {
            return Err(Error::OracleContract(format!(
                "negative marginal gain {gain} for {e}: f(A ∪ {{e}}) = {value} < f(A) = {f_a}"
            )));
        }
        Ok((gain.max(0.0), value))
    }

    /// `Δ(e|A) = f(A ∪ {e}) − f(A)`, using the cached `f_a`.
    pub fn marginal_gain(&self, e: ElementId, a: &[ElementId], f_a: f64) -> Result<f64> {
        self.gain_and_value(e, a, f_a).map(|(gain, _)| gain)
    }

    /// `d(e|A) = Δ(e|A) / w(e)`.
    pub fn marginal_density(&self, e: ElementId, a: &[ElementId], f_a: f64) -> Result<f64> {
        Ok(self.marginal_gain(e, a, f_a)? / self.weight(e))
    }

    /// Unconditional density `d(e) = f({e}) / w(e)`.
    pub fn density(&self, e: ElementId) -> Result<f64> {
        self.marginal_density(e, &[], 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_sets() -> Objective {
        CoverageFunction::builder()
            .element("v1", 1.0, ["a", "b"])
            .element("v2", 2.0, ["b", "c"])
            .build(2.0)
            .unwrap()
    }

    fn ids(obj: &Objective, names: &[&str]) -> Vec<ElementId> {
        names
            .iter()
            .map(|n| obj.ground().lookup(n).unwrap())
            .collect()
    }

    #[test]
    fn evaluate_union_count() {
        let obj = two_sets();
        assert_eq!(obj.evaluate(&ids(&obj, &["v1", "v2"])).unwrap(), 3.0);
        assert_eq!(obj.evaluate(&ids(&obj, &["v1"])).unwrap(), 2.0);
        assert_eq!(obj.evaluate(&[]).unwrap(), 0.0);
        assert_eq!(obj.calls(), 3);
    }

    #[test]
    fn evaluate_unknown_id_is_rejected_and_not_counted() {
        let obj = two_sets();
        let err = obj.evaluate(&[ElementId(7)]).unwrap_err();
        assert!(matches!(err, Error::UnknownElement(_)));
        assert_eq!(obj.calls(), 0);
        assert!(obj.ground().lookup("nope").is_err());
    }

    #[test]
    fn marginal_gain_cases() {
        let obj = two_sets();
        let [v1, v2] = [ids(&obj, &["v1"])[0], ids(&obj, &["v2"])[0]];
        assert_eq!(obj.marginal_gain(v2, &[v1], 2.0).unwrap(), 1.0);
        assert_eq!(obj.marginal_gain(v1, &[v1], 2.0).unwrap(), 0.0);
        assert_eq!(obj.marginal_gain(v1, &[], 0.0).unwrap(), 2.0);
        // exactly one evaluation per marginal, including the e ∈ A case
        assert_eq!(obj.calls(), 3);
    }

    #[test]
    fn marginal_density_cases() {
        let obj = two_sets();
        let [v1, v2] = [ids(&obj, &["v1"])[0], ids(&obj, &["v2"])[0]];
        assert_eq!(obj.marginal_density(v2, &[v1], 2.0).unwrap(), 0.5);
        assert_eq!(obj.marginal_density(v2, &[v2], 2.0).unwrap(), 0.0);
        assert_eq!(obj.marginal_density(v1, &[], 0.0).unwrap(), 2.0);
        assert_eq!(obj.density(v1).unwrap(), 2.0);
    }

    #[test]
    fn marginal_gain_detects_broken_cache() {
        let obj = two_sets();
        let v1 = ids(&obj, &["v1"])[0];
        // caller claims f({v1}) = 5, which exceeds f({v1} ∪ {v1}) = 2
        let err = obj.marginal_gain(v1, &[v1], 5.0).unwrap_err();
        assert!(matches!(err, Error::OracleContract(_)));
    }

    #[test]
    fn cost_sums_weights() {
        let obj = two_sets();
        assert_eq!(obj.cost(&ids(&obj, &["v1", "v2"])).unwrap(), 3.0);
        assert_eq!(obj.cost(&[]).unwrap(), 0.0);
        assert_eq!(obj.cost(&ids(&obj, &["v2"])).unwrap(), 2.0);
        assert!(obj.cost(&[ElementId(9)]).is_err());
    }

    #[test]
    fn ground_set_rejects_bad_weights_and_duplicates() {
        let el = |name: &str, weight| GroundElement {
            name: name.into(),
            weight,
        };
        assert!(GroundSet::new(2.0, vec![el("a", 0.5)]).is_err());
        assert!(GroundSet::new(2.0, vec![el("a", 2.5)]).is_err());
        assert!(GroundSet::new(2.0, vec![el("a", 1.0), el("a", 1.5)]).is_err());
        assert!(GroundSet::new(0.5, vec![]).is_err());
        assert!(GroundSet::new(2.0, vec![el("a", 1.0), el("b", 2.0)]).is_ok());
    }

    #[test]
    fn fork_has_its_own_counter() {
        let obj = two_sets();
        obj.evaluate(&[]).unwrap();
        let fork = obj.fork();
        fork.evaluate(&[]).unwrap();
        fork.evaluate(&[]).unwrap();
        assert_eq!(obj.calls(), 1);
        assert_eq!(fork.calls(), 2);
    }

    #[test]
    fn counting_is_exact_under_concurrency() {
        use rayon::prelude::*;
        let obj = two_sets();
        let all = obj.ground().ids().collect::<Vec<_>>();
        (0..1000).into_par_iter().for_each(|_| {
            obj.evaluate(&all).unwrap();
        });
        assert_eq!(obj.calls(), 1000);
    }
}
