//! Repeated marginal queries against a growing base set.
//!
//! A [`Session`] answers `f(A ∪ {e})` for the current `A` and can extend `A`.
//! Each answered query counts as one oracle call, exactly as the equivalent
//! [`Objective::gain_and_value`] would; functions that implement
//! [`SetFunction::incremental`] just answer it faster.

use super::{ElementId, Objective, SetFunction};
use crate::error::{Error, Result};

/// Evaluation state for a base set `A`. Callers never query or add an
/// element already in `A`.
pub trait IncrementalState {
    fn reset(&mut self, base: &[ElementId]);

    /// `f(A ∪ {e})`.
    fn value_with(&mut self, e: ElementId) -> f64;

    fn add(&mut self, e: ElementId);

    /// Keeps only the first `len` elements added since the last reset (base
    /// elements count as added, in order).
    fn truncate(&mut self, len: usize);
}

/// Fallback state that re-evaluates the whole set for every query.
pub(crate) struct Replay<'a> {
    function: &'a dyn SetFunction,
    set: Vec<ElementId>,
}

impl<'a> Replay<'a> {
    pub(crate) fn new(function: &'a dyn SetFunction) -> Self {
        Replay {
            function,
            set: Vec::new(),
        }
    }
}

impl IncrementalState for Replay<'_> {
    fn reset(&mut self, base: &[ElementId]) {
        self.set.clear();
        self.set.extend_from_slice(base);
    }

    fn value_with(&mut self, e: ElementId) -> f64 {
        self.set.push(e);
        let v = self.function.value(&self.set);
        self.set.pop();
        v
    }

    fn add(&mut self, e: ElementId) {
        self.set.push(e);
    }

    fn truncate(&mut self, len: usize) {
        self.set.truncate(len);
    }
}

/// A restorable point in a [`Session`].
#[derive(Clone, Copy, Debug)]
pub struct Checkpoint {
    len: usize,
    value: f64,
}

pub struct Session<'a> {
    objective: &'a Objective,
    state: Box<dyn IncrementalState + 'a>,
    members: Vec<ElementId>,
    in_base: Vec<bool>,
    value: f64,
    last: Option<(ElementId, f64)>,
    calls: u64,
}

impl<'a> Session<'a> {
    pub(crate) fn new(objective: &'a Objective, base: &[ElementId], f_base: f64) -> Result<Self> {
        let mut session = Session {
            objective,
            state: objective
                .function()
                .incremental()
                .unwrap_or_else(|| Box::new(Replay::new(objective.function()))),
            members: Vec::new(),
            in_base: vec![false; objective.ground().len()],
            value: 0.0,
            last: None,
            calls: 0,
        };
        session.reset(base, f_base)?;
        Ok(session)
    }

    /// Restarts from `base` with the caller-cached `f_base = f(base)`.
    pub fn reset(&mut self, base: &[ElementId], f_base: f64) -> Result<()> {
        for e in &self.members {
            self.in_base[e.index()] = false;
        }
        self.members.clear();
        for &e in base {
            let slot = self
                .in_base
                .get_mut(e.index())
                .ok_or_else(|| Error::UnknownElement(e.to_string()))?;
            if !*slot {
                *slot = true;
                self.members.push(e);
            }
        }
        self.state.reset(&self.members);
        self.value = f_base;
        self.last = None;
        Ok(())
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn members(&self) -> &[ElementId] {
        &self.members
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            len: self.members.len(),
            value: self.value,
        }
    }

    /// Drops every element added after `cp` was taken.
    pub fn restore(&mut self, cp: Checkpoint) {
        for e in self.members.drain(cp.len.min(self.members.len())..) {
            self.in_base[e.index()] = false;
        }
        self.state.truncate(cp.len);
        self.value = cp.value;
        self.last = None;
    }

    /// `(Δ(e|A), f(A ∪ {e}))`. One oracle call.
    pub fn gain_and_value(&mut self, e: ElementId) -> Result<(f64, f64)> {
        let Some(&present) = self.in_base.get(e.index()) else {
            return Err(Error::UnknownElement(e.to_string()));
        };
        self.calls += 1;
        let value = if present {
            self.value
        } else {
            self.state.value_with(e)
        };
        let gain = value - self.value;
        if gain < -1e-9 * self.value.abs().max(1.0) {
            return Err(Error::OracleContract(format!(
                "negative marginal gain {gain} for {e}: f(A ∪ {{e}}) = {value} < f(A) = {}",
                self.value
            )));
        }
        self.last = Some((e, value));
        Ok((gain.max(0.0), value))
    }

    /// `d(e|A)`. One oracle call.
    pub fn density(&mut self, e: ElementId) -> Result<f64> {
        Ok(self.gain_and_value(e)?.0 / self.objective.weight(e))
    }

    /// Extends `A` by `e`. Free when `e` was the last element queried.
    pub fn add(&mut self, e: ElementId) -> Result<()> {
        let value = match self.last {
            Some((last, v)) if last == e => v,
            _ => self.gain_and_value(e)?.1,
        };
        if !self.in_base[e.index()] {
            self.in_base[e.index()] = true;
            self.members.push(e);
            self.state.add(e);
        }
        self.value = value;
        self.last = None;
        Ok(())
    }
}

impl Drop for Session<'_> {
    fn drop(&mut self) {
        self.objective.record_calls(self.calls);
    }
}
