use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::{ElementId, GroundElement, GroundSet, IncrementalState, Objective, SetFunction};
use crate::error::{Error, Result};

/// `f(S) = Σ_{u ∈ ∪_{e∈S} covers(e)} weight(u)`: weighted size of a union.
///
/// Universe items are interned to dense integers at construction.
#[derive(Clone, Debug)]
pub struct CoverageFunction {
    covers: Vec<Vec<u32>>,
    item_weights: Option<Vec<f64>>,
    items: usize,
}

thread_local! {
    static SEEN: RefCell<Vec<u64>> = const { RefCell::new(Vec::new()) };
}

impl CoverageFunction {
    /// `covers[e]` lists item indices `< items`. Duplicates within one list are ignored.
    pub fn new(
        covers: Vec<Vec<u32>>,
        items: usize,
        item_weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(w) = &item_weights {
            if w.len() != items {
                return Err(Error::InvalidArgument(format!(
                    "{} item weights for {items} items",
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "item weight {bad} is not a finite non-negative number"
                )));
            }
        }
        let mut covers = covers;
        for list in &mut covers {
            if list.iter().any(|&u| u as usize >= items) {
                return Err(Error::InvalidArgument(
                    "cover list references an item outside the universe".into(),
                ));
            }
            list.sort_unstable();
            list.dedup();
        }
        Ok(CoverageFunction {
            covers,
            item_weights,
            items,
        })
    }

    pub fn builder() -> CoverageBuilder {
        CoverageBuilder::default()
    }

    pub fn universe_size(&self) -> usize {
        self.items
    }

    pub fn covers(&self, e: ElementId) -> &[u32] {
        &self.covers[e.index()]
    }
}

impl SetFunction for CoverageFunction {
    fn domain_size(&self) -> usize {
        self.covers.len()
    }

    fn value(&self, set: &[ElementId]) -> f64 {
        SEEN.with(|seen| {
            let mut seen = seen.borrow_mut();
            let words = self.items.div_ceil(64);
            if seen.len() < words {
                seen.resize(words, 0);
            }
            let mut total = 0.0;
            let mut count = 0usize;
            for e in set {
                for &u in &self.covers[e.index()] {
                    let (w, b) = ((u / 64) as usize, u % 64);
                    if seen[w] & (1 << b) == 0 {
                        seen[w] |= 1 << b;
                        match &self.item_weights {
                            Some(iw) => total += iw[u as usize],
                            None => count += 1,
                        }
                    }
                }
            }
            for e in set {
                for &u in &self.covers[e.index()] {
                    seen[(u / 64) as usize] = 0;
                }
            }
            match self.item_weights {
                Some(_) => total,
                None => count as f64,
            }
        })
    }

    fn incremental(&self) -> Option<Box<dyn IncrementalState + '_>> {
        Some(Box::new(CoverageState {
            function: self,
            covered: vec![false; self.items],
            touched: Vec::new(),
            marks: Vec::new(),
            total: 0.0,
            count: 0,
        }))
    }
}

/// Covered-item bitmap for a base set. Items are accumulated in the same
/// order as [`CoverageFunction::value`] visits them, so values agree bit for bit.
struct CoverageState<'a> {
    function: &'a CoverageFunction,
    covered: Vec<bool>,
    touched: Vec<u32>,
    /// `(touched.len(), total, count)` before each add.
    marks: Vec<(usize, f64, usize)>,
    total: f64,
    count: usize,
}

impl IncrementalState for CoverageState<'_> {
    fn reset(&mut self, base: &[ElementId]) {
        for &u in &self.touched {
            self.covered[u as usize] = false;
        }
        self.touched.clear();
        self.marks.clear();
        self.total = 0.0;
        self.count = 0;
        for &e in base {
            self.add(e);
        }
    }

    fn value_with(&mut self, e: ElementId) -> f64 {
        let f = self.function;
        let fresh = f.covers[e.index()]
            .iter()
            .filter(|&&u| !self.covered[u as usize]);
        match &f.item_weights {
            Some(iw) => fresh.fold(self.total, |acc, &u| acc + iw[u as usize]),
            None => (self.count + fresh.count()) as f64,
        }
    }

    fn add(&mut self, e: ElementId) {
        self.marks
            .push((self.touched.len(), self.total, self.count));
        for &u in &self.function.covers[e.index()] {
            if !self.covered[u as usize] {
                self.covered[u as usize] = true;
                self.touched.push(u);
                match &self.function.item_weights {
                    Some(iw) => self.total += iw[u as usize],
                    None => self.count += 1,
                }
            }
        }
    }

    fn truncate(&mut self, len: usize) {
        if len >= self.marks.len() {
            return;
        }
        let (touched, total, count) = self.marks[len];
        for &u in &self.touched[touched..] {
            self.covered[u as usize] = false;
        }
        self.touched.truncate(touched);
        self.marks.truncate(len);
        self.total = total;
        self.count = count;
    }
}

/// Builds a coverage [`Objective`] from named elements and named items.
#[derive(Default, Debug)]
pub struct CoverageBuilder {
    elements: Vec<GroundElement>,
    covers: Vec<Vec<u32>>,
    items: HashMap<String, u32>,
    item_weights: HashMap<String, f64>,
}

impl CoverageBuilder {
    pub fn element<I, S>(mut self, name: &str, weight: f64, covers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.push(name, weight, covers);
        self
    }

    pub fn push<I, S>(&mut self, name: &str, weight: f64, covers: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let list = covers
            .into_iter()
            .map(|item| {
                let next = self.items.len() as u32;
                *self.items.entry(item.as_ref().to_string()).or_insert(next)
            })
            .collect();
        self.elements.push(GroundElement {
            name: name.to_string(),
            weight,
        });
        self.covers.push(list);
    }

    pub fn item_weight(mut self, item: &str, weight: f64) -> Self {
        self.item_weights.insert(item.to_string(), weight);
        self
    }

    pub fn build(self, rho: f64) -> Result<Objective> {
        let n_items = self.items.len();
        for name in self.item_weights.keys() {
            if !self.items.contains_key(name) {
                return Err(Error::InvalidArgument(format!(
                    "weight given for item `{name}` that no element covers"
                )));
            }
        }
        let item_weights = if self.item_weights.is_empty() {
            None
        } else {
            let mut w = vec![1.0; n_items];
            for (name, &idx) in &self.items {
                if let Some(&x) = self.item_weights.get(name) {
                    w[idx as usize] = x;
                }
            }
            Some(w)
        };
        let ground = GroundSet::new(rho, self.elements)?;
        let f = CoverageFunction::new(self.covers, n_items, item_weights)?;
        Objective::new(ground, Arc::new(f))
    }
}
