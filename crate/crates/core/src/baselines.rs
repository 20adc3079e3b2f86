//! Reference solvers: density greedy, exhaustive search, and a one-pass
//! threshold cover. Used as yardsticks and as independent correctness oracles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::oracle::{ElementId, Objective};

/// Largest ground set [`brute_force_opt`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 22;

fn reaches(value: f64, goal: f64) -> bool {
    value >= goal - 1e-9 * goal.abs().max(1.0)
}

fn sorted_unique(v: &[ElementId]) -> Vec<ElementId> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn check_fraction(target_fraction: f64) -> Result<()> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target fraction must lie in (0, 1], got {target_fraction}"
        )));
    }
    Ok(())
}

/// Heap entry ordered by density, then by smaller id.
#[derive(Debug)]
struct Candidate {
    density: f64,
    element: ElementId,
    round: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.density
            .total_cmp(&other.density)
            .then_with(|| other.element.cmp(&self.element))
    }
}

/// Adds `argmax_e d(e|S)` (ties to the smaller id) until `f(S) ≥ target·f(V)`.
///
/// Lazy evaluation: stale densities are upper bounds by submodularity, so an
/// entry refreshed in the current round that still tops the heap is the argmax.
pub fn greedy_cover(
    obj: &Objective,
    v: &[ElementId],
    target_fraction: f64,
) -> Result<Vec<ElementId>> {
    check_fraction(target_fraction)?;
    let v = sorted_unique(v);
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let goal = target_fraction * obj.evaluate(&v)?;
    if reaches(0.0, goal) {
        return Ok(Vec::new());
    }
    let mut session = obj.session(&[], 0.0)?;
    let mut heap = BinaryHeap::with_capacity(v.len());
    for &e in &v {
        heap.push(Candidate {
            density: session.density(e)?,
            element: e,
            round: 0,
        });
    }
    let mut round = 0;
    while let Some(top) = heap.pop() {
        if top.density <= 0.0 {
            break;
        }
        if top.round == round {
            session.add(top.element)?;
            round += 1;
            if reaches(session.value(), goal) {
                return Ok(session.members().to_vec());
            }
        } else {
            heap.push(Candidate {
                density: session.density(top.element)?,
                element: top.element,
                round,
            });
        }
    }
    Err(Error::InvariantViolation(format!(
        "greedy stalled at f(S) = {} below goal {goal}",
        session.value()
    )))
}

/// Exact minimum-cost `S ⊆ V` with `f(S) ≥ target·f(V)`, by enumeration.
///
/// Equal costs resolve to the lexicographically smallest sorted id list.
pub fn brute_force_opt(
    obj: &Objective,
    v: &[ElementId],
    target_fraction: f64,
) -> Result<(Vec<ElementId>, f64)> {
    check_fraction(target_fraction)?;
    let v = sorted_unique(v);
    if v.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "brute force is limited to {BRUTE_FORCE_LIMIT} elements, got {}",
            v.len()
        )));
    }
    if v.is_empty() {
        return Ok((Vec::new(), 0.0));
    }
    let goal = target_fraction * obj.evaluate(&v)?;
    let weights: Vec<f64> = v.iter().map(|&e| obj.weight(e)).collect();
    let mut best: Option<(Vec<ElementId>, f64)> = None;
    let mut subset = Vec::with_capacity(v.len());
    for mask in 0u32..(1u32 << v.len()) {
        let cost: f64 = (0..v.len())
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| weights[b])
            .sum();
        if let Some((_, c)) = &best {
            if cost > *c {
                continue;
            }
        }
        subset.clear();
        subset.extend((0..v.len()).filter(|b| mask & (1 << b) != 0).map(|b| v[b]));
        let covered =
            subset.is_empty() && reaches(0.0, goal) || reaches(obj.evaluate(&subset)?, goal);
        if !covered {
            continue;
        }
        let better = match &best {
            None => true,
            Some((s, c)) => cost < *c || (cost == *c && subset < *s),
        };
        if better {
            best = Some((subset.clone(), cost));
        }
    }
    best.ok_or_else(|| Error::InvariantViolation("no subset reaches the goal".into()))
}

/// One pass in id order keeping `e` iff `d(e|S) ≥ τ` and `Δ(e|S) > 0`.
pub fn static_threshold_cover(
    obj: &Objective,
    v: &[ElementId],
    tau: f64,
) -> Result<Vec<ElementId>> {
    let mut session = obj.session(&[], 0.0)?;
    for e in sorted_unique(v) {
        let (gain, _) = session.gain_and_value(e)?;
        if gain > 0.0 && gain / obj.weight(e) >= tau {
            session.add(e)?;
        }
    }
    Ok(session.members().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::CoverageFunction;

    fn three_sets() -> Objective {
        CoverageFunction::builder()
            .element("v1", 3.0, ["a", "b", "c"])
            .element("v2", 1.0, ["a", "b"])
            .element("v3", 1.0, ["c"])
            .build(3.0)
            .unwrap()
    }

    fn names(obj: &Objective, s: &[ElementId]) -> Vec<String> {
        s.iter()
            .map(|&e| obj.ground().name(e).to_string())
            .collect()
    }

    #[test]
    fn greedy_three_sets() {
        let obj = three_sets();
        let all: Vec<_> = obj.ground().ids().collect();
        let s = greedy_cover(&obj, &all, 1.0).unwrap();
        assert_eq!(names(&obj, &s), ["v2", "v3"]);
        assert_eq!(obj.cost(&s).unwrap(), 2.0);
    }

    #[test]
    fn greedy_degenerate_inputs() {
        let obj = CoverageFunction::builder()
            .element("z", 1.0, Vec::<String>::new())
            .element("x", 2.0, ["p"])
            .build(2.0)
            .unwrap();
        assert!(greedy_cover(&obj, &[ElementId(0)], 0.5).unwrap().is_empty());
        assert_eq!(
            greedy_cover(&obj, &[ElementId(1)], 1.0).unwrap(),
            [ElementId(1)]
        );
        assert!(greedy_cover(&obj, &[], 1.0).unwrap().is_empty());
        assert!(greedy_cover(&obj, &[ElementId(1)], 0.0).is_err());
    }

    #[test]
    fn brute_force_three_sets() {
        let obj = three_sets();
        let all: Vec<_> = obj.ground().ids().collect();
        let (s, cost) = brute_force_opt(&obj, &all, 1.0).unwrap();
        assert_eq!(names(&obj, &s), ["v2", "v3"]);
        assert_eq!(cost, 2.0);
        assert_eq!(brute_force_opt(&obj, &[], 1.0).unwrap(), (vec![], 0.0));
    }

    #[test]
    fn brute_force_disjoint_needs_everything() {
        let mut b = CoverageFunction::builder();
        for i in 0..6 {
            b.push(&format!("v{i}"), 1.0, [format!("x{i}")]);
        }
        let obj = b.build(1.0).unwrap();
        let all: Vec<_> = obj.ground().ids().collect();
        assert_eq!(
            brute_force_opt(&obj, &all, 1.0).unwrap(),
            (all.clone(), 6.0)
        );
    }

    #[test]
    fn brute_force_tie_break_is_lexicographic() {
        let obj = CoverageFunction::builder()
            .element("a", 1.0, ["x"])
            .element("b", 1.0, ["x"])
            .build(1.0)
            .unwrap();
        let all: Vec<_> = obj.ground().ids().collect();
        assert_eq!(brute_force_opt(&obj, &all, 1.0).unwrap().0, [ElementId(0)]);
    }

    #[test]
    fn brute_force_refuses_large_input() {
        let mut b = CoverageFunction::builder();
        for i in 0..23 {
            b.push(&format!("v{i}"), 1.0, [format!("x{i}")]);
        }
        let obj = b.build(1.0).unwrap();
        let all: Vec<_> = obj.ground().ids().collect();
        assert!(matches!(
            brute_force_opt(&obj, &all, 1.0),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn static_threshold_cases() {
        let obj = three_sets();
        let all: Vec<_> = obj.ground().ids().collect();
        // v1 density 1 passes, then v2 and v3 add nothing
        let s = static_threshold_cover(&obj, &all, 1.0).unwrap();
        assert_eq!(names(&obj, &s), ["v1"]);
        assert_eq!(obj.cost(&s).unwrap(), 3.0);
        assert_eq!(
            static_threshold_cover(&obj, &all, 0.0).unwrap(),
            [ElementId(0)]
        );
        assert!(static_threshold_cover(&obj, &all, 2.5).unwrap().is_empty());
    }
}
