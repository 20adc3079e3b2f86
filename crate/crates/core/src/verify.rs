//! Executable checks of the level invariants, the cost chain, and the
//! statistical properties of the sampling step.
//!
//! All evaluations here run through a fork of the instance's objective so that
//! verification never shows up in the measured oracle-call counts.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levels::{self, FrozenSample, ThresholdInstance};
use crate::oracle::{ElementId, Objective};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    Filter,
    Subset,
    Deviation,
    Stopping,
    /// Internal consistency of a level: `S ⊆ B ⊆ L`, `G_{i−1} ⊆ G_i`, cached values.
    Structure,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantViolation {
    pub invariant: Invariant,
    pub level: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct InvariantReport {
    pub violations: Vec<InvariantViolation>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, invariant: Invariant, level: usize, detail: impl Into<String>) {
        self.violations.push(InvariantViolation {
            invariant,
            level,
            detail: detail.into(),
        });
    }
}

fn hat(inst: &ThresholdInstance, i: usize) -> BTreeSet<ElementId> {
    inst.levels()[i]
        .extended()
        .difference(inst.deleted())
        .copied()
        .collect()
}

/// Recomputes every level invariant from scratch.
pub fn check_level_invariants(inst: &ThresholdInstance) -> Result<InvariantReport> {
    let obj = inst.objective().fork();
    let mut report = InvariantReport::default();
    let levels = inst.levels();
    let top = inst.top();
    let tau = inst.tau();
    let eps_del = inst.params().eps_del;

    if levels.len() != top + 2 {
        report.push(
            Invariant::Structure,
            0,
            format!("{} levels stored for T = {top}", levels.len()),
        );
        return Ok(report);
    }

    let hats: Vec<BTreeSet<ElementId>> = (0..=top + 1).map(|i| hat(inst, i)).collect();
    for i in 1..=top + 1 {
        let prev = &levels[i - 1];
        let mut session = obj.session(prev.solution(), prev.solution_value())?;
        let mut expected = BTreeSet::new();
        for &e in &hats[i - 1] {
            let (gain, _) = session.gain_and_value(e)?;
            if gain / obj.weight(e) >= tau {
                expected.insert(e);
            }
        }
        let actual = &hats[i];
        if expected != *actual {
            let missing: Vec<_> = expected.difference(actual).collect();
            let extra: Vec<_> = actual.difference(&expected).collect();
            report.push(
                Invariant::Filter,
                i,
                format!("L̂ differs from Filter(L̂_prev): missing {missing:?}, extra {extra:?}"),
            );
        }
        if !levels[i].extended().is_subset(levels[i - 1].extended()) {
            report.push(Invariant::Subset, i, "L̄_i is not contained in L̄_{i-1}");
        }
    }

    for (i, level) in levels.iter().enumerate().take(top + 1).skip(1) {
        let deleted_in_bucket = level
            .bucket()
            .iter()
            .filter(|e| inst.deleted().contains(e))
            .count();
        if deleted_in_bucket as f64 > eps_del * level.bucket().len() as f64 {
            report.push(
                Invariant::Deviation,
                i,
                format!(
                    "|B ∩ D| = {deleted_in_bucket} exceeds {eps_del} · |B| = {}",
                    level.bucket().len()
                ),
            );
        }
        if 2 * level.extended().len() > 3 * level.filtered().len() {
            report.push(
                Invariant::Deviation,
                i,
                format!(
                    "|L̄| = {} exceeds 3/2 · |L| = {}",
                    level.extended().len(),
                    level.filtered().len()
                ),
            );
        }
        if level.filtered().is_empty() || level.extended().is_empty() || hats[i].is_empty() {
            report.push(Invariant::Stopping, i, "level below T has an empty set");
        }
        check_structure(&obj, inst, i, &mut report)?;
    }

    let last = &levels[top + 1];
    if !last.filtered().is_empty() || !last.extended().is_empty() || !hats[top + 1].is_empty() {
        report.push(Invariant::Stopping, top + 1, "level T+1 is not empty");
    }
    Ok(report)
}

fn check_structure(
    obj: &Objective,
    inst: &ThresholdInstance,
    i: usize,
    report: &mut InvariantReport,
) -> Result<()> {
    let levels = inst.levels();
    let (prev, level) = (&levels[i - 1], &levels[i]);
    if !level.bucket().iter().all(|e| level.filtered().contains(e)) {
        report.push(Invariant::Structure, i, "B ⊄ L");
    }
    if !level
        .sample()
        .iter()
        .all(|e| level.bucket().binary_search(e).is_ok())
    {
        report.push(Invariant::Structure, i, "S ⊄ B");
    }
    let distinct: BTreeSet<_> = level.sample().iter().collect();
    if distinct.len() != level.sample().len() {
        report.push(Invariant::Structure, i, "S has repeated elements");
    }
    let g = level.solution();
    let added: Vec<ElementId> = level.additions().iter().map(|a| a.element).collect();
    if g.len() != prev.solution().len() + added.len()
        || g[..prev.solution().len()] != *prev.solution()
        || g[prev.solution().len()..] != added[..]
    {
        report.push(
            Invariant::Structure,
            i,
            "G_i is not G_{i-1} followed by this level's additions",
        );
    }
    if !added.iter().all(|e| level.sample().contains(e)) {
        report.push(Invariant::Structure, i, "an addition was not sampled");
    }
    if !(level.tau_level() >= inst.tau()) {
        report.push(Invariant::Structure, i, "τ_i < τ");
    }
    let fresh = obj.evaluate(g)?;
    if (fresh - level.solution_value()).abs() > 1e-9 * fresh.abs().max(1.0) {
        report.push(
            Invariant::Structure,
            i,
            format!(
                "cached f(G) = {} but f(G) = {fresh}",
                level.solution_value()
            ),
        );
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct CostChainReport {
    pub passed: bool,
    pub cost: f64,
    pub bound: f64,
    pub failures: Vec<String>,
}

/// Every logged addition cleared its level threshold `τ_i ≥ τ`, and
/// `Σ_{e∈G_T} w(e) ≤ f(G_T)/τ`.
pub fn audit_cost_chain(inst: &ThresholdInstance) -> Result<CostChainReport> {
    let obj = inst.objective().fork();
    let mut failures = Vec::new();
    for (i, level) in inst
        .levels()
        .iter()
        .enumerate()
        .take(inst.top() + 1)
        .skip(1)
    {
        if !(level.tau_level() >= inst.tau()) {
            failures.push(format!(
                "level {i}: τ_i = {} below τ = {}",
                level.tau_level(),
                inst.tau()
            ));
        }
        for a in level.additions() {
            if !(a.density >= level.tau_level()) {
                failures.push(format!(
                    "level {i}: {} added with density {} below τ_i = {}",
                    a.element,
                    a.density,
                    level.tau_level()
                ));
            }
        }
    }
    let g = inst.top_solution();
    let cost = obj.cost(g)?;
    let f_g = if g.is_empty() { 0.0 } else { obj.evaluate(g)? };
    let bound = f_g / inst.tau();
    if cost > bound + 1e-9 {
        failures.push(format!("cost(G_T) = {cost} exceeds f(G_T)/τ = {bound}"));
    }
    Ok(CostChainReport {
        passed: failures.is_empty(),
        cost,
        bound,
        failures,
    })
}

/// Monte-Carlo estimate of `E[X(r)]`, `r = 1..=|L'|+1`, for the sequential
/// threshold pass over a uniformly random order of `l`.
///
/// Implemented independently of the sampling routine used by the structure.
pub fn estimate_expected_x<R: Rng + ?Sized>(
    obj: &Objective,
    l: &[ElementId],
    g: &[ElementId],
    tau: f64,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if trials < 100 {
        return Err(Error::InvalidArgument(format!(
            "at least 100 trials required, got {trials}"
        )));
    }
    let obj = obj.fork();
    let f_g = if g.is_empty() { 0.0 } else { obj.evaluate(g)? };
    let mut hits = vec![0u64; l.len() + 1];
    let mut order = l.to_vec();
    let mut current = Vec::with_capacity(g.len() + l.len());
    for _ in 0..trials {
        order.shuffle(rng);
        current.clear();
        current.extend_from_slice(g);
        let mut f_current = f_g;
        for (r, &e) in order.iter().enumerate() {
            current.push(e);
            let f_with = obj.evaluate(&current)?;
            if (f_with - f_current) / obj.weight(e) >= tau {
                hits[r] += 1;
                f_current = f_with;
            } else {
                current.pop();
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / trials as f64).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformityReport {
    pub repeats: usize,
    pub expected: f64,
    /// `4·√(p(1−p)/R)` around `p = m/|B|`.
    pub band: f64,
    pub frequencies: Vec<(ElementId, f64)>,
    pub chi_square: f64,
    pub passed: bool,
}

/// Redraws the sample of a frozen pre-sample state `repeats` times and checks
/// every element's inclusion frequency against `m/|B|` at four standard deviations.
pub fn uniformity_test(
    frozen: &FrozenSample,
    repeats: usize,
    seed: u64,
) -> Result<UniformityReport> {
    if repeats < 500 {
        return Err(Error::InvalidArgument(format!(
            "at least 500 repeats required, got {repeats}"
        )));
    }
    if frozen.bucket.is_empty() || frozen.sample_size > frozen.bucket.len() {
        return Err(Error::InvalidArgument(
            "frozen state needs a nonempty bucket and m ≤ |B|".into(),
        ));
    }
    let size = frozen.bucket.len();
    let mut counts = vec![0u64; size];
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        for e in levels::draw_sample(&frozen.bucket, frozen.sample_size, &mut rng) {
            let pos = frozen.bucket.binary_search(&e).map_err(|_| {
                Error::InvariantViolation(format!("sampled {e} outside the bucket"))
            })?;
            counts[pos] += 1;
        }
    }
    let p = frozen.sample_size as f64 / size as f64;
    let band = 4.0 * (p * (1.0 - p) / repeats as f64).sqrt();
    let expected_count = p * repeats as f64;
    let mut chi_square = 0.0;
    let mut passed = true;
    let frequencies = frozen
        .bucket
        .iter()
        .zip(&counts)
        .map(|(&e, &c)| {
            let freq = c as f64 / repeats as f64;
            if (freq - p).abs() > band + 1e-12 {
                passed = false;
            }
            if expected_count > 0.0 {
                chi_square += (c as f64 - expected_count).powi(2) / expected_count;
            }
            (e, freq)
        })
        .collect();
    Ok(UniformityReport {
        repeats,
        expected: p,
        band,
        frequencies,
        chi_square,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::{Addition, LevelParams};
    use crate::oracle::CoverageFunction;
    use std::sync::Arc;

    fn random_instance(seed: u64) -> ThresholdInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = CoverageFunction::builder();
        for i in 0..20 {
            let k = rng.gen_range(1..5);
            let items: Vec<String> = (0..k).map(|_| rng.gen_range(0..25).to_string()).collect();
            b.push(&format!("v{i}"), rng.gen_range(1.0..3.0), items);
        }
        let obj = Arc::new(b.build(3.0).unwrap());
        let params = LevelParams::new(0.1, 20).unwrap();
        let mut inst =
            ThresholdInstance::new(obj, params, 0.3, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        inst.init((0..20).map(ElementId)).unwrap();
        inst
    }

    #[test]
    fn fresh_instance_passes() {
        for seed in 0..5 {
            let inst = random_instance(seed);
            assert!(inst.top() >= 1);
            let report = check_level_invariants(&inst).unwrap();
            assert!(report.passed(), "{:?}", report.violations);
            assert!(audit_cost_chain(&inst).unwrap().passed);
        }
    }

    #[test]
    fn checks_do_not_count_against_the_instance() {
        let inst = random_instance(1);
        let before = inst.objective().calls();
        check_level_invariants(&inst).unwrap();
        audit_cost_chain(&inst).unwrap();
        assert_eq!(inst.objective().calls(), before);
    }

    #[test]
    fn subset_corruption_is_reported() {
        let mut inst = (2..40)
            .map(random_instance)
            .find(|inst| inst.top() >= 2)
            .expect("some seed yields two levels");
        let shared = *inst.levels[2].extended.iter().next().unwrap();
        inst.levels[1].extended.remove(&shared);
        let report = check_level_invariants(&inst).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| v.invariant == Invariant::Subset && v.level == 2));
    }

    #[test]
    fn empty_instance_passes_vacuously() {
        let obj = Arc::new(
            CoverageFunction::builder()
                .element("a", 1.0, ["x"])
                .build(1.0)
                .unwrap(),
        );
        let params = LevelParams::new(0.1, 1).unwrap();
        let mut inst =
            ThresholdInstance::new(obj, params, 5.0, ChaCha8Rng::seed_from_u64(0)).unwrap();
        inst.init([ElementId(0)]).unwrap();
        assert_eq!(inst.top(), 0);
        assert!(check_level_invariants(&inst).unwrap().passed());
        let chain = audit_cost_chain(&inst).unwrap();
        assert!(chain.passed);
        assert_eq!((chain.cost, chain.bound), (0.0, 0.0));
    }

    #[test]
    fn deviation_and_stopping_corruption() {
        let mut inst = random_instance(3);
        let top = inst.top();
        inst.levels[top + 1].filtered.insert(ElementId(0));
        let b = inst.levels[1].bucket[0];
        inst.deleted.insert(b);
        let report = check_level_invariants(&inst).unwrap();
        let kinds: Vec<_> = report.violations.iter().map(|v| v.invariant).collect();
        assert!(kinds.contains(&Invariant::Stopping));
        assert!(kinds.contains(&Invariant::Deviation));
    }

    #[test]
    fn forged_low_density_fails_audit() {
        let mut inst = random_instance(4);
        let tau = inst.tau();
        let e = inst.levels[1].bucket[0];
        inst.levels[1].additions.push(Addition {
            element: e,
            gain: tau / 2.0,
            density: tau / 2.0,
        });
        assert!(!audit_cost_chain(&inst).unwrap().passed);
    }

    fn modular(n: usize) -> Objective {
        let mut b = CoverageFunction::builder();
        for i in 0..n {
            b.push(&format!("v{i}"), 1.0, [format!("x{i}")]);
        }
        b.build(1.0).unwrap()
    }

    #[test]
    fn expected_x_modular_and_blocking() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obj = modular(4);
        let l: Vec<_> = obj.ground().ids().collect();
        let means = estimate_expected_x(&obj, &l, &[], 1.0, 100, &mut rng).unwrap();
        assert_eq!(means, [1.0, 1.0, 1.0, 1.0, 0.0]);

        let obj = CoverageFunction::builder()
            .element("v1", 1.0, ["a", "b"])
            .element("v2", 1.0, ["b", "c"])
            .build(1.0)
            .unwrap();
        let l: Vec<_> = obj.ground().ids().collect();
        let means = estimate_expected_x(&obj, &l, &[], 1.5, 100, &mut rng).unwrap();
        assert_eq!(means, [1.0, 0.0, 0.0]);
        assert!(estimate_expected_x(&obj, &l, &[], 1.5, 99, &mut rng).is_err());
        // the estimator never counts against the caller's objective
        assert_eq!(obj.calls(), 0);
    }

    #[test]
    fn expected_x_in_unit_range() {
        let inst = random_instance(5);
        let level = &inst.levels()[1];
        let prev = &inst.levels()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let means = estimate_expected_x(
            inst.objective(),
            level.bucket(),
            prev.solution(),
            level.tau_level(),
            100,
            &mut rng,
        )
        .unwrap();
        assert_eq!(means.len(), level.bucket().len() + 1);
        assert!(means.iter().all(|m| (0.0..=1.0).contains(m)));
        assert_eq!(means[0], 1.0);
        assert_eq!(*means.last().unwrap(), 0.0);
    }

    fn frozen(size: u32, m: usize) -> FrozenSample {
        FrozenSample {
            level: 1,
            prior: Vec::new(),
            prior_value: 0.0,
            tau_level: 1.0,
            bucket: (0..size).map(ElementId).collect(),
            sample_size: m,
        }
    }

    #[test]
    fn uniformity_examples() {
        let r = uniformity_test(&frozen(4, 2), 2000, 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.band - 4.0 * (0.25f64 / 2000.0).sqrt()).abs() < 1e-12);
        for (_, f) in &r.frequencies {
            assert!((f - 0.5).abs() <= 0.045);
        }

        let full = uniformity_test(&frozen(5, 5), 500, 2).unwrap();
        assert!(full.passed);
        assert!(full.frequencies.iter().all(|(_, f)| *f == 1.0));

        let half = uniformity_test(&frozen(2, 1), 2000, 3).unwrap();
        assert!(half.passed);

        assert!(uniformity_test(&frozen(4, 2), 499, 1).is_err());
    }

    #[test]
    fn uniformity_detects_biased_sampler() {
        // a "sample" that always keeps the first m elements is maximally biased;
        // emulate it by checking the band arithmetic on skewed frequencies
        let r = uniformity_test(&frozen(10, 3), 2000, 4).unwrap();
        let skewed_freq = 0.45;
        assert!((skewed_freq - r.expected).abs() > r.band);
    }
}
