//! The pieces of one level build: filtering, bucketing, bucket choice and sampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::{ElementId, Objective};

/// Bucket key `(j, k)`: `j` indexes marginal density relative to `τ`, `k` indexes weight.
pub type BucketIndex = (u32, u32);

pub type Buckets = BTreeMap<BucketIndex, Vec<ElementId>>;

/// `start · base^j` by repeated multiplication.
///
/// Every threshold in the structure is produced this way so that comparisons
/// against it are exact and reproducible.
pub fn scaled_power(start: f64, base: f64, j: u32) -> f64 {
    (0..j).fold(start, |acc, _| acc * base)
}

/// Largest `j ≥ 0` with `start · base^j ≤ value`, and that power. Requires `start ≤ value`.
pub(crate) fn ladder_floor(start: f64, base: f64, value: f64) -> (u32, f64) {
    debug_assert!(start <= value && base > 1.0);
    let mut j = 0u32;
    let mut p = start;
    loop {
        let next = p * base;
        if next > value || !next.is_finite() {
            return (j, p);
        }
        p = next;
        j += 1;
    }
}

/// `{e ∈ L : d(e|G) ≥ τ}`. One oracle call per element of `l`.
pub fn filter<'a, I>(
    obj: &Objective,
    l: I,
    g: &[ElementId],
    f_g: f64,
    tau: f64,
) -> Result<BTreeSet<ElementId>>
where
    I: IntoIterator<Item = &'a ElementId>,
{
    let mut session = obj.session(g, f_g)?;
    let mut kept = BTreeSet::new();
    for &e in l {
        if session.density(e)? >= tau {
            kept.insert(e);
        }
    }
    Ok(kept)
}

/// Partitions `l` by `(⌊log_{1+ε}(d(e|G)/τ)⌋, ⌊log_{1+ε} w(e)⌋)`.
///
/// Members of bucket `(j, ·)` satisfy `d(e|G) ≥ τ·(1+ε)^j` exactly as computed by
/// [`scaled_power`].
pub fn bucketize<'a, I>(
    obj: &Objective,
    l: I,
    g_prev: &[ElementId],
    f_g_prev: f64,
    tau: f64,
    eps: f64,
) -> Result<Buckets>
where
    I: IntoIterator<Item = &'a ElementId>,
{
    let mut session = obj.session(g_prev, f_g_prev)?;
    let densities = l
        .into_iter()
        .map(|&e| Ok((e, session.density(e)?)))
        .collect::<Result<Vec<_>>>()?;
    bucket_by_density(obj, &densities, tau, eps)
}

/// [`bucketize`] from already computed `(e, d(e|G))` pairs.
pub(crate) fn bucket_by_density(
    obj: &Objective,
    densities: &[(ElementId, f64)],
    tau: f64,
    eps: f64,
) -> Result<Buckets> {
    let base = 1.0 + eps;
    let mut buckets = Buckets::new();
    for &(e, d) in densities {
        if !(d >= tau) {
            return Err(Error::InvariantViolation(format!(
                "{e} reached bucketing with density {d} below threshold {tau}"
            )));
        }
        let (j, _) = ladder_floor(tau, base, d);
        let (k, _) = ladder_floor(1.0, base, obj.weight(e));
        buckets.entry((j, k)).or_default().push(e);
    }
    Ok(buckets)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketChoice {
    pub members: Vec<ElementId>,
    pub tau_level: f64,
    pub index: BucketIndex,
}

/// A maximum-cardinality bucket, ties to the lexicographically smallest `(j, k)`.
pub fn select_largest_bucket(buckets: &Buckets, tau: f64, eps: f64) -> Result<BucketChoice> {
    let mut best: Option<(&BucketIndex, &Vec<ElementId>)> = None;
    for (idx, members) in buckets {
        if members.is_empty() {
            continue;
        }
        if best.is_none_or(|(_, b)| members.len() > b.len()) {
            best = Some((idx, members));
        }
    }
    let (&index, members) =
        best.ok_or_else(|| Error::Precondition("no nonempty bucket to select".into()))?;
    let mut members = members.clone();
    members.sort_unstable();
    Ok(BucketChoice {
        members,
        tau_level: scaled_power(tau, 1.0 + eps, index.0),
        index,
    })
}

/// Ordered uniform sample of `m` distinct elements (partial Fisher–Yates).
pub fn draw_sample<R: Rng + ?Sized>(bucket: &[ElementId], m: usize, rng: &mut R) -> Vec<ElementId> {
    let mut pool = bucket.to_vec();
    let (head, _) = pool.partial_shuffle(rng, m.min(bucket.len()));
    head.to_vec()
}
