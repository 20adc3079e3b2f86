//! Sample-size selection by simulating the sequential threshold pass.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::{Checkpoint, ElementId, Objective, Session};

/// Trial count `⌈4 ε⁻² ln(n¹² / ε)⌉` carrying the high-probability guarantee.
///
/// `n` below 1 is treated as 1.
pub fn theory_trials(eps: f64, n: usize) -> usize {
    let n = n.max(1) as f64;
    let log_term = 12.0 * n.ln() - eps.ln();
    (4.0 / (eps * eps) * log_term).ceil() as usize
}

/// One random sequential pass of `l` over a scratch copy of `g`.
///
/// Returns `X` of length `|l| + 1` with `X[r] = 1` iff the `(r+1)`-th element of a
/// uniformly random permutation cleared `tau` at its turn. The last entry is
/// always 0. Exactly `|l|` oracle calls; `g` is not modified.
pub fn apply_and_revert<R: Rng + ?Sized>(
    obj: &Objective,
    l: &[ElementId],
    g: &[ElementId],
    f_g: f64,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<u8>> {
    let mut session = obj.session(g, f_g)?;
    let base = session.checkpoint();
    let mut order = l.to_vec();
    let mut x = vec![0u8; l.len() + 1];
    one_pass(&mut session, base, &mut order, tau, rng, &mut x)?;
    Ok(x)
}

fn one_pass<R: Rng + ?Sized>(
    session: &mut Session<'_>,
    base: Checkpoint,
    order: &mut [ElementId],
    tau: f64,
    rng: &mut R,
    x: &mut [u8],
) -> Result<()> {
    session.restore(base);
    order.shuffle(rng);
    x.fill(0);
    for (slot, &e) in x.iter_mut().zip(order.iter()) {
        if session.density(e)? >= tau {
            *slot = 1;
            session.add(e)?;
        }
    }
    Ok(())
}

/// Averages `trials` runs of [`apply_and_revert`] and returns `m' − 1`, where `m'`
/// is the first index whose mean falls below `1 − ε`.
///
/// `trials` is `t_override` when given, else [`theory_trials`]`(eps, n)`.
#[allow(clippy::too_many_arguments)]
pub fn calc_sample_size<R: Rng + ?Sized>(
    obj: &Objective,
    l: &[ElementId],
    g: &[ElementId],
    f_g: f64,
    tau: f64,
    eps: f64,
    n: usize,
    rng: &mut R,
    t_override: Option<usize>,
) -> Result<usize> {
    let trials = match t_override {
        Some(0) => {
            return Err(Error::InvalidArgument(
                "sample-size trial count must be at least 1".into(),
            ))
        }
        Some(t) => t,
        None => theory_trials(eps, n),
    };
    if l.is_empty() {
        return Err(Error::Precondition(
            "sample size requested for an empty candidate set".into(),
        ));
    }
    let mut session = obj.session(g, f_g)?;
    let base = session.checkpoint();
    let mut order = l.to_vec();
    let mut x = vec![0u8; l.len() + 1];
    let mut hits = vec![0u64; l.len() + 1];
    for _ in 0..trials {
        // every trial reshuffles the order left by the previous one
        one_pass(&mut session, base, &mut order, tau, rng, &mut x)?;
        for (h, &xi) in hits.iter_mut().zip(&x) {
            *h += u64::from(xi);
        }
    }
    let cutoff = 1.0 - eps;
    let first_low = hits
        .iter()
        .position(|&h| (h as f64) / (trials as f64) < cutoff)
        .expect("last entry of every trial is 0");
    // first_low is the 0-based position of m', so m = m' − 1 = first_low
    Ok(first_low)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::CoverageFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn modular(n: usize) -> Objective {
        let mut b = CoverageFunction::builder();
        for i in 0..n {
            b.push(&format!("v{i}"), 1.0, [format!("x{i}")]);
        }
        b.build(1.0).unwrap()
    }

    fn blocking() -> Objective {
        CoverageFunction::builder()
            .element("v1", 1.0, ["a", "b"])
            .element("v2", 1.0, ["b", "c"])
            .build(1.0)
            .unwrap()
    }

    #[test]
    fn theory_trials_formula() {
        // ⌈400 · (12 ln 40 + ln 10)⌉ = ⌈400 · 46.56826…⌉
        assert_eq!(theory_trials(0.1, 40), 18628);
        assert_eq!(theory_trials(0.1, 0), theory_trials(0.1, 1));
    }

    #[test]
    fn modular_all_pass() {
        let obj = modular(4);
        let l: Vec<_> = obj.ground().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = apply_and_revert(&obj, &l, &[], 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(x, [1, 1, 1, 1, 0]);
        assert_eq!(obj.calls(), 4);
    }

    #[test]
    fn single_element() {
        let obj = modular(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = apply_and_revert(&obj, &[ElementId(0)], &[], 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(x, [1, 0]);
    }

    #[test]
    fn blocking_pair_every_permutation() {
        let obj = blocking();
        let l = [ElementId(0), ElementId(1)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = apply_and_revert(&obj, &l, &[], 0.0, 1.5, &mut rng).unwrap();
            assert_eq!(x, [1, 0, 0]);
        }
    }

    #[test]
    fn sample_size_modular_is_full() {
        let obj = modular(5);
        let l: Vec<_> = obj.ground().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = calc_sample_size(&obj, &l, &[], 0.0, 1.0, 0.1, 5, &mut rng, Some(20)).unwrap();
        assert_eq!(m, 5);
    }

    #[test]
    fn sample_size_blocking_is_one() {
        let obj = blocking();
        let l = [ElementId(0), ElementId(1)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = calc_sample_size(&obj, &l, &[], 0.0, 1.5, 0.1, 2, &mut rng, None).unwrap();
        assert_eq!(m, 1);
    }

    #[test]
    fn sample_size_rejects_zero_trials() {
        let obj = modular(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = calc_sample_size(
            &obj,
            &[ElementId(0)],
            &[],
            0.0,
            1.0,
            0.1,
            1,
            &mut rng,
            Some(0),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn apply_and_revert_leaves_inputs_untouched() {
        let obj = blocking();
        let l = vec![ElementId(1)];
        let g = vec![ElementId(0)];
        let (l0, g0) = (l.clone(), g.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = apply_and_revert(&obj, &l, &g, 2.0, 1.0, &mut rng).unwrap();
        assert_eq!(x, [1, 0]);
        assert_eq!((l, g), (l0, g0));
    }
}
