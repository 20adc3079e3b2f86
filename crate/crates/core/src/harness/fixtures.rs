//! Seeded random weighted coverage instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ElementSpec, InstanceFile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageShape {
    pub elements: usize,
    /// Universe size; items are named `x0, x1, …`.
    pub items: usize,
    /// Each element covers between 1 and `max_covers` items, drawn with replacement.
    pub max_covers: usize,
    /// Weights are uniform in `[1, rho]`.
    pub rho: f64,
}

/// Elements are named `v0, v1, …` so they match [`super::default_ids`].
pub fn random_coverage(shape: CoverageShape, seed: u64) -> Result<InstanceFile> {
    if shape.items == 0 || shape.max_covers == 0 || !(shape.rho >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need items ≥ 1, max_covers ≥ 1 and rho ≥ 1, got {shape:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elements = (0..shape.elements)
        .map(|i| {
            let k = rng.gen_range(1..=shape.max_covers);
            let mut covers: Vec<usize> = (0..k).map(|_| rng.gen_range(0..shape.items)).collect();
            covers.sort_unstable();
            covers.dedup();
            let weight = if shape.rho > 1.0 {
                rng.gen_range(1.0..=shape.rho)
            } else {
                1.0
            };
            ElementSpec {
                id: format!("v{i}"),
                weight,
                covers: covers.into_iter().map(|c| format!("x{c}")).collect(),
            }
        })
        .collect();
    Ok(InstanceFile::Coverage {
        rho: shape.rho,
        elements,
        item_weights: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_instances_load() {
        let shape = CoverageShape {
            elements: 12,
            items: 20,
            max_covers: 4,
            rho: 3.0,
        };
        let a = random_coverage(shape, 5).unwrap();
        assert_eq!(a, random_coverage(shape, 5).unwrap());
        let obj = a.into_objective().unwrap();
        assert_eq!(obj.ground().len(), 12);
        assert!(obj
            .ground()
            .elements()
            .iter()
            .all(|e| (1.0..=3.0).contains(&e.weight)));
    }
}
