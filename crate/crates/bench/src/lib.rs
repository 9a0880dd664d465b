//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use funcgrasp::affordance::load_object;
use funcgrasp::hand::load_hand;
use funcgrasp::rng::rng_from_seed;
use funcgrasp::{AffordanceObject, HandModel, Vec3};
use rand::Rng;

fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(rel)
}

pub fn hand(name: &str) -> HandModel {
    load_hand(&asset(&format!("hands/{name}.json"))).expect("bundled hand")
}

pub fn object(name: &str) -> AffordanceObject {
    load_object(
        &asset(&format!("objects/{name}.obj")),
        &asset(&format!("objects/{name}.json")),
    )
    .expect("bundled object")
}

/// `n` points uniform in a cube of half-width `half` (m).
pub fn random_points(n: usize, half: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half)))
        .collect()
}
