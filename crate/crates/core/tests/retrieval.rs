//! Retrieval and evaluation against brute-force references: the packed
//! popcount index against per-bit selection-sort ranking, and the
//! production evaluation against the quadratic-loop rational-arithmetic
//! reference (which must agree bit for bit).

use gph_core::eval::{evaluate, LabelSet};
use gph_core::hash::{BinaryCode, HammingIndex};
use gph_core::oracles::{evaluate_reference, naive_ranking, naive_within_radius};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_code(bits: usize, rng: &mut ChaCha8Rng) -> BinaryCode {
    let signs: Vec<i8> = (0..bits).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    BinaryCode::from_signs(&signs).unwrap()
}

#[test]
fn index_search_matches_selection_sort_oracle() {
    // 50 items over only 6 bits: distances collide constantly, so this
    // exercises the tie-order contract, not just distances.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let items: Vec<(u64, BinaryCode)> =
        (0..50).map(|i| (7 * i + 3, random_code(6, &mut rng))).collect();
    let index = HammingIndex::new(
        items.iter().map(|(id, _)| *id).collect(),
        items.iter().map(|(_, c)| c.clone()).collect(),
    )
    .unwrap();

    for q in 0..20 {
        let query = random_code(6, &mut rng);
        for k in [1usize, 7, 50, 60] {
            let fast = index.search(&query, k).unwrap();
            let slow = naive_ranking(&items, &query, k);
            assert_eq!(fast, slow, "query {q}, k={k}");
        }
        for radius in [0u32, 1, 3, 6] {
            let fast = index.within_radius(&query, radius).unwrap();
            let slow = naive_within_radius(&items, &query, radius);
            assert_eq!(fast, slow, "query {q}, radius={radius}");
        }
    }
}

#[test]
fn evaluation_matches_quadratic_reference_exactly() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(10..=30);
        let bits = rng.random_range(4..=12);
        let classes = rng.random_range(2..=4u32);
        let radius = rng.random_range(0..=3);

        let mut labels = LabelSet::new();
        let mut ids = Vec::with_capacity(n);
        let mut codes = Vec::with_capacity(n);
        for i in 0..n {
            let id = 1000 + 3 * i as u64;
            let primary = format!("c{}", rng.random_range(0..classes));
            // a third of the items carry a second label
            if rng.random_range(0..3) == 0 {
                let extra = format!("c{}", rng.random_range(0..classes));
                labels.add_item(id, &[primary, extra]).unwrap();
            } else {
                labels.add_item(id, &[primary]).unwrap();
            }
            ids.push(id);
            codes.push(random_code(bits, &mut rng));
        }

        let index = HammingIndex::new(ids.clone(), codes.clone()).unwrap();
        let fast = evaluate(&index, &labels, radius).unwrap();
        let slow = evaluate_reference(&ids, &codes, &labels, radius).unwrap();
        assert_eq!(fast, slow, "seed {seed}: n={n}, bits={bits}, radius={radius}");
    }
}
