mod common;

use common::*;
use proptest::prelude::*;
use rcseg::select::{confident_count, select};
use rcseg::ProbabilityMap;

#[test]
fn energies_match_the_definition() {
    for (seed, dims, k) in [(0, [3, 3, 3], 2), (1, [2, 4, 3], 3), (2, [1, 5, 2], 1)] {
        let maps = seeded_maps(dims, k, seed);
        let s = select(&maps, 0.5).unwrap();
        for (i, &e) in s.energies.iter().enumerate() {
            assert!((e - oracle_energy(&maps, i)).abs() < 1e-12, "voxel {i}");
        }
    }
}

#[test]
fn matches_exhaustive_subsets_on_small_volumes() {
    let shapes = [[1, 1, 1], [1, 1, 4], [1, 2, 2], [2, 2, 2], [1, 2, 3], [2, 2, 3]];
    for (seed, dims) in shapes.into_iter().enumerate() {
        for k in 1..=3 {
            let maps = seeded_maps(dims, k, seed as u64 * 10 + k as u64);
            let energies: Vec<f64> = (0..maps.voxels()).map(|i| oracle_energy(&maps, i)).collect();
            for theta in [0.25, 0.5, 0.75] {
                let m = confident_count(maps.voxels(), theta);
                assert_eq!(m, (maps.voxels() as f64 * theta).floor() as usize);
                let (_, winners) = exhaustive_best(&energies, m);
                let chosen = confident_bits(&maps, theta);
                assert_eq!(chosen.count_ones() as usize, m);
                assert!(winners.contains(&chosen), "{dims:?} k={k} theta={theta}");
            }
        }
    }
}

#[test]
fn three_cube_two_maps_half_pruned() {
    let maps = seeded_maps([3, 3, 3], 2, 2024);
    let energies: Vec<f64> = (0..27).map(|i| oracle_energy(&maps, i)).collect();
    let (best, winners) = exhaustive_best(&energies, 13);
    assert_eq!(winners.len(), 1);
    let chosen = confident_bits(&maps, 0.5);
    assert_eq!(chosen, winners[0]);
    let value: f64 = (0..27).filter(|b| chosen >> b & 1 == 1).map(|b| energies[b]).sum();
    assert!((value - best).abs() < 1e-9);
}

#[test]
fn hard_labels_threshold_the_mean() {
    let maps = ProbabilityMap::new([1, 1, 4], vec![vec![0.9, 0.2, 0.5, 0.6], vec![0.3, 0.2, 0.5, 0.3]]).unwrap();
    let s = select(&maps, 1.0).unwrap();
    let labels = s.confident_labels(4);
    assert_eq!(labels, vec![Some(1), Some(0), Some(1), Some(0)]);
}

proptest! {
    #[test]
    fn partition_and_size(seed in 0u64..1000, theta in 0.0f64..=1.0, k in 1usize..4) {
        let maps = seeded_maps([2, 3, 4], k, seed);
        let s = select(&maps, theta).unwrap();
        prop_assert_eq!(s.confident.len(), (24.0 * theta).floor() as usize);
        let mut all: Vec<usize> = s.confident.iter().map(|c| c.0).chain(s.candidates.iter().copied()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..24).collect::<Vec<_>>());
    }

    #[test]
    fn confident_set_grows_with_theta(seed in 0u64..1000, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let maps = seeded_maps([3, 2, 3], 2, seed);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = confident_bits(&maps, lo);
        let large = confident_bits(&maps, hi);
        prop_assert_eq!(small & !large, 0);
    }

    #[test]
    fn swapping_maps_leaves_energies_unchanged(seed in 0u64..1000) {
        let maps = seeded_maps([2, 3, 3], 3, seed);
        let swapped = maps.reordered(&[2, 0, 1]);
        let a = select(&maps, 0.5).unwrap();
        let b = select(&swapped, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }
}
