use explore_core::worldgen::{generate, TownParams};
use explore_core::CellState;

#[test]
fn occupied_fraction_stays_in_town_range() {
    let mut fractions = Vec::new();
    for seed in 0..200 {
        let (layout, grid) = generate(&TownParams::with_seed(seed)).unwrap();
        let f = grid.count(CellState::Occupied) as f64 / grid.len() as f64;
        assert!((0.02..=0.20).contains(&f), "seed {seed}: occupied fraction {f}");
        assert!((3..=9).contains(&layout.buildings.len()), "seed {seed}");
        assert_eq!(grid.count(CellState::Unknown), 0);
        fractions.push(f);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!(mean > 0.04 && mean < 0.15, "mean occupied fraction {mean}");
}

#[test]
fn distinct_seeds_give_distinct_towns() {
    let (_, a) = generate(&TownParams::with_seed(1)).unwrap();
    let (_, b) = generate(&TownParams::with_seed(2)).unwrap();
    assert_ne!(a.cells(), b.cells());
}
