use symnorm::countsketch::tracker_capacity;
use symnorm::seed::{derive_named, rng};
use symnorm::{CountSketchTable, FrequencyVector, StreamUpdate};
use rand::Rng;

fn noisy_vector(n: usize, seed: u64, spike: i64) -> Vec<i64> {
    let mut r = rng(seed);
    let mut v: Vec<i64> = (0..n).map(|_| if r.random_bool(0.5) { r.random_range(-3..=3) } else { 0 }).collect();
    v[0] = spike;
    v
}

fn sketch(values: &[i64], depth: usize, width: usize, capacity: usize, seed: u64) -> CountSketchTable {
    let mut cs = CountSketchTable::with_dims(depth, width, capacity, seed);
    for (i, x) in values.iter().enumerate() {
        if *x != 0 {
            cs.update(StreamUpdate::new(i as u64, *x));
        }
    }
    cs
}

#[test]
fn single_row_estimates_are_unbiased() {
    let values = noisy_vector(200, 1, 40);
    let errs: Vec<f64> = (0..10_000u64)
        .map(|s| sketch(&values, 1, 16, 8, derive_named(3, "test", "unbiased", s)).query(0) - 40.0)
        .collect();
    let m = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / m;
    let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / m.sqrt(), "mean {mean} sd {sd}");
}

#[test]
fn error_within_tail_bound() {
    let (n, d, w) = (200, 7, 64);
    let trials = 500;
    let ok = (0..trials)
        .filter(|&s| {
            let values = noisy_vector(n, 100 + s, 50);
            let tail = FrequencyVector::from_values(values.clone()).f2_tail(1);
            let cs = sketch(&values, d, w, 8, derive_named(5, "test", "bound", s));
            (cs.query(0) - 50.0).abs() <= (8.0 * tail / w as f64).sqrt()
        })
        .count();
    assert!(ok as f64 >= 0.99 * trials as f64, "{ok}/{trials}");
}

#[test]
fn merge_matches_concatenated_stream() {
    let a = noisy_vector(300, 8, 17);
    let b = noisy_vector(300, 9, -4);
    let mut left = sketch(&a, 5, 32, 16, 77);
    let right = sketch(&b, 5, 32, 16, 77);
    left.merge(&right).unwrap();
    let mut both = CountSketchTable::with_dims(5, 32, 16, 77);
    for (i, x) in a.iter().chain(&b).enumerate() {
        if *x != 0 {
            both.update(StreamUpdate::new((i % 300) as u64, *x));
        }
    }
    assert_eq!(left.counters(), both.counters());
    assert!(left.merge(&CountSketchTable::with_dims(5, 32, 16, 78)).is_err());
}

#[test]
fn spike_over_unit_noise_is_covered() {
    let (beta, eps) = (0.25, 0.2);
    let trials = 200;
    let hits = (0..trials)
        .filter(|&t| {
            let mut r = rng(derive_named(9, "test", "spike", t));
            let mut values = vec![0i64; 200];
            let mut placed = 0;
            while placed < 100 {
                let i = r.random_range(1..200);
                if values[i] == 0 {
                    values[i] = if r.random_bool(0.5) { 1 } else { -1 };
                    placed += 1;
                }
            }
            values[0] = 50;
            let cs = sketch(&values, 7, 64, tracker_capacity(beta), derive_named(9, "test", "table", t));
            let map = cs.heavy_hitters(beta, eps);
            map.get(0).is_some_and(|e| (50.0..=50.0 * (1.0 + eps)).contains(&e))
        })
        .count();
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}

#[test]
fn lone_spike_is_exact() {
    let mut cs = CountSketchTable::new(1000, 0.1, 0.2, 0.01, 4).unwrap();
    cs.update(StreamUpdate::new(7, 100));
    let map = cs.heavy_hitters(0.1, 0.2);
    let e = map.get(7).unwrap();
    assert!((100.0..=120.0).contains(&e));
    assert_eq!(cs.query(8), 0.0);
    assert!(cs.heavy_hitters(1.0, 0.2).len() <= 2);
}
