mod common;

use std::collections::HashSet;

use bigbatch::{
    draw_batch, estimate_variance, extend_batch, generate_quadratic, grow_until_condition,
    BatchState, GrowthPolicy,
};
use common::*;

#[test]
fn draw_batch_is_uniform() {
    let (n, k, draws) = (10_000, 100, 10_000);
    let mut r = rng(2024);
    let mut counts = vec![0u32; n];
    for _ in 0..draws {
        let b = draw_batch(&mut r, n, k).unwrap();
        let set: HashSet<usize> = b.iter().copied().collect();
        assert_eq!(set.len(), k);
        for i in b {
            counts[i] += 1;
        }
    }
    let p = k as f64 / n as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    let z: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / draws as f64 - p).abs() / se)
        .collect();
    // a 3-SE band holds 99.73% of indices under uniform sampling
    let inside = z.iter().filter(|&&v| v <= 3.0).count() as f64 / n as f64;
    assert!(inside >= 0.99, "only {inside} of indices within 3 SE");
    // no index is an outlier after a Bonferroni correction over all n
    let worst = z.iter().cloned().fold(0.0, f64::max);
    assert!(worst <= 5.0, "worst deviation {worst} SE");
}

#[test]
fn repeated_extension_keeps_indices_distinct() {
    let p = generate_quadratic(2, 300, 1.0, 1.0, &[0.0, 0.0], 1).unwrap();
    let x = [0.5, 0.5];
    let mut r = rng(3);
    let mut s = BatchState::sample(&p, &x, &mut r, 20).unwrap();
    let first: Vec<usize> = s.indices().to_vec();
    for _ in 0..3 {
        assert_eq!(extend_batch(&mut r, &mut s, 10, &p, &x).unwrap(), 10);
    }
    assert_eq!(s.k(), 50);
    assert_eq!(&s.indices()[..20], &first[..]);
    let set: HashSet<usize> = s.indices().iter().copied().collect();
    assert_eq!(set.len(), 50);
}

#[test]
fn incremental_statistics_match_recomputation() {
    let p = least_squares(regression_data(4, 2000, 6, 2.0), 0.0);
    let x = vec![0.1; 6];
    let mut r = rng(17);
    let s = BatchState::sample(&p, &x, &mut r, 10).unwrap();
    let g = grow_until_condition(&p, &x, s, &GrowthPolicy::new(0.1, 0.3).unwrap(), &mut r).unwrap();
    let s = g.state;
    let grads: Vec<Vec<f64>> = s
        .indices()
        .iter()
        .map(|&i| p.sample_loss(&x, i).unwrap().gradient)
        .collect();
    let k = grads.len() as f64;
    let mean: Vec<f64> = (0..6)
        .map(|j| grads.iter().map(|v| v[j]).sum::<f64>() / k)
        .collect();
    let var = grads
        .iter()
        .map(|v| {
            v.iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (k - 1.0);
    for j in 0..6 {
        assert!((s.mean_grad()[j] - mean[j]).abs() <= 1e-9 * norm(&mean));
    }
    assert!((s.var_est() - var).abs() <= 1e-9 * var);
    assert!((estimate_variance(&grads, &mean).unwrap() - var).abs() <= 1e-12 * var);
    // exit contract
    assert!(s.k() == p.n() || s.grad_norm_sq() > 0.09 * s.var_est() / k);
}

#[test]
fn terminal_batch_grows_as_the_iterate_nears_the_optimum() {
    let d = 10;
    let xstar = vec![1.0; d];
    let p = generate_quadratic(d, 5000, 1.0, 0.1, &xstar, 8).unwrap();
    let dir = gaussian_vec(&mut rng(1), d);
    let unit: Vec<f64> = dir.iter().map(|v| v / norm(&dir)).collect();
    let mut medians = Vec::new();
    for &r in &[3.0, 1.0, 0.3, 0.1, 0.03, 0.01] {
        let x: Vec<f64> = xstar.iter().zip(&unit).map(|(a, u)| a + r * u).collect();
        let mut ks: Vec<usize> = (0..20)
            .map(|seed| {
                let mut g = rng(seed);
                let s = BatchState::sample(&p, &x, &mut g, 10).unwrap();
                grow_until_condition(&p, &x, s, &GrowthPolicy::default(), &mut g)
                    .unwrap()
                    .state
                    .k()
            })
            .collect();
        ks.sort();
        medians.push((ks[9] + ks[10]) as f64 / 2.0);
    }
    for w in medians.windows(2) {
        assert!(w[0] <= w[1], "{medians:?}");
    }
    assert!(medians[5] > medians[0], "{medians:?}");
}

#[test]
fn stationary_point_grows_to_the_full_dataset() {
    let p = generate_quadratic(3, 400, 1.0, 0.0, &[1.0, 2.0, 3.0], 0).unwrap();
    let mut r = rng(0);
    let x = [1.0, 2.0, 3.0];
    let s = BatchState::sample(&p, &x, &mut r, 10).unwrap();
    let g = grow_until_condition(&p, &x, s, &GrowthPolicy::default(), &mut r).unwrap();
    assert!(g.capped && g.grew);
    assert_eq!(g.state.k(), 400);
    assert_eq!(g.evals, 390);
}
