//! Statistics checked against independent, definition-level implementations.

use positionality_core::scale::LabelScale;
use positionality_core::stats::{
    alpha_from_units, bonferroni_adjust, krippendorff_alpha, pearson_p, pearson_r, per_test_threshold, AlphaMetric,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean product of z-scores (sample standard deviations).
fn pearson_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sx == 0.0 || sy == 0.0 {
        return None;
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| ((a - mx) / sx) * ((b - my) / sy)).sum();
    Some(s / (n - 1.0))
}

/// Alpha from its pairwise-difference definition, without a coincidence
/// matrix: D_o averages within-unit pair distances, D_e all cross pairs.
fn alpha_oracle(units: &[Vec<f64>], metric: AlphaMetric) -> Option<f64> {
    let pairable: Vec<&Vec<f64>> = units.iter().filter(|u| u.len() >= 2).collect();
    let all: Vec<f64> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let n = all.len() as f64;
    if n < 2.0 {
        return None;
    }
    let mut d_o = 0.0;
    for u in &pairable {
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    s += metric.distance(u[i], u[j]);
                }
            }
        }
        d_o += s / (u.len() as f64 - 1.0);
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                d_e += metric.distance(all[i], all[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - d_o / d_e)
}

/// Γ((ν+1)/2) / Γ(ν/2) for integer ν via the half-integer recurrence.
fn gamma_ratio(nu: usize) -> f64 {
    // ln Γ(k/2) for k = 1..=nu+1
    let mut ln = vec![0.0f64; nu + 2];
    ln[1] = std::f64::consts::PI.sqrt().ln();
    ln[2] = 0.0;
    for k in 3..=nu + 1 {
        ln[k] = ln[k - 2] + ((k as f64 - 2.0) / 2.0).ln();
    }
    (ln[nu + 1] - ln[nu]).exp()
}

/// Two-tailed p from Simpson quadrature of the Student t density.
fn p_oracle(r: f64, n: usize) -> f64 {
    let nu = (n - 2) as f64;
    let t = (r * (nu / (1.0 - r * r)).sqrt()).abs();
    let c = gamma_ratio(n - 2) / (nu * std::f64::consts::PI).sqrt();
    let f = |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let steps = 20_000;
    let h = t / steps as f64;
    let mut s = f(0.0) + f(t);
    for i in 1..steps {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..3) {
        0 => (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        1 => (0..n).map(|_| rng.random_range(-2i64..=2) as f64).collect(),
        _ => (0..n).map(|_| rng.random_range(-1000.0..1000.0)).collect(),
    }
}

#[test]
fn pearson_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut defined = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=300);
        let x = random_vector(&mut rng, n);
        let y = random_vector(&mut rng, n);
        match (pearson_r(&x, &y), pearson_oracle(&x, &y)) {
            (Some(a), Some(b)) => {
                assert!((a - b).abs() <= 1e-12, "n={n}: {a} vs {b}");
                defined += 1;
            }
            (None, None) => {}
            other => panic!("definedness differs: {other:?}"),
        }
    }
    assert!(defined > 900);
}

#[test]
fn pearson_affine_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let n = rng.random_range(3..=100);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = pearson_r(&x, &y).unwrap();

        // power-of-two scaling is exact in binary floating point
        let k = rng.random_range(-8..=8);
        let a = 2f64.powi(k) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
        assert_eq!(pearson_r(&scaled, &y).unwrap(), r * a.signum());

        let a = rng.random_range(0.01..100.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b = rng.random_range(-100.0..100.0);
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        assert!((pearson_r(&moved, &y).unwrap() - r * a.signum()).abs() <= 1e-12);
    }
}

#[test]
fn p_values_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(3..=300);
        let r: f64 = rng.random_range(-0.999..0.999);
        let oracle = p_oracle(r, n);
        if oracle < 1e-6 {
            continue;
        }
        let p = pearson_p(r, n).unwrap();
        assert!((p - oracle).abs() <= 1e-9, "r={r} n={n}: {p} vs {oracle}");
        checked += 1;
    }
    assert!((p_oracle(0.5, 12) - 0.09785).abs() < 5e-6);
}

#[test]
fn bonferroni_threshold_constant() {
    let t = per_test_threshold(0.001, 49);
    assert!((t - 2.0408e-5).abs() < 5e-10);
    assert_eq!(format!("{:.2e}", t), "2.04e-5");
    assert_eq!(bonferroni_adjust(2.1e-5 / 49.0 * 49.0, 49), (2.1e-5 * 49.0f64).min(1.0));
}

fn random_matrix(rng: &mut ChaCha8Rng, scale: &LabelScale) -> Vec<Vec<Option<i64>>> {
    let rows = rng.random_range(1..=10);
    let cols = rng.random_range(1..=10);
    let density = rng.random_range(0.2..1.0);
    let scores: Vec<i64> = scale.points().iter().map(|p| p.score).collect();
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| rng.random_bool(density).then(|| scores[rng.random_range(0..scores.len())]))
                .collect()
        })
        .collect()
}

fn to_units(m: &[Vec<Option<i64>>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| row.iter().flatten().map(|&v| v as f64).collect())
        .collect()
}

#[test]
fn krippendorff_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let scales = [LabelScale::social_acceptability(), LabelScale::hate_speech()];
    let mut defined = 0;
    for i in 0..500 {
        let scale = &scales[i % 2];
        let m = random_matrix(&mut rng, scale);
        for metric in [AlphaMetric::Interval, AlphaMetric::Nominal] {
            let got = krippendorff_alpha(&m, metric, scale).unwrap();
            let want = alpha_oracle(&to_units(&m), metric);
            match (got, want) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() <= 1e-9, "{m:?} {metric:?}: {a} vs {b}");
                    defined += 1;
                }
                (None, None) => {}
                other => panic!("definedness differs on {m:?}: {other:?}"),
            }
        }
    }
    assert!(defined > 600);
}

#[test]
fn krippendorff_edge_cases() {
    let scale = LabelScale::social_acceptability();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let rows = rng.random_range(1..=10);
        let m: Vec<Vec<Option<i64>>> = (0..rows)
            .map(|_| {
                let v = rng.random_range(-2..=2);
                (0..rng.random_range(2..=10)).map(|_| Some(v)).collect()
            })
            .collect();
        assert_eq!(krippendorff_alpha(&m, AlphaMetric::Interval, &scale).unwrap(), Some(1.0));
    }
    assert_eq!(krippendorff_alpha(&[vec![Some(1)]], AlphaMetric::Interval, &scale).unwrap(), None);
}

proptest! {
    #[test]
    fn pearson_symmetric_and_bounded(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..50)
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(r) = pearson_r(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert_eq!(Some(r), pearson_r(&y, &x));
        }
    }

    #[test]
    fn alpha_never_exceeds_one(
        units in prop::collection::vec(prop::collection::vec(-2i64..=2, 0..6), 1..10)
    ) {
        let units: Vec<Vec<f64>> = units.into_iter().map(|u| u.into_iter().map(|v| v as f64).collect()).collect();
        if let Some(a) = alpha_from_units(&units, AlphaMetric::Interval) {
            prop_assert!(a <= 1.0 + 1e-12);
            let o = alpha_oracle(&units, AlphaMetric::Interval).unwrap();
            prop_assert!((a - o).abs() <= 1e-9);
        }
    }
}
