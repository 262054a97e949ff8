//! Derived examples checked against independent reference computations.

use aodforest::kriging::{
    empirical_variogram, fit_variogram, kriging_grid_search, VariogramBin, VariogramKind, VariogramModel,
};
use aodforest::preprocess::{fit_sensor_regression, iqr_filter, merge_daily_aod, normalize_aod_pblh};
use aodforest::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Box-Muller normal draw.
fn standard_normal<R: Rng>(r: &mut R) -> f64 {
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[test]
fn iqr_example_against_hand_quartiles() {
    // sorted {10,12,14,16,100}: Q1 at position 1 -> 12, Q3 at position 3 -> 16
    let (q1, q3) = (12.0, 16.0);
    let (lo, hi) = (q1 - (q3 - q1), q3 + (q3 - q1));
    assert_eq!((lo, hi), (8.0, 20.0));
    let split = iqr_filter(&[10.0, 12.0, 14.0, 16.0, 100.0]);
    assert_eq!(split.outliers, vec![100.0]);
    assert_eq!(split.bounds, Some((lo, hi)));

    // {1,2,3,4}: Q1 = 1.75, Q3 = 3.25, bounds [0.25, 4.75]
    let split = iqr_filter(&[1.0, 2.0, 3.0, 4.0]);
    assert!(split.outliers.is_empty());
    assert_eq!(split.bounds, Some((0.25, 4.75)));
}

#[test]
fn normalised_aod_at_minimum_pblh() {
    let v = normalize_aod_pblh(0.0555, 27.75).unwrap();
    assert!((v - 2.0e-3).abs() < 1e-15);
    assert_eq!(normalize_aod_pblh(0.2, 0.0), None);
}

#[test]
fn sensor_regression_r2_matches_pearson() {
    let mut r = rng::stream(5, &[]);
    let pairs: Vec<(f64, f64)> = (0..300)
        .map(|_| {
            let t: f64 = r.random_range(0.05..0.8);
            (t, 0.9 * t + 0.02 + 0.05 * standard_normal(&mut r))
        })
        .collect();
    let fit = fit_sensor_regression(&pairs).unwrap();

    let n = pairs.len() as f64;
    let (sx, sy) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (sxx, syy, sxy) = pairs
        .iter()
        .fold((0.0, 0.0, 0.0), |a, p| (a.0 + p.0 * p.0, a.1 + p.1 * p.1, a.2 + p.0 * p.1));
    let pearson = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    assert!((fit.terra_to_aqua.r2 - pearson * pearson).abs() < 1e-9);
    assert!((fit.aqua_to_terra.r2 - pearson * pearson).abs() < 1e-9);

    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!((fit.terra_to_aqua.slope - slope).abs() < 1e-9);
    let back = (n * sxy - sx * sy) / (n * syy - sy * sy);
    assert!((fit.aqua_to_terra.slope - back).abs() < 1e-9);
}

#[test]
fn merge_with_identity_fit() {
    let pairs: Vec<(f64, f64)> = (1..10).map(|i| (i as f64 * 0.1, i as f64 * 0.1)).collect();
    let fit = fit_sensor_regression(&pairs).unwrap();
    let v = merge_daily_aod(Some(0.2), None, &fit).unwrap();
    assert!((v - 0.2).abs() < 1e-12);
    assert_eq!(merge_daily_aod(Some(0.2), Some(0.3), &fit), Some(0.25));
    assert_eq!(merge_daily_aod(None, None, &fit), None);
}

/// Direct enumeration of every ordered pair.
fn brute_force_variogram(points: &[(f64, f64, f64)], n_bins: usize, max_dist: f64) -> Vec<(f64, f64, usize)> {
    let width = max_dist / n_bins as f64;
    let mut bins = vec![(0.0, 0.0, 0usize); n_bins];
    for (i, a) in points.iter().enumerate() {
        for (j, b) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let h = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            if h == 0.0 || h > max_dist {
                continue;
            }
            let mut k = 0;
            while k + 1 < n_bins && h >= (k + 1) as f64 * width {
                k += 1;
            }
            bins[k].0 += h;
            bins[k].1 += 0.5 * (a.2 - b.2).powi(2);
            bins[k].2 += 1;
        }
    }
    // each unordered pair was visited twice
    bins.into_iter()
        .filter(|b| b.2 > 0)
        .map(|(h, s, c)| (h / c as f64, s / c as f64, c / 2))
        .collect()
}

#[test]
fn empirical_variogram_matches_pairwise_enumeration() {
    let points: Vec<(f64, f64, f64)> = (0..8)
        .flat_map(|i| (0..6).map(move |j| (i as f64, j as f64, i as f64)))
        .collect();
    let got = empirical_variogram(&points, 7, 4.3).unwrap();
    let want = brute_force_variogram(&points, 7, 4.3);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g.lag - w.0).abs() < 1e-9);
        assert!((g.semivariance - w.1).abs() < 1e-9);
        assert_eq!(g.pairs, w.2);
    }
    // value = x grows with separation
    assert!(got.first().unwrap().semivariance < got.last().unwrap().semivariance);
}

#[test]
fn gaussian_fit_reaches_95_percent_at_range() {
    let truth = VariogramModel::new(VariogramKind::Gaussian, 0.2, 1.5, 6.0).unwrap();
    let bins: Vec<VariogramBin> = (1..=20)
        .map(|i| {
            let h = i as f64 * 0.6;
            VariogramBin {
                lag: h,
                semivariance: 0.2 + 1.5 * (1.0 - (-3.0 * h * h / 36.0).exp()),
                pairs: 30,
            }
        })
        .collect();
    let m = fit_variogram(&bins, VariogramKind::Gaussian).unwrap();
    let closed_form = m.nugget + m.psill * (1.0 - (-3.0f64).exp());
    assert!((m.gamma(m.range) - closed_form).abs() < 1e-12);
    assert!((m.gamma(m.range) - (m.nugget + 0.95 * m.psill)).abs() < 0.01 * m.psill);
    assert!((m.range - truth.range).abs() < 1e-2);
}

/// Gaussian random field with spherical covariance, sampled by Cholesky.
fn spherical_field(seed: u64, n: usize, range: f64) -> Vec<(f64, f64, f64)> {
    let mut r = rng::stream(seed, &[0x5FE]);
    let locs: Vec<(f64, f64)> = (0..n)
        .map(|_| (r.random_range(0.0..10.0), r.random_range(0.0..10.0)))
        .collect();
    let sill = 1.0;
    let cov = |h: f64| {
        if h >= range {
            0.0
        } else {
            let s = h / range;
            sill * (1.0 - 1.5 * s + 0.5 * s * s * s)
        }
    };
    let c = DMatrix::from_fn(n, n, |i, j| {
        let h = ((locs[i].0 - locs[j].0).powi(2) + (locs[i].1 - locs[j].1).powi(2)).sqrt();
        cov(h) + if i == j { 1e-10 } else { 0.0 }
    });
    let l = c.cholesky().expect("spherical covariance is positive definite").l();
    let z = DVector::from_fn(n, |_, _| standard_normal(&mut r));
    let v = l * z;
    locs.iter().zip(v.iter()).map(|(&(x, y), &v)| (x, y, v)).collect()
}

#[test]
fn spherical_process_selects_spherical_in_majority() {
    let mut wins = 0;
    for seed in 0..20 {
        // the range spans a few sample spacings, where the three shapes differ;
        // with a range far above the spacing only the slope at the origin matters
        let samples = spherical_field(seed, 300, 2.0);
        let sel = kriging_grid_search(&samples, &VariogramKind::ALL, 5, None, seed).unwrap();
        if sel.kind == VariogramKind::Spherical {
            wins += 1;
        }
    }
    assert!(wins > 10, "spherical chosen {wins} of 20 times");
}
