//! The 2-D PCA projection against an independent full eigendecomposition.

use mochi_core::rng::RngKey;
use mochi_core::vecspace::{l2_normalize, pca_project_2d, RawVector, UnitVector};
use rand::Rng;

fn random_cloud(n: usize, d: usize, seed: u64) -> Vec<UnitVector> {
    let mut rng = RngKey::from_seed(seed).stream();
    (0..n)
        .map(|_| {
            let coords: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            l2_normalize(&RawVector::new(coords).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn retained_variance_matches_full_eigensolve() {
    for seed in [3u64, 17, 99] {
        let d = 16;
        let points = random_cloud(200, d, seed);
        let pca = pca_project_2d(&points).unwrap();

        // oracle: covariance assembled by hand, diagonalized by nalgebra
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for p in &points {
            for (m, c) in mean.iter_mut().zip(p.coords()) {
                *m += c / n;
            }
        }
        let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
        for p in &points {
            let centered: Vec<f64> =
                p.coords().iter().zip(&mean).map(|(c, m)| c - m).collect();
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += centered[i] * centered[j] / n;
                }
            }
        }
        let mut eigvals: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigvals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expected = (eigvals[0] + eigvals[1]) / eigvals.iter().sum::<f64>();

        assert!(
            (pca.retained_variance - expected).abs() < 1e-9,
            "seed {seed}: retained {} vs eigensolve {expected}",
            pca.retained_variance
        );
    }
}

#[test]
fn projected_coordinate_variances_match_leading_eigenvalues() {
    let points = random_cloud(300, 12, 7);
    let pca = pca_project_2d(&points).unwrap();
    let n = points.len() as f64;

    let mut mean = vec![0.0; 12];
    for p in &points {
        for (m, c) in mean.iter_mut().zip(p.coords()) {
            *m += c / n;
        }
    }
    let mut cov = nalgebra::DMatrix::<f64>::zeros(12, 12);
    for p in &points {
        let centered: Vec<f64> = p.coords().iter().zip(&mean).map(|(c, m)| c - m).collect();
        for i in 0..12 {
            for j in 0..12 {
                cov[(i, j)] += centered[i] * centered[j] / n;
            }
        }
    }
    let mut eigvals: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigvals.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // the projected coordinates are centered, so their raw second moments
    // are the variances along the two leading axes
    let var_x: f64 = pca.coords.iter().map(|(x, _)| x * x).sum::<f64>() / n;
    let var_y: f64 = pca.coords.iter().map(|(_, y)| y * y).sum::<f64>() / n;
    assert!((var_x - eigvals[0]).abs() < 1e-9, "{var_x} vs {}", eigvals[0]);
    assert!((var_y - eigvals[1]).abs() < 1e-9, "{var_y} vs {}", eigvals[1]);
}
