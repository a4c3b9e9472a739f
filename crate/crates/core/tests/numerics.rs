use gridraid_core::linalg::{max_generalized_eigenpair, solve_spd, symmetric_eigen, Cholesky, DenseMatrix};
use gridraid_core::stats::{chi2_cdf, chi2_quantile, noncentral_chi2_cdf, noncentral_chi2_sf, regularized_lower_gamma};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Sum of `k` squared normals, the first shifted by `√λ`.
fn noncentral_sample(rng: &mut ChaCha8Rng, k: u32, lambda: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..k {
        let z = normal(rng) + if i == 0 { lambda.sqrt() } else { 0.0 };
        s += z * z;
    }
    s
}

#[test]
fn chi2_even_dof_matches_poisson_closed_form() {
    // P(χ²_{2r} ≤ x) = 1 − e^{−x/2} Σ_{i<r} (x/2)^i / i!
    for r in 1..=20u32 {
        for &x in &[0.5, 3.0, 10.0, 35.0, 80.0] {
            let h = x / 2.0;
            let mut term = 1.0;
            let mut sum = 0.0;
            for i in 0..r {
                if i > 0 {
                    term *= h / i as f64;
                }
                sum += term;
            }
            let exact = 1.0 - (-h).exp() * sum;
            assert!((chi2_cdf(x, 2 * r).unwrap() - exact).abs() < 1e-12, "r={r} x={x}");
        }
    }
}

#[test]
fn gamma_small_shape() {
    // P(1, x) = 1 − e^{−x}
    for &x in &[1e-3, 0.2, 1.0, 7.5, 40.0] {
        assert!((regularized_lower_gamma(1.0, x) - (1.0 - (-x).exp())).abs() < 1e-13);
    }
}

#[test]
fn noncentral_cdf_against_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: [(u32, f64, f64); 4] = [(1, 2.0, 3.0), (5, 10.0, 12.0), (20, 4.0, 30.0), (41, 15.0, 56.94)];
    for (k, lambda, x) in points {
        let n = 200_000;
        let hits = (0..n).filter(|_| noncentral_sample(&mut rng, k, lambda) <= x).count();
        let emp = hits as f64 / n as f64;
        let cdf = noncentral_chi2_cdf(x, k, lambda).unwrap();
        assert!((cdf - emp).abs() < 0.005, "k={k} λ={lambda} x={x}: {cdf} vs {emp}");
    }
}

#[test]
fn generalized_eigenpair_beats_random_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let n = rng.random_range(2..6);
        let a = DenseMatrix::from_row_major(n + 2, n, (0..(n + 2) * n).map(|_| normal(&mut rng)).collect()).unwrap();
        let b = DenseMatrix::from_row_major(n + 3, n, (0..(n + 3) * n).map(|_| normal(&mut rng)).collect()).unwrap();
        let q = a.weighted_gram(&vec![1.0; n + 2]);
        let g = b.weighted_gram(&vec![1.0; n + 3]);
        let top = max_generalized_eigenpair(&q, &g).unwrap();
        let quad = |m: &DenseMatrix, v: &[f64]| -> f64 {
            let mv = m.matvec(v).unwrap();
            mv.iter().zip(v).map(|(x, y)| x * y).sum()
        };
        let mut best: f64 = 0.0;
        for _ in 0..50_000 {
            let v: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            best = best.max(quad(&q, &v) / quad(&g, &v));
        }
        assert!(best <= top.value * (1.0 + 1e-9));
        assert!((quad(&q, &top.vector) / quad(&g, &top.vector) - top.value).abs() < 1e-9 * top.value);
    }
}

fn spd(seed: u64, n: usize) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DenseMatrix::from_row_major(n + 1, n, (0..(n + 1) * n).map(|_| normal(&mut rng)).collect()).unwrap();
    a.weighted_gram(&vec![1.0; n + 1]).add(&DenseMatrix::identity(n).scaled(0.1)).unwrap()
}

proptest! {
    #[test]
    fn cholesky_solves(seed in any::<u64>(), n in 1usize..8) {
        let a = spd(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let b: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let x = Cholesky::factor(&a).unwrap().solve_vec(&b);
        let r = a.matvec(&x).unwrap();
        for (u, v) in r.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()));
        }
        let inv = solve_spd(&a, &DenseMatrix::identity(n)).unwrap();
        prop_assert!(a.matmul(&inv).unwrap().sub(&DenseMatrix::identity(n)).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn jacobi_reconstructs(seed in any::<u64>(), n in 1usize..8) {
        let a = spd(seed, n);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let rebuilt = vecs.matmul(&DenseMatrix::from_diag(&vals)).unwrap().matmul(&vecs.transpose()).unwrap();
        prop_assert!(rebuilt.sub(&a).unwrap().max_abs() < 1e-9 * (1.0 + a.max_abs()));
        let orth = vecs.transpose().matmul(&vecs).unwrap();
        prop_assert!(orth.sub(&DenseMatrix::identity(n)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn generalized_pair_satisfies_equation(seed in any::<u64>(), n in 1usize..7) {
        let q = spd(seed, n);
        let g = spd(seed.wrapping_add(17), n);
        let top = max_generalized_eigenpair(&q, &g).unwrap();
        let lhs = q.matvec(&top.vector).unwrap();
        let rhs = g.matvec(&top.vector).unwrap();
        for (u, v) in lhs.iter().zip(&rhs) {
            prop_assert!((u - top.value * v).abs() < 1e-7 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn quantile_round_trip(p in 0.001f64..0.999, k in 1u32..80) {
        let x = chi2_quantile(p, k).unwrap();
        prop_assert!((chi2_cdf(x, k).unwrap() - p).abs() < 1e-10);
    }

    #[test]
    fn noncentral_sf_increases_with_lambda(k in 1u32..60, l1 in 0.0f64..50.0, dl in 0.01f64..20.0) {
        let tau = chi2_quantile(0.95, k).unwrap();
        let a = noncentral_chi2_sf(tau, k, l1).unwrap();
        let b = noncentral_chi2_sf(tau, k, l1 + dl).unwrap();
        prop_assert!(b >= a - 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
