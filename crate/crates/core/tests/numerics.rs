use lodestar_core::acquisition::{analytic_logei, log_h, qlogei, C1};
use lodestar_core::gp::{standard_normal_matrix, PosteriorPrediction};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// log h(z) = -z²/2 - log√(2π) + log ∫₀^∞ u·exp(zu - u²/2) du.
/// The integrand is positive, so composite quadrature has no cancellation.
fn log_h_oracle(z: f64, rule: &[(f64, f64)]) -> f64 {
    let (scale, upper) = if z < -1.0 {
        (1.0 / -z, 80.0 / -z)
    } else {
        (0.25, z.max(0.0) + 40.0)
    };
    let panels = (upper / (scale * 0.25)).ceil() as usize;
    let width = upper / panels as f64;
    // factor out the integrand's peak exponent to avoid underflow
    let peak = if z > 0.0 { 0.5 * z * z } else { 0.0 };
    let mut total = 0.0;
    for p in 0..panels {
        let a = p as f64 * width;
        for &(x, w) in rule {
            let u = a + 0.5 * width * (x + 1.0);
            total += 0.5 * width * w * u * (z * u - 0.5 * u * u - peak).exp();
        }
    }
    -0.5 * z * z - C1 + peak + total.ln()
}

#[test]
fn log_h_against_quadrature_on_grid() {
    let rule = gauss_legendre(20);
    for i in 0..=380 {
        let z = -30.0 + i as f64 * 0.1;
        let oracle = log_h_oracle(z, &rule);
        let got = log_h(z).unwrap();
        // |exp(a) - exp(b)| / exp(b) = |expm1(a - b)|
        let rel = (got - oracle).exp_m1().abs();
        assert!(rel < 1e-10, "z = {z}: {got} vs {oracle} (rel {rel:e})");
    }
}

#[test]
fn quadrature_oracle_sanity() {
    // h(0) = φ(0)
    let rule = gauss_legendre(20);
    assert!((log_h_oracle(0.0, &rule) + C1).abs() < 1e-14);
}

proptest! {
    #[test]
    fn log_h_monotone(a in -1e3f64..50.0, b in -1e3f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(log_h(lo).unwrap() <= log_h(hi).unwrap());
    }

    #[test]
    fn analytic_logei_increasing_in_mean(mu in -20f64..20.0, d in 1e-6f64..5.0, sigma in 1e-3f64..10.0) {
        let a = analytic_logei(PosteriorPrediction { mean: mu, std: sigma }, 0.0).unwrap();
        let b = analytic_logei(PosteriorPrediction { mean: mu + d, std: sigma }, 0.0).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn analytic_logei_translation(mu in -20f64..20.0, sigma in 1e-2f64..10.0, c in -1e3f64..1e3) {
        let a = analytic_logei(PosteriorPrediction { mean: mu, std: sigma }, 0.5).unwrap();
        let b = analytic_logei(PosteriorPrediction { mean: mu + c, std: sigma }, 0.5 + c).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn qlogei_permutation_invariant(seed in 0u64..1000, rows in 1usize..40, cols in 1usize..6, shift in 1usize..40) {
        let m = standard_normal_matrix(rows, cols, seed);
        let base = qlogei(&m, 0.3, 1e-6, 1e-2);
        let rot_rows = DMatrix::from_fn(rows, cols, |i, j| m[((i + shift) % rows, j)]);
        let rot_cols = DMatrix::from_fn(rows, cols, |i, j| m[(i, (j + shift) % cols)]);
        prop_assert_eq!(base.to_bits(), qlogei(&rot_rows, 0.3, 1e-6, 1e-2).to_bits());
        prop_assert_eq!(base.to_bits(), qlogei(&rot_cols, 0.3, 1e-6, 1e-2).to_bits());
    }
}
