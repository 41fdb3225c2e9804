use lodestar_core::gp::{fit, FitOptions, GpModel, KernelConfig};
use proptest::prelude::*;

fn model() -> GpModel {
    let xs: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 / 6.0, (i * i % 5) as f64 / 4.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (5.0 * x[0]).sin() + x[1] * x[1]).collect();
    fit(&xs, &ys, &FitOptions::default()).unwrap()
}

#[test]
fn sample_moments_within_three_standard_errors() {
    let model = model();
    let points = vec![vec![0.1, 0.9], vec![0.45, 0.3], vec![0.5, 0.35], vec![0.95, 0.05]];
    let n = 50_000;
    let draws = model.sample_posterior(&points, n, 17).unwrap();
    let nf = n as f64;
    for (j, x) in points.iter().enumerate() {
        let p = model.predict(x).unwrap();
        let col = draws.column(j);
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let se_mean = p.std / nf.sqrt();
        assert!((mean - p.mean).abs() < 3.0 * se_mean, "mean {j}: {mean} vs {}", p.mean);
        // var of the sample variance of a Gaussian is 2σ⁴/(n−1)
        let se_var = p.std * p.std * (2.0 / (nf - 1.0)).sqrt();
        assert!((var - p.std * p.std).abs() < 3.0 * se_var, "var {j}: {var} vs {}", p.std * p.std);
    }
}

#[test]
fn sample_covariance_matches_joint_posterior() {
    let model = model();
    let points = vec![vec![0.2, 0.2], vec![0.25, 0.22], vec![0.8, 0.6]];
    let n = 50_000;
    let draws = model.sample_posterior(&points, n, 5).unwrap();
    let (_, cov) = model.joint_posterior_standardized(&points).unwrap();
    let scale = model.target_std() * model.target_std();
    let q = points.len();
    let means: Vec<f64> = (0..q).map(|j| draws.column(j).sum() / n as f64).collect();
    let mut diff = 0.0;
    let mut norm = 0.0;
    for a in 0..q {
        for b in 0..q {
            let c: f64 = (0..n)
                .map(|i| (draws[(i, a)] - means[a]) * (draws[(i, b)] - means[b]))
                .sum::<f64>()
                / (n - 1) as f64;
            let exact = cov[(a, b)] * scale;
            diff += (c - exact).powi(2);
            norm += exact * exact;
        }
    }
    assert!((diff / norm).sqrt() < 0.05, "relative Frobenius error {}", (diff / norm).sqrt());
}

proptest! {
    #[test]
    fn posterior_std_below_prior(
        seed in 0u64..500,
        ls in 0.05f64..2.0,
        signal in 0.1f64..5.0,
        noise in 1e-6f64..0.1,
        probe in prop::collection::vec(0.0f64..1.0, 2),
    ) {
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let t = ((seed + i as u64 * 7919) % 1000) as f64 / 1000.0;
                vec![t, (t * 13.0).fract()]
            })
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] - 2.0 * x[1]).collect();
        let model = GpModel::with_kernel(&xs, &ys, KernelConfig::isotropic(2, ls, signal, noise)).unwrap();
        let p = model.predict_standardized(&probe).unwrap();
        prop_assert!(p.std <= signal.sqrt() + 1e-9);
    }
}
