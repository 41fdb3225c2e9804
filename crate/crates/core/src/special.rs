//! Numerically stable scalar primitives used by the acquisition functions.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Above this argument `erfcx` switches from `exp(x²)·erfc(x)` to the
/// continued fraction.
const ERFCX_CF_THRESHOLD: f64 = 5.0;
const ERFCX_CF_DEPTH: usize = 120;

pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Tail `r` of the Laplace continued fraction, with
/// `erfcx(x) = 1 / (√π (x + r))` for `x > 0`.
pub(crate) fn erfcx_cf_tail(x: f64) -> f64 {
    let mut t = 0.0;
    for k in (1..=ERFCX_CF_DEPTH).rev() {
        t = (k as f64 * 0.5) / (x + t);
    }
    t
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Overflows to `+∞` for `x < -26.6`, where the value itself exceeds the
/// `f64` range.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        let e = (x * x).exp();
        return 2.0 * e - erfcx(-x);
    }
    if x < ERFCX_CF_THRESHOLD {
        (x * x).exp() * libm::erfc(x)
    } else {
        FRAC_1_SQRT_PI / (x + erfcx_cf_tail(x))
    }
}

/// `log(1 - exp(x))` for `x < 0`.
pub fn log1mexp(x: f64) -> Result<f64> {
    if x.is_nan() || x >= 0.0 {
        return Err(Error::Domain(format!("log1mexp requires x < 0, got {x}")));
    }
    Ok(log1mexp_unchecked(x))
}

#[inline]
pub(crate) fn log1mexp_unchecked(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `log(softplus(x))` with `softplus(x) = log(1 + exp(x))`.
fn log_softplus_unit(x: f64) -> f64 {
    if x < -30.0 {
        // log(log1p(e^x)) = x + log(1 - e^x/2 + e^{2x}/3 - ...)
        x - 0.5 * x.exp()
    } else if x > 30.0 {
        (x + (-x).exp()).ln()
    } else {
        x.exp().ln_1p().ln()
    }
}

/// Temperature-scaled `log(τ·softplus(x/τ))`; tends to `log(max(x, 0))` as
/// `τ → 0`.
pub fn logsoftplus(x: f64, tau: f64) -> f64 {
    log_softplus_unit(x / tau) + tau.ln()
}

/// `log Σ exp(v)`. Terms are summed in sorted order so the result does not
/// depend on the order of `values`.
pub fn logsumexp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().unwrap();
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = sorted.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed at 50 significant digits.
    const ERFCX_REFERENCE: &[(f64, f64)] = &[
        (0.0, 1.0),
        (0.5, 0.615_690_344_192_925_874_87),
        (1.0, 0.427_583_576_155_807_004_41),
        (3.0, 0.179_001_151_181_389_950_42),
        (4.9, 0.112_879_090_559_758_755_19),
        (5.0, 0.110_704_637_733_068_626_37),
        (5.1, 0.108_611_026_313_932_794_47),
        (10.0, 0.056_140_992_743_822_585_858),
        (30.0, 0.018_795_888_861_416_751_497),
        (1e3, 0.000_564_189_301_453_387_654_2),
        (1e8, 5.641_895_835_477_562_587_4e-9),
        (-1.0, 5.008_980_080_762_283_466_3),
        (-3.0, 16_205.988_853_999_586_625),
    ];

    #[test]
    fn erfcx_matches_reference() {
        for &(x, want) in ERFCX_REFERENCE {
            let got = erfcx(x);
            assert!(
                ((got - want) / want).abs() < 1e-13,
                "erfcx({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn erfcx_branches_meet() {
        let below = (ERFCX_CF_THRESHOLD * ERFCX_CF_THRESHOLD).exp() * libm::erfc(ERFCX_CF_THRESHOLD);
        let above = FRAC_1_SQRT_PI / (ERFCX_CF_THRESHOLD + erfcx_cf_tail(ERFCX_CF_THRESHOLD));
        assert!(((below - above) / above).abs() < 1e-14);
    }

    #[test]
    fn log1mexp_identity_and_domain() {
        let got = log1mexp(-std::f64::consts::LN_2).unwrap();
        assert!((got - 0.5f64.ln()).abs() < 1e-15);
        assert!(log1mexp(0.0).is_err());
        assert!(log1mexp(f64::NAN).is_err());
        // (x, log(1 - e^x)) at 50 digits
        let reference = [
            (-1e-12, -27.631_021_115_929_048_208),
            (-1e-3, -6.908_255_237_315_470_732_6),
            (-0.5, -0.932_752_129_567_188_571_89),
            (-1.0, -0.458_675_145_387_081_891_02),
            (-5.0, -0.006_760_749_449_488_557_825_9),
            (-30.0, -9.357_622_968_840_612_430_5e-14),
        ];
        for (x, want) in reference {
            let got = log1mexp(x).unwrap();
            assert!(((got - want) / want).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
        assert!(log1mexp(-1000.0).unwrap().abs() < 1e-300);
    }

    #[test]
    fn logsoftplus_tails() {
        let v = logsoftplus(-800.0, 1.0);
        assert!(v.is_finite());
        // naive form underflows to -inf
        assert_eq!((1.0 + f64::exp(-800.0)).ln().ln(), f64::NEG_INFINITY);
        assert_eq!(v, -800.0);
        // (x, log(log(1 + e^x))) at 50 digits
        let reference = [
            (-35.0, -35.000_000_000_000_000_315),
            (-20.0, -20.000_000_001_030_576_81),
            (-1.0, -1.160_716_375_388_897_577_4),
            (0.0, -0.366_512_920_581_664_327_01),
            (1.0, 0.272_513_880_502_583_402_55),
            (20.0, 2.995_732_273_657_048_674_4),
            (35.0, 3.555_348_061_489_413_697_7),
        ];
        for (x, want) in reference {
            let got = logsoftplus(x, 1.0);
            assert!(((got - want) / want).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
        assert!((logsoftplus(1e6, 1e-6) - 1e6f64.ln()).abs() < 1e-12);
        assert!(logsoftplus(-1e6, 1e-6).is_finite());
    }

    #[test]
    fn logsumexp_is_order_free() {
        let a = [0.1, -3.0, 2.5, 1e-3, 7.0];
        let mut b = a;
        b.reverse();
        assert_eq!(logsumexp(&a).to_bits(), logsumexp(&b).to_bits());
        assert!((logsumexp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn cdf_pdf_basics() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_pdf(0.0) - FRAC_1_SQRT_2PI).abs() < 1e-16);
    }
}
