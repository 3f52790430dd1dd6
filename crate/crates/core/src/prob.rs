//! Scalar probability kernels: the standard normal quantile function and
//! empirical order statistics.

#![allow(clippy::excessive_precision)]

use crate::error::{input, Result};

// Wichura (1988), algorithm AS 241 (PPND16). Relative accuracy about 1e-16.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

#[inline(always)]
fn horner(c: &[f64; 8], x: f64) -> f64 {
    let mut acc = c[7];
    for k in (0..7).rev() {
        acc = acc * x + c[k];
    }
    acc
}

/// Standard normal quantile function `Φ⁻¹(p)` for `p ∈ (0, 1)`.
///
/// Returns `±∞` at the endpoints and NaN outside `[0, 1]`.
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    if tail <= 0.0 {
        return if q < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        r -= 5.0;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Rank `k = ⌈p·R⌉` (1-based) of the order statistic returned by
/// [`empirical_quantile`].
///
/// Products within a few ulps of an integer are snapped to it, so that e.g.
/// `0.95 · 20000` selects rank 19000 regardless of how `0.95` rounds.
pub fn order_statistic_rank(p: f64, len: usize) -> usize {
    let target = p * len as f64;
    let nearest = target.round();
    let k = if (target - nearest).abs() <= 1e-9 * target.max(1.0) { nearest } else { target.ceil() };
    (k as usize).clamp(1, len)
}

/// The `⌈p·R⌉`-th smallest value (the upper empirical quantile).
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return input("empirical quantile of an empty sample");
    }
    if !(p > 0.0 && p < 1.0) {
        return input(format!("quantile level {p} outside (0, 1)"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return input("empirical quantile of non-finite values");
    }
    let k = order_statistic_rank(p, values.len());
    let mut scratch = values.to_vec();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

    #[test]
    fn normal_quantile_matches_independent_inverse() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        for &p in &[1e-300, 1e-20, 1e-10, 1e-4, 0.01, 0.075, 0.2, 0.5, 0.8, 0.925, 0.99, 1.0 - 1e-10] {
            let ours = normal_quantile(p);
            // Round-trip through an independent CDF.
            let back = normal.cdf(ours);
            let rel = ((back - p) / p).abs();
            assert!(rel < 1e-9, "p = {p}: Φ(Φ⁻¹(p)) = {back}");
        }
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert_eq!(normal_quantile(0.5), 0.0);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn normal_quantile_is_odd() {
        for &p in &[0.001, 0.01, 0.3, 0.45] {
            assert!((normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_of_one_to_ten_at_95_percent_is_ten() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.95).unwrap(), 10.0);
        assert_eq!(empirical_quantile(&v, 0.5).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&v, 0.51).unwrap(), 6.0);
    }

    #[test]
    fn quantile_of_singleton() {
        for &p in &[0.01, 0.5, 0.99] {
            assert_eq!(empirical_quantile(&[3.0], p).unwrap(), 3.0);
        }
    }

    #[test]
    fn quantile_rejects_bad_input() {
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&[1.0], 0.0).is_err());
        assert!(empirical_quantile(&[1.0], 1.0).is_err());
        assert!(empirical_quantile(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn rank_snaps_representation_error() {
        assert_eq!(order_statistic_rank(0.95, 20_000), 19_000);
        assert_eq!(order_statistic_rank(1.0 - 0.05, 100_000), 95_000);
        assert_eq!(order_statistic_rank(0.95, 10), 10);
    }

    #[test]
    fn chi_square_one_quantile_from_squared_normals() {
        let oracle = ChiSquared::new(1.0).unwrap().inverse_cdf(0.95);
        assert!((oracle - 3.8415).abs() < 1e-4);
        let mut rng = crate::rng::RngState::new(11);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.standard_normal().powi(2)).collect();
        let q = empirical_quantile(&draws, 0.95).unwrap();
        assert!((q - oracle).abs() < 0.05, "{q} vs {oracle}");
    }
}
