//! Rotator datapaths against integer, search and double-precision oracles.

use std::collections::HashMap;

use mscfft::fxnum::{CFx, FixedFormat};
use mscfft::rotor::{
    csd_recipe, rotate_general, sas_decompose, w16_shared_recipes, w8_constant, w8_csd_recipe, CoefficientTable,
    Datapaths, RotorError, TwiddleExponent,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fewest signed powers of two summing to `k`, by exhaustive recursion.
fn min_signed_digits(k: u64, memo: &mut HashMap<u64, u32>) -> u32 {
    if k <= 1 {
        return k as u32;
    }
    if let Some(&v) = memo.get(&k) {
        return v;
    }
    let v = if k.is_multiple_of(2) {
        min_signed_digits(k / 2, memo)
    } else {
        1 + min_signed_digits((k - 1) / 2, memo).min(min_signed_digits(k.div_ceil(2), memo))
    };
    memo.insert(k, v);
    v
}

#[test]
fn csd_recipes_are_minimal_and_exact() {
    let mut memo = HashMap::new();
    for k in 1..4096i64 {
        let r = csd_recipe(k);
        assert_eq!(r.op_count() as u32, min_signed_digits(k as u64, &mut memo) - 1, "k={k}");
        for x in [-2048i128, -1, 0, 1, 7, 2047] {
            assert_eq!(r.evaluate(x), k as i128 * x);
        }
    }
}

#[test]
fn fixed_constants_exhaustive_12_bit() {
    let w8 = w8_csd_recipe(8).unwrap();
    let w16 = w16_shared_recipes();
    assert_eq!(w8.target, 181);
    assert!(w8.op_count() <= 4);
    assert!(w16.adder_count() <= 3);
    for x in -2048i128..2048 {
        assert_eq!(w8.evaluate(x), 181 * x);
        for (k, r) in [473, 362, 196].into_iter().zip(w16.recipes()) {
            assert_eq!(r.target, k);
            assert_eq!(r.evaluate(x), k as i128 * x);
            assert_eq!(w16.multiply(k, x), k as i128 * x);
        }
    }
}

#[test]
fn w8_constant_precisions() {
    for frac in 6..=12 {
        let k = w8_constant(frac);
        assert_eq!(
            k,
            ((1u64 << frac) as f64 * std::f64::consts::FRAC_1_SQRT_2).round() as i64
        );
        let r = w8_csd_recipe(frac).unwrap();
        assert!(r.op_count() <= 4, "frac {frac}");
        for x in (-2048i128..2048).step_by(13) {
            assert_eq!(r.evaluate(x), k as i128 * x);
        }
    }
    // 5793/8192 and beyond need five or more adders
    for frac in 13..=16 {
        assert!(matches!(w8_csd_recipe(frac), Err(RotorError::RecipeTooLong { .. })));
    }
}

fn w(base: u32, m: u32) -> TwiddleExponent {
    TwiddleExponent::new(base, m as u64).unwrap()
}

fn ideal(x: CFx, t: TwiddleExponent, f: FixedFormat) -> (f64, f64) {
    let (re, im) = x.to_f64();
    let y = Complex64::new(re, im) * t.value();
    let clamp = |v: f64| v.clamp(f.min_value(), f.max_value());
    (clamp(y.re), clamp(y.im))
}

#[test]
fn w4_datapath_exhaustive_12_bit() {
    let f = FixedFormat::q1_11();
    let dp = Datapaths::default();
    for re in f.min_raw()..=f.max_raw() {
        for im in (f.min_raw()..=f.max_raw()).step_by(5) {
            let x = CFx::from_raw(re, im, f);
            for m in 0..4 {
                let (y, _) = dp.specialized(x, w(4, m)).unwrap();
                let (er, ei) = ideal(x, w(4, m), f);
                assert!((y.re.to_f64() - er).abs() <= f.ulp() && (y.im.to_f64() - ei).abs() <= f.ulp());
            }
        }
    }
}

#[test]
fn specialized_agree_with_exact_rotation_within_1_ulp() {
    let f = FixedFormat::q1_11();
    let dp = Datapaths::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100_000 {
        let x = CFx::from_raw(rng.gen_range(-2048..2048), rng.gen_range(-2048..2048), f);
        for base in [8, 16] {
            let m = rng.gen_range(0..base);
            let (y, _) = dp.specialized(x, w(base, m)).unwrap();
            let (er, ei) = ideal(x, w(base, m), f);
            let (dr, di) = ((y.re.to_f64() - er).abs(), (y.im.to_f64() - ei).abs());
            assert!(dr <= f.ulp() && di <= f.ulp(), "x={x} W_{base}^{m}: {dr} {di}");
        }
    }
}

#[test]
fn general_table_points_are_on_the_unit_circle() {
    for wl in [10, 12, 16, 24] {
        let data = FixedFormat::fractional(wl).unwrap();
        let c = CoefficientTable::coefficient_format(data);
        let table = CoefficientTable::full(128, c).unwrap();
        assert_eq!(table.iter().count(), 128);
        for (_, v) in table.iter() {
            let (re, im) = v.to_f64();
            assert!((re * re + im * im - 1.0).abs() <= 2.0 * c.ulp(), "wl {wl}");
        }
    }
}

#[test]
fn general_rotation_24_bit_matches_double() {
    let f = FixedFormat::fractional(24).unwrap();
    let table = CoefficientTable::full(128, CoefficientTable::coefficient_format(f)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let x = CFx::quantize(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7), f);
        for m in 0..128 {
            let y = rotate_general(x, w(128, m), &table).unwrap();
            let (er, ei) = ideal(x, w(128, m), f);
            assert!((y.re.to_f64() - er).abs() < 1e-5 && (y.im.to_f64() - ei).abs() < 1e-5);
        }
    }
}

proptest! {
    #[test]
    fn sas_reconstructs_every_twiddle(k in 3u32..=10, m in any::<u32>()) {
        let base = 1u32 << k;
        let t = w(base, m % base);
        let s = sas_decompose(t);
        prop_assert!((s.coefficient() - t.value()).norm() < 1e-12);
        prop_assert!(s.alpha >= 0.0 && s.alpha <= std::f64::consts::FRAC_PI_4 + 1e-12);
    }

    #[test]
    fn csd_recipe_exact_for_any_constant(k in 1i64..(1 << 20), x in -(1i128 << 23)..(1i128 << 23)) {
        prop_assert_eq!(csd_recipe(k).evaluate(x), k as i128 * x);
    }
}
