//! Fixed-point arithmetic against an exact rational oracle.

use mscfft::fxnum::{cfx_mul, fx_add, fx_mul, fx_sub, quantize, CFx, FixedFormat, Fx, Overflow, Rounding};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use proptest::prelude::*;

fn ratio(raw: i64, frac: u32) -> BigRational {
    BigRational::new(BigInt::from(raw), BigInt::from(1u64 << frac))
}

/// Round `v·2^frac` to an integer under `mode`, then saturate to `fmt`.
fn oracle_round(v: &BigRational, fmt: FixedFormat) -> i64 {
    let scaled = v * BigRational::from_integer(BigInt::from(1u64 << fmt.frac_bits()));
    let floor = scaled.floor();
    let rem = &scaled - &floor;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let floor_i = floor.to_integer();
    let r = match fmt.rounding {
        Rounding::Truncate => floor_i,
        Rounding::HalfAwayFromZero => {
            if rem > half || (rem == half && scaled.is_positive()) {
                floor_i + 1
            } else {
                floor_i
            }
        }
        Rounding::HalfEven => {
            let odd = (&floor_i % BigInt::from(2)) != BigInt::zero();
            if rem > half || (rem == half && odd) {
                floor_i + 1
            } else {
                floor_i
            }
        }
    };
    r.to_i64().unwrap().clamp(fmt.min_raw(), fmt.max_raw())
}

fn modes() -> [Rounding; 3] {
    [Rounding::Truncate, Rounding::HalfAwayFromZero, Rounding::HalfEven]
}

#[test]
fn product_of_quantized_root_half() {
    let f = FixedFormat::q1_11();
    #[allow(clippy::approx_constant)]
    let x = quantize(0.7071, f);
    let p = fx_mul(x, x, f);
    assert!((p.to_f64() - 0.5).abs() <= f.ulp());
    assert_eq!(p.raw(), oracle_round(&(ratio(x.raw(), 11) * ratio(x.raw(), 11)), f));
}

#[test]
fn one_plus_j_times_w8() {
    let f = FixedFormat::q1_11();
    let c = FixedFormat::new(13, 11).unwrap();
    let a = CFx::from_raw(2047, 2047, f);
    let w = CFx::quantize(std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2, c);
    let y = cfx_mul(a, w, f);
    let (ar, ai) = (ratio(2047, 11), ratio(2047, 11));
    let (wr, wi) = (ratio(w.re.raw(), 11), ratio(w.im.raw(), 11));
    let re = &ar * &wr - &ai * &wi;
    let im = &ar * &wi + &ai * &wr;
    assert_eq!(y.raw(), (oracle_round(&re, f), oracle_round(&im, f)));
    assert_eq!(y.re.raw(), 2047); // saturated: √2 · (1 − 2^-11) exceeds the range
}

#[test]
fn round_trip_exhaustive_to_14_bits() {
    for wl in 4..=14u32 {
        for frac in [0, wl / 2, wl - 1] {
            for r in modes() {
                let f = FixedFormat::new(wl, frac).unwrap().with_rounding(r);
                for raw in f.min_raw()..=f.max_raw() {
                    let x = Fx::from_raw(raw, f);
                    assert_eq!(quantize(x.to_f64(), f), x);
                }
            }
        }
    }
}

#[test]
fn w4_rotation_is_exact_swap_exhaustive_12_bit() {
    let f = FixedFormat::q1_11();
    let c = FixedFormat::new(12, 10).unwrap();
    let minus_j = CFx::quantize(0.0, -1.0, c);
    for re in f.min_raw()..=f.max_raw() {
        for im in (f.min_raw()..=f.max_raw()).step_by(7) {
            let y = cfx_mul(CFx::from_raw(re, im, f), minus_j, f);
            // (re + j·im)(−j) = im − j·re, with −(−2048) saturating
            assert_eq!(y.raw(), (im, (-re).min(f.max_raw())));
        }
    }
}

proptest! {
    #[test]
    fn wrapping_add_sub_is_integers_mod_2w(wl in 4u32..=32, a in any::<i64>(), b in any::<i64>()) {
        let f = FixedFormat::new(wl, wl - 1).unwrap().with_overflow(Overflow::Wrap);
        let m = 1i128 << wl;
        let canon = |v: i128| {
            let r = v.rem_euclid(m);
            (if r >= m / 2 { r - m } else { r }) as i64
        };
        let (x, y) = (Fx::from_raw(canon(a as i128), f), Fx::from_raw(canon(b as i128), f));
        prop_assert_eq!(fx_add(x, y).unwrap().raw(), canon(x.raw() as i128 + y.raw() as i128));
        prop_assert_eq!(fx_sub(x, y).unwrap().raw(), canon(x.raw() as i128 - y.raw() as i128));
        prop_assert_eq!(fx_sub(fx_add(x, y).unwrap(), y).unwrap(), x);
    }

    #[test]
    fn saturating_add_clamps(a in -2048i64..2048, b in -2048i64..2048) {
        let f = FixedFormat::q1_11();
        let s = fx_add(Fx::from_raw(a, f), Fx::from_raw(b, f)).unwrap();
        prop_assert_eq!(s.raw(), (a + b).clamp(-2048, 2047));
    }

    #[test]
    fn fx_mul_matches_rational(
        wa in 4u32..=24, wb in 4u32..=24, wo in 4u32..=24,
        a in any::<i64>(), b in any::<i64>(), mode in 0usize..3,
    ) {
        let fa = FixedFormat::new(wa, wa - 1).unwrap();
        let fb = FixedFormat::new(wb, wb / 2).unwrap();
        let fo = FixedFormat::new(wo, wo - 2).unwrap().with_rounding(modes()[mode]);
        let x = Fx::from_raw(a.rem_euclid(fa.max_raw() - fa.min_raw() + 1) + fa.min_raw(), fa);
        let y = Fx::from_raw(b.rem_euclid(fb.max_raw() - fb.min_raw() + 1) + fb.min_raw(), fb);
        let exact = ratio(x.raw(), fa.frac_bits()) * ratio(y.raw(), fb.frac_bits());
        prop_assert_eq!(fx_mul(x, y, fo).raw(), oracle_round(&exact, fo));
    }

    #[test]
    fn cfx_mul_rounds_once(
        ar in -2048i64..2048, ai in -2048i64..2048,
        wr in -4096i64..4096, wi in -4096i64..4096, mode in 0usize..3,
    ) {
        let f = FixedFormat::q1_11().with_rounding(modes()[mode]);
        let c = FixedFormat::new(13, 11).unwrap();
        let y = cfx_mul(CFx::from_raw(ar, ai, f), CFx::from_raw(wr, wi, c), f);
        let (xr, xi, cr, ci) = (ratio(ar, 11), ratio(ai, 11), ratio(wr, 11), ratio(wi, 11));
        let re = &xr * &cr - &xi * &ci;
        let im = &xr * &ci + &xi * &cr;
        prop_assert_eq!(y.raw(), (oracle_round(&re, f), oracle_round(&im, f)));
    }
}
