use mscfft::flowgraph::{bit_reverse_order, build_plan, fft_float, naive_dft, DecompositionSpec, Frame};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn natural(plan_spec: &DecompositionSpec, x: &[Complex64]) -> Vec<Complex64> {
    let plan = build_plan(plan_spec).unwrap();
    let y = fft_float(&Frame::natural(x.to_vec()), &plan).unwrap();
    bit_reverse_order(&y).unwrap().samples
}

#[test]
fn float_plan_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = DecompositionSpec::msc128();
    for _ in 0..1000 {
        let x = random_frame(&mut rng, 128);
        assert!(max_err(&natural(&spec, &x), &naive_dft(&x)) < 1e-9);
    }
}

#[test]
fn decomposition_does_not_change_the_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let specs = [vec![3, 4], vec![4, 3], vec![2, 2, 3], vec![7], vec![1; 7]];
    for _ in 0..50 {
        let x = random_frame(&mut rng, 128);
        let base = natural(&DecompositionSpec::new(128, specs[0].clone()).unwrap(), &x);
        for f in &specs[1..] {
            let y = natural(&DecompositionSpec::new(128, f.clone()).unwrap(), &x);
            assert!(max_err(&base, &y) < 1e-12, "{f:?}");
        }
    }
}
