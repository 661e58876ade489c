use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use microct::metrics::{capped_psnr, psnr, ssim, PSNR_CAP};
use microct::phantoms::{rasterize, EllipseSpec};
use microct::xray::Image;

fn phantom(n: usize) -> Image<f64> {
    rasterize(
        &[EllipseSpec::disk([0.0, 0.0], 0.6, 0.6), EllipseSpec::disk([0.2, 0.1], 0.2, 0.4)],
        n,
        4,
    )
}

fn with_noise(u: &Image<f64>, sd: f64, seed: u64) -> Image<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sd).unwrap();
    Image::from_fn(u.side(), |r, c| u.get(r, c) + d.sample(&mut rng))
}

/// Mean squared error written out directly, as the reference for PSNR.
fn mse(a: &Image<f64>, b: &Image<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

#[test]
fn psnr_matches_direct_formula() {
    let u = phantom(64);
    let v = with_noise(&u, 0.03, 1);
    let range = u.max_value() - u.min_value();
    let expect = 10.0 * (range * range / mse(&v, &u)).log10();
    assert!((psnr(&v, &u).unwrap() - expect).abs() < 1e-10);
    assert_eq!(capped_psnr(psnr(&u, &u).unwrap()), PSNR_CAP);
}

#[test]
fn psnr_falls_with_noise_level() {
    let u = phantom(64);
    let mean_at = |sd: f64| (0..20).map(|s| psnr(&with_noise(&u, sd, s), &u).unwrap()).sum::<f64>() / 20.0;
    let levels = [0.01, 0.02, 0.05, 0.1];
    let values: Vec<f64> = levels.iter().map(|&s| mean_at(s)).collect();
    assert!(values.windows(2).all(|w| w[0] > w[1]), "{values:?}");
}

#[test]
fn psnr_ignores_a_common_shift() {
    let u = phantom(32);
    let v = with_noise(&u, 0.05, 3);
    let shift = |x: &Image<f64>| Image::from_fn(32, |r, c| x.get(r, c) + 5.0);
    let a = psnr(&v, &u).unwrap();
    let b = psnr(&shift(&v), &shift(&u)).unwrap();
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn ssim_of_inverted_contrast_is_low() {
    let u = phantom(64);
    let inv = Image::from_fn(64, |r, c| 1.0 - u.get(r, c));
    assert!(ssim(&inv, &u).unwrap() < 0.5);
    assert!((ssim(&u, &u).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ssim_is_bounded(seed in any::<u64>(), scale in 0.0f64..3.0, offset in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 16;
        let a = Image::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let b = Image::from_fn(n, |r, c| offset + scale * a.get(r, c) * rng.random_range(-1.0..1.0));
        let s = ssim(&b, &a).unwrap();
        prop_assert!(s.is_finite() && (-1.0..=1.0).contains(&s), "{}", s);
    }

    #[test]
    fn equal_range_metrics_are_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 16;
        // pin both ranges to [0, 1]
        let mut draw = || {
            let mut v: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
            v[0] = 0.0;
            v[1] = 1.0;
            Image::from_vec(n, v).unwrap()
        };
        let (a, b) = (draw(), draw());
        prop_assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }
}
