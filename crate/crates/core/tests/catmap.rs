//! Cat map periods checked against whole-image iteration.

use proptest::prelude::*;
use qlg_core::catmap::{cat_period, cat_step, cat_step_inverse, read_pgm, write_pgm, PixelImage};

/// Steps a labelled image until it first returns to itself.
fn image_period(n: usize) -> (u64, Option<PixelImage<u32>>) {
    let start = PixelImage::labelled(n).unwrap();
    let mut img = cat_step(&start);
    let mut t = 1u64;
    let mut history = vec![img.clone()];
    while img != start {
        img = cat_step(&img);
        t += 1;
        history.push(img.clone());
    }
    let half = t.is_multiple_of(2).then(|| history[(t / 2 - 1) as usize].clone());
    (t, half)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matrix_period_matches_image_period(n in 2usize..60) {
        let (t, half) = image_period(n);
        let (period, half_inv) = cat_period(n as u64);
        prop_assert_eq!(period, t);
        let start = PixelImage::labelled(n).unwrap();
        let image_half_inv = half.is_some_and(|h| h == start.point_inversion());
        prop_assert_eq!(half_inv, image_half_inv);
    }

    #[test]
    fn step_is_a_bijection(n in 1usize..40) {
        let img = PixelImage::labelled(n).unwrap();
        let out = cat_step(&img);
        let mut seen = out.pixels().to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, img.pixels().to_vec());
        prop_assert_eq!(cat_step_inverse(&out), img);
    }
}

#[test]
fn figure_sizes() {
    assert_eq!(cat_period(313), (314, true));
    assert_eq!(cat_period(315), (120, false));
    assert_eq!(cat_period(101), (25, false));
    assert_eq!(cat_period(1), (1, false));
}

#[test]
fn pgm_images_survive_a_full_period() {
    let dir = tempfile::tempdir().unwrap();
    let n = 21;
    let (t, _) = cat_period(n as u64);
    let img = PixelImage::from_fn(n, |x, y| ((x * 13 + y * 7) % 251) as u8).unwrap();
    let path = dir.path().join("in.pgm");
    write_pgm(&img, &path).unwrap();
    let mut cur = read_pgm(&path).unwrap();
    for _ in 0..t {
        cur = cat_step(&cur);
    }
    assert_eq!(cur, img);
}
