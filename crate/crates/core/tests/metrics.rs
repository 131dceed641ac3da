use probshape::metrics::{contour_dice, dice, rasterize, rmse, shoelace_area, BinaryMask};
use probshape_oracles::brute_force_mask;
use proptest::prelude::*;

fn square(x0: f64, y0: f64, side: f64) -> Vec<f64> {
    vec![x0, y0, x0 + side, y0, x0 + side, y0 + side, x0, y0 + side]
}

#[test]
fn half_overlap_squares_give_half_dice() {
    let a = square(2.0, 2.0, 10.0);
    let b = square(7.0, 2.0, 10.0);
    // |A| = |B| = 100, |A & B| = 50
    assert_eq!(contour_dice(&a, &b, 20, 20).unwrap(), 0.5);
}

#[test]
fn uniform_shift_gives_its_length() {
    let a = square(2.0, 2.0, 10.0);
    let b: Vec<f64> = a
        .chunks(2)
        .flat_map(|p| [p[0] + 3.0, p[1] + 4.0])
        .collect();
    assert_eq!(rmse(&a, &b).unwrap(), 5.0);
}

#[test]
fn unit_square_pixel_count() {
    for (x, y) in [(0.0, 0.0), (3.0, 5.0), (10.0, 1.0)] {
        let m = rasterize(&square(x, y, 1.0), 20, 20).unwrap();
        assert_eq!(m.count(), 1);
    }
    assert_eq!(rasterize(&square(0.0, 0.0, 10.0), 20, 20).unwrap().count(), 100);
}

#[test]
fn identical_empty_masks_agree() {
    let e = BinaryMask::empty(5, 5);
    assert_eq!(dice(&e, &e).unwrap(), 1.0);
    assert!(dice(&e, &BinaryMask::empty(4, 5)).is_err());
}

fn star(cx: f64, cy: f64, radii: &[f64], phase: f64) -> Vec<f64> {
    let n = radii.len();
    radii
        .iter()
        .enumerate()
        .flat_map(|(j, r)| {
            let t = phase + std::f64::consts::TAU * j as f64 / n as f64;
            [cx + r * t.cos(), cy + r * t.sin()]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scanline_fill_matches_brute_force(
        cx in 8.0f64..24.0,
        cy in 8.0f64..24.0,
        radii in prop::collection::vec(1.0f64..7.5, 3..14),
        phase in 0.0f64..6.3,
    ) {
        let poly = star(cx, cy, &radii, phase);
        let mask = rasterize(&poly, 32, 32).unwrap();
        let want = brute_force_mask(&poly, 32, 32);
        prop_assert_eq!(mask.bits(), want.as_slice());
    }

    #[test]
    fn pixel_count_tracks_area(
        radii in prop::collection::vec(4.0f64..9.0, 8..30),
    ) {
        let poly = star(16.0, 16.0, &radii, 0.1);
        let mask = rasterize(&poly, 32, 32).unwrap();
        let area = shoelace_area(&poly).abs();
        let perimeter = probshape::metrics::perimeter(&poly);
        // each boundary pixel can flip at most once
        prop_assert!((mask.count() as f64 - area).abs() <= perimeter + 4.0);
    }

    #[test]
    fn dice_is_symmetric_and_bounded(
        a in prop::collection::vec(2.0f64..7.0, 5..12),
        b in prop::collection::vec(2.0f64..7.0, 5..12),
        dx in -4.0f64..4.0,
    ) {
        let pa = star(16.0, 16.0, &a, 0.0);
        let pb = star(16.0 + dx, 16.0, &b, 0.3);
        let ab = contour_dice(&pa, &pb, 32, 32).unwrap();
        let ba = contour_dice(&pb, &pa, 32, 32).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(contour_dice(&pa, &pa, 32, 32).unwrap(), 1.0);
    }

    #[test]
    fn rmse_obeys_the_triangle_inequality(
        pts in prop::collection::vec(-50.0f64..50.0, 3 * 16),
    ) {
        let (a, rest) = pts.split_at(16);
        let (b, c) = rest.split_at(16);
        let ab = rmse(a, b).unwrap();
        let bc = rmse(b, c).unwrap();
        let ac = rmse(a, c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert_eq!(rmse(a, a).unwrap(), 0.0);
    }

    #[test]
    fn integer_translation_shifts_the_mask(
        radii in prop::collection::vec(2.0f64..6.0, 5..10),
        dx in -3i32..=3,
        dy in -3i32..=3,
    ) {
        let p = star(14.0, 14.0, &radii, 0.2);
        let q: Vec<f64> = p.chunks(2).flat_map(|v| [v[0] + dx as f64, v[1] + dy as f64]).collect();
        let mp = rasterize(&p, 28, 28).unwrap();
        let mq = rasterize(&q, 28, 28).unwrap();
        for r in 4..24usize {
            for c in 4..24usize {
                let (r2, c2) = ((r as i32 + dy) as usize, (c as i32 + dx) as usize);
                prop_assert_eq!(mp.get(r, c), mq.get(r2, c2));
            }
        }
    }
}
