//! Invariants over random inputs.

use image::GrayImage;
use proptest::prelude::*;

use iriskit::datamodel::{BBox, CodeKind, CodeLayout, IrisCode};
use iriskit::matcher::{hamming_match, MatchScore, MatcherConfig, PairScore};
use iriskit::metrics::{dual_frr_at_far, frr_at_far, rank1, GalleryScore, ScoreSet, Side};
use iriskit::preprocess::{bbox_crop, CropConfig};
use iriskit::protocols::SampleRef;
use iriskit::seed::splitmix64;

fn code(layout: CodeLayout, seed: u64, density: u64) -> IrisCode {
    let mut c = IrisCode::zeroed(CodeKind::Gabor, layout);
    let mut s = seed;
    for i in 0..layout.n_bits() {
        s = splitmix64(s);
        c.set(i, s & 1 == 1, (s >> 8) % 100 < density);
    }
    c
}

fn layouts() -> impl Strategy<Value = CodeLayout> {
    (1u32..5, 2u32..40, 1u32..5).prop_map(|(r, c, b)| CodeLayout::new(r, c, b))
}

fn cfg(max_shift: u32) -> MatcherConfig {
    MatcherConfig {
        max_shift,
        min_valid_fraction: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hamming_is_symmetric(layout in layouts(), sa: u64, sb: u64, density in 20u64..=100, m in 0u32..9) {
        let (a, b) = (code(layout, sa, density), code(layout, sb, density));
        let ab = hamming_match::<f64>(&a, &b, &cfg(m));
        let ba = hamming_match::<f64>(&b, &a, &cfg(m));
        match (ab, ba) {
            (Ok(x), Ok(y)) => {
                // Ties at +s and -s can resolve to different overlaps, so only the score is symmetric.
                prop_assert_eq!(x.similarity, y.similarity);
            }
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn wider_search_never_lowers_similarity(layout in layouts(), sa: u64, sb: u64) {
        let (a, b) = (code(layout, sa, 90), code(layout, sb, 90));
        let mut last = -1.0;
        for m in 0..10 {
            let s = hamming_match::<f64>(&a, &b, &cfg(m)).unwrap().similarity;
            prop_assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn rotation_is_undone(layout in layouts(), seed: u64, k in -8i32..=8) {
        prop_assume!(k.unsigned_abs() < layout.grid_cols);
        let a = code(layout, seed, 100);
        let s = hamming_match::<f64>(&a, &a.rotated(k), &cfg(8)).unwrap();
        prop_assert_eq!(s.similarity, 1.0);
        // A smaller shift could also fit exactly when the code is periodic.
        prop_assert!(s.best_shift.abs() <= k.abs());
    }

    #[test]
    fn f32_and_f64_agree_on_codes(layout in layouts(), sa: u64, sb: u64) {
        let (a, b) = (code(layout, sa, 80), code(layout, sb, 80));
        if let (Ok(x), Ok(y)) = (hamming_match::<f64>(&a, &b, &cfg(4)), hamming_match::<f32>(&a, &b, &cfg(4))) {
            prop_assert_eq!(x.best_shift, y.best_shift);
            prop_assert!((x.similarity - y.similarity as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn frr_falls_as_far_target_rises(
        genuine in prop::collection::vec(0.0f64..1.0, 1..200),
        impostor in prop::collection::vec(0.0f64..1.0, 100..400),
    ) {
        let set = ScoreSet { genuine, impostor };
        let mut last = f64::INFINITY;
        for target in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let p = frr_at_far(&set, target).unwrap();
            prop_assert!(p.achieved_far <= target);
            prop_assert!((0.0..=1.0).contains(&p.frr));
            prop_assert!(p.frr <= last);
            last = p.frr;
        }
    }

    #[test]
    fn rank1_ignores_monotone_rescaling(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..20), truth in prop::collection::vec(0usize..4, 20)) {
        let make = |f: &dyn Fn(f64) -> f64| -> Vec<Vec<GalleryScore<f64>>> {
            rows.iter()
                .zip(&truth)
                .map(|(row, &t)| {
                    row.iter()
                        .enumerate()
                        .map(|(g, &s)| GalleryScore { gallery_id: format!("g{g}"), similarity: f(s), genuine: g == t })
                        .collect()
                })
                .collect()
        };
        let plain = rank1(&make(&|x| x)).unwrap();
        let warped = rank1(&make(&|x| (3.0 * x).exp() + x.powi(3))).unwrap();
        prop_assert_eq!(plain, warped);
    }

    #[test]
    fn dual_frr_is_at_least_either_eye(
        left in prop::collection::vec(0.0f64..1.0, 150),
        right in prop::collection::vec(0.0f64..1.0, 150),
        genuine in prop::collection::vec(any::<bool>(), 150),
    ) {
        prop_assume!(genuine.iter().filter(|&&g| g).count() >= 5);
        prop_assume!(genuine.iter().filter(|&&g| !g).count() >= 10);
        let ms = |s| MatchScore { similarity: s, best_shift: 0, valid_bits: 1 };
        let scores: Vec<PairScore<f64>> = (0..150)
            .map(|i| PairScore {
                probe: SampleRef::dual(format!("p{i}L"), format!("p{i}R")),
                reference: SampleRef::dual(format!("r{i}L"), format!("r{i}R")),
                genuine: genuine[i],
                left: ms(left[i]),
                right: Some(ms(right[i])),
            })
            .collect();
        let d = dual_frr_at_far(&scores, 0.1).unwrap();
        let l = frr_at_far(&ScoreSet::from_pairs(&scores, Side::Left), 0.1).unwrap();
        let r = frr_at_far(&ScoreSet::from_pairs(&scores, Side::Right), 0.1).unwrap();
        prop_assert!(d.point.frr >= l.frr.max(r.frr));
        prop_assert!(d.point.achieved_far <= l.achieved_far.min(r.achieved_far));
        prop_assert_eq!((d.point.threshold, d.threshold_right), (l.threshold, r.threshold));
        // Recount the fused rejections by hand.
        let genuine_rejected = scores
            .iter()
            .filter(|p| p.genuine)
            .filter(|p| p.left.similarity < l.threshold || p.right.unwrap().similarity < r.threshold)
            .count();
        let n_genuine = scores.iter().filter(|p| p.genuine).count();
        prop_assert!((d.point.frr - genuine_rejected as f64 / n_genuine as f64).abs() < 1e-12);
    }

    #[test]
    fn crop_of_constant_image_is_constant_inside(value in 1u8..=255, w in 20u32..120, h in 20u32..120, out in 4usize..40) {
        let img = GrayImage::from_pixel(w, h, image::Luma([value]));
        let side = (w.min(h) as f64) * 0.5;
        let b = BBox::new(w as f64 / 2.0 - side / 2.0, h as f64 / 2.0 - side / 2.0, side, side);
        let c = bbox_crop(&img, &b, &CropConfig { expand_factor: 1.2, out_size: out }).unwrap();
        prop_assert_eq!(c.dimensions(), (out as u32, out as u32));
        prop_assert!(c.pixels().all(|p| p[0] == value));
    }
}
