use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stereo_kit::costvol::{
    cost_volume_cosine, cost_volume_lnd, inject_encoding, mac_count, multi_head_cost_volume,
    multi_head_cost_volume_normalized,
};
use stereo_kit::encoding::{
    positional_encoding, rescale_encoding, rpe_coordinate, rpe_map, rpe_map_with, EncodingParams, RpeSampling,
};
use stereo_kit::geometry::{
    apply_homography, fit_homography_dlt, homography_from_params, CameraIntrinsics, CameraPose, Correspondence,
    Pixel,
};
use stereo_kit::loss::{combined_loss, depth_loss, homography_loss, smooth_l1, UncertaintyParams};
use stereo_kit::oracle::{self, MacCounter};
use stereo_kit::synth::{generate_scene, Rig, SceneSpec, Texture};
use stereo_kit::tensor::{layer_norm_channel, LayerNormParams};
use stereo_kit::{CostKind, CostVolumeConfig, Dims, Homography, Tensor};

fn uniform(dims: Dims, seed: u64, scale: f32) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(dims, |_, _, _, _| scale * rng.random_range(-1.0f32..1.0)).unwrap()
}

fn pixel(t: &Tensor, n: usize, h: usize, w: usize) -> Vec<f64> {
    (0..t.dims().c).map(|c| t.at(n, c, h, w) as f64).collect()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max)
}

/// Well-conditioned homography: identity plus small affine and projective terms.
fn near_identity() -> impl Strategy<Value = Homography> {
    (prop::array::uniform6(-0.05f64..0.05), -8.0f64..8.0, -8.0f64..8.0, -2e-4f64..2e-4, -2e-4f64..2e-4).prop_map(
        |(a, tx, ty, g, h)| {
            Homography::new(Matrix3::new(
                1.0 + a[0], a[1], tx + a[2],
                a[3], 1.0 + a[4], ty + a[5],
                g, h, 1.0,
            ))
            .unwrap()
        },
    )
}

/// `(n, c, heads, h, w, d)` with `heads | c` and `d < w`.
fn cost_shape() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize)> {
    (1usize..=2, 1usize..=8, prop::sample::select(vec![1usize, 2, 4]), 2usize..=16, 2usize..=16)
        .prop_flat_map(|(n, per_head, heads, h, w)| {
            (Just(n), Just(per_head * heads), Just(heads), Just(h), Just(w), 1usize..=(w - 1).min(8))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multi_head_matches_loop_oracle((n, c, heads, h, w, d) in cost_shape(), seed in any::<u64>()) {
        let dims = Dims::new(n, c, h, w);
        let (l, r) = (uniform(dims, seed, 1.0), uniform(dims, seed ^ 1, 1.0));
        let cfg = CostVolumeConfig::new(d, heads).unwrap();
        let fast = multi_head_cost_volume(&l, &r, &cfg, None).unwrap();
        let slow = oracle::multi_head_cost_volume(
            &l, &r, d, heads, cfg.dot_scale, cfg.epsilon as f64, &cfg.pointwise, None, &mut MacCounter::default(),
        );
        prop_assert!(max_abs_diff(fast.values(), &slow) <= 1e-5);
    }

    #[test]
    fn cosine_stays_in_unit_range((n, c, _heads, h, w, d) in cost_shape(), seed in any::<u64>(), scale in 1e-3f32..1e3) {
        let dims = Dims::new(n, c, h, w);
        let cv = cost_volume_cosine(&uniform(dims, seed, scale), &uniform(dims, !seed, scale), d).unwrap();
        prop_assert!(cv.values().data().iter().all(|v| v.abs() <= 1.0 + 1e-6));
    }

    #[test]
    fn lnd_over_c_is_centered_cosine(
        c in 4usize..=32, h in 2usize..=8, w in 3usize..=12, seed in any::<u64>(), scale in 0.05f32..1.0,
    ) {
        let dims = Dims::new(1, c, h, w);
        let (l, r) = (uniform(dims, seed, scale), uniform(dims, seed.wrapping_add(7), scale));
        let d = w - 1;
        let cv = cost_volume_lnd(&l, &r, d, &LayerNormParams::identity(c, 1e-9).unwrap()).unwrap();
        for i in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let a = pixel(&l, 0, y, x);
                    let b = pixel(&r, 0, y, (x + w - i) % w);
                    if oracle::variance(&a) < 1e-3 || oracle::variance(&b) < 1e-3 {
                        continue;
                    }
                    let lnd = cv.values().at(0, i, y, x) as f64 / c as f64;
                    prop_assert!((lnd - oracle::centered_cosine(&a, &b)).abs() <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn multi_head_is_cheaper_exactly_when_d_exceeds_three(
        c in 1usize..512, h in 1usize..256, w in 1usize..256, d in 1usize..128, heads in 1usize..8,
    ) {
        let cos = mac_count(CostKind::Cosine, c, h, w, d, heads).multiply_accumulates;
        let mh = mac_count(CostKind::MultiHead, c, h, w, d, heads).multiply_accumulates;
        prop_assert_eq!(mh < cos, d > 3);
    }

    #[test]
    fn encoding_injection_is_addition_before_the_loop(
        (per_head, heads) in (1usize..=4, prop::sample::select(vec![1usize, 2])),
        h in 2usize..=8, w in 3usize..=12, seed in any::<u64>(),
    ) {
        let c = 4 * per_head * heads;
        let dims = Dims::new(1, c, h, w);
        let (l, r) = (uniform(dims, seed, 1.0), uniform(dims, seed ^ 3, 1.0));
        let cfg = CostVolumeConfig::new(w - 1, heads).unwrap();
        let (el, er) = rpe_map(&Homography::identity(), w, h, &EncodingParams::new(c).unwrap()).unwrap();
        let (el, er) = (rescale_encoding(&el).unwrap(), rescale_encoding(&er).unwrap());
        let with = multi_head_cost_volume(&l, &r, &cfg, Some((&el, &er))).unwrap();
        let ln = LayerNormParams::identity(c, cfg.epsilon).unwrap();
        let ln_l = inject_encoding(&layer_norm_channel(&l, &ln).unwrap(), &el).unwrap();
        let ln_r = inject_encoding(&layer_norm_channel(&r, &ln).unwrap(), &er).unwrap();
        let added = multi_head_cost_volume_normalized(&ln_l, &ln_r, &cfg).unwrap();
        prop_assert!(max_abs_diff(with.values(), added.values()) <= 1e-5);
    }

    #[test]
    fn apply_inverse_round_trip(hm in near_identity(), x in -50.0f64..150.0, y in -50.0f64..150.0) {
        let q = Pixel::new(x, y);
        let back = apply_homography(&hm, apply_homography(&hm.inverse().unwrap(), q).unwrap()).unwrap();
        prop_assert!(back.distance(&q) <= 1e-6);
    }

    #[test]
    fn homography_from_params_ignores_joint_pose_scale(
        a in near_identity(), b in near_identity(), s in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 10.0]),
        f in 40.0f64..200.0,
    ) {
        let k = CameraIntrinsics::new(f, f, 32.0, 24.0).unwrap();
        let (ml, mr) = (CameraPose::from_matrix(*a.matrix()).unwrap(), CameraPose::from_matrix(*b.matrix()).unwrap());
        let (sl, sr) = (
            CameraPose::from_matrix(a.matrix() * s).unwrap(),
            CameraPose::from_matrix(b.matrix() * s).unwrap(),
        );
        let h1 = homography_from_params(&k, &ml, &k, &mr).unwrap();
        let h2 = homography_from_params(&k, &sl, &k, &sr).unwrap();
        prop_assert!(h1.relative_frobenius(&h2) <= 1e-9);
    }

    #[test]
    fn dlt_recovers_exact_homographies(
        hm in near_identity(), extra in prop::collection::vec((0.0f64..96.0, 0.0f64..96.0), 0..16),
    ) {
        let mut points = vec![(0.0, 0.0), (96.0, 0.0), (0.0, 96.0), (96.0, 96.0)];
        points.extend(extra);
        let cs: Vec<Correspondence> = points
            .iter()
            .map(|&(x, y)| {
                let left = Pixel::new(x, y);
                Correspondence { left, right: apply_homography(&hm, left).unwrap() }
            })
            .collect();
        let fit = fit_homography_dlt(&cs).unwrap();
        prop_assert!(fit.relative_frobenius(&hm) <= 1e-6);
    }

    #[test]
    fn rpe_identity_is_bit_exact(w in 2usize..24, h in 2usize..24, groups in 1usize..6) {
        let (l, r) = rpe_map(&Homography::identity(), w, h, &EncodingParams::new(4 * groups).unwrap()).unwrap();
        prop_assert_eq!(l.tensor().data(), r.tensor().data());
    }

    #[test]
    fn rpe_composition_is_sequential_mapping(h1 in near_identity(), h2 in near_identity(), inverse in any::<bool>()) {
        let sampling = if inverse { RpeSampling::Inverse } else { RpeSampling::Forward };
        let p = EncodingParams::new(8).unwrap();
        let (_, r) = rpe_map_with(&h1.compose(&h2).unwrap(), 12, 10, &p, sampling).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                let q = Pixel::new(x as f64, y as f64);
                let seq = if inverse {
                    rpe_coordinate(&h2, rpe_coordinate(&h1, q, sampling).unwrap(), sampling).unwrap()
                } else {
                    rpe_coordinate(&h1, rpe_coordinate(&h2, q, sampling).unwrap(), sampling).unwrap()
                };
                let v = positional_encoding(seq.x, seq.y, &p).unwrap();
                for (c, e) in v.iter().enumerate() {
                    prop_assert!((r.tensor().at(0, c, y, x) as f64 - e).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn losses_are_nonnegative_and_symmetric(seed in any::<u64>(), h in 1usize..20, w in 1usize..20, a in near_identity(), b in near_identity()) {
        let dims = Dims::new(1, 1, h, w);
        let (p, g) = (uniform(dims, seed, 5.0), uniform(dims, !seed, 5.0));
        let s = smooth_l1(&p, &g, 1.0).unwrap();
        prop_assert!(s >= 0.0);
        let (pg, gp) = (depth_loss(&p, &g, 1.0).unwrap(), depth_loss(&g, &p, 1.0).unwrap());
        prop_assert!(pg.total >= 0.0);
        prop_assert!((pg.total - gp.total).abs() <= 1e-12 * pg.total.max(1.0));
        let (ab, ba) = (homography_loss(&a, &b, 50.0).unwrap(), homography_loss(&b, &a, 50.0).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn combined_loss_bounds_and_unimodality(l_h in 1e-3f64..10.0, l_d in 1e-3f64..10.0, s in 0.05f64..5.0) {
        let u = UncertaintyParams::new(s, s * 0.7).unwrap();
        prop_assert!(combined_loss(l_h, l_d, &u).unwrap() >= (u.sigma_h * u.sigma_d).ln());
        let along: Vec<f64> = (0..80)
            .map(|i| 10f64.powf(-3.0 + i as f64 * 0.075))
            .map(|sh| combined_loss(l_h, l_d, &UncertaintyParams::new(sh, 1.0).unwrap()).unwrap())
            .collect();
        let best = along.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert!(best > 0 && best < along.len() - 1);
        prop_assert!(along[..=best].windows(2).all(|p| p[1] < p[0]));
        prop_assert!(along[best..].windows(2).all(|p| p[1] > p[0]));
    }
}

fn fronto_parallel_scene() -> impl Strategy<Value = SceneSpec> {
    (
        prop::sample::select(Texture::ALL.to_vec()),
        -3.0f64..3.0,
        1.0f64..12.0,
        any::<u64>(),
        prop::sample::select(vec![32usize, 48, 64]),
    )
        .prop_map(|(texture, roll, disparity, seed, size)| {
            let base = SceneSpec::rectified();
            let focal = base.rig.k_left[0];
            let rig = Rig::rectified(focal, size, size, disparity * base.plane_depth / focal).with_roll(roll);
            SceneSpec { width: size, height: size, ..base }.with_rig(rig).with_texture(texture).with_seed(seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn disparity_agrees_with_homography(spec in fronto_parallel_scene()) {
        let s = generate_scene(&spec).unwrap();
        let mask = s.left_validity().unwrap();
        for y in 0..spec.height {
            for x in 0..spec.width {
                if mask.at(0, 0, y, x) == 0.0 {
                    continue;
                }
                let q = Pixel::new(x as f64, y as f64);
                let expected = x as f64 - apply_homography(&s.gt_homography, q).unwrap().x;
                prop_assert!((s.gt_disparity.at(0, 0, y, x) as f64 - expected).abs() <= 0.51);
            }
        }
    }

    #[test]
    fn scenes_overlap_stay_in_range_and_repeat(spec in fronto_parallel_scene()) {
        let a = generate_scene(&spec).unwrap();
        prop_assert!(a.validity_fraction() >= 0.5);
        for t in [&a.left, &a.right] {
            prop_assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        prop_assert_eq!(a, generate_scene(&spec).unwrap());
    }
}
