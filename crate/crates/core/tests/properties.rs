use std::path::Path;

use nalgebra::Vector3;
use proptest::prelude::*;

use proxykit::align::{coarse_to_fine, depth_alignment_loss, ScheduleConfig};
use proxykit::geometry::Ray;
use proxykit::image::Image;
use proxykit::losses::{l1, loss_3dgs, masked_depth_loss, nn_loss, ssim, NnCache};
use proxykit::render::{ray_obb, Scene};
use proxykit::scene::{load_layout, wall_pieces, SceneLayout};

fn fixture() -> SceneLayout {
    load_layout(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/living_room.json")).unwrap()
}

/// Nearest hit by testing every box and the floor and ceiling planes.
fn brute_force(layout: &SceneLayout, o: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
    let mut boxes: Vec<_> = wall_pieces(layout).into_iter().map(|w| w.obb).collect();
    boxes.extend(layout.objects.iter().map(|o| o.pose.obb()));
    boxes.extend(layout.connectors.iter().filter(|c| c.kind.label().is_some()).map(|c| c.pose.obb()));
    let mut best = boxes.iter().filter_map(|b| ray_obb(o, d, b)).map(|h| h.0).fold(f64::INFINITY, f64::min);
    let room = &layout.rooms[0];
    for z in [room.floor_z, room.ceiling_z] {
        let t = (z - o.z) / d.z;
        let p = o + d * t;
        if t > 0.0 && room.contains_xy(p.x, p.y) {
            best = best.min(t);
        }
    }
    best
}

fn unit(v: [f64; 3]) -> Option<Vector3<f64>> {
    let v = Vector3::from(v);
    (v.norm() > 1e-3).then(|| v.normalize())
}

fn image(w: usize, h: usize) -> impl Strategy<Value = Image<f64>> {
    prop::collection::vec(0.0..1.0f64, w * h).prop_map(move |v| Image::from_vec(w, h, v).unwrap())
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(prop::array::uniform3(-3.0..3.0f64), n).prop_map(|v| v.into_iter().map(Vector3::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn renderer_matches_brute_force(
        rays in prop::collection::vec((prop::array::uniform3(0.0..1.0f64), prop::array::uniform3(-1.0..1.0f64)), 50),
    ) {
        let layout = fixture();
        let scene = Scene::new(&layout);
        for (o, d) in rays {
            let Some(dir) = unit(d) else { continue };
            let origin = Vector3::new(0.05 + 5.9 * o[0], 0.05 + 4.9 * o[1], 0.05 + 2.7 * o[2]);
            let got = scene.intersect(&Ray { origin, dir }).t;
            let want = brute_force(&layout, &origin, &dir);
            prop_assert!((got - want).abs() <= 1e-9, "origin {origin:?} dir {dir:?}: {got} vs {want}");
        }
    }

    #[test]
    fn nn_loss_is_permutation_invariant(means in points(1..60), reference in points(1..80), rot in 0usize..60) {
        let a = nn_loss(&means, &reference, &mut NnCache::default(), 0).unwrap();
        let mut shuffled = means.clone();
        shuffled.rotate_left(rot % means.len());
        shuffled.reverse();
        let b = nn_loss(&shuffled, &reference, &mut NnCache::default(), 0).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn photometric_losses_are_symmetric(a in image(12, 9), b in image(12, 9), lambda in 0.0..=1.0f64) {
        prop_assert_eq!(l1(&a, &b).unwrap(), l1(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((loss_3dgs(&a, &b, lambda).unwrap() - loss_3dgs(&b, &a, lambda).unwrap()).abs() < 1e-12);
        prop_assert_eq!(loss_3dgs(&a, &a, lambda).unwrap(), 0.0);
    }

    #[test]
    fn masked_depth_loss_is_monotone(
        gt in image(10, 8),
        err in prop::collection::vec(-0.5..0.5f64, 80),
        mask in prop::collection::vec(any::<bool>(), 80),
        grow in 1.0..3.0f64,
    ) {
        let mask = Image::from_vec(10, 8, mask).unwrap();
        let near = Image::from_fn(10, 8, |x, y| gt.get(x, y) + err[y * 10 + x]);
        let far = Image::from_fn(10, 8, |x, y| gt.get(x, y) + grow * err[y * 10 + x]);
        prop_assert_eq!(masked_depth_loss(&gt, &gt, &mask).unwrap().value, 0.0);
        let (ln, lf) = (masked_depth_loss(&near, &gt, &mask).unwrap(), masked_depth_loss(&far, &gt, &mask).unwrap());
        prop_assert!(ln.value <= lf.value + 1e-12);
    }

    #[test]
    fn depth_alignment_loss_is_symmetric(a in image(8, 8), b in image(8, 8)) {
        let (a, b) = (vec![a.map(|v| v + 0.5)], vec![b.map(|v| v + 0.5)]);
        let ab = depth_alignment_loss(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, depth_alignment_loss(&b, &a).unwrap());
        prop_assert_eq!(depth_alignment_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn search_selection_never_worsens(center in 0.2..1.9f64, noise in 0.0..0.3f64) {
        let cfg = ScheduleConfig::default();
        let f = |t: f64| (t - center).abs() + noise * (17.0 * t).sin().abs();
        let (theta, trace) = coarse_to_fine(&cfg, |c| Ok(c.iter().map(|&t| f(t)).collect())).unwrap();
        for w in trace.levels.windows(2) {
            prop_assert!(w[1].selected_loss <= w[0].selected_loss);
        }
        prop_assert_eq!(f(theta), trace.loss_star);
        prop_assert!(theta >= cfg.clamp_min && theta <= cfg.clamp_max);
    }
}
