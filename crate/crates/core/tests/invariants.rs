use std::sync::Arc;

use proptest::prelude::*;

use panoshift::denoise::{
    dirac_oracle_step, AnalyticTarget, DenoiseRequest, Denoiser, DiracOracle, SmoothingMock, WindowGeometry,
};
use panoshift::latent::{BlendAccumulator, PanoLatent, Shape, Tile, TileRegion};
use panoshift::metrics::{seam_metric_at, wrap_seam_metric};
use panoshift::pipeline::{Pipeline, RunConfig, WindowConfig};
use panoshift::planner::{plan_spatial_step, plan_temporal_step, SpatialPlanConfig, TemporalPlanConfig};
use panoshift::projection::{for_each_footprint_texel, sample_erp, viewport_taps, ErpGrid, ViewportSpec};
use panoshift::rng::SeededRng;
use panoshift::schedule::{renoise, NoiseSchedule};

fn random_latent(shape: Shape, seed: u64, h_ring: bool, t_ring: bool) -> PanoLatent<f64> {
    let mut l = PanoLatent::zeros(shape, h_ring, t_ring);
    SeededRng::new(seed).fill_normal(l.data_mut());
    l
}

fn region_strategy() -> impl Strategy<Value = (Shape, TileRegion)> {
    (1usize..4, 1usize..3, 2usize..9, 2usize..12).prop_flat_map(|(f, c, h, w)| {
        let shape = Shape::new(f, c, h, w);
        (
            Just(shape),
            (-(f as isize)..f as isize, 1..=f),
            (0..h, 1..=h),
            (-(w as isize)..2 * w as isize, 1..=w),
        )
            .prop_map(|(shape, (fs, fl), (rs, rl), (cs, cl))| {
                let rl = rl.min(shape.height - rs);
                (shape, TileRegion::new((fs, fl), (rs, rl), (cs, cl)))
            })
    })
}

fn roll_columns(l: &PanoLatent<f64>, s: usize) -> PanoLatent<f64> {
    let w = l.shape().width;
    PanoLatent::from_fn(l.shape(), l.h_ring(), l.t_ring(), |f, c, r, x| l.at(f, c, r, (x + w - s % w) % w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extract_insert_is_identity((shape, region) in region_strategy(), seed in any::<u64>()) {
        let l = random_latent(shape, seed, true, true);
        let tile = l.extract_tile(&region).unwrap();
        let mut m = l.clone();
        m.insert_tile(&region, &tile).unwrap();
        prop_assert_eq!(m, l);
    }

    #[test]
    fn extract_is_ring_translation_equivariant((shape, region) in region_strategy(), s in 0usize..20, seed in any::<u64>()) {
        let l = random_latent(shape, seed, true, true);
        let rolled = roll_columns(&l, s);
        let mut moved = region;
        moved.col_start += s as isize;
        prop_assert_eq!(l.extract_tile(&region).unwrap(), rolled.extract_tile(&moved).unwrap());
    }

    #[test]
    fn blend_finalize_ignores_write_order(seed in any::<u64>(), n in 1usize..6, perm_seed in any::<u64>()) {
        let shape = Shape::new(2, 2, 6, 10);
        let mut rng = SeededRng::new(seed);
        let writes: Vec<(TileRegion, Tile<f64>)> = (0..n)
            .map(|_| {
                let region = TileRegion::new((rng.below(2) as isize, 1 + rng.below(2)), (0, 6), (rng.below(10) as isize, 1 + rng.below(10)));
                let mut t = Tile::zeros(region.tile_shape(2));
                // dyadic values keep every sum exact
                for v in t.data_mut() {
                    *v = (rng.below(64) as f64 - 32.0) / 8.0;
                }
                (region, t)
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut prng = SeededRng::new(perm_seed);
        for i in (1..n).rev() {
            order.swap(i, prng.below(i + 1));
        }
        let finalize = |idx: &[usize]| {
            let mut acc = BlendAccumulator::<f64>::new(shape, true, true);
            for &i in idx {
                acc.add(&writes[i].0, &writes[i].1).unwrap();
            }
            let mut out = PanoLatent::zeros(shape, true, true);
            let cover: Vec<TileRegion> = writes.iter().map(|w| w.0).collect();
            acc.finalize_into(&mut out, &cover).unwrap();
            out
        };
        let forward: Vec<usize> = (0..n).collect();
        prop_assert_eq!(finalize(&forward), finalize(&order));
    }

    #[test]
    fn renoise_is_reproducible(seed in any::<u64>(), t in 1usize..50) {
        let s = NoiseSchedule::ldm(50).unwrap();
        let x: Vec<f32> = (0..64).map(|i| i as f32 * 0.1).collect();
        let a = renoise(&x, &s, t, &mut SeededRng::new(seed)).unwrap();
        let b = renoise(&x, &s, t, &mut SeededRng::new(seed)).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn spatial_plans_are_pure_and_partition(
        nw in 2usize..6, nh in 1usize..4, win in prop::sample::select(vec![8usize, 12, 16]),
        extra_h in 0usize..8, shift in 0usize..16, ring in any::<bool>(), step in 0usize..40,
    ) {
        let (w, h) = (nw * win, (nh * win + extra_h).max(win));
        let mut cfg = SpatialPlanConfig::new(w, h, win, win, 40);
        cfg.h_ring = ring;
        cfg.shift_x = shift % win;
        cfg.shift_y = shift % win;
        let p = plan_spatial_step(&cfg, step).unwrap();
        prop_assert_eq!(&p, &plan_spatial_step(&cfg, step).unwrap());
        let mut hits = vec![0u32; w * h];
        for win_ in &p.windows {
            let r = &win_.write;
            for row in r.row_start..r.row_start + r.row_len {
                for dc in 0..r.col_len as isize {
                    hits[row * w + (r.col_start + dc).rem_euclid(w as isize) as usize] += 1;
                }
            }
        }
        match p.mode {
            panoshift::planner::PlanMode::Exclusive => {
                let total: usize = p.windows.iter().map(|x| x.write.area()).sum();
                prop_assert_eq!(total, w * h);
                prop_assert!(hits.iter().all(|&c| c == 1));
            }
            panoshift::planner::PlanMode::Blended => prop_assert!(hits.iter().all(|&c| c >= 1)),
        }
    }

    #[test]
    fn temporal_plans_partition(frames in 1usize..100, wf in 1usize..20, shift in 0usize..20, looped in any::<bool>(), step in 0usize..30) {
        prop_assume!(wf <= frames);
        let mut cfg = TemporalPlanConfig::new(frames, wf, looped);
        cfg.shift = shift;
        let clips = plan_temporal_step(&cfg, step).unwrap();
        let mut hits = vec![0u32; frames];
        for c in &clips {
            prop_assert_eq!(c.len, wf);
            for k in 0..c.write_len as isize {
                hits[(c.write_start + k).rem_euclid(frames as isize) as usize] += 1;
            }
        }
        prop_assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn longitude_wraps(lon in -3.1f64..3.1, lat in -1.5f64..1.5, seed in any::<u64>()) {
        let grid = ErpGrid::new(32, 16).unwrap();
        let l = random_latent(Shape::new(1, 1, 16, 32), seed, true, false);
        let a = sample_erp(&l, &grid, 0, 0, lon, lat);
        let b = sample_erp(&l, &grid, 0, 0, lon + 2.0 * std::f64::consts::PI, lat);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn pull_and_push_agree_on_membership(lon in -3.1f64..3.1, lat in -1.5f64..1.5, fov_deg in 30f64..150.0, w in 4usize..24, h in 4usize..24) {
        // every footprint texel maps to a point inside the pixel-center hull,
        // and every viewport pixel's own ray lands inside the same hull
        let grid = ErpGrid::new(64, 32).unwrap();
        let vp = ViewportSpec::new(lon, lat, fov_deg.to_radians(), w, h).unwrap();
        let mut seen = 0;
        for_each_footprint_texel(&grid, &vp, |_, px, py| {
            assert!((-1e-9..=(w - 1) as f64 + 1e-9).contains(&px));
            assert!((-1e-9..=(h - 1) as f64 + 1e-9).contains(&py));
            seen += 1;
        });
        let basis = vp.basis();
        for v in 0..h {
            for u in 0..w {
                let (px, py) = vp.image_coords(vp.pixel_ray(u, v), &basis).expect("pixel ray inside hull");
                prop_assert!((px - u as f64).abs() < 1e-9 && (py - v as f64).abs() < 1e-9);
            }
        }
        prop_assert_eq!(viewport_taps(&grid, &vp).len(), w * h);
        prop_assert!(seen > 0);
    }

    #[test]
    fn dirac_commutes_with_windowing((shape, region) in region_strategy(), seed in any::<u64>(), t in 1usize..50) {
        let target = AnalyticTarget::new(shape.frames);
        let s = NoiseSchedule::ldm(50).unwrap();
        let z = random_latent(shape, seed, true, true);
        let req = |geometry: WindowGeometry, tile: &Tile<f64>| {
            dirac_oracle_step(&DenoiseRequest {
                step: 50 - t, t,
                alpha_bar_t: s.alpha_bars()[t],
                alpha_bar_prev: s.alpha_bars()[t - 1],
                geometry, tile, text: &[], image: None,
            }, &target).unwrap()
        };
        let full = TileRegion::full(shape);
        let plane = |r: TileRegion| WindowGeometry::Plane { region: r, frames: shape.frames, height: shape.height, width: shape.width };
        let whole = req(plane(full), &z.extract_tile(&full).unwrap());
        let mut whole_l = z.clone();
        whole_l.insert_tile(&full, &whole).unwrap();
        let part = req(plane(region), &z.extract_tile(&region).unwrap());
        prop_assert_eq!(part, whole_l.extract_tile(&region).unwrap());
    }

    #[test]
    fn non_finite_responses_never_reach_the_latent(bad in 0usize..64, nan in any::<bool>()) {
        struct Poison(usize, f64);
        impl Denoiser<f32> for Poison {
            fn name(&self) -> &str { "poison" }
            fn denoise(&self, req: &DenoiseRequest<'_, f32>) -> Result<Tile<f32>, panoshift::DenoiseError> {
                let mut t = req.tile.clone();
                let i = self.0 % t.data().len();
                t.data_mut()[i] = self.1 as f32;
                Ok(t)
            }
        }
        let cfg = RunConfig { width: 32, height: 16, frames: 2, channels: 2, steps: 4,
            window: WindowConfig { width: 16, height: 16, frames: 2 }, ..RunConfig::default() };
        let d = Poison(bad, if nan { f64::NAN } else { f64::INFINITY });
        let err = Pipeline::<f32>::new(cfg, &d).unwrap().run().err().expect("must fail");
        let msg = err.to_string();
        prop_assert!(msg.contains("step 0") && msg.contains("non-finite"), "{}", msg);
    }

    #[test]
    fn seam_metric_rotation_invariant(seed in any::<u64>(), s in 0usize..40, w in 4usize..40) {
        let l = random_latent(Shape::new(2, 2, 3, w), seed, true, false);
        let a = wrap_seam_metric(&l).unwrap();
        let b = seam_metric_at(&roll_columns(&l, s), s).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a, wrap_seam_metric(&l).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn runs_are_deterministic_across_workers(seed in any::<u64>(), workers in 2usize..6, looped in any::<bool>()) {
        let cfg = RunConfig { width: 96, height: 40, frames: 12, channels: 2, steps: 8, seed, loopable: looped,
            window: WindowConfig { width: 32, height: 32, frames: 8 }, ..RunConfig::default() };
        let mock = SmoothingMock::new(Arc::new(AnalyticTarget::new(12)), 1);
        let a = Pipeline::<f32>::new(cfg.clone(), &mock).unwrap().run().unwrap().latent;
        let b = Pipeline::<f32>::new(RunConfig { workers, ..cfg.clone() }, &mock).unwrap().run().unwrap().latent;
        let c = Pipeline::<f32>::new(cfg, &mock).unwrap().run().unwrap().latent;
        prop_assert!(a == b && a == c);
    }

    #[test]
    fn window_size_does_not_change_oracle_output(win in prop::sample::select(vec![8usize, 16, 24]), seed in any::<u64>()) {
        let base = RunConfig { width: 48, height: 24, frames: 4, channels: 1, steps: 10, seed,
            window: WindowConfig { width: 48, height: 24, frames: 4 }, ..RunConfig::default() };
        let target = Arc::new(AnalyticTarget::new(4));
        let d = DiracOracle::new(target);
        let whole = Pipeline::<f64>::new(base.clone(), &d).unwrap().run().unwrap().latent;
        let tiled = Pipeline::<f64>::new(RunConfig { window: WindowConfig { width: win, height: win.min(24), frames: 4 }, ..base }, &d)
            .unwrap().run().unwrap().latent;
        let err = whole.data().iter().zip(tiled.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "{}", err);
    }
}

#[test]
fn boundaries_move_every_exclusive_step() {
    let cfg = SpatialPlanConfig::new(512, 128, 32, 32, 50);
    let plans: Vec<_> = (0..50).map(|s| plan_spatial_step(&cfg, s).unwrap()).collect();
    for pair in plans.windows(2) {
        if pair[0].mode == panoshift::planner::PlanMode::Exclusive {
            let a = pair[0].boundary_columns(512);
            let b = pair[1].boundary_columns(512);
            assert!(a.iter().all(|x| !b.contains(x)), "steps {} and {} share seams", pair[0].step, pair[1].step);
        }
    }
}

#[test]
fn renoise_variance_converges() {
    let s = NoiseSchedule::ldm(50).unwrap();
    let mut rng = SeededRng::new(3);
    let x: Vec<f64> = (0..400_000).map(|_| 2.0 * rng.normal::<f64>()).collect();
    for t in [5, 25, 45] {
        let y = renoise(&x, &s, t, &mut SeededRng::new(t as u64)).unwrap();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
        };
        let ab = s.alpha_bars()[t];
        let excess = var(&y) - ab * var(&x);
        assert!((excess - (1.0 - ab)).abs() < 0.02, "t={t}: {excess} vs {}", 1.0 - ab);
    }
}

#[test]
fn noise_level_is_homogeneous_after_exclusive_steps() {
    // residual variance over 16x16 blocks, max/min < 1.5 after every exclusive step
    let cfg = RunConfig { width: 256, height: 64, frames: 4, channels: 4, steps: 20, seed: 5,
        window: WindowConfig { width: 32, height: 32, frames: 4 }, ..RunConfig::default() };
    let target = Arc::new(AnalyticTarget::new(4));
    let want = panoshift::denoise::target_plane_latent::<f64>(target.as_ref(), Shape::new(4, 4, 64, 256), true, false);
    let schedule = cfg.build_schedule().unwrap();
    let d = DiracOracle::new(target);
    let mut worst = 1.0f64;
    let mut checked = 0;
    Pipeline::<f64>::new(cfg, &d)
        .unwrap()
        .with_observer(|e| {
            if e.mode != panoshift::planner::PlanMode::Exclusive || e.level == 0 {
                return;
            }
            let k = schedule.alpha_bars()[e.level].sqrt();
            let s = e.latent.shape();
            let mut vars = Vec::new();
            for by in 0..s.height / 16 {
                for bx in 0..s.width / 16 {
                    let (mut a, mut a2, mut n) = (0.0, 0.0, 0.0);
                    for f in 0..s.frames {
                        for c in 0..s.channels {
                            for r in by * 16..by * 16 + 16 {
                                for x in bx * 16..bx * 16 + 16 {
                                    let v = e.latent.at(f, c, r, x) - k * want.at(f, c, r, x);
                                    a += v;
                                    a2 += v * v;
                                    n += 1.0;
                                }
                            }
                        }
                    }
                    vars.push(a2 / n - (a / n) * (a / n));
                }
            }
            let hi = vars.iter().cloned().fold(0.0, f64::max);
            let lo = vars.iter().cloned().fold(f64::INFINITY, f64::min);
            worst = worst.max(hi / lo);
            checked += 1;
        })
        .run()
        .unwrap();
    assert!(checked > 10);
    assert!(worst < 1.5, "windowed variance ratio {worst}");
}
