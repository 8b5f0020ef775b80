use std::collections::HashSet;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use nbv_core::ellipsoid::{fit_clusters, Ellipsoid, EllipsoidKind, FitConfig};
use nbv_core::harness::coverage;
use nbv_core::mvee::{fit_mvee, MveeConfig};
use nbv_core::oracle::oracle_evaluate;
use nbv_core::planner::{admissible_partitions, select_next_view, PartitionLedger};
use nbv_core::projection::{clipped_area, project_ellipsoid, rank_ellipsoids};
use nbv_core::sampling::{assign_partitions, sample_candidates, SamplingConfig, SamplingMode};
use nbv_core::voxel::{Observation, VoxelGrid, VoxelState};
use nbv_core::{CameraIntrinsics, Pose};
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = Point3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn ellipsoid() -> impl Strategy<Value = Ellipsoid> {
    (
        point(1.0),
        (0.02f64..0.5, 0.02f64..0.5, 0.02f64..0.5),
        (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        0usize..8,
        any::<bool>(),
    )
        .prop_map(|(c, (a, b, d), (rx, ry, rz), cluster, occ)| {
            let r = Rotation3::new(Vector3::new(rx, ry, rz)).into_inner();
            let shape =
                r * Matrix3::from_diagonal(&Vector3::new(
                    1.0 / (a * a),
                    1.0 / (b * b),
                    1.0 / (d * d),
                )) * r.transpose();
            let kind = if occ {
                EllipsoidKind::Occupied
            } else {
                EllipsoidKind::Frontier
            };
            Ellipsoid::new(c, shape, kind, cluster).unwrap()
        })
}

fn camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 60.0,
        fy: 60.0,
        cx: 24.0,
        cy: 18.0,
        width: 48,
        height: 36,
        ..CameraIntrinsics::default()
    }
}

fn viewing_pose() -> impl Strategy<Value = Pose> {
    (point(3.0), point(0.3)).prop_filter_map("degenerate look-at", |(eye, at)| {
        if (eye - at).norm() < 0.5 {
            return None;
        }
        Pose::look_at(eye, at, Vector3::z()).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_weights_are_a_geometric_permutation(es in prop::collection::vec(ellipsoid(), 1..12), pose in viewing_pose()) {
        let ranked = rank_ellipsoids(&es, &pose);
        let ranks: HashSet<usize> = ranked.iter().map(|r| r.rank).collect();
        prop_assert_eq!(ranks, (0..es.len()).collect::<HashSet<_>>());
        for r in &ranked {
            prop_assert_eq!(r.weight, 0.5f64.powi(r.rank as i32));
        }
        let total: f64 = ranked.iter().map(|r| r.weight).sum();
        prop_assert!((total - (2.0 - 0.5f64.powi(es.len() as i32 - 1))).abs() < 1e-12);
        prop_assert!(ranked.windows(2).all(|w| w[0].camera_z <= w[1].camera_z));
    }

    #[test]
    fn surface_points_satisfy_the_quadric(e in ellipsoid(), theta in 0.0..std::f64::consts::PI, phi in 0.0..std::f64::consts::TAU) {
        let x = e.surface_point(theta, phi).to_homogeneous();
        let q = e.quadric();
        prop_assert!((x.transpose() * q * x)[0].abs() <= 1e-8 * q.norm());
    }

    #[test]
    fn mvee_contains_its_points(pts in prop::collection::vec(point(0.5), 1..40)) {
        let e = fit_mvee(&pts, &MveeConfig::for_resolution(0.03)).unwrap();
        for p in &pts {
            prop_assert!(e.form_value(p) <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn fitted_clusters_cover_every_point(pts in prop::collection::vec(point(0.3), 1..60), seed in 0u64..100) {
        let (es, t) = fit_clusters(&pts, EllipsoidKind::Occupied, seed, &FitConfig::new(4, 0.03)).unwrap();
        prop_assert!((1..=4).contains(&t));
        for p in &pts {
            prop_assert!(es.iter().any(|e| e.form_value(p) <= 1.0 + 1e-6));
        }
    }

    #[test]
    fn clipped_area_bounded_by_full_ellipse(e in ellipsoid(), pose in viewing_pose()) {
        let k = camera();
        let p = project_ellipsoid(&e, &pose, &k).unwrap();
        if p.valid {
            let full = std::f64::consts::PI * p.semi_axes.0 * p.semi_axes.1;
            let a = clipped_area(&p, k.width, k.height);
            prop_assert!(a >= 0.0 && a <= full * (1.0 + 1e-9));
            prop_assert!(a <= (k.width * k.height) as f64 + 1e-6);
        } else {
            prop_assert_eq!(p.area, 0.0);
        }
    }

    #[test]
    fn sampler_counts_and_partitions(n in 8usize..400, parallels in 1usize..8, beta in 1usize..6, hemi in any::<bool>()) {
        prop_assume!(n >= parallels && n >= beta);
        let cfg = SamplingConfig {
            mode: if hemi { SamplingMode::Hemisphere } else { SamplingMode::FullSphere },
            parallels,
            count: n,
            ..SamplingConfig::default()
        };
        let mut views = sample_candidates(&cfg, &Point3::origin(), 1.0).unwrap();
        prop_assert_eq!(views.len(), n);
        assign_partitions(&mut views, beta).unwrap();
        prop_assert!(views.iter().all(|v| v.partition < beta));
        if hemi {
            for v in &views {
                let deg = v.spherical.polar.to_degrees();
                prop_assert!((15.0 - 1e-9..=85.0 + 1e-9).contains(&deg));
            }
        } else if n >= 4 * beta * parallels {
            let used: HashSet<usize> = views.iter().map(|v| v.partition).collect();
            prop_assert_eq!(used.len(), beta);
        }
    }

    #[test]
    fn selection_respects_admissible_partitions(
        beta in 1usize..6,
        scanned in prop::collection::vec(0usize..6, 0..6),
        scores in prop::collection::vec(-10.0f64..10.0, 12..40),
    ) {
        let mut ledger = PartitionLedger::new(beta).unwrap();
        for (i, p) in scanned.iter().enumerate() {
            ledger.mark(i, p % beta);
        }
        let mut views = sample_candidates(&SamplingConfig { count: scores.len(), parallels: 2, ..SamplingConfig::default() }, &Point3::origin(), 1.0).unwrap();
        assign_partitions(&mut views, beta).unwrap();
        for (v, s) in views.iter_mut().zip(&scores) {
            v.score = Some(*s);
        }
        let admissible = admissible_partitions(&ledger);
        prop_assert!(!admissible.is_empty());
        if let Ok(pick) = select_next_view(&views, &mut ledger, 99) {
            prop_assert!(admissible.contains(&pick.partition));
            let best = views.iter().filter(|v| admissible.contains(&v.partition)).map(|v| v.score.unwrap()).fold(f64::MIN, f64::max);
            prop_assert_eq!(pick.score.unwrap(), best);
        }
    }

    #[test]
    fn integration_never_loses_occupied(pts in prop::collection::vec(point(0.45), 0..80), origin in point(0.45)) {
        let mut g = VoxelGrid::new(Point3::new(-0.5, -0.5, -0.5), 0.05, [20, 20, 20]).unwrap();
        let seed_pts: Vec<_> = pts.iter().take(10).cloned().collect();
        g.integrate_observation(&Observation { points: seed_pts, sensor_origin: Point3::new(0.0, 0.0, 0.49) });
        let before = g.counts().occupied;
        g.integrate_observation(&Observation { points: pts, sensor_origin: origin });
        prop_assert!(g.counts().occupied >= before);
    }

    #[test]
    fn added_occupied_never_reveals_frontier(
        cells in prop::collection::vec((0usize..10, 0usize..10, 0usize..10, any::<bool>()), 1..120),
        walls in prop::collection::vec((0usize..10, 0usize..10, 0usize..10), 1..40),
        pose in viewing_pose(),
    ) {
        let mut g = VoxelGrid::new(Point3::new(-0.5, -0.5, -0.5), 0.1, [10, 10, 10]).unwrap();
        for (x, y, z, f) in cells {
            g.force_state([x, y, z], if f { VoxelState::Frontier } else { VoxelState::Occupied });
        }
        let k = camera();
        let before = oracle_evaluate(&pose, &g, &k, 2).visible_frontier;
        for (x, y, z) in walls {
            if g.state([x, y, z]) != VoxelState::Frontier {
                g.force_state([x, y, z], VoxelState::Occupied);
            }
        }
        prop_assert!(oracle_evaluate(&pose, &g, &k, 2).visible_frontier <= before);
    }

    #[test]
    fn coverage_matches_exhaustive_scan(
        model in prop::collection::vec(point(0.05), 1..200),
        acquired in prop::collection::vec(point(0.05), 0..200),
        threshold in 0.001f64..0.02,
    ) {
        let hit = model
            .iter()
            .filter(|m| acquired.iter().any(|a| (*a - **m).norm() <= threshold))
            .count();
        let expect = hit as f64 / model.len() as f64;
        prop_assert_eq!(coverage(&model, &acquired, threshold).unwrap(), expect);
    }
}
