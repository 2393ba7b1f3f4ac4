use lidarmotion::augmentor::{fixtures, make_pair, AugmentConfig, PlacementConfig, SensorModel};
use lidarmotion::eval::{run_pipeline, FieldSource, Injection, PipelineConfig};
use lidarmotion::pcio::{read_mesh, EgoMode};
use lidarmotion::voxelgrid::GridSpec;

fn sensor() -> SensorModel {
    SensorModel {
        azimuth_step: 0.4f64.to_radians(),
        ..SensorModel::default()
    }
}

fn pair(ego_mode: EgoMode, seed: u64) -> lidarmotion::augmentor::AugmentedScenePair {
    let scan = fixtures::synthetic_scan(&sensor(), seed).unwrap();
    let car = read_mesh(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/car.obj")).unwrap();
    let cfg = AugmentConfig {
        cars: [2, 2],
        ego_mode,
        ..AugmentConfig::default()
    };
    make_pair(&scan, &[car], &sensor(), &cfg, &GridSpec::default(), seed).unwrap().pair
}

#[test]
fn ground_truth_field_scores_zero() {
    for mode in [EgoMode::Identity, EgoMode::Sampled] {
        let p = pair(mode, 21);
        let r = run_pipeline(&p, &PipelineConfig::default()).unwrap();
        assert_eq!(r.epe.all, 0.0, "{mode:?}: {r:?}");
        assert_eq!((r.obj_rot_rad, r.obj_tr_m, r.ego_rot_rad, r.ego_tr_m), (0.0, 0.0, 0.0, 0.0));
        assert_eq!((r.tp, r.fp, r.fn_), (2, 0, 0));
    }
}

#[test]
fn injected_offsets_are_reported() {
    let p = pair(EgoMode::Identity, 22);
    let cfg = PipelineConfig {
        injection: Some(Injection { dtheta: 0.01, dt: [0.3, 0.0] }),
        ..PipelineConfig::default()
    };
    let r = run_pipeline(&p, &cfg).unwrap();
    assert!((r.obj_rot_rad - 0.01).abs() < 1e-12, "{r:?}");
    assert!((r.obj_tr_m - 0.3).abs() < 1e-12);
    assert_eq!(r.ego_tr_m, 0.0);
    assert!(r.epe.fg > 0.0 && r.epe.bg == 0.0);
}

#[test]
fn icp_baseline_is_finite() {
    let p = pair(EgoMode::Sampled, 23);
    let cfg = PipelineConfig {
        source: FieldSource::Icp,
        ..PipelineConfig::default()
    };
    let r = run_pipeline(&p, &cfg).unwrap();
    assert!(r.is_finite(), "{r:?}");
    // Static structure dominates the scene, so the ego estimate is close.
    assert!(r.ego_tr_m < 0.2, "{r:?}");
}

#[test]
fn straight_car_motion_recovered_by_fit() {
    use lidarmotion::augmentor::raycast_scan;
    use lidarmotion::baselines::fit_rigid;
    use lidarmotion::pcio::PointCloud;
    use nalgebra::{Matrix3x2, Vector3};

    let scan = fixtures::synthetic_scan(&sensor().noiseless(), 5).unwrap();
    let cfg = AugmentConfig {
        cars: [1, 1],
        placement: PlacementConfig {
            speed: [10.0, 10.0],
            curvature: [0.0, 0.0],
            ..PlacementConfig::default()
        },
        ..AugmentConfig::default()
    };
    let aug = make_pair(&scan, &[fixtures::car_mesh()], &sensor(), &cfg, &GridSpec::default(), 9).unwrap();
    let yaw = aug.cars[0].pose.yaw;
    let expected = Vector3::new(yaw.cos(), yaw.sin(), 0.0);

    // Noisy returns at t, each paired with the same barycentric point of the
    // same triangle on the mesh posed at t+1.
    let sim = raycast_scan(&aug.meshes_t, &PointCloud::empty("sensor"), &sensor()).unwrap();
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    let mut max_range: f64 = 0.0;
    for r in &sim.returns {
        let a = aug.meshes_t[r.mesh].triangle(r.triangle);
        let b = aug.meshes_t1[r.mesh].triangle(r.triangle);
        let surface = r.point / r.range * r.true_range;
        let basis = Matrix3x2::from_columns(&[a[1] - a[0], a[2] - a[0]]);
        let uv = basis.svd(true, true).solve(&(surface - a[0]), 1e-15).unwrap();
        src.push(r.point);
        dst.push(b[0] + (b[1] - b[0]) * uv[0] + (b[2] - b[0]) * uv[1]);
        max_range = max_range.max(r.true_range);
    }
    assert!(src.len() > 20);
    let fit = fit_rigid(&src, &dst).unwrap();
    let sigma = sensor().sigma(max_range);
    assert!((fit.translation - expected).norm() < 2.0 * sigma, "{:?} vs {expected:?}", fit.translation);
}
