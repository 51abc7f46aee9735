//! Acceptance suite: one test per shipping criterion, each printing a
//! single PASS line with its measured numbers (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use posekit_core::experiment::{
    run_experiment, write_summary_csv, write_trials_csv, ExperimentMode, ExperimentSpec,
};
use posekit_core::geom_weight::{compute_weights, voxel_index, VoxelGridConfig};
use posekit_core::gnc::{gnc_pnp_unweighted, select_inliers};
use posekit_core::metrics::{accuracy_at, add, add_s, auc, ModelPoints};
use posekit_core::pnp::{
    iterative_pnp, refine_lm, RansacConfig, DEFAULT_GN_MAX_ITER, DEFAULT_GN_TOL,
};
use posekit_core::projection::{
    apply_left_increment, cost_on_subset, project, residual_jacobian, residuals, ResidualVector,
};
use posekit_core::robust_loss::{anneal_mu, gm_influence, gm_surrogate, gnc_score, initial_mu};
use posekit_core::synth::{
    generate, ClusterSpec, OutlierModel, OutlierTarget, SceneConfig,
};
use posekit_core::types::{
    pose_from_axis_angle, rotation_geodesic_error, Correspondence, CorrespondenceSet, GncConfig,
    Pose,
};

/// Scene geometry shared by criteria 1 and 2: 100 points, VGA pinhole at
/// f = 600, cloud framed at arm's length.
fn base_scene() -> SceneConfig {
    SceneConfig {
        n_points: 100,
        depth_range: (0.5, 1.2),
        ..SceneConfig::default()
    }
}

/// Noise-scaled robust config for the sigma = 1 px experiments: the score
/// gate at mu admits pixel errors below sqrt(mu), so mu = 9 * 2 sigma^2
/// keeps 4.2-sigma inliers while uniform outliers stay out.
fn noise_scaled_gnc(sigma: f64) -> GncConfig {
    GncConfig {
        mu_final: 9.0 * 2.0 * sigma * sigma,
        ..GncConfig::default()
    }
}

#[test]
fn criterion_1_clean_recovery() {
    let trials = 100;
    let base_seed = 42u64;
    let mut worst_rot_deg = 0.0f64;
    let mut worst_trans = 0.0f64;
    let started = Instant::now();
    for i in 0..trials {
        let seed = base_seed + i as u64;
        let scene = generate(&SceneConfig {
            rng_seed: seed,
            ..base_scene()
        })
        .expect("valid scene");
        let estimate = gnc_pnp_unweighted(
            &scene.intrinsics,
            &scene.correspondences,
            &GncConfig::default(),
            &RansacConfig {
                rng_seed: seed,
                ..RansacConfig::default()
            },
        )
        .expect("clean solve");
        let rot_deg = rotation_geodesic_error(&estimate.pose, &scene.truth).to_degrees();
        let trans = (estimate.pose.translation - scene.truth.translation).norm();
        assert!(
            rot_deg < 1e-3,
            "trial {i}: rotation error {rot_deg} deg exceeds 1e-3"
        );
        assert!(trans < 1e-5, "trial {i}: translation error {trans} m exceeds 1e-5");
        assert_eq!(
            estimate.inlier_count(),
            scene.correspondences.len(),
            "trial {i}: not every point ended up an inlier"
        );
        worst_rot_deg = worst_rot_deg.max(rot_deg);
        worst_trans = worst_trans.max(trans);
    }
    let per_trial = started.elapsed().as_secs_f64() / trials as f64;
    assert!(
        per_trial < 1.0,
        "runtime {per_trial:.3} s per trial exceeds 1 s"
    );
    println!(
        "acceptance 1 (clean recovery): PASS — {trials}/{trials} trials, \
         worst rotation {worst_rot_deg:.2e} deg, worst translation {worst_trans:.2e} m, \
         {:.1} ms/trial",
        per_trial * 1e3
    );
}

#[test]
fn criterion_2_outlier_robustness() {
    let trials = 100;
    let base_seed = 42u64;
    let sigma = 1.0;
    let mut successes = 0usize;
    let mut min_recall = 1.0f64;
    let mut total_leaked = 0usize;
    for i in 0..trials {
        let seed = base_seed + i as u64;
        let scene = generate(&SceneConfig {
            pixel_noise_sigma: sigma,
            outlier_fraction: 0.4,
            outlier_model: OutlierModel::UniformPixel,
            rng_seed: seed,
            ..base_scene()
        })
        .expect("valid scene");
        let estimate = gnc_pnp_unweighted(
            &scene.intrinsics,
            &scene.correspondences,
            &noise_scaled_gnc(sigma),
            &RansacConfig {
                rng_seed: seed,
                ..RansacConfig::default()
            },
        )
        .expect("robust solve");

        let rot_deg = rotation_geodesic_error(&estimate.pose, &scene.truth).to_degrees();
        let trans = (estimate.pose.translation - scene.truth.translation).norm();
        let trans_bound = 0.01 * scene.mean_depth();

        let mut true_inliers = 0usize;
        let mut recalled = 0usize;
        let mut outliers = 0usize;
        let mut leaked = 0usize;
        for (idx, &is_outlier) in scene.outlier_truth_mask.iter().enumerate() {
            if is_outlier {
                outliers += 1;
                if estimate.inlier_mask[idx] {
                    leaked += 1;
                }
            } else {
                true_inliers += 1;
                if estimate.inlier_mask[idx] {
                    recalled += 1;
                }
            }
        }
        let recall = recalled as f64 / true_inliers as f64;
        let leakage = leaked as f64 / outliers as f64;
        min_recall = min_recall.min(recall);
        total_leaked += leaked;

        if rot_deg < 0.5 && trans < trans_bound && recall >= 0.95 && leakage <= 0.02 {
            successes += 1;
        }
    }
    assert!(
        successes >= 95,
        "only {successes}/{trials} trials met the robustness bounds"
    );
    println!(
        "acceptance 2 (40% outlier robustness): PASS — {successes}/{trials} trials within \
         0.5 deg / 1% depth / recall>=0.95 / leakage<=2%, min recall {min_recall:.4}, \
         {total_leaked} leaked outliers total"
    );
}

#[test]
fn criterion_3_ablation_ordering() {
    // Clustered structure with every wrong-association outlier on the
    // background: the voxel-support gate can remove the unstable points
    // before the schedule starts.
    let scene = SceneConfig {
        n_points: 120,
        pixel_noise_sigma: 1.0,
        outlier_fraction: 0.3,
        outlier_model: OutlierModel::WrongAssociation,
        outlier_target: OutlierTarget::Background,
        cluster_spec: Some(ClusterSpec {
            n_clusters: 8,
            cluster_radius: 0.005,
            background_fraction: 0.3,
        }),
        depth_range: (0.5, 1.2),
        ..SceneConfig::default()
    };
    // Weight voxels sized to the cluster diameter separate background
    // support (~1/s_max) from cluster support cleanly at tau_geom = 0.33.
    let spec = ExperimentSpec {
        mode: ExperimentMode::Full,
        scene,
        voxel: VoxelGridConfig {
            voxel_size: 0.02,
            w_min: 0.2,
        },
        gnc: GncConfig {
            tau_geom: 0.33,
            ..noise_scaled_gnc(1.0)
        },
        ransac: RansacConfig::default(),
        trials: 100,
        base_seed: 7000,
    };

    let run = |mode: ExperimentMode| {
        let outcome = run_experiment(&ExperimentSpec {
            mode,
            ..spec.clone()
        })
        .expect("experiment runs");
        assert_eq!(
            outcome.summary.failures, 0,
            "{} arm had trial failures",
            mode.as_str()
        );
        outcome.summary.median_add_m
    };

    let full = run(ExperimentMode::Full);
    let no_geom = run(ExperimentMode::NoGeomWeights);
    let no_gnc = run(ExperimentMode::NoGnc);

    assert!(
        full <= no_geom,
        "median ADD ordering violated: full {full} > no-geom-weights {no_geom}"
    );
    assert!(
        full <= no_gnc,
        "median ADD ordering violated: full {full} > no-gnc {no_gnc}"
    );
    println!(
        "acceptance 3 (ablation ordering): PASS — median ADD full {full:.6} <= \
         no-geom-weights {no_geom:.6} and <= no-gnc {no_gnc:.6} over 100 seeds"
    );
}

#[test]
fn criterion_4_formula_fidelity() {
    // Exact-arithmetic examples.
    assert_eq!(gm_surrogate(0.0, 2.0).unwrap(), 0.0);
    assert_eq!(gm_surrogate(2.0, 2.0).unwrap(), 0.5);
    assert_eq!(gm_surrogate(f64::INFINITY, 2.0).unwrap(), 1.0);
    assert!((gm_influence(0.0, 3.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((gm_influence(3.0, 3.0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    assert_eq!(gnc_score(0.0, 0.7).unwrap(), 1.0);
    assert!((gnc_score(0.7, 0.7).unwrap() - 0.5).abs() < 1e-15);
    assert!((gnc_score(2.1, 0.7).unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(gnc_score(f64::INFINITY, 0.7).unwrap(), 0.0);

    let rv = ResidualVector::new(vec![1.0, 2.0, 3.0]);
    assert_eq!(initial_mu(&rv, 5.0, 0.0).unwrap(), 10.0);
    let rv = ResidualVector::new(vec![4.0]);
    assert_eq!(initial_mu(&rv, 3.0, 0.5).unwrap(), 12.5);
    let rv = ResidualVector::new(vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(initial_mu(&rv, 1.0, 0.0).unwrap(), 2.5);
    assert_eq!(anneal_mu(8.0, 0.5, 0.5), 4.0);
    assert_eq!(anneal_mu(0.6, 0.5, 0.5), 0.5);
    assert_eq!(anneal_mu(0.5, 0.5, 0.5), 0.5);

    // Influence equals the surrogate derivative (finite differences).
    let mut influence_checks = 0usize;
    for mu_step in 1..=20 {
        let mu = 5.0 * mu_step as f64;
        for r_step in 1..=20 {
            let r = 5.0 * r_step as f64;
            let h = 1e-5 * r;
            let fd =
                (gm_surrogate(r + h, mu).unwrap() - gm_surrogate(r - h, mu).unwrap()) / (2.0 * h);
            let analytic = gm_influence(r, mu).unwrap();
            assert!(
                (fd - analytic).abs() <= 1e-6 * analytic.abs(),
                "influence finite-difference mismatch at r={r}, mu={mu}"
            );
            influence_checks += 1;
        }
    }

    // Voxel weights: worked example plus brute-force parity.
    let mut points = vec![Vector3::new(0.001, 0.001, 0.001); 9];
    points.push(Vector3::new(0.1, 0.1, 0.1));
    let cfg = VoxelGridConfig {
        voxel_size: 0.005,
        w_min: 0.2,
    };
    let gw = compute_weights(&points, &cfg).unwrap();
    assert!((gw.weight[9] - (0.2 + 0.8 / 9.0)).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cloud: Vec<Vector3<f64>> = (0..300)
        .map(|_| {
            Vector3::new(
                rng.random_range(-0.04..0.04),
                rng.random_range(-0.04..0.04),
                rng.random_range(-0.04..0.04),
            )
        })
        .collect();
    let gw = compute_weights(&cloud, &cfg).unwrap();
    for (i, a) in cloud.iter().enumerate() {
        let support = cloud
            .iter()
            .filter(|b| voxel_index(a, cfg.voxel_size) == voxel_index(b, cfg.voxel_size))
            .count() as u32;
        assert_eq!(gw.support[i], support, "voxel support mismatch at {i}");
    }

    // ADD / ADD-S against brute force.
    let model = ModelPoints::new(
        (0..200)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                )
            })
            .collect(),
    )
    .unwrap();
    let pose_a = pose_from_axis_angle(Vector3::new(0.2, -0.1, 0.3), Vector3::new(0.01, 0.0, 1.0));
    let pose_b = pose_from_axis_angle(Vector3::new(0.25, -0.12, 0.28), Vector3::new(0.0, 0.01, 1.0));
    let brute_add: f64 = model
        .vertices()
        .iter()
        .map(|v| (pose_a.transform_point(v) - pose_b.transform_point(v)).norm())
        .sum::<f64>()
        / model.len() as f64;
    assert!((add(&model, &pose_a, &pose_b).unwrap() - brute_add).abs() < 1e-12);
    let brute_add_s: f64 = model
        .vertices()
        .iter()
        .map(|v| {
            let p = pose_a.transform_point(v);
            model
                .vertices()
                .iter()
                .map(|w| (p - pose_b.transform_point(w)).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / model.len() as f64;
    assert!((add_s(&model, &pose_a, &pose_b).unwrap() - brute_add_s).abs() < 1e-12);
    let shift = Pose {
        rotation: nalgebra::Matrix3::identity(),
        translation: Vector3::new(0.01, 0.0, 0.0),
    };
    assert!((add(&model, &shift, &Pose::identity()).unwrap() - 0.01).abs() < 1e-12);

    // AUC: exact values and a fine Riemann cross-check.
    assert_eq!(auc(&[0.0, 0.0], 0.1).unwrap(), 1.0);
    assert_eq!(auc(&[0.3, 0.2], 0.1).unwrap(), 0.0);
    assert!((auc(&[0.05], 0.1).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(accuracy_at(&[0.001, 0.5], 0.01).unwrap(), 0.5);
    let errors: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..0.2)).collect();
    let exact = auc(&errors, 0.1).unwrap();
    let steps = 10_000;
    let riemann: f64 = (0..steps)
        .map(|s| {
            let d = 0.1 * (s as f64 + 0.5) / steps as f64;
            errors.iter().filter(|&&e| e < d).count() as f64 / errors.len() as f64
        })
        .sum::<f64>()
        / steps as f64;
    assert!((exact - riemann).abs() < 1e-3);

    // Reprojection Jacobian against central finite differences.
    let k = posekit_core::types::CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480);
    let mut jacobian_checks = 0usize;
    for _ in 0..1000 {
        let pose = pose_from_axis_angle(
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
            Vector3::zeros(),
        );
        let cam = Vector3::new(
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
            rng.random_range(0.3..3.0),
        );
        let point = pose.inverse().transform_point(&cam);
        let analytic = residual_jacobian(&k, &pose, &point).unwrap();
        for col in 0..6 {
            let mut plus = nalgebra::Vector6::zeros();
            plus[col] = 1e-6;
            let mut minus = nalgebra::Vector6::zeros();
            minus[col] = -1e-6;
            let p_plus = project(&k, &apply_left_increment(&pose, &plus), &point).unwrap();
            let p_minus = project(&k, &apply_left_increment(&pose, &minus), &point).unwrap();
            let numeric = (p_plus - p_minus) / 2e-6;
            for row in 0..2 {
                let a = analytic[(row, col)];
                let n = numeric[row];
                let tol = f64::max(1e-4 * a.abs().max(n.abs()), 1e-6);
                assert!(
                    (a - n).abs() <= tol,
                    "jacobian mismatch at ({row},{col}): {a} vs {n}"
                );
            }
        }
        jacobian_checks += 1;
    }

    println!(
        "acceptance 4 (formula fidelity): PASS — exact examples, {influence_checks} influence \
         finite-difference points, voxel/ADD/ADD-S brute-force parity, AUC Riemann cross-check, \
         {jacobian_checks} Jacobian samples"
    );
}

#[test]
fn criterion_5_selection_contracts_in_mu() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut samples = 0usize;
    while samples < 10_000 {
        let n = rng.random_range(1..60);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_range(0.0..1.0) < 0.05 {
                    f64::INFINITY
                } else {
                    rng.random_range(0.0..80.0)
                }
            })
            .collect();
        let residuals = ResidualVector::new(values);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let tau_gnc = rng.random_range(0.05..0.95);
        let tau_geom = rng.random_range(0.0..0.9);
        let mu = rng.random_range(0.01..50.0);
        let mu_smaller = mu * rng.random_range(0.01..1.0);
        let wide = select_inliers(&residuals, &weights, mu, tau_gnc, tau_geom).unwrap();
        let tight = select_inliers(&residuals, &weights, mu_smaller, tau_gnc, tau_geom).unwrap();
        for idx in &tight {
            assert!(
                wide.contains(idx),
                "contraction violated: index {idx} selected at mu={mu_smaller} but not mu={mu}"
            );
        }
        samples += 1;
    }
    println!(
        "acceptance 5 (fixed-residual contraction): PASS — {samples} randomized (mu, mu') pairs, \
         zero violations"
    );
}

#[test]
fn criterion_6_deterministic_csv() {
    let spec = ExperimentSpec {
        mode: ExperimentMode::Full,
        scene: SceneConfig {
            n_points: 80,
            pixel_noise_sigma: 1.0,
            outlier_fraction: 0.3,
            depth_range: (0.5, 1.2),
            ..SceneConfig::default()
        },
        voxel: VoxelGridConfig::default(),
        gnc: noise_scaled_gnc(1.0),
        ransac: RansacConfig::default(),
        trials: 10,
        base_seed: 99,
    };
    let a = run_experiment(&spec).expect("first run");
    let b = run_experiment(&spec).expect("second run");
    let trials_a = write_trials_csv(&a.records, false);
    let trials_b = write_trials_csv(&b.records, false);
    assert_eq!(trials_a, trials_b, "per-trial CSV differs between runs");
    let summary_a = write_summary_csv(std::slice::from_ref(&a.summary), false);
    let summary_b = write_summary_csv(std::slice::from_ref(&b.summary), false);
    assert_eq!(summary_a, summary_b, "summary CSV differs between runs");
    println!(
        "acceptance 6 (deterministic CSV): PASS — {} bytes of per-trial CSV and {} bytes of \
         summary CSV byte-identical across repeated runs",
        trials_a.len(),
        summary_a.len()
    );
}

#[test]
fn criterion_7_descent_guarantees() {
    let k = posekit_core::types::CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480);
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut checked = 0usize;
    'outer: for scene_seed in 0..40u64 {
        let scene = generate(&SceneConfig {
            n_points: 40,
            pixel_noise_sigma: 0.5,
            rng_seed: 5000 + scene_seed,
            depth_range: (0.5, 1.2),
            ..SceneConfig::default()
        })
        .expect("valid scene");
        let set: CorrespondenceSet = scene.correspondences.clone();
        let subset: Vec<usize> = (0..set.len()).collect();
        for _ in 0..25 {
            let perturb = pose_from_axis_angle(
                Vector3::new(
                    rng.random_range(-0.25..0.25),
                    rng.random_range(-0.25..0.25),
                    rng.random_range(-0.25..0.25),
                ),
                Vector3::new(
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                ),
            );
            let initial = perturb.compose(&scene.truth);
            let initial_cost = cost_on_subset(&k, &initial, &set, &subset);
            if !initial_cost.is_finite() {
                continue;
            }
            let gn = iterative_pnp(&k, &set, &subset, &initial, DEFAULT_GN_MAX_ITER, DEFAULT_GN_TOL)
                .expect("gauss-newton runs");
            assert!(
                gn.final_cost <= initial_cost + 1e-12,
                "gauss-newton increased cost: {} -> {}",
                initial_cost,
                gn.final_cost
            );
            let lm = refine_lm(&k, &set, &subset, &initial).expect("lm runs");
            assert!(
                lm.final_cost <= initial_cost + 1e-12,
                "lm increased cost: {} -> {}",
                initial_cost,
                lm.final_cost
            );
            checked += 1;
            if checked >= 1000 {
                break 'outer;
            }
        }
    }
    assert!(checked >= 1000, "only {checked} random initializations checked");
    println!(
        "acceptance 7 (descent guarantees): PASS — {checked} random initializations, \
         zero cost increases for either solver"
    );
}

#[test]
fn acceptance_scene_sanity() {
    // the shared scene config itself must be generatable for all seeds the
    // criteria touch
    for seed in [42u64, 141, 7000, 7099] {
        generate(&SceneConfig {
            rng_seed: seed,
            ..base_scene()
        })
        .expect("scene generates");
    }
    let res = residuals(
        &posekit_core::types::CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480),
        &Pose::identity(),
        &CorrespondenceSet::new(vec![Correspondence::new(
            Vector2::new(320.0, 240.0),
            Vector3::new(0.0, 0.0, 1.0),
        )])
        .unwrap(),
    );
    assert_eq!(res[0], 0.0);
}
