use std::ffi::CStr;
use std::ptr;

use isomatch::synth::{generate_pair, oracle_features, SceneConfig};
use isomatch_ffi::*;

fn last_error() -> String {
    let p = im_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn flat_xyz(cloud: &isomatch::geometry::PointCloud) -> Vec<f64> {
    cloud.points().iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn row_major(m: &isomatch::nalgebra::DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[test]
fn cloud_lifecycle() {
    let xyz = [0.0, 0.0, 0.0, 1.0, 2.0, 3.0];
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { im_cloud_new(xyz.as_ptr(), 2, &mut c) }, ImStatus::Ok);
    assert!(im_last_error_message().is_null());
    assert_eq!(unsafe { im_cloud_len(c) }, 2);
    let feats = [1.0, 0.0, 0.0, 1.0];
    assert_eq!(unsafe { im_cloud_set_features(c, feats.as_ptr(), 2) }, ImStatus::Ok);
    unsafe { im_cloud_free(c) };
    unsafe { im_cloud_free(ptr::null_mut()) };
    assert_eq!(unsafe { im_cloud_len(ptr::null()) }, 0);
}

#[test]
fn null_and_invalid_inputs_report_errors() {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { im_cloud_new(ptr::null(), 3, &mut c) }, ImStatus::NullPointer);
    assert_eq!(last_error(), "null pointer: xyz");
    let bad = [0.0, f64::NAN, 0.0];
    assert_eq!(unsafe { im_cloud_new(bad.as_ptr(), 1, &mut c) }, ImStatus::InvalidArgument);
    assert!(last_error().contains("non-finite"));
    let mut r = std::mem::MaybeUninit::<ImRegistration>::uninit();
    assert_eq!(unsafe { im_register(ptr::null(), ptr::null(), ptr::null(), r.as_mut_ptr()) }, ImStatus::NullPointer);

    let cost = [0.0, 1.0, 1.0, 0.0];
    let mut plan = [0.0; 4];
    let s = unsafe { im_partial_ot(cost.as_ptr(), 2, 2, 2.0, 0.1, 100, 1e-9, plan.as_mut_ptr()) };
    assert_eq!(s, ImStatus::InvalidArgument, "{}", last_error());
    let s = unsafe { im_sinkhorn(cost.as_ptr(), 2, 2, -1.0, 100, 1e-9, plan.as_mut_ptr()) };
    assert_eq!(s, ImStatus::InvalidArgument);
}

#[test]
fn sinkhorn_matches_core() {
    let cost = [0.0, 1.0, 0.5, 1.0, 0.0, 0.5, 0.2, 0.3, 0.0];
    let mut plan = [0.0; 9];
    assert_eq!(unsafe { im_sinkhorn(cost.as_ptr(), 3, 3, 0.05, 1000, 1e-12, plan.as_mut_ptr()) }, ImStatus::Ok);
    let c = isomatch::nalgebra::DMatrix::from_row_slice(3, 3, &cost);
    let cfg = isomatch::ot::SolverConfig { epsilon: 0.05, outer_iters: 1000, tol: 1e-12, ..Default::default() };
    let direct = isomatch::ot::sinkhorn(&c, &isomatch::ot::Marginals::uniform(3, 3).unwrap(), &cfg).unwrap();
    assert_eq!(plan.to_vec(), row_major(&direct.gamma));
    for i in 0..3 {
        let row: f64 = plan[3 * i..3 * i + 3].iter().sum();
        assert!((row - 1.0 / 3.0).abs() < 1e-9);
    }
}

#[test]
fn partial_ot_moves_requested_mass() {
    let cost: Vec<f64> = (0..20).map(|k| (k % 7) as f64 / 7.0).collect();
    let mut plan = vec![0.0; 20];
    assert_eq!(unsafe { im_partial_ot(cost.as_ptr(), 4, 5, 0.6, 0.05, 2000, 1e-10, plan.as_mut_ptr()) }, ImStatus::Ok);
    assert!((plan.iter().sum::<f64>() - 0.6).abs() < 1e-8);
}

#[test]
fn registers_oracle_features() {
    let scene = generate_pair(&SceneConfig { seed: 5, n_points: 600, overlap_target: 0.5, ..SceneConfig::default() }).unwrap();
    let (p, q) = oracle_features(&scene.p, &scene.q, &scene.gt, 16, 0.0, 1).unwrap();
    let mut hp = ptr::null_mut();
    let mut hq = ptr::null_mut();
    unsafe {
        assert_eq!(im_cloud_new(flat_xyz(&p).as_ptr(), p.len(), &mut hp), ImStatus::Ok);
        assert_eq!(im_cloud_new(flat_xyz(&q).as_ptr(), q.len(), &mut hq), ImStatus::Ok);
        assert_eq!(im_cloud_set_features(hp, row_major(p.features().unwrap()).as_ptr(), 16), ImStatus::Ok);
        assert_eq!(im_cloud_set_features(hq, row_major(q.features().unwrap()).as_ptr(), 16), ImStatus::Ok);
    }
    let mut opts = im_register_options_default();
    opts.ransac_iters = 2000;
    opts.seed = 9;
    let mut out = std::mem::MaybeUninit::<ImRegistration>::uninit();
    let s = unsafe { im_register(hp, hq, &opts, out.as_mut_ptr()) };
    assert_eq!(s, ImStatus::Ok, "{}", if s == ImStatus::Ok { String::new() } else { last_error() });
    let out = unsafe { out.assume_init() };
    let gt = scene.gt.to_array();
    for k in 0..12 {
        assert!((out.transform[k] - gt[k]).abs() < 1e-2, "{:?} vs {:?}", out.transform, gt);
    }
    assert!(out.n_inliers >= 3 && out.n_inliers <= out.n_correspondences);
    unsafe {
        im_cloud_free(hp);
        im_cloud_free(hq);
    }
}

#[test]
fn register_without_features_fails_cleanly() {
    let xyz: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(im_cloud_new(xyz.as_ptr(), 10, &mut c), ImStatus::Ok);
        let mut out = std::mem::MaybeUninit::<ImRegistration>::uninit();
        assert_eq!(im_register(c, c, ptr::null(), out.as_mut_ptr()), ImStatus::InvalidArgument);
        assert_eq!(last_error(), "missing features on P");
        assert_eq!(im_cloud_compute_descriptors(c, 0.5, 8, 0), ImStatus::Ok);
        im_cloud_free(c);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/isomatch.h");
    for name in [
        "im_last_error_message",
        "im_version",
        "im_cloud_new",
        "im_cloud_free",
        "im_cloud_len",
        "im_cloud_set_features",
        "im_cloud_compute_descriptors",
        "im_register_options_default",
        "im_register",
        "im_sinkhorn",
        "im_partial_ot",
        "IM_STATUS_PANIC = 6",
        "typedef struct ImCloud ImCloud;",
    ] {
        assert!(header.contains(name), "{name}");
    }
    let v = unsafe { CStr::from_ptr(im_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
