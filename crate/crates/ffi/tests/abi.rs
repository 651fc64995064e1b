use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rodfit::synthgen::{render_scene, SceneConfig};
use rodfit_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rodfit_last_error()) }.to_string_lossy().into_owned()
}

fn scene_image() -> (rodfit::synthgen::ColonyScene, *mut RodfitImage) {
    let scene = render_scene(&SceneConfig {
        n_cells: 3,
        width: 120,
        height: 120,
        seed: 11,
        ..SceneConfig::default()
    })
    .unwrap();
    let mut img = ptr::null_mut();
    let s = unsafe { rodfit_image_new(120, 120, scene.image.data().as_ptr(), &mut img) };
    assert_eq!(s, RodfitStatus::Ok);
    (scene, img)
}

#[test]
fn segment_through_the_c_interface_matches_the_library() {
    let (scene, img) = scene_image();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(rodfit_config_new(&mut cfg), RodfitStatus::Ok);
        assert_eq!(rodfit_config_set_workers(cfg, 1), RodfitStatus::Ok);
        let (mut w, mut h) = (0, 0);
        assert_eq!(rodfit_image_size(img, &mut w, &mut h), RodfitStatus::Ok);
        assert_eq!((w, h), (120, 120));
    }
    let mut boxes: Vec<RodfitBox> = scene
        .boxes()
        .iter()
        .map(|b| RodfitBox {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
        })
        .collect();
    // one box far outside the image: reported per cell, not for the call
    boxes.push(RodfitBox {
        x_min: 500.0,
        y_min: 500.0,
        x_max: 510.0,
        y_max: 520.0,
    });

    let mut res = ptr::null_mut();
    let s = unsafe { rodfit_segment(img, cfg, boxes.as_ptr(), boxes.len(), &mut res) };
    assert_eq!(s, RodfitStatus::Ok);
    assert_eq!(unsafe { rodfit_results_len(res) }, 4);

    let expected = rodfit::pipeline::segment_image(
        &scene.image,
        &scene.boxes(),
        &rodfit::config::RunConfig::default().pipeline(),
    )
    .unwrap();
    for (i, want) in expected.iter().enumerate() {
        let want = want.as_ref().unwrap();
        unsafe {
            assert_eq!(rodfit_results_status(res, i), RodfitStatus::Ok);
            let mut p = RodfitParams::default();
            assert_eq!(rodfit_results_params(res, i, &mut p), RodfitStatus::Ok);
            assert_eq!(p.cx, want.theta_image.cx);
            assert_eq!(p.alpha, want.theta_image.alpha);
            let mut e = RodfitEnergy::default();
            assert_eq!(rodfit_results_energy(res, i, &mut e), RodfitStatus::Ok);
            assert_eq!(e.total, want.energy.total);

            let mut n = 0;
            assert_eq!(rodfit_results_contour(res, i, ptr::null_mut(), 0, &mut n), RodfitStatus::Ok);
            assert_eq!(n, want.contour.len());
            let mut small = vec![0.0; 2];
            assert_eq!(
                rodfit_results_contour(res, i, small.as_mut_ptr(), 1, &mut n),
                RodfitStatus::InvalidArgument
            );
            let mut xy = vec![0.0; 2 * n];
            assert_eq!(rodfit_results_contour(res, i, xy.as_mut_ptr(), n, &mut n), RodfitStatus::Ok);
            let (ox, oy) = want.mask.origin;
            assert_eq!(xy[0], want.contour.vertices()[0].x + ox as f64);
            assert_eq!(xy[1], want.contour.vertices()[0].y + oy as f64);
        }
    }
    unsafe {
        assert_eq!(rodfit_results_status(res, 3), RodfitStatus::InvalidBox);
        assert!(last_error().contains("outside"), "{}", last_error());
        let mut p = RodfitParams::default();
        assert_eq!(rodfit_results_params(res, 3, &mut p), RodfitStatus::InvalidBox);
        assert_eq!(rodfit_results_status(res, 99), RodfitStatus::InvalidArgument);
        rodfit_results_free(res);
        rodfit_config_free(cfg);
        rodfit_image_free(img);
    }
}

#[test]
fn invalid_arguments_are_reported_not_crashed_on() {
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(rodfit_image_new(2, 2, ptr::null(), &mut img), RodfitStatus::InvalidArgument);
        let nan = [f64::NAN; 4];
        assert_ne!(rodfit_image_new(2, 2, nan.as_ptr(), &mut img), RodfitStatus::Ok);
        assert!(img.is_null());

        let mut cfg = ptr::null_mut();
        rodfit_config_new(&mut cfg);
        assert_eq!(rodfit_config_set_weights(cfg, -1.0, 0.0), RodfitStatus::InvalidParameter);
        assert!(!last_error().is_empty());
        assert_eq!(rodfit_config_set_weights(cfg, 10.0, 2.0), RodfitStatus::Ok);
        assert_eq!(
            rodfit_config_set_rotation_mode(cfg, RodfitRotationMode::Printed),
            RodfitStatus::Ok
        );
        assert_eq!(rodfit_config_set_pixel_size(cfg, 0.0), RodfitStatus::InvalidParameter);
        assert_eq!(rodfit_config_set_constrained(ptr::null_mut(), 1), RodfitStatus::InvalidArgument);

        let mut res = ptr::null_mut();
        assert_eq!(
            rodfit_segment(ptr::null(), cfg, ptr::null(), 0, &mut res),
            RodfitStatus::InvalidArgument
        );
        assert_eq!(rodfit_results_len(ptr::null()), 0);

        let missing = CString::new("/nonexistent/dir/x.toml").unwrap();
        assert_eq!(rodfit_config_load(missing.as_ptr(), &mut cfg), RodfitStatus::Io);
        assert_eq!(rodfit_image_read(missing.as_ptr(), &mut img), RodfitStatus::Io);
        rodfit_config_free(cfg);

        // freeing null is a no-op
        rodfit_image_free(ptr::null_mut());
        rodfit_config_free(ptr::null_mut());
        rodfit_results_free(ptr::null_mut());
    }
}

#[test]
fn empty_box_list_gives_empty_results() {
    let (_, img) = scene_image();
    unsafe {
        let mut cfg = ptr::null_mut();
        rodfit_config_new(&mut cfg);
        let mut res = ptr::null_mut();
        assert_eq!(rodfit_segment(img, cfg, ptr::null(), 0, &mut res), RodfitStatus::Ok);
        assert_eq!(rodfit_results_len(res), 0);
        rodfit_results_free(res);
        rodfit_config_free(cfg);
        rodfit_image_free(img);
    }
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.toml");
    std::fs::write(&p, "w_region = 4.0\nrotation_mode = \"printed\"\n").unwrap();
    let cp = CString::new(p.to_str().unwrap()).unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(rodfit_config_load(cp.as_ptr(), &mut cfg), RodfitStatus::Ok);
        rodfit_config_free(cfg);
    }
    std::fs::write(&p, "w_region = \"x\"\n").unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(rodfit_config_load(cp.as_ptr(), &mut cfg), RodfitStatus::Parse);
        assert!(last_error().contains("run.toml:1"), "{}", last_error());
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(rodfit_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(header_dir.join("rodfit.h").exists());
    let Ok(out) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "rodfit.h"
int run(const double *px) {
    RodfitImage *img = NULL;
    RodfitConfig *cfg = NULL;
    RodfitResults *res = NULL;
    RodfitBox box = {10.0, 10.0, 30.0, 40.0};
    RodfitParams p;
    if (rodfit_image_new(64, 64, px, &img) != RODFIT_STATUS_OK) return 1;
    rodfit_config_new(&cfg);
    rodfit_config_set_rotation_mode(cfg, RODFIT_ROTATION_MODE_PROPER);
    if (rodfit_segment(img, cfg, &box, 1, &res) != RODFIT_STATUS_OK) return 2;
    rodfit_results_params(res, 0, &p);
    rodfit_results_free(res);
    rodfit_config_free(cfg);
    rodfit_image_free(img);
    return p.w > 0.0 ? 0 : 3;
}
"#,
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&header_dir)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn c_program_links_and_runs() {
    // target/<profile>/deps/abi-* -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = lib_dir.join("librodfit_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("static library or C compiler unavailable; skipping");
        return;
    }
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "rodfit.h"
int main(void) {
    static double px[80 * 80];
    for (int y = 0; y < 80; y++)
        for (int x = 0; x < 80; x++) {
            double dx = (x - 40) / 6.0, dy = (y - 40) / 16.0;
            px[y * 80 + x] = dx * dx + dy * dy < 1.0 ? 0.45 : 0.75;
        }
    RodfitImage *img = NULL;
    RodfitConfig *cfg = NULL;
    RodfitResults *res = NULL;
    RodfitBox box = {33.0, 23.0, 47.0, 57.0};
    RodfitParams p;
    if (rodfit_image_new(80, 80, px, &img) != RODFIT_STATUS_OK) return 1;
    rodfit_config_new(&cfg);
    rodfit_config_set_workers(cfg, 1);
    if (rodfit_segment(img, cfg, &box, 1, &res) != RODFIT_STATUS_OK) return 2;
    if (rodfit_results_params(res, 0, &p) != RODFIT_STATUS_OK) {
        fprintf(stderr, "%s\n", rodfit_last_error());
        return 3;
    }
    printf("%.3f %.3f %.3f\n", p.cx, p.cy, p.l1 + p.l2);
    rodfit_results_free(res);
    rodfit_config_free(cfg);
    rodfit_image_free(img);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Vec<f64> = String::from_utf8_lossy(&out.stdout)
        .split_whitespace()
        .map(|s| s.parse().unwrap())
        .collect();
    assert!((v[0] - 40.0).abs() < 2.0 && (v[1] - 40.0).abs() < 2.0, "{v:?}");
    assert!(v[2] > 20.0, "{v:?}");
}
