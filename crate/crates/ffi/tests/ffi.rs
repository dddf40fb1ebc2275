use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use twinbeam_ffi::*;

fn last_error() -> String {
    let p = tb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn builtin() -> *mut TbScene {
    let name = CString::new("toy-manhattan").unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(
        unsafe { tb_scene_builtin(name.as_ptr(), &mut scene) },
        TbStatus::Ok
    );
    assert!(tb_last_error_message().is_null());
    scene
}

fn small_dataset(scene: *const TbScene) -> *mut TbDataset {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { tb_dataset_generate(scene, 1, 0.0, 4, 28e9, &mut ds) },
        TbStatus::Ok
    );
    ds
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(tb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scene_json_round_trip_and_buffer_protocol() {
    let scene = builtin();
    let mut needed = 0usize;
    let status = unsafe { tb_scene_to_json(scene, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(status, TbStatus::BufferTooSmall);
    assert!(needed > 1);
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(
        unsafe { tb_scene_to_json(scene, buf.as_mut_ptr(), needed, ptr::null_mut()) },
        TbStatus::Ok
    );
    let mut again = ptr::null_mut();
    assert_eq!(
        unsafe { tb_scene_from_json(buf.as_ptr(), &mut again) },
        TbStatus::Ok
    );
    unsafe {
        tb_scene_free(scene);
        tb_scene_free(again);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut scene = ptr::null_mut();
    let bad = CString::new("nowhere").unwrap();
    assert_eq!(
        unsafe { tb_scene_builtin(bad.as_ptr(), &mut scene) },
        TbStatus::ConfigError
    );
    assert!(last_error().contains("nowhere"));
    assert!(scene.is_null());

    let broken = CString::new("{\n\"bs\": }").unwrap();
    assert_eq!(
        unsafe { tb_scene_from_json(broken.as_ptr(), &mut scene) },
        TbStatus::DataError
    );
    assert!(last_error().contains("line 2"));

    assert_eq!(
        unsafe { tb_scene_builtin(ptr::null(), &mut scene) },
        TbStatus::NullPointer
    );
    let name = CString::new("toy-manhattan").unwrap();
    assert_eq!(
        unsafe { tb_scene_builtin(name.as_ptr(), ptr::null_mut()) },
        TbStatus::NullPointer
    );

    let s = builtin();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { tb_dataset_generate(s, 9, 0.0, 4, 28e9, &mut ds) },
        TbStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { tb_dataset_generate(s, 1, 0.0, 0, 28e9, &mut ds) },
        TbStatus::InvalidArgument
    );
    unsafe {
        tb_scene_free(s);
        // freeing null is a no-op
        tb_scene_free(ptr::null_mut());
        tb_dataset_free(ptr::null_mut());
        tb_codebook_free(ptr::null_mut());
    }
}

#[test]
fn learn_and_evaluate_through_the_c_api() {
    let scene = builtin();
    let ds = small_dataset(scene);
    let (mut users, mut los, mut outage) = (0usize, 0usize, 0usize);
    assert_eq!(
        unsafe { tb_dataset_counts(ds, &mut users, &mut los, &mut outage) },
        TbStatus::Ok
    );
    assert!(users > 0 && los > 0 && los + outage <= users);

    let cfg = CString::new(
        r#"{"phase_bits": 2, "mode": {"kind": "split", "n_los": 2, "n_nlos": 2}, "sensing_beams": 16,
            "kmeans_max_iters": 50, "kmeans_normalize": false, "seed": 3,
            "ddpg": {"episodes": 2, "steps_per_episode": 32}}"#,
    )
    .unwrap();
    let mut learned = ptr::null_mut();
    assert_eq!(
        unsafe { tb_codebook_learn(ds, cfg.as_ptr(), &mut learned) },
        TbStatus::Ok,
        "{}",
        {
            let p = tb_last_error_message();
            if p.is_null() {
                String::new()
            } else {
                last_error()
            }
        }
    );
    let (mut beams, mut m) = (0usize, 0usize);
    assert_eq!(
        unsafe { tb_codebook_shape(learned, &mut beams, &mut m) },
        TbStatus::Ok
    );
    assert_eq!((beams, m), (4, 4));

    let mut phases = [0.0f64; 4];
    assert_eq!(
        unsafe { tb_codebook_beam_phases(learned, 0, phases.as_mut_ptr(), 4) },
        TbStatus::Ok
    );
    assert!(phases.iter().all(|p| p.abs() <= std::f64::consts::PI));
    assert_eq!(
        unsafe { tb_codebook_beam_phases(learned, 0, phases.as_mut_ptr(), 3) },
        TbStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { tb_codebook_beam_phases(learned, 99, phases.as_mut_ptr(), 4) },
        TbStatus::InvalidArgument
    );

    let mut dft = ptr::null_mut();
    assert_eq!(unsafe { tb_codebook_dft(ds, 4, &mut dft) }, TbStatus::Ok);
    let (mut mean, mut frac) = (0.0, 0.0);
    assert_eq!(
        unsafe { tb_evaluate(dft, ds, &mut mean, &mut frac) },
        TbStatus::Ok
    );
    assert!(mean.is_finite());
    assert_eq!(frac, outage as f64 / users as f64);

    // json round trip of the learned codebook
    let mut needed = 0usize;
    unsafe { tb_codebook_to_json(learned, ptr::null_mut(), 0, &mut needed) };
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(
        unsafe { tb_codebook_to_json(learned, buf.as_mut_ptr(), needed, ptr::null_mut()) },
        TbStatus::Ok
    );
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { tb_codebook_from_json(buf.as_ptr(), &mut back) },
        TbStatus::Ok
    );
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        tb_evaluate(learned, ds, &mut a, ptr::null_mut());
        tb_evaluate(back, ds, &mut b, ptr::null_mut());
    }
    assert_eq!(a.to_bits(), b.to_bits());

    unsafe {
        tb_codebook_free(back);
        tb_codebook_free(dft);
        tb_codebook_free(learned);
        tb_dataset_free(ds);
        tb_scene_free(scene);
    }
}

#[test]
fn bad_pipeline_json_is_a_config_error() {
    let scene = builtin();
    let ds = small_dataset(scene);
    let cfg = CString::new("{\"nope\": 1}").unwrap();
    let mut cb = ptr::null_mut();
    assert_eq!(
        unsafe { tb_codebook_learn(ds, cfg.as_ptr(), &mut cb) },
        TbStatus::ConfigError
    );
    assert!(cb.is_null());
    unsafe {
        tb_dataset_free(ds);
        tb_scene_free(scene);
    }
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/twinbeam.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "tb_version",
        "tb_last_error_message",
        "tb_scene_builtin",
        "tb_dataset_generate",
        "tb_codebook_learn",
        "tb_codebook_beam_phases",
        "tb_evaluate",
        "TB_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    // syntax-check with the system C compiler when one is installed
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"])
        .arg(&header)
        .output()
    {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
