use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use martlens_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(martlens_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn trained(n: usize, seed: u64) -> *mut MlModel {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(martlens_dataset_synthetic(n, seed, &mut ds), ML_OK);
        let mut model = ptr::null_mut();
        assert_eq!(martlens_model_train(ds, 0.0, &mut model), ML_OK, "{}", last_error());
        martlens_dataset_free(ds);
        model
    }
}

fn instance_json() -> CString {
    let d = martlens::data::gen_synthetic_mart(1, 99);
    let map = d.schema.map_from_vector(&d.records[0].values);
    CString::new(serde_json::to_string(&map).unwrap()).unwrap()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(martlens_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn train_predict_explain_round_trip() {
    let model = trained(800, 4);
    unsafe {
        assert_eq!(martlens_model_features(model), 22);
        let inst = instance_json();
        let mut by_name = 0.0;
        assert_eq!(martlens_model_predict_json(model, inst.as_ptr(), &mut by_name), ML_OK);

        let d = martlens::data::gen_synthetic_mart(1, 99);
        let values = &d.records[0].values;
        let mut by_vec = 0.0;
        assert_eq!(
            martlens_model_predict(model, values.as_ptr(), values.len(), &mut by_vec),
            ML_OK
        );
        assert_eq!(by_name, by_vec);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(martlens_model_explain_json(model, inst.as_ptr(), 7, 2000, 0, &mut a), ML_OK);
        assert_eq!(martlens_model_explain_json(model, inst.as_ptr(), 7, 2000, 0, &mut b), ML_OK);
        let ja = CStr::from_ptr(a).to_str().unwrap().to_owned();
        assert_eq!(ja, CStr::from_ptr(b).to_str().unwrap());
        let v: serde_json::Value = serde_json::from_str(&ja).unwrap();
        assert_eq!(v["predicted_value"].as_f64().unwrap(), by_name);
        assert_eq!(v["contributions"].as_array().unwrap().len(), 6);
        martlens_string_free(a);
        martlens_string_free(b);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(martlens_model_save(model, path.as_ptr()), ML_OK);
        let mut loaded = ptr::null_mut();
        assert_eq!(martlens_model_load(path.as_ptr(), &mut loaded), ML_OK);
        let (mut id1, mut id2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(martlens_model_id(model, &mut id1), ML_OK);
        assert_eq!(martlens_model_id(loaded, &mut id2), ML_OK);
        assert_eq!(CStr::from_ptr(id1), CStr::from_ptr(id2));
        assert_eq!(CStr::from_ptr(id1).to_bytes().len(), 64);
        martlens_string_free(id1);
        martlens_string_free(id2);
        martlens_model_free(loaded);
        martlens_model_free(model);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let model = trained(300, 2);
    unsafe {
        let mut out = 0.0;
        let inst = CString::new(r#"{"PPK": 200.0}"#).unwrap();
        assert_eq!(martlens_model_predict_json(model, inst.as_ptr(), &mut out), ML_ERR_SCHEMA);
        assert!(last_error().contains("WT"), "{}", last_error());

        let bad = CString::new("{not json").unwrap();
        assert_eq!(martlens_model_predict_json(model, bad.as_ptr(), &mut out), ML_ERR_PARSE);
        assert_eq!(martlens_model_predict_json(model, ptr::null(), &mut out), ML_ERR_NULL);
        assert_eq!(martlens_model_predict(model, [1.0].as_ptr(), 1, &mut out), ML_ERR_INVALID_ARG);

        let missing = CString::new("/nonexistent/m.json").unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(martlens_model_load(missing.as_ptr(), &mut h), ML_ERR_IO);
        assert!(h.is_null());

        let mut ds = ptr::null_mut();
        assert_eq!(martlens_dataset_synthetic(0, 1, &mut ds), ML_ERR_INVALID_ARG);
        assert_eq!(martlens_model_train(ptr::null(), 0.0, &mut h), ML_ERR_NULL);

        // success clears the message
        assert_eq!(martlens_model_predict_json(model, instance_json().as_ptr(), &mut out), ML_OK);
        assert_eq!(last_error(), "");

        martlens_model_free(model);
        martlens_model_free(ptr::null_mut());
        martlens_dataset_free(ptr::null_mut());
        martlens_string_free(ptr::null_mut());
    }
}

#[test]
fn singular_design_reports_singular() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    let mut text = String::from("WT,PPK,total_price\n");
    for i in 0..20 {
        text.push_str(&format!("300,200,{}\n", 500 + i));
    }
    std::fs::write(&csv, text).unwrap();
    let path = CString::new(csv.to_str().unwrap()).unwrap();
    let target = CString::new("total_price").unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(martlens_dataset_load_csv(path.as_ptr(), target.as_ptr(), &mut ds), ML_OK);
        assert_eq!(martlens_dataset_rows(ds), 20);
        assert_eq!(martlens_dataset_features(ds), 2);
        let mut m = ptr::null_mut();
        assert_eq!(martlens_model_train(ds, 0.0, &mut m), ML_ERR_SINGULAR);
        assert!(m.is_null());
        martlens_dataset_free(ds);
    }
}

#[test]
fn tampered_bundle_is_rejected() {
    let model = trained(200, 8);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    let path = CString::new(p.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(martlens_model_save(model, path.as_ptr()), ML_OK);
        martlens_model_free(model);
    }
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    let b = v["artifact"]["model"]["intercept"].as_f64().unwrap();
    v["artifact"]["model"]["intercept"] = (b + 1.0).into();
    std::fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { martlens_model_load(path.as_ptr(), &mut h) }, ML_ERR_INTEGRITY);
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/martlens.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "martlens_version",
        "martlens_last_error",
        "martlens_dataset_load_csv",
        "martlens_dataset_synthetic",
        "martlens_dataset_free",
        "martlens_model_train",
        "martlens_model_load",
        "martlens_model_save",
        "martlens_model_predict",
        "martlens_model_predict_json",
        "martlens_model_explain_json",
        "martlens_model_free",
        "martlens_string_free",
        "typedef struct MlModel MlModel",
        "#define ML_ERR_SCHEMA 5",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    // A C compiler is optional; when present the header must compile on its own.
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    else {
        return;
    };
    assert!(status.success());
}
