//! Exercise the C ABI end to end from Rust: string fixture -> synthesis ->
//! closed loop -> norm, plus the error-path contracts.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use hyphinf_capi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    unsafe { hyphinf_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn full_pipeline_through_the_abi() {
    unsafe {
        let mut plant: *mut HyphinfPlant = ptr::null_mut();
        let status = hyphinf_plant_string_fixture(1.0 / 6.0, 1.0 / 6.0, &mut plant);
        assert_eq!(status, HyphinfStatus::Ok, "{}", last_error());

        let mut well_posed = 0i32;
        let mut sigma_min = 0.0f64;
        assert_eq!(
            hyphinf_plant_check_wellposed(plant, &mut well_posed, &mut sigma_min),
            HyphinfStatus::Ok
        );
        assert_eq!(well_posed, 1);
        assert!(sigma_min > 0.9);

        let mut p1 = 0.0f64;
        assert_eq!(hyphinf_plant_travel_time(plant, &mut p1), HyphinfStatus::Ok);
        assert!((p1 - 1.0).abs() < 1e-12);

        let b = 5.0f64.sqrt() / 10.0;
        let c = 9.0 * 5.0f64.sqrt() / 50.0;
        let sigma_q = CString::new(format!(
            r#"{{"A": [[-0.5]], "B": [[{b}]], "C": [[{c}]], "D": [[0.0]]}}"#
        ))
        .unwrap();
        let mut controller: *mut HyphinfController = ptr::null_mut();
        let status = hyphinf_synthesize(plant, 0.2, sigma_q.as_ptr(), &mut controller);
        assert_eq!(status, HyphinfStatus::Ok, "{}", last_error());

        let mut order = 0usize;
        assert_eq!(
            hyphinf_controller_order(controller, &mut order),
            HyphinfStatus::Ok
        );
        assert_eq!(order, 3);

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(
            hyphinf_controller_to_json(controller, &mut json),
            HyphinfStatus::Ok
        );
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        hyphinf_string_free(json);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        let d_c = parsed["D"][0][0].as_f64().unwrap();
        assert!((d_c - 1.0 / 6.0).abs() < 1e-10);

        let mut cl: *mut HyphinfClosedLoop = ptr::null_mut();
        assert_eq!(
            hyphinf_close_loop(plant, controller, &mut cl),
            HyphinfStatus::Ok
        );
        let mut rho = 0.0f64;
        assert_eq!(
            hyphinf_closed_loop_spectral_radius(cl, &mut rho),
            HyphinfStatus::Ok
        );
        assert!((rho - 0.9319).abs() < 1e-3);

        let mut norm = 0.0f64;
        let mut theta = 0.0f64;
        assert_eq!(
            hyphinf_closed_loop_hinf_norm(cl, 2048, &mut norm, &mut theta),
            HyphinfStatus::Ok
        );
        assert!(norm < 0.2 && norm > 0.18);

        hyphinf_closed_loop_free(cl);
        hyphinf_controller_free(controller);
        hyphinf_plant_free(plant);
    }
}

#[test]
fn plant_json_parsing_through_the_abi() {
    let json = CString::new(
        r#"{
            "n": 2, "k": 1, "p": 1, "l": 1, "m": 1,
            "lambda0": {"kind": "constant", "value": 1.0},
            "E": [[1.0], [0.0]],
            "K": [[-6.0, 0.0], [0.0, -1.0]],
            "L": [[0.0, 6.0], [-1.0, 0.0]],
            "Ky": [[0.0, 6.0]],
            "Ly": [[-6.0, 0.0]],
            "Kz": [[-1.0, 0.0]],
            "Lz": [[0.0, -1.0]]
        }"#,
    )
    .unwrap();
    unsafe {
        let mut plant: *mut HyphinfPlant = ptr::null_mut();
        assert_eq!(
            hyphinf_plant_from_json(json.as_ptr(), &mut plant),
            HyphinfStatus::Ok
        );
        hyphinf_plant_free(plant);
    }
}

#[test]
fn error_paths_set_codes_and_messages() {
    unsafe {
        // Malformed JSON.
        let bad = CString::new("{not json").unwrap();
        let mut plant: *mut HyphinfPlant = ptr::null_mut();
        assert_eq!(
            hyphinf_plant_from_json(bad.as_ptr(), &mut plant),
            HyphinfStatus::InvalidArgument
        );
        assert!(last_error().contains("json"));

        // Null pointers.
        assert_eq!(
            hyphinf_plant_from_json(ptr::null(), &mut plant),
            HyphinfStatus::InvalidArgument
        );

        // Bad fixture parameters.
        assert_eq!(
            hyphinf_plant_string_fixture(-1.0, 1.0, &mut plant),
            HyphinfStatus::InvalidArgument
        );

        // Synthesis below the solvable level: condition failure.
        let mut good: *mut HyphinfPlant = ptr::null_mut();
        assert_eq!(
            hyphinf_plant_string_fixture(1.0 / 6.0, 1.0 / 6.0, &mut good),
            HyphinfStatus::Ok
        );
        let mut controller: *mut HyphinfController = ptr::null_mut();
        let status = hyphinf_synthesize(good, 0.1, ptr::null(), &mut controller);
        assert_eq!(status, HyphinfStatus::ConditionFailed, "{}", last_error());
        assert!(last_error().contains("condition"));
        hyphinf_plant_free(good);

        // Frees tolerate null.
        hyphinf_plant_free(ptr::null_mut());
        hyphinf_controller_free(ptr::null_mut());
        hyphinf_closed_loop_free(ptr::null_mut());
        hyphinf_string_free(ptr::null_mut());
    }
}
