//! Exercises the C ABI end to end: checkpoint loading, encode/decode,
//! PDDL parsing and solving, error codes and null handling.

use std::ffi::CString;
use std::os::raw::c_char;

use latentplan::ama1::{compile, emit_pddl};
use latentplan::bits::LatentBitVector;
use latentplan::ndcore::{RngStream, Tensor};
use latentplan::sae::{train_sae, SaeConfig};
use latentplan_capi::*;

fn micro_sae_checkpoint(dir: &std::path::Path) -> std::path::PathBuf {
    let cfg = SaeConfig {
        latent_bits: 8,
        categories: 2,
        input_dims: (9, 9),
        epochs: 40,
        batch_size: 16,
        conv_channels: 3,
        fc_width: 32,
        ..SaeConfig::default()
    };
    let mut data = vec![0.0f32; 16 * 81];
    for (i, chunk) in data.chunks_mut(81).enumerate() {
        let (r, c) = (i / 4, i % 4);
        for y in 0..3 {
            for x in 0..3 {
                chunk[(r * 2 + y) * 9 + (c * 2 + x)] = 1.0;
            }
        }
    }
    let imgs = Tensor::new(vec![16, 9, 9], data);
    let (model, _) = train_sae(&imgs, &cfg, &mut RngStream::new(5)).unwrap();
    let path = dir.join("sae.ckpt");
    model.save(&path).unwrap();
    path
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(lp_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn sae_roundtrip_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = micro_sae_checkpoint(dir.path());

    let mut handle: *mut lp_sae = std::ptr::null_mut();
    let status = unsafe { lp_sae_load(cpath(&ckpt).as_ptr(), &mut handle) };
    assert_eq!(status, lp_status::LP_OK);
    assert!(!handle.is_null());

    let bits_n = unsafe { lp_sae_latent_bits(handle) };
    assert_eq!(bits_n, 8);
    let (mut h, mut w) = (0usize, 0usize);
    assert_eq!(
        unsafe { lp_sae_input_dims(handle, &mut h, &mut w) },
        lp_status::LP_OK
    );
    assert_eq!((h, w), (9, 9));

    let pixels = vec![0.6f32; 81];
    let mut bits = vec![0u8; 8];
    assert_eq!(
        unsafe { lp_sae_encode(handle, pixels.as_ptr(), 81, bits.as_mut_ptr(), 8) },
        lp_status::LP_OK
    );
    assert!(bits.iter().all(|b| *b <= 1));

    let mut decoded = vec![0.0f32; 81];
    assert_eq!(
        unsafe { lp_sae_decode(handle, bits.as_ptr(), 8, decoded.as_mut_ptr(), 81) },
        lp_status::LP_OK
    );
    assert!(decoded.iter().all(|v| (0.0..=1.0).contains(v)));

    // encode again: identical bits (deterministic inference)
    let mut bits2 = vec![0u8; 8];
    unsafe { lp_sae_encode(handle, pixels.as_ptr(), 81, bits2.as_mut_ptr(), 8) };
    assert_eq!(bits, bits2);

    // shape errors are reported, not crashes
    assert_eq!(
        unsafe { lp_sae_encode(handle, pixels.as_ptr(), 80, bits.as_mut_ptr(), 8) },
        lp_status::LP_SHAPE_MISMATCH
    );
    assert_eq!(
        unsafe { lp_sae_encode(handle, pixels.as_ptr(), 81, bits.as_mut_ptr(), 4) },
        lp_status::LP_BUFFER_TOO_SMALL
    );
    let mut buf = vec![0 as c_char; 128];
    let len = unsafe { lp_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(len > 0);

    unsafe { lp_sae_free(handle) };
}

#[test]
fn null_arguments_are_rejected() {
    let mut handle: *mut lp_sae = std::ptr::null_mut();
    assert_eq!(
        unsafe { lp_sae_load(std::ptr::null(), &mut handle) },
        lp_status::LP_NULL_ARGUMENT
    );
    assert_eq!(unsafe { lp_sae_latent_bits(std::ptr::null()) }, 0);
    unsafe { lp_sae_free(std::ptr::null_mut()) }; // harmless
    unsafe { lp_plan_free(std::ptr::null_mut()) };
    unsafe { lp_strips_free(std::ptr::null_mut()) };
}

#[test]
fn missing_checkpoint_reports_io_error() {
    let mut handle: *mut lp_sae = std::ptr::null_mut();
    let path = CString::new("/nonexistent/sae.ckpt").unwrap();
    assert_eq!(
        unsafe { lp_sae_load(path.as_ptr(), &mut handle) },
        lp_status::LP_IO_ERROR
    );
}

#[test]
fn pddl_solving_through_the_abi() {
    // four-state chain: 00 -> 01 -> 11 -> 10
    let bv = |s: &str| s.parse::<LatentBitVector>().unwrap();
    let transitions = vec![
        (bv("00"), bv("01")),
        (bv("01"), bv("11")),
        (bv("11"), bv("10")),
    ];
    let (mut problem, _) = compile(&transitions).unwrap();
    problem.set_instance(bv("00"), bv("10")).unwrap();
    let (dom, prob) = emit_pddl(&problem, "chain", "inst").unwrap();

    let dir = tempfile::tempdir().unwrap();
    let dpath = dir.path().join("domain.pddl");
    let ppath = dir.path().join("problem.pddl");
    std::fs::write(&dpath, dom).unwrap();
    std::fs::write(&ppath, prob).unwrap();

    let mut strips: *mut lp_strips = std::ptr::null_mut();
    assert_eq!(
        unsafe { lp_strips_load_pddl(cpath(&dpath).as_ptr(), cpath(&ppath).as_ptr(), &mut strips) },
        lp_status::LP_OK
    );
    assert_eq!(unsafe { lp_strips_num_actions(strips) }, 3);
    assert_eq!(unsafe { lp_strips_num_bits(strips) }, 2);

    let mut plan: *mut lp_plan = std::ptr::null_mut();
    assert_eq!(
        unsafe { lp_strips_solve(strips, 30, 0, 0, &mut plan) },
        lp_status::LP_OK
    );
    assert_eq!(unsafe { lp_plan_status(plan) }, 0);
    assert_eq!(unsafe { lp_plan_length(plan) }, 3);

    // replay the states through the ABI
    let mut bits = vec![0u8; 2];
    unsafe { lp_plan_state_bits(plan, 0, bits.as_mut_ptr(), 2) };
    assert_eq!(bits, vec![0, 0]);
    unsafe { lp_plan_state_bits(plan, 3, bits.as_mut_ptr(), 2) };
    assert_eq!(bits, vec![1, 0]);
    assert_eq!(
        unsafe { lp_plan_state_bits(plan, 9, bits.as_mut_ptr(), 2) },
        lp_status::LP_INVALID_ARGUMENT
    );
    assert_ne!(unsafe { lp_plan_action_id(plan, 0) }, u32::MAX);

    unsafe { lp_plan_free(plan) };
    unsafe { lp_strips_free(strips) };
}

#[test]
fn header_and_crate_agree_on_status_values() {
    // spot-check the ABI contract encoded in include/latentplan.h
    assert_eq!(lp_status::LP_OK as i32, 0);
    assert_eq!(lp_status::LP_NULL_ARGUMENT as i32, 1);
    assert_eq!(lp_status::LP_IO_ERROR as i32, 2);
    assert_eq!(lp_status::LP_FORMAT_ERROR as i32, 3);
    assert_eq!(lp_status::LP_SHAPE_MISMATCH as i32, 4);
    assert_eq!(lp_status::LP_INVALID_ARGUMENT as i32, 5);
    assert_eq!(lp_status::LP_UNSOLVED as i32, 6);
    assert_eq!(lp_status::LP_BUFFER_TOO_SMALL as i32, 7);
}
