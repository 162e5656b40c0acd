use std::ffi::{CStr, CString};
use std::ptr;

use sjde::calibration::{interference_from_outage, OutageSpec};
use sjde::channel::{ChannelPrior, RealObservationPair};
use sjde::config::ScenarioConfig;
use sjde::sim::{compute_artifacts, run_trial, OperatingPoint, Scenario};
use sjde::sjde::{llr, mmse_estimate, SjdeState};
use sjde_ffi::*;

const PRIOR: SjdePrior = SjdePrior {
    mean_re: 0.3,
    variance_re: 0.5,
    noise_var: 0.8,
};

fn last_error() -> String {
    let p = sjde_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn state_matches_library() {
    let prior = ChannelPrior::new(PRIOR.mean_re, PRIOR.variance_re, PRIOR.noise_var).unwrap();
    let mut reference = SjdeState::new();
    let h = sjde_state_new();
    for k in 0..30 {
        let x = k as f64;
        let obs = [
            SjdeObservation {
                y1: (0.7 * x).sin(),
                y2: (0.3 * x).cos(),
                pilot_power: 1.0 + 0.1 * x,
            },
            SjdeObservation {
                y1: -0.2 * x.sqrt(),
                y2: 0.05 * x,
                pilot_power: 0.5,
            },
        ];
        let pairs = obs.map(|o| RealObservationPair {
            y1: o.y1,
            y2: o.y2,
            pilot_power: o.pilot_power,
        });
        reference.push_step(&pairs);
        assert_eq!(
            unsafe { sjde_state_push_step(h, obs.as_ptr()) },
            SjdeStatus::Ok
        );
    }
    let mut t = 0;
    assert_eq!(unsafe { sjde_state_time(h, &mut t) }, SjdeStatus::Ok);
    assert_eq!(t, reference.t());
    for pu in 0..2u32 {
        let mut u = 0.0;
        assert_eq!(unsafe { sjde_state_fisher(h, pu, &mut u) }, SjdeStatus::Ok);
        assert_eq!(u, reference.fisher(pu as usize));
        for c in 0..2u32 {
            let (mut est, mut l) = (0.0, 0.0);
            assert_eq!(
                unsafe { sjde_state_channel(h, PRIOR, pu, c, &mut est, &mut l) },
                SjdeStatus::Ok
            );
            assert_eq!(
                est,
                mmse_estimate(&reference, &prior, pu as usize, c as usize)
            );
            assert_eq!(l, llr(&reference, &prior, pu as usize, c as usize));
        }
    }
    let (mut est, mut l) = (0.0, 0.0);
    assert_eq!(
        unsafe { sjde_state_channel(h, PRIOR, 2, 0, &mut est, &mut l) },
        SjdeStatus::OutOfRange
    );
    assert!(last_error().contains("pu 2"));
    assert_eq!(
        unsafe { sjde_state_channel(h, PRIOR, 0, 0, ptr::null_mut(), &mut l) },
        SjdeStatus::NullPointer
    );
    let bad = SjdePrior {
        variance_re: -1.0,
        ..PRIOR
    };
    assert_eq!(
        unsafe { sjde_state_channel(h, bad, 0, 0, &mut est, &mut l) },
        SjdeStatus::InvalidParameter
    );
    let nan = [SjdeObservation {
        y1: f64::NAN,
        ..Default::default()
    }; 2];
    assert_eq!(
        unsafe { sjde_state_push_step(h, nan.as_ptr()) },
        SjdeStatus::InvalidParameter
    );
    unsafe { sjde_state_free(h) };
    unsafe { sjde_state_free(ptr::null_mut()) };
}

#[test]
fn decision_rule() {
    let est = [1.0, 0.0, 1.0];
    let (mut d, mut thr) = (9u8, 0.0);
    // threshold = ln(1 / (1 + 0.5 * 2)) = -ln 2
    let s = unsafe {
        sjde_decide(
            -0.6,
            est.as_ptr(),
            est.len(),
            1.0,
            1.0,
            0.5,
            &mut d,
            &mut thr,
        )
    };
    assert_eq!(s, SjdeStatus::Ok);
    assert!((thr + 2f64.ln()).abs() < 1e-15);
    assert_eq!(d, 1);
    unsafe {
        sjde_decide(
            -0.8,
            est.as_ptr(),
            est.len(),
            1.0,
            1.0,
            0.5,
            &mut d,
            ptr::null_mut(),
        )
    };
    assert_eq!(d, 0);
    let s = unsafe { sjde_decide(0.0, ptr::null(), 0, 0.0, 0.0, 1.0, &mut d, &mut thr) };
    assert_eq!(s, SjdeStatus::UndefinedThreshold);
    let s = unsafe { sjde_decide(0.0, ptr::null(), 3, 1.0, 1.0, 1.0, &mut d, &mut thr) };
    assert_eq!(s, SjdeStatus::NullPointer);
}

#[test]
fn delta_root() {
    let mean_abs = [0.25 * 0.25f64.tanh(), 0.25 * 0.25f64.tanh()];
    let mut delta = 0.0;
    assert_eq!(
        unsafe { sjde_solve_delta(1.0, mean_abs.as_ptr(), 2, &mut delta) },
        SjdeStatus::Ok
    );
    assert!((delta * (delta / 2.0).tanh() - mean_abs.iter().sum::<f64>()).abs() < 1e-10);
    assert_ne!(
        unsafe { sjde_solve_delta(0.0, mean_abs.as_ptr(), 2, &mut delta) },
        SjdeStatus::Ok
    );
}

#[test]
fn outage_matches_library() {
    let spec = SjdeOutageSpec {
        p_out: 0.075,
        pu_rate: 1.0,
        pu_power: 10.0,
        eta: 0.1,
        g_prior: SjdePrior {
            mean_re: 0.0,
            variance_re: 0.5,
            noise_var: 1.0,
        },
        safety_margin: 0.5,
    };
    let lib = OutageSpec {
        p_out: 0.075,
        pu_rate: 1.0,
        pu_power: 10.0,
        eta: 0.1,
        g_prior: ChannelPrior::rayleigh(1.0, 1.0).unwrap(),
        safety_margin: 0.5,
    };
    let mut cap = 0.0;
    assert_eq!(
        unsafe { sjde_interference_cap(spec, &mut cap) },
        SjdeStatus::Ok
    );
    assert_eq!(cap, interference_from_outage(&lib).unwrap());
    let mut p = 0.0;
    assert_eq!(
        unsafe { sjde_outage_probability(spec, cap, &mut p) },
        SjdeStatus::Ok
    );
    assert!((p - 0.0375).abs() < 1e-12);
    assert_eq!(
        unsafe { sjde_outage_probability(spec, -1.0, &mut p) },
        SjdeStatus::InvalidParameter
    );
    let infeasible = SjdeOutageSpec {
        p_out: 1e-9,
        eta: 50.0,
        ..spec
    };
    assert_eq!(
        unsafe { sjde_interference_cap(infeasible, &mut cap) },
        SjdeStatus::Infeasible
    );
}

#[test]
fn message_round_trip() {
    let msg = SjdeLtMessage {
        su_id: 3,
        pu_index: 1,
        component: 0,
        positive: 1,
        index: 2,
        t: 17,
    };
    let mut written = 0usize;
    let mut small = [0u8; 1];
    let s = unsafe { sjde_lt_encode(&msg, 3, small.as_mut_ptr(), small.len(), &mut written) };
    assert_eq!(s, SjdeStatus::BufferTooSmall);
    let mut buf = vec![0u8; written];
    assert_eq!(
        unsafe { sjde_lt_encode(&msg, 3, buf.as_mut_ptr(), buf.len(), &mut written) },
        SjdeStatus::Ok
    );
    let mut back = SjdeLtMessage::default();
    assert_eq!(
        unsafe { sjde_lt_decode(buf.as_ptr(), buf.len(), 3, 17, &mut back) },
        SjdeStatus::Ok
    );
    assert_eq!(back, msg);
    let wide = SjdeLtMessage { index: 4, ..msg };
    let s = unsafe { sjde_lt_encode(&wide, 3, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(s, SjdeStatus::OutOfRange);
    let s = unsafe { sjde_lt_decode(buf.as_ptr(), buf.len() + 1, 3, 0, &mut back) };
    assert_eq!(s, SjdeStatus::MalformedMessage);
}

#[test]
fn sampler_tracks_increments() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { sjde_lt_sampler_new(1.0, 4.0, 3, &mut h) },
        SjdeStatus::Ok
    );
    let (mut fired, mut trig) = (0u8, SjdeTrigger::default());
    let mut sent = 0.0;
    let mut total = 0.0;
    for k in 0..200 {
        let y = 0.37 * ((k as f64) * 0.9).sin();
        total += y;
        assert_eq!(
            unsafe { sjde_lt_sampler_update(h, y, &mut fired, &mut trig) },
            SjdeStatus::Ok
        );
        if fired == 1 {
            sent += trig.increment;
        }
    }
    let mut pending = 0.0;
    assert_eq!(
        unsafe { sjde_lt_sampler_pending(h, &mut pending) },
        SjdeStatus::Ok
    );
    assert!((sent + pending - total).abs() < 1e-9);
    unsafe { sjde_lt_sampler_free(h) };
    let mut h2 = ptr::null_mut();
    assert_eq!(
        unsafe { sjde_lt_sampler_new(-1.0, 4.0, 3, &mut h2) },
        SjdeStatus::InvalidParameter
    );
    assert!(h2.is_null());
}

fn tiny() -> ScenarioConfig {
    ScenarioConfig {
        tp: 120,
        trials: 40,
        tuning_trials: 40,
        alpha_trials: 200,
        calibration_frames: 100,
        calibration_horizon: 80,
        ..Default::default()
    }
}

#[test]
fn simulator_matches_library() {
    let cfg = tiny();
    let text = CString::new(cfg.to_toml().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { sjde_simulator_new(text.as_ptr(), &mut h) },
        SjdeStatus::Ok
    );
    let scn = Scenario::new(cfg).unwrap();
    let art = compute_artifacts(&scn).unwrap();
    let mut delta = 0.0;
    assert_eq!(
        unsafe { sjde_simulator_delta(h, &mut delta) },
        SjdeStatus::Ok
    );
    assert_eq!(delta, art.delta);

    let op = SjdeOperatingPoint {
        scheme: SjdeScheme::DsaSjde,
        gamma: 20.0,
        sprt_lower: 0.0,
        sprt_upper: 0.0,
        tau: 0,
        theta: 0.0,
    };
    for index in 0..10 {
        let mut s = SjdeTrialSummary::default();
        assert_eq!(
            unsafe { sjde_simulator_run_trial(h, op, 5, index, &mut s) },
            SjdeStatus::Ok
        );
        let r = run_trial(
            &scn,
            &art,
            &OperatingPoint::DsaSjde { gamma: 20.0 },
            5,
            index,
        )
        .unwrap();
        assert_eq!(s.tau, r.tau);
        assert_eq!(s.decision, r.decision.map_or(-1, |d| d as i8));
        assert_eq!(s.rate, r.rate);
        assert_eq!(s.messages, r.messages);
        assert_eq!(s.interference, r.interference);
    }
    let underlay = SjdeOperatingPoint {
        scheme: SjdeScheme::Underlay,
        ..op
    };
    let mut s = SjdeTrialSummary::default();
    assert_eq!(
        unsafe { sjde_simulator_run_trial(h, underlay, 5, 0, &mut s) },
        SjdeStatus::Ok
    );
    assert_eq!((s.tau, s.decision), (0, -1));
    let bad = SjdeOperatingPoint {
        scheme: SjdeScheme::DsaSprt,
        sprt_lower: 1.0,
        sprt_upper: -1.0,
        ..op
    };
    assert_ne!(
        unsafe { sjde_simulator_run_trial(h, bad, 5, 0, &mut s) },
        SjdeStatus::Ok
    );
    unsafe { sjde_simulator_free(h) };

    let broken = CString::new("num_su = 3\n").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { sjde_simulator_new(broken.as_ptr(), &mut h) },
        SjdeStatus::Config
    );
    assert!(h.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/sjde.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "sjde_last_error",
        "sjde_state_push_step",
        "sjde_decide",
        "sjde_simulator_run_trial",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ SjdeStateHandle *h = sjde_state_new(); sjde_state_free(h); return SJDE_STATUS_OK; }}\n"
        ),
    )
    .unwrap();
    match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(_) => eprintln!("no C compiler; header syntax not checked"),
    }
}
