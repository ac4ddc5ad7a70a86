use std::ffi::{CStr, CString};
use std::ptr;

use pvrag::descriptor::{LocationLabel, PvDescriptor, QuantityInterval};
use pvrag::grid::{parse_case_str, solve_power_flow, PowerFlowOptions, CASE30};
use pvrag::index::{Embedding, ReferenceEntry, VectorIndex};
use pvrag_ffi::*;

fn last_error() -> String {
    let p = pvrag_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn entry(id: &str, city: &str, v: Vec<f32>) -> ReferenceEntry {
    ReferenceEntry {
        id: id.into(),
        city: city.into(),
        continent: "x".into(),
        embedding: Embedding::new(v).unwrap(),
        label: PvDescriptor::absent("none"),
    }
}

fn index_file(dir: &tempfile::TempDir) -> CString {
    let mut idx = VectorIndex::new(3);
    idx.insert_normalizing(entry("a", "north", vec![1.0, 0.0, 0.0]))
        .unwrap();
    idx.insert_normalizing(entry("b", "north", vec![0.0, 1.0, 0.0]))
        .unwrap();
    idx.insert_normalizing(entry("c", "south", vec![0.9, 0.1, 0.0]))
        .unwrap();
    let path = dir.path().join("ref.pvix");
    idx.save(&path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn index_round_trip_and_search() {
    let dir = tempfile::tempdir().unwrap();
    let path = index_file(&dir);
    let mut h: *mut PvragIndex = ptr::null_mut();
    unsafe {
        assert_eq!(pvrag_index_load(path.as_ptr(), &mut h), PvragStatus::Ok);
        assert_eq!(pvrag_index_len(h), 3);
        assert_eq!(pvrag_index_dim(h), 3);

        let q = [2.0f32, 0.0, 0.0];
        let mut hits = [PvragHit::default(); 3];
        let mut n = 0usize;
        let st = pvrag_index_search(h, q.as_ptr(), 3, 3, ptr::null(), hits.as_mut_ptr(), &mut n);
        assert_eq!(st, PvragStatus::Ok);
        assert_eq!(n, 3);
        let ids: Vec<String> = hits
            .iter()
            .map(|h2| {
                CStr::from_ptr(pvrag_index_entry_id(h, h2.entry))
                    .to_string_lossy()
                    .into_owned()
            })
            .collect();
        assert_eq!(ids, ["a", "c", "b"]);
        assert!(hits[0].distance.abs() < 1e-7);
        assert!((hits[0].similarity - 1.0).abs() < 1e-7);
        assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
        for h2 in &hits {
            assert!((h2.similarity - 1.0 / (1.0 + h2.distance)).abs() < 1e-12);
        }

        let north = CString::new("north").unwrap();
        let st = pvrag_index_search(
            h,
            q.as_ptr(),
            3,
            3,
            north.as_ptr(),
            hits.as_mut_ptr(),
            &mut n,
        );
        assert_eq!(st, PvragStatus::Ok);
        assert_eq!(n, 1);
        assert_eq!(
            CStr::from_ptr(pvrag_index_entry_city(h, hits[0].entry))
                .to_str()
                .unwrap(),
            "south"
        );

        let st = pvrag_index_search(h, q.as_ptr(), 2, 1, ptr::null(), hits.as_mut_ptr(), &mut n);
        assert_eq!(st, PvragStatus::InvalidArgument);
        assert!(last_error().contains("dimension"));
        let st = pvrag_index_search(h, q.as_ptr(), 3, 0, ptr::null(), hits.as_mut_ptr(), &mut n);
        assert_eq!(st, PvragStatus::InvalidArgument);

        assert!(pvrag_index_entry_id(h, 99).is_null());
        pvrag_index_free(h);
        pvrag_index_free(ptr::null_mut());
    }
}

#[test]
fn index_load_errors() {
    let missing = CString::new("/nonexistent/ref.pvix").unwrap();
    let mut h: *mut PvragIndex = ptr::null_mut();
    unsafe {
        assert_eq!(pvrag_index_load(missing.as_ptr(), &mut h), PvragStatus::Io);
        assert!(h.is_null());
        assert_eq!(
            pvrag_index_load(ptr::null(), &mut h),
            PvragStatus::NullPointer
        );
        assert!(last_error().contains("path"));
        assert_eq!(
            pvrag_index_load(missing.as_ptr(), ptr::null_mut()),
            PvragStatus::NullPointer
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pvix");
    std::fs::write(&bad, b"NOPE").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(pvrag_index_load(bad.as_ptr(), &mut h), PvragStatus::Format);
    }
    assert_eq!(unsafe { pvrag_index_len(ptr::null()) }, 0);
}

#[test]
fn descriptor_parsing() {
    let raw = CString::new(
        "```json\n{\"presence\": \"true\", \"quantity\": \"(5,10]\", \"location\": \"top-left\", \"explanation\": \"e\"}\n```",
    )
    .unwrap();
    let mut d = PvragDescriptor::default();
    unsafe {
        assert_eq!(
            pvrag_parse_descriptor(raw.as_ptr(), &mut d),
            PvragStatus::Ok
        );
    }
    assert!(d.presence);
    assert_eq!(
        d.quantity,
        QuantityInterval::FiveToTen.rank().unwrap() as i32
    );
    assert_eq!(
        d.location,
        LocationLabel::ALL
            .iter()
            .position(|l| *l == LocationLabel::TopLeft)
            .unwrap() as i32
    );
    assert_eq!(pvrag_quantity_panels(d.quantity), 7.0);

    let neg = CString::new(
        r#"{"presence":"false","quantity":"NA","location":"NA","explanation":"bare roof"}"#,
    )
    .unwrap();
    unsafe {
        assert_eq!(
            pvrag_parse_descriptor(neg.as_ptr(), &mut d),
            PvragStatus::Ok
        );
    }
    assert_eq!(
        d,
        PvragDescriptor {
            presence: false,
            quantity: -1,
            location: -1
        }
    );

    let bad =
        CString::new(r#"{"presence":"true","quantity":"(2,3]","location":"top","explanation":""}"#)
            .unwrap();
    unsafe {
        assert_eq!(
            pvrag_parse_descriptor(bad.as_ptr(), &mut d),
            PvragStatus::Format
        );
    }
    assert!(!last_error().is_empty());
    assert_eq!(pvrag_quantity_panels(-1), -1.0);
    assert_eq!(pvrag_quantity_panels(4), -1.0);
}

#[test]
fn power_flow_matches_library() {
    let mut net: *mut PvragNetwork = ptr::null_mut();
    unsafe {
        assert_eq!(pvrag_network_case30(&mut net), PvragStatus::Ok);
        let n = pvrag_network_bus_count(net);
        assert_eq!(n, 30);
        assert_eq!(pvrag_network_bus_id(net, 0), 1);
        let mut vm = vec![0.0; n];
        let mut va = vec![0.0; n];
        let mut s = PvragPowerFlow::default();
        let st = pvrag_network_solve(
            net,
            ptr::null(),
            ptr::null(),
            n,
            0.0,
            0,
            vm.as_mut_ptr(),
            va.as_mut_ptr(),
            &mut s,
        );
        assert_eq!(st, PvragStatus::Ok);

        let lib_net = parse_case_str(CASE30).unwrap();
        let sol = solve_power_flow(
            &lib_net,
            &lib_net.nominal_demands(),
            &PowerFlowOptions::default(),
        )
        .unwrap();
        assert_eq!(vm, sol.v_mag_pu);
        assert_eq!(va, sol.v_ang_rad);
        assert_eq!(s.slack_p_mw, sol.slack_p_mw);
        assert_eq!(s.iterations, sol.iterations);

        // Explicit zero demand is solvable too.
        let zeros = vec![0.0; n];
        let st = pvrag_network_solve(
            net,
            zeros.as_ptr(),
            zeros.as_ptr(),
            n,
            1e-10,
            30,
            ptr::null_mut(),
            ptr::null_mut(),
            &mut s,
        );
        assert_eq!(st, PvragStatus::Ok);

        let st = pvrag_network_solve(
            net,
            ptr::null(),
            ptr::null(),
            n - 1,
            0.0,
            0,
            ptr::null_mut(),
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, PvragStatus::InvalidArgument);
        let st = pvrag_network_solve(
            net,
            zeros.as_ptr(),
            ptr::null(),
            n,
            0.0,
            0,
            ptr::null_mut(),
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, PvragStatus::NullPointer);

        // Ten times nominal demand does not converge.
        let base = lib_net.nominal_demands();
        let p: Vec<f64> = base.p_mw.iter().map(|x| 10.0 * x).collect();
        let q: Vec<f64> = base.q_mvar.iter().map(|x| 10.0 * x).collect();
        let st = pvrag_network_solve(
            net,
            p.as_ptr(),
            q.as_ptr(),
            n,
            0.0,
            0,
            ptr::null_mut(),
            ptr::null_mut(),
            &mut s,
        );
        assert_eq!(st, PvragStatus::NonConvergence);
        assert!(!last_error().is_empty());
        pvrag_network_free(net);
    }
}

#[test]
fn network_load_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case30.m");
    std::fs::write(&path, CASE30).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut net: *mut PvragNetwork = ptr::null_mut();
    unsafe {
        assert_eq!(pvrag_network_load(c.as_ptr(), &mut net), PvragStatus::Ok);
        assert_eq!(pvrag_network_bus_count(net), 30);
        pvrag_network_free(net);
    }
    std::fs::write(&path, "function mpc = broken\nmpc.bus = [\n1 9 0 0;\n];\n").unwrap();
    unsafe {
        assert_eq!(
            pvrag_network_load(c.as_ptr(), &mut net),
            PvragStatus::Format
        );
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let mut h: *mut PvragIndex = ptr::null_mut();
        assert_eq!(
            pvrag_index_load(ptr::null(), &mut h),
            PvragStatus::NullPointer
        );
    }
    let other = std::thread::spawn(|| pvrag_last_error().is_null())
        .join()
        .unwrap();
    assert!(other);
    assert!(!pvrag_last_error().is_null());
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pvrag_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/pvrag.h");
    let src = include_str!("../src/lib.rs");
    let mut n = 0;
    for line in src.lines() {
        let Some(rest) = line.split("extern \"C\" fn ").nth(1) else {
            continue;
        };
        let name = rest.split('(').next().unwrap();
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
        n += 1;
    }
    assert!(n >= 15);
    for code in ["PVRAG_STATUS_OK = 0", "PVRAG_STATUS_INTERNAL = 99"] {
        assert!(header.contains(code));
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| {
        std::process::Command::new(c)
            .arg("--version")
            .output()
            .is_ok()
    }) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"pvrag.h\"\nint main(void) { PvragIndex *i = 0; return pvrag_index_len(i) == 0 ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = std::process::Command::new(cc)
        .args([
            "-std=c99",
            "-Wall",
            "-Werror",
            "-fsyntax-only",
            "-I",
            include,
        ])
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
