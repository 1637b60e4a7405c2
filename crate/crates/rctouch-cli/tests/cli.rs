use rctouch::circuit::WiringMode;
use rctouch::geom::Vec3;
use rctouch::mesh::{box_mesh, write_stl};
use rctouch::selection::{write_selection, SelectedPoint, TouchpointSet};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures(dir: &Path, mode: WiringMode) -> (PathBuf, PathBuf) {
    let mesh = box_mesh(Vec3::new(-60.0, -30.0, -20.0), Vec3::new(60.0, 30.0, 20.0));
    let stl = dir.join("slab.stl");
    std::fs::write(&stl, write_stl(&mesh, "slab")).unwrap();
    let mut wiring = vec![SelectedPoint::at("w1", Vec3::new(-60.0, 0.0, 0.0))];
    if mode == WiringMode::DoubleWire {
        wiring.push(SelectedPoint::at("w2", Vec3::new(60.0, 0.0, 0.0)));
    }
    let set = TouchpointSet {
        mode,
        touchpoints: (0..4)
            .map(|i| SelectedPoint::at(format!("t{i}"), Vec3::new(-36.0 + 24.0 * i as f64, 0.0, 20.0)))
            .collect(),
        wiring_points: wiring,
    };
    let sel = dir.join("selection.json");
    std::fs::write(&sel, write_selection(&set).unwrap()).unwrap();
    (stl, sel)
}

fn rctouch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rctouch")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rctouch(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn staged_commands_match_the_full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (stl, sel) = fixtures(d, WiringMode::SingleWire);
    let full = d.join("full");
    let text = ok(&["pipeline", "--mesh", s(&stl), "--selection", s(&sel), "--out", s(&full), "--voxel-size", "2"]);
    assert!(text.contains("min separation"));
    assert!(text.contains("voxelize"));

    let route = d.join("route.json");
    let poly = d.join("poly.json");
    let text = ok(&[
        "route", "--mesh", s(&stl), "--selection", s(&sel), "--out", s(&route), "--polylines", s(&poly),
        "--voxel-size", "2",
    ]);
    assert_eq!(text.lines().filter(|l| l.contains("\tLow\t")).count(), 3);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&poly).unwrap()).unwrap();
    assert_eq!(doc["segments"].as_array().unwrap().len(), 4);

    let opt = d.join("opt.json");
    let table = d.join("grid.tsv");
    ok(&["optimize", "--route", s(&route), "--out", s(&opt), "--table", s(&table)]);
    assert!(std::fs::read_to_string(&table).unwrap().starts_with("r1_ohm\t"));
    let embed = d.join("embed.json");
    ok(&["synth", "--route", s(&route), "--optimization", s(&opt), "--out", s(&embed), "--voxel-size", "2"]);
    let staged = d.join("staged");
    ok(&["export", "--mesh", s(&stl), "--route", s(&route), "--embed", s(&embed), "--out", s(&staged), "--voxel-size", "2"]);

    let (a, b) = (files(&full), files(&staged));
    assert_eq!(a.len(), 5);
    assert_eq!(a, b);

    let sim = ok(&["simulate", "--circuit", s(&full.join("manifest.json")), "--session", s(&d.join("session.tsv"))]);
    assert!(sim.contains("pair\tdt_s"));
    assert!(d.join("session.tsv").exists());
    let rob = ok(&["robustness", "--circuit", s(&embed), "--samples", "20", "--sigmas", "0,2"]);
    assert_eq!(rob.lines().filter(|l| l.starts_with("single-wire\t")).count(), 2);
}

#[test]
fn optimize_without_route() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o.json");
    let text = ok(&["optimize", "--n", "3", "--r-max", "2.5e6", "--out", s(&out), "--r1-step", "500000"]);
    assert!(text.starts_with("r1 "));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["r1"].as_f64().unwrap() > 0.0);
    let bad = rctouch(&["optimize", "--n", "3", "--out", s(&out)]);
    assert!(!bad.status.success());
}

#[test]
fn validate_reports_and_fails_on_open_meshes() {
    let tmp = tempfile::tempdir().unwrap();
    let (stl, sel) = fixtures(tmp.path(), WiringMode::DoubleWire);
    let text = ok(&["validate", "--mesh", s(&stl), "--selection", s(&sel)]);
    assert!(text.contains("\"watertight\": true"));
    assert!(text.contains("selection: double-wire ok"));

    let mut open = rctouch::mesh::read_stl_file(&stl).unwrap();
    open.triangles.pop();
    let open_path = tmp.path().join("open.stl");
    std::fs::write(&open_path, write_stl(&open, "open")).unwrap();
    let out = rctouch(&["validate", "--mesh", s(&open_path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"watertight\": false"));
}

#[test]
fn mode_mismatch_is_reported_with_its_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let (stl, sel) = fixtures(tmp.path(), WiringMode::DoubleWire);
    let out = rctouch(&[
        "pipeline", "--mesh", s(&stl), "--selection", s(&sel), "--out", s(&tmp.path().join("x")), "--mode",
        "single-wire",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("validate"), "{err}");
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let (stl, sel) = fixtures(tmp.path(), WiringMode::DoubleWire);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"voxel": {"voxel_size": 50.0}, "double_wire_r1": 2000000.0}"#).unwrap();
    let out = tmp.path().join("b");
    ok(&["pipeline", "--mesh", s(&stl), "--selection", s(&sel), "--out", s(&out), "--config", s(&cfg), "--voxel-size", "2"]);
    let m = rctouch::export::read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(m.parameters["voxel"]["voxel_size"], 2.0);
    assert_eq!(m.circuit.r[0], 2e6);
}
