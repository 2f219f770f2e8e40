use std::path::Path;
use std::process::{Command, Output};

fn fbdof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbdof")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fig2_csv() {
    let o = fbdof(&["sweep", "fig2", "--d", "2", "--m-min", "2", "--m-max", "5"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "M,dof_feedback,dof_nofeedback,gain\n2,2,2,0\n3,4,4,0\n4,6,4,2\n5,6,4,2\n"
    );
}

#[test]
fn fig4_to_file_with_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fig4.csv");
    let svg = dir.path().join("fig4.svg");
    let o = fbdof(&["sweep", "fig4", "--dd", "1", "--m-min", "2", "--m-max", "8", "--out", path(&csv), "--svg", path(&svg)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("M,lower,upper,regime\n2,3,9,IA\n"));
    assert!(text.contains("4,6,9,ZF\n"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn channel_file_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let ch = dir.path().join("ch.json");
    let bf = dir.path().join("bf.json");
    let t1 = dir.path().join("t1.json");
    let t2 = dir.path().join("t2.json");
    let o = fbdof(&["channel", "gen", "--k", "3", "--m", "5", "--dd", "1", "--dc", "5", "--seed", "4", "--out", path(&ch)]);
    assert!(o.status.success());
    let o = fbdof(&[
        "run", "three-user", "--channel", path(&ch), "--save-beamformers", path(&bf), "--trace", path(&t1), "--json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dof"]["achieved_dof"], "6");
    assert_eq!(v["dof"]["decoded_symbols_total"], 12);
    let o = fbdof(&["run", "three-user", "--channel", path(&ch), "--beamformers", path(&bf), "--trace", path(&t2)]);
    assert!(o.status.success());
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&t1).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&t2).unwrap()).unwrap();
    assert_eq!(a["symbols"], b["symbols"]);
}

#[test]
fn two_user_general_antennas() {
    let o = fbdof(&["run", "two-user", "--tx", "3,2", "--rx", "2,3", "--ranks", "2,1,1,2", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("achieved DoF"));
}

#[test]
fn verify_grid_exit_code() {
    let o = fbdof(&["verify", "grid", "--kind", "three-user", "--max-antennas", "4", "--seeds", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("point,lp_value,formula,lp_match,runs,achieved\n"));
    let o = fbdof(&["verify", "grid", "--kind", "two-user", "--max-antennas", "12"]);
    assert!(!o.status.success());
}

#[test]
fn lp_and_fm_agree() {
    let o = fbdof(&["lp", "solve", "--system", "two-user", "--m", "2", "--dd", "1", "--dc", "1", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], "3");
    let o = fbdof(&["fm", "project", "--system", "two-user", "--m", "2", "--dd", "1", "--dc", "1"]);
    assert_eq!(stdout(&o), "max 3\n");
}

#[test]
fn polyhedron_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.txt");
    std::fs::write(&f, "vars x y\nmax 1 1\n1 2 <= 4\n3 1 <= 6 # second\n").unwrap();
    let o = fbdof(&["lp", "solve", "--file", path(&f)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("max 14/5\n"));
    let o = fbdof(&["fm", "project", "--file", path(&f), "--eliminate", "y"]);
    assert!(stdout(&o).starts_with("vars x\n"));
}

#[test]
fn errors_exit_nonzero() {
    let o = fbdof(&["run", "k-user", "--k", "3", "--m", "2", "--dd", "1", "--dc", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("K-user scheme needs"));
    let o = fbdof(&["run", "three-user", "--m", "3", "--dd", "3", "--dc", "3"]);
    assert!(!o.status.success());
    let o = fbdof(&["sweep", "fig2", "--d", "2"]);
    assert!(!o.status.success());
}
