use std::path::PathBuf;
use std::process::{Command, Output};

fn sigmafluid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigmafluid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn case_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/cases").join(format!("{name}.json"))
}

#[test]
fn verify_hb1_passes() {
    let o = sigmafluid(&["verify", "hb1_stiff"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.trim_start().starts_with("euler") && l.contains("pass")));
    assert!(text.trim_end().ends_with("PASS"));
}

#[test]
fn euler_max_below_1e6_in_json() {
    let o = sigmafluid(&["report", "hb1_stiff", "--equations", "euler"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let max = v["equations"][0]["max"].as_f64().unwrap();
    assert!(max < 1e-6, "{max}");
    assert_eq!(v["equations"][0]["tolerance_source"], "default");
}

#[test]
fn unknown_case_exits_2() {
    let o = sigmafluid(&["verify", "nosuchcase"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nosuchcase"));
}

#[test]
fn grid_outside_chart_exits_2() {
    // zeta = 1 is the light cone
    let o = sigmafluid(&["verify", "hb1_stiff", "--grid", "zeta=0.5:1.0:3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_flags_exit_2() {
    assert_eq!(sigmafluid(&["verify", "hb1_stiff", "--grid", "zeta"]).status.code(), Some(2));
    assert_eq!(sigmafluid(&["verify", "hb1_stiff", "--tol", "euler=abc"]).status.code(), Some(2));
    assert_eq!(sigmafluid(&["verify", "hb1_stiff", "--equations", "bogus"]).status.code(), Some(2));
    assert_eq!(sigmafluid(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn tight_tolerance_exits_1() {
    let o = sigmafluid(&["verify", "hb1_stiff", "--equations", "euler", "--tol", "euler=1e-14"]);
    assert_eq!(o.status.code(), Some(1));
    let o = sigmafluid(&["report", "hb1_stiff", "--equations", "euler", "--tol", "euler=1e-14"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["equations"][0]["tolerance_source"], "override");
    assert_eq!(v["pass"], false);
}

#[test]
fn hb2_shear_is_informational() {
    let o = sigmafluid(&["report", "hb2_stiff", "--equations", "shear"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let e = &v["equations"][0];
    assert!(e["max"].as_f64().unwrap() > e["tolerance"].as_f64().unwrap());
    assert_eq!(e["status"], "info");
    assert_eq!(e["claim"], "nonzero");
    assert_eq!(v["flags"]["shear_free"], false);
}

#[test]
fn reports_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    for (fmt, ext) in [("json", "json"), ("csv", "csv")] {
        let mut bodies = Vec::new();
        for (i, threads) in ["1", "3"].iter().enumerate() {
            let path = dir.path().join(format!("r{i}.{ext}"));
            let o = sigmafluid(&[
                "verify",
                "gubser_ds3",
                "--threads",
                threads,
                "--format",
                fmt,
                "--out",
                path.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0));
            bodies.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(bodies[0], bodies[1], "{fmt}");
    }
}

#[test]
fn threads_env_var_changes_nothing() {
    let a = sigmafluid(&["report", "skew_projection", "--format", "csv"]);
    let b = Command::new(env!("CARGO_BIN_EXE_sigmafluid"))
        .args(["report", "skew_projection", "--format", "csv"])
        .env("SIGMAFLUID_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn csv_has_coordinates_then_residuals() {
    let o = sigmafluid(&["report", "hb1_stiff", "--format", "csv", "--equations", "euler,energy"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x4,r,s,th,euler,energy");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 6);
    // 17 significant digits
    assert!(row[0].split('e').next().unwrap().replace(['.', '-'], "").len() == 17);
}

#[test]
fn case_file_matches_registered_case() {
    let path = case_file("hb1_stiff");
    let a = sigmafluid(&["report", path.to_str().unwrap(), "--format", "csv"]);
    let b = sigmafluid(&["report", "hb1_stiff", "--format", "csv"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn missing_case_file_exits_2() {
    assert_eq!(sigmafluid(&["verify", "/nonexistent/case.json"]).status.code(), Some(2));
}

#[test]
fn reduce_emits_profile_csv() {
    let o = sigmafluid(&["reduce", "so3", "--samples", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "z,f_numeric,f_closed,abs_error");
    assert_eq!(lines.len(), 10);
    for l in &lines[1..] {
        let err: f64 = l.split(',').nth(3).unwrap().parse().unwrap();
        assert!(err < 1e-6);
    }
    let o = sigmafluid(&["reduce", "morawetz", "--k", "2/3", "--z0", "-1", "--z-end", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(sigmafluid(&["reduce", "so3", "--k", "1/2"]).status.code(), Some(2));
    assert_eq!(sigmafluid(&["reduce", "torus"]).status.code(), Some(2));
}

#[test]
fn scan_is_a_two_axis_table() {
    let o = sigmafluid(&["scan", "hb1_stiff", "--x", "x4=1.5:3:3", "--y", "zeta=0.2:0.8:4", "--equations", "euler"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x4,zeta,euler");
    assert_eq!(lines.len(), 13);
    assert_eq!(sigmafluid(&["scan", "hb1_stiff", "--x", "x4=1:2:2", "--y", "x4=1:2:2"]).status.code(), Some(2));
}

#[test]
fn list_cases_names_all_eleven() {
    let o = sigmafluid(&["list-cases"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 11);
    assert!(names.contains(&"hb1_stiff") && names.contains(&"rw_sqrt"));
}
