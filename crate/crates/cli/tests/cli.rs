use std::path::PathBuf;
use std::process::{Command, Output};

fn flowkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowkit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("flowkit-cli-{}-{}", name, std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

/// Rows of the CSV artifact `name` in a stdout dump, header dropped.
fn csv_rows(text: &str, name: &str) -> Vec<Vec<String>> {
    let start = text.find(&format!("# {}\n", name)).expect("artifact present") + name.len() + 3;
    let body = &text[start..];
    let body = body.find("\n# ").map(|e| &body[..e + 1]).unwrap_or(body);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn hyperbolic_field_matches_closed_form() {
    let o = flowkit(&["field", "--fixture", "hyperbolic", "--order", "2", "--grid", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o), "field.csv");
    assert_eq!(rows.len(), 9);
    for row in &rows {
        let x: f64 = row[0].parse().unwrap();
        let xi: f64 = row[1].parse().unwrap();
        let dxi: f64 = row[2].parse().unwrap();
        assert!((xi - x * (1.0 - x)).abs() <= 1e-12, "{:?}", row);
        assert!((dxi - (1.0 - 2.0 * x)).abs() <= 1e-12, "{:?}", row);
        // 30 significant digits
        let mantissa = row[1].split('e').next().unwrap().replace(['-', '.'], "");
        assert!(mantissa.len() >= 30, "{}", row[1]);
    }
    // the grid includes both fixed points, where the field is exactly zero
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[8][1].parse::<f64>().unwrap(), 0.0);
    assert!(stdout(&o).contains("# field_log.csv\nx,iterations\n"));
}

#[test]
fn output_is_deterministic_and_written_to_out() {
    let d = scratch_dir("det");
    let args = ["field", "--fixture", "hyperbolic", "--grid", "5", "--out", d.to_str().unwrap()];
    assert_eq!(flowkit(&args).status.code(), Some(0));
    let first = std::fs::read(d.join("field.csv")).unwrap();
    assert_eq!(flowkit(&args).status.code(), Some(0));
    assert_eq!(first, std::fs::read(d.join("field.csv")).unwrap());
    assert!(d.join("field_log.csv").exists());
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn config_file_and_flag_override() {
    let d = scratch_dir("cfg");
    std::fs::create_dir_all(&d).unwrap();
    let cfg = d.join("run.cfg");
    std::fs::write(&cfg, "# comment\nfixture = hyperbolic\norder=1\ngrid = 3\n").unwrap();
    let o = flowkit(&["field", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o), "field.csv");
    assert_eq!((rows.len(), rows[0].len()), (3, 3));
    let o = flowkit(&["field", "--config", cfg.to_str().unwrap(), "--grid", "4"]);
    assert_eq!(csv_rows(&stdout(&o), "field.csv").len(), 4);
    std::fs::write(&cfg, "colour=blue\n").unwrap();
    assert_eq!(flowkit(&["field", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn configuration_errors_exit_2() {
    assert_eq!(flowkit(&["field", "--prec", "32"]).status.code(), Some(2));
    assert_eq!(flowkit(&["field", "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(flowkit(&["field", "--fixture", "nonsense"]).status.code(), Some(2));
    assert_eq!(flowkit(&["field", "--expr", "x +* 1"]).status.code(), Some(2));
    assert_eq!(flowkit(&["basis", "--rho", "1/2,abc"]).status.code(), Some(2));
    assert_eq!(flowkit(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn unreachable_tolerance_exits_3() {
    let o = flowkit(&["field", "--prec", "64", "--tol", "1e-100", "--grid", "3"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NON_CONVERGED"));
}

#[test]
fn classify_and_path() {
    let o = flowkit(&["classify", "--fixture", "hyperbolic"]);
    assert!(stdout(&o).contains("classification=FLOW\ntau=1.41421356237309504880168872421e0"), "{}", stdout(&o));
    let o = flowkit(&["classify", "--fixture", "hyperbolic", "--alpha", "2/3"]);
    assert!(stdout(&o).contains("classification=CYCLIC\np=2\nq=3\nr=1\ns=-1\n"), "{}", stdout(&o));
    let o = flowkit(&["path", "--fixture", "hyperbolic", "--alpha", "2/3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("t,commutation_residual,endpoint_distance\n"));
}

#[test]
fn clean_approx_declines_identity_and_cyclic_pairs() {
    let o = flowkit(&["clean-approx", "--expr", "x", "--expr-g", "x"]);
    assert_eq!(o.status.code(), Some(2));
    // not flat at either end
    assert_eq!(flowkit(&["clean-approx", "--fixture", "hyperbolic"]).status.code(), Some(2));
    let o = flowkit(&["clean-approx", "--fixture", "oscillating", "--alpha", "1/2"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("CYCLIC (p = 1, q = 2)") && err.contains("path_to_identity"), "{}", err);
}

#[test]
fn symbolic_estimates() {
    let o = flowkit(&["estimates", "--suite", "symbolic", "--order", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("alpha=0,0,1,5,23,119\n"));
    assert!(text.contains("P_3=X1*X2\n"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn numeric_negative_control_exits_1() {
    let o = flowkit(&["estimates", "--suite", "numeric", "--exponent-offset", "1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let text = stdout(&o);
    for n in 1..=3 {
        assert!(text.contains(&format!("exponent_{},FAIL", n)), "{}", text);
    }
    assert!(text.contains("ratio,PASS"));
}

#[test]
fn rotation_and_basis() {
    let o = flowkit(&["rotation", "--alpha", "3/8"]);
    assert!(stdout(&o).contains("rotation_number=3/8\n"), "{}", stdout(&o));
    let o = flowkit(&["rotation", "--fixture", "conjugated", "--alpha", "0.41421356237309504880168872420969807856967"]);
    assert!(stdout(&o).contains("rotation_number=4.142135623"), "{}", stdout(&o));
    let o = flowkit(&["basis", "--rho", "1/2,1/3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "# basis.csv\nf,g2\n1,-2\n-1,3\n# k=6 det=1\n");
}
