use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sindex(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sindex"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg("1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = sindex(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    let printed = String::from_utf8(o.stdout).unwrap();
    let report = PathBuf::from(printed.trim());
    assert_eq!(report, out.join("report.toml"));
    report
}

fn exit_code(out: &Path, args: &[&str]) -> i32 {
    sindex(out, args).status.code().expect("exited normally")
}

fn report(path: &Path) -> toml::Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

/// Every record has exactly the expected header's width; numeric columns
/// parse as finite floats or are empty (optional values).
fn check_csv(path: &Path, header: &[&str], text_columns: &[&str]) -> usize {
    let mut r = csv::Reader::from_path(path).unwrap();
    let got: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(got, header, "{}", path.display());
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), header.len());
        for (name, field) in header.iter().zip(rec.iter()) {
            if text_columns.contains(name) || field.is_empty() {
                continue;
            }
            if matches!(field, "true" | "false") {
                continue;
            }
            let v: f64 = field.parse().unwrap_or_else(|_| panic!("{name} = `{field}` in {}", path.display()));
            assert!(!v.is_infinite(), "{name} = {v}");
        }
        rows += 1;
    }
    rows
}

#[test]
fn sample_writes_dataset_and_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s");
    let rep = report(&ok(&out, &["sample", "--link", "hermite(2)", "--d", "4", "--n", "50"]));
    assert_eq!(rep["meta"]["command"].as_str(), Some("sample"));
    assert_eq!(rep["meta"]["artifacts"].as_array().unwrap()[0].as_str(), Some("data.csv"));
    assert_eq!(rep["result"]["w_star"].as_array().unwrap().len(), 4);

    let text = fs::read_to_string(out.join("data.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# sindex-v1 d=4 n=50 "), "{header}");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.len() == 5));
}

#[test]
fn runs_are_byte_identical_and_rerunnable() {
    let dir = TempDir::new().unwrap();
    let args = ["sample", "--link", "square-gauss", "--noise", "additive-gaussian(0.3)", "--d", "6", "--n", "200"];
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&a, &args);
    ok(&b, &args);
    for file in ["data.csv", "report.toml"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let cfg = a.join("report.toml");
    ok(&c, &["sample", "--config", cfg.to_str().unwrap()]);
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(c.join("data.csv")).unwrap());
    assert_eq!(fs::read(a.join("report.toml")).unwrap(), fs::read(c.join("report.toml")).unwrap());

    ok(&b, &["sample", "--config", cfg.to_str().unwrap(), "--seed", "7"]);
    assert_ne!(fs::read(a.join("data.csv")).unwrap(), fs::read(b.join("data.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e");
    assert_eq!(exit_code(&out, &["recover", "--link", "nope"]), 2);
    assert_eq!(exit_code(&out, &["bounds", "--grid", "delta="]), 2);
    assert_eq!(exit_code(&out, &["bounds", "--grid", "speed=1"]), 2);
    assert_eq!(exit_code(&out, &["sample", "--seeds", "0"]), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[model]\ndims = 3\n").unwrap();
    assert_eq!(exit_code(&out, &["sample", "--config", bad.to_str().unwrap()]), 2);
    assert_eq!(exit_code(&out, &["forge", "--kstar", "3", "--tau", "1e-5"]), 3);
    // Too few ODE steps break conservation, so quadrature rejects the link.
    assert_eq!(exit_code(&out, &["forge", "--kstar", "3", "--steps", "3"]), 4);
}

#[test]
fn forge_writes_a_loadable_link() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f");
    let rep = report(&ok(&out, &["forge", "--kstar", "3"]));
    let result = &rep["result"];
    assert_eq!(result["verified"].as_bool(), Some(true));
    assert!(result["conservation_drift"].as_float().unwrap() < 1e-6);
    assert!(result["top_degree_gap"].as_float().unwrap().abs() > 1e-3);

    let link = out.join("link.csv");
    let text = fs::read_to_string(&link).unwrap();
    assert!(text.starts_with("# sindex-link-v1 kstar=3 "));
    let body: String = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let plain = dir.path().join("plain.csv");
    fs::write(&plain, body).unwrap();
    assert!(check_csv(&plain, &["x", "sigma"], &[]) > 0);

    // The forged file drives the exponent command.
    let spec = format!("file:{}", link.display());
    let rep = report(&ok(&dir.path().join("x"), &["exponent", "--link", &spec, "--kmax", "4", "--levels", "5"]));
    assert_eq!(rep["result"]["profile"]["gen_exponent"].as_integer(), Some(3));

    // A tampered table fails verification on load.
    let tampered = text.replacen(",1e0\n", ",5e-1\n", 1);
    assert_ne!(tampered, text);
    fs::write(&link, tampered).unwrap();
    assert_eq!(exit_code(&dir.path().join("y"), &["exponent", "--link", &spec]), 4);
}

#[test]
fn exponent_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("q");
    let rep = report(&ok(&out, &["exponent", "--link", "square-gauss", "--kmax", "4", "--levels", "7"]));
    let result = &rep["result"];
    assert_eq!(result["estimator"].as_str(), Some("quadrature"));
    assert_eq!(result["profile"]["gen_exponent"].as_integer(), Some(4));
    let rows = check_csv(&out.join("zeta.csv"), &["y", "zeta_1", "zeta_2", "zeta_3", "zeta_4"], &[]);
    let skipped = result["skipped_levels"].as_array().unwrap().len();
    assert_eq!(rows + skipped, 7);

    let out = dir.path().join("b");
    let args = ["exponent", "--link", "hermite(2)", "--noise", "additive-gaussian(0.3)", "--kmax", "3"];
    let rep = report(&ok(&out, &[&args[..], &["--samples", "20000", "--bins", "10"]].concat()));
    assert_eq!(rep["result"]["estimator"].as_str(), Some("binned"));
    let rows = check_csv(&out.join("zeta.csv"), &["bin_upper", "bin_mass", "zeta_1", "zeta_2", "zeta_3"], &[]);
    assert_eq!(rows, 10);
}

#[test]
fn recover_reports_overlaps() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r");
    let args = ["recover", "--link", "hermite(2)", "--d", "16", "--n", "2000", "--seeds", "3"];
    let rep = report(&ok(&out, &args));
    let result = &rep["result"];
    assert_eq!(result["k"].as_integer(), Some(2));
    assert_eq!(result["runs"].as_array().unwrap().len(), 3);
    assert!(result["median_overlap"].as_float().unwrap() > 0.8);
}

#[test]
fn agnostic_reports_selected_degree() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a");
    let args = ["agnostic", "--link", "identity", "--d", "8", "--n", "6000", "--max-k", "1", "--degree", "1"];
    let rep = report(&ok(&out, &args));
    let run = &rep["result"]["runs"].as_array().unwrap()[0];
    assert_eq!(run["k_hat"].as_integer(), Some(1));
    assert!(run["overlap"].as_float().unwrap() > 0.9);
}

const BBP_HEADER: [&str; 19] = [
    "d",
    "k",
    "delta",
    "delta_ratio",
    "n",
    "seeds",
    "top1",
    "top2",
    "top3",
    "top4",
    "top5",
    "bulk_edge",
    "overlap",
    "overlap_q1",
    "overlap_q3",
    "predicted_edge",
    "predicted_outlier",
    "predicted_overlap",
    "error",
];

#[test]
fn sweeps_write_schema_conformant_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bbp");
    let args = ["bbp-sweep", "--d", "12", "--grid", "d=12,16", "--grid", "delta-ratio=1,4", "--seeds", "2"];
    let rep = report(&ok(&out, &args));
    assert!(rep["result"]["delta_star"].as_float().unwrap() > 0.0);
    assert_eq!(check_csv(&out.join("bbp.csv"), &BBP_HEADER, &["error"]), 4);

    let out = dir.path().join("phase");
    let args = ["phase-sweep", "--link", "hermite(2)", "--k", "2", "--grid", "d=8", "--grid", "n-mult=20,40"];
    ok(&out, &args);
    let header = ["d", "k", "n", "n_mult", "seeds", "median", "q1", "q3", "failures", "error"];
    assert_eq!(check_csv(&out.join("phase.csv"), &header, &["error"]), 2);
    let mut r = csv::Reader::from_path(out.join("phase.csv")).unwrap();
    let ns: Vec<usize> = r.records().map(|rec| rec.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(ns, vec![160, 320]);

    assert_eq!(
        exit_code(&dir.path().join("z"), &["phase-sweep", "--link", "square-gauss", "--noise", "massart(0.1)"]),
        2
    );
}

#[test]
fn bounds_tables_are_monotone() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("b");
    let rep = report(&ok(&out, &["bounds", "--grid", "d=1e4,1e6", "--grid", "delta=0.1..1:4"]));
    assert_eq!(rep["result"]["monotone_in_delta"].as_bool(), Some(true));
    let header = [
        "kstar",
        "lambda",
        "d",
        "delta",
        "n",
        "degree",
        "r",
        "ld_exact",
        "ld_asymptotic",
        "strong_detection_n",
        "sq_queries",
        "in_regime",
    ];
    assert_eq!(check_csv(&out.join("bounds.csv"), &header, &[]), 8);

    let rep = report(&ok(&out, &["bounds", "--grid", "delta=1,0.5"]));
    assert_eq!(rep["result"]["monotone_in_delta"].as_bool(), Some(false));
}
