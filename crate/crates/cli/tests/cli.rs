use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const WORKED_SPEC: &str =
    r#"{"nu": 20, "mu": [0.8, 0.775, 0.75], "R": {"type": "equicorrelation", "rho": 0.5}}"#;
const WORKED_GAMMA: [f64; 8] = [2.57, 0.00, 0.16, 1.27, 0.36, 1.57, 1.91, 12.17];
const WORKED_D: [u64; 8] = [24, 10, 0, 29, 9, 8, 58, 179];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvbeta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn file(&self, name: &str, content: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, content).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    /// Data matrix whose cell counts are `d` (first coordinate = leading bit).
    fn data_from_counts(&self, name: &str, m: usize, d: &[u64]) -> PathBuf {
        let mut s: String = (1..=m)
            .map(|j| format!("x{j}"))
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for (k, &c) in d.iter().enumerate() {
            let bits: Vec<String> = (0..m)
                .map(|j| ((k >> (m - 1 - j)) & 1).to_string())
                .collect();
            for _ in 0..c {
                s.push_str(&bits.join(","));
                s.push('\n');
            }
        }
        self.file(name, &s)
    }

    fn fit_worked_example(&self) -> PathBuf {
        let spec = self.file("spec.json", WORKED_SPEC);
        let out = self.path("prior.json");
        let o = run(&["fit", path_str(&spec), "-o", path_str(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    }

    fn posterior(&self) -> PathBuf {
        let prior = self.fit_worked_example();
        let data = self.data_from_counts("data.csv", 3, &WORKED_D);
        let out = self.path("post.json");
        let o = run(&[
            "update",
            path_str(&prior),
            path_str(&data),
            "-o",
            path_str(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    }
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

#[test]
fn fit_reference_prior() {
    let w = Work::new();
    w.fit_worked_example();
    let doc = w.json("prior.json");
    let gamma = floats(&doc["gamma"]);
    for (g, want) in gamma.iter().zip(WORKED_GAMMA) {
        assert!((g - want).abs() < 0.01, "{gamma:?}");
    }
    assert_eq!(doc["fit_exact"], Value::Bool(true));
}

#[test]
fn fit_vague() {
    let w = Work::new();
    let spec = w.file("v.json", r#"{"vague": true, "m": 3}"#);
    let out = w.path("v_out.json");
    assert_eq!(
        code(&run(&["fit", path_str(&spec), "-o", path_str(&out)])),
        0
    );
    let gamma = floats(&w.json("v_out.json")["gamma"]);
    assert_eq!(gamma, vec![0.25; 8]);
}

#[test]
fn fit_beyond_pairwise_bounds_exits_2() {
    let w = Work::new();
    let spec = w.file(
        "bad.json",
        r#"{"nu": 10, "mu": [0.9, 0.1], "R": {"type": "equicorrelation", "rho": 0.9}}"#,
    );
    let out = w.path("bad_out.json");
    let o = run(&["fit", path_str(&spec), "-o", path_str(&out)]);
    assert_eq!(code(&o), 2);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["status"], "infeasible");
    assert!(!report["violated_bounds"].as_array().unwrap().is_empty());
    assert!(!out.exists());
}

#[test]
fn fit_reduced_only_above_threshold() {
    let w = Work::new();
    let spec = w.file(
        "s.json",
        r#"{"nu": 20, "mu": [0.7, 0.7, 0.7, 0.7], "R": {"type": "equicorrelation", "rho": 0.3}}"#,
    );
    let out = w.path("s_out.json");
    let o = run(&[
        "fit",
        path_str(&spec),
        "-o",
        path_str(&out),
        "--max-full-dim",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    let doc = w.json("s_out.json");
    assert!(doc.get("gamma").is_none());
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["status"], "bounds_ok");
    assert_eq!(
        code(&run(&[
            "fit",
            path_str(&spec),
            "-o",
            path_str(&out),
            "--max-full-dim",
            "15"
        ])),
        1
    );
}

#[test]
fn parse_and_io_errors_exit_1() {
    let w = Work::new();
    let spec = w.file("broken.json", "{ not json");
    let out = w.path("o.json");
    assert_eq!(
        code(&run(&["fit", path_str(&spec), "-o", path_str(&out)])),
        1
    );
    assert_eq!(
        code(&run(&[
            "fit",
            "/nonexistent/spec.json",
            "-o",
            path_str(&out)
        ])),
        1
    );
    let two = w.file("two.json", r#"{"gamma": [1, 1], "vague": true, "m": 1}"#);
    assert_eq!(
        code(&run(&["fit", path_str(&two), "-o", path_str(&out)])),
        1
    );
}

#[test]
fn update_reproduces_reference_posterior() {
    let w = Work::new();
    w.posterior();
    let doc = w.json("post.json");
    assert_eq!(doc["nu"].as_f64().unwrap(), 337.0);
    let a = floats(&doc["A"]);
    let want = [
        270.00, 251.07, 200.73, 251.07, 281.50, 221.43, 200.73, 221.43, 241.00,
    ];
    for (x, y) in a.iter().zip(want) {
        assert!((x - y).abs() < 0.01, "{a:?}");
    }
    let prior = floats(&w.json("prior.json")["A"]);
    let u = [
        254.0, 237.0, 187.0, 237.0, 266.0, 208.0, 187.0, 208.0, 226.0,
    ];
    for k in 0..9 {
        assert_eq!(a[k], prior[k] + u[k]);
    }
    assert_eq!(doc["data"]["cells"].as_array().unwrap().len(), 8);
}

#[test]
fn update_edge_cases() {
    let w = Work::new();
    let prior = w.fit_worked_example();
    let empty = w.file("empty.csv", "x1,x2,x3\n");
    let out = w.path("same.json");
    assert_eq!(
        code(&run(&[
            "update",
            path_str(&prior),
            path_str(&empty),
            "-o",
            path_str(&out)
        ])),
        0
    );
    let (p, q) = (w.json("prior.json"), w.json("same.json"));
    assert_eq!(
        (&p["nu"], &p["A"], &p["gamma"]),
        (&q["nu"], &q["A"], &q["gamma"])
    );

    let wrong = w.file("wrong.csv", "x1,x2\n1,0\n");
    assert_eq!(
        code(&run(&[
            "update",
            path_str(&prior),
            path_str(&wrong),
            "-o",
            path_str(&out)
        ])),
        1
    );

    let first = w.file("a.csv", "x1,x2,x3\n1,0,1\n0,1,1\n");
    let second = w.file("b.csv", "x1,x2,x3\n1,1,1\n");
    let both = w.file("ab.csv", "x1,x2,x3\n1,0,1\n0,1,1\n1,1,1\n");
    let (s1, s2, one) = (w.path("s1.json"), w.path("s2.json"), w.path("one.json"));
    assert_eq!(
        code(&run(&[
            "update",
            path_str(&prior),
            path_str(&first),
            "-o",
            path_str(&s1)
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "update",
            path_str(&s1),
            path_str(&second),
            "-o",
            path_str(&s2)
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "update",
            path_str(&prior),
            path_str(&both),
            "-o",
            path_str(&one)
        ])),
        0
    );
    assert_eq!(w.text("s2.json"), w.text("one.json"));
}

fn region_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn regions_for_all_methods() {
    let w = Work::new();
    let post = w.posterior();
    for method in ["approximate", "copula", "extensive"] {
        let out = w.path(&format!("{method}.csv"));
        let o = run(&[
            "region",
            path_str(&post),
            "--method",
            method,
            "--level",
            "0.95",
            "--seed",
            "3",
            "-o",
            path_str(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = w.text(&format!("{method}.csv"));
        assert!(text.starts_with(
            "label,lower,upper,method,level,c_alpha,alpha_tilde,n_r,contains_unit_cube\n"
        ));
        let rows = region_rows(&text);
        assert_eq!(rows.len(), 3);
        for r in &rows {
            let (lo, hi): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
            assert!(lo < hi);
            if method != "approximate" {
                assert!(lo > 0.0 && hi < 1.0);
            }
            assert_eq!(r[3], method);
        }
    }
}

#[test]
fn region_is_deterministic_under_seed() {
    let w = Work::new();
    let post = w.posterior();
    let (a, b) = (w.path("r1.csv"), w.path("r2.csv"));
    for out in [&a, &b] {
        let o = run(&[
            "region",
            path_str(&post),
            "--method",
            "extensive",
            "--seed",
            "11",
            "-o",
            path_str(out),
        ]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn all_vs_one_contrast() {
    let w = Work::new();
    let post = w.posterior();
    let out = w.path("diff.csv");
    let o = run(&[
        "region",
        path_str(&post),
        "--contrast",
        "all-vs-one",
        "--method",
        "copula",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = region_rows(&w.text("diff.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "theta1-theta3");
    assert_eq!(rows[1][0], "theta2-theta3");

    let k = w.file("k.csv", "label,k1,k2,k3\nmean12,0.5,0.5,0\n");
    let o = run(&[
        "region",
        path_str(&post),
        "--contrast",
        path_str(&k),
        "--method",
        "approximate",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(region_rows(&w.text("diff.csv"))[0][0], "mean12");
}

#[test]
fn extensive_without_gamma_exits_2() {
    let w = Work::new();
    let spec = w.file(
        "s.json",
        r#"{"nu": 20, "mu": [0.7, 0.6, 0.7], "R": {"type": "equicorrelation", "rho": 0.3}}"#,
    );
    let prior = w.path("red.json");
    assert_eq!(
        code(&run(&[
            "fit",
            path_str(&spec),
            "-o",
            path_str(&prior),
            "--max-full-dim",
            "2"
        ])),
        0
    );
    let out = w.path("r.csv");
    let o = run(&[
        "region",
        path_str(&prior),
        "--method",
        "extensive",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
    assert_eq!(
        code(&run(&[
            "region",
            path_str(&prior),
            "--method",
            "copula",
            "-o",
            path_str(&out)
        ])),
        0
    );
    assert_eq!(
        code(&run(&["grid", path_str(&prior), "-o", path_str(&out)])),
        2
    );
}

#[test]
fn density_grid() {
    let w = Work::new();
    let post = w.posterior();
    let out = w.path("grid.csv");
    let o = run(&[
        "grid",
        path_str(&post),
        "--pairs",
        "1-2",
        "--resolution",
        "1",
        "--n-r",
        "500",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = w.text("grid.csv");
    let pair_rows: Vec<&str> = text.lines().filter(|l| l.starts_with("pair")).collect();
    assert_eq!(pair_rows, vec!["pair,1,2,0,0,0,1,0,1,1"]);

    let o = run(&[
        "grid",
        path_str(&post),
        "--resolution",
        "10",
        "--n-r",
        "4000",
        "--seed",
        "5",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0);
    let text = w.text("grid.csv");
    let mut pair_mass = std::collections::BTreeMap::<(String, String), f64>::new();
    let mut mean1 = 0.0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let mass: f64 = f[9].parse().unwrap();
        if f[0] == "pair" {
            *pair_mass.entry((f[1].into(), f[2].into())).or_default() += mass;
        } else if f[1] == "1" {
            let mid = (f[5].parse::<f64>().unwrap() + f[6].parse::<f64>().unwrap()) / 2.0;
            mean1 += mid * mass;
        }
    }
    assert_eq!(pair_mass.len(), 3);
    for v in pair_mass.values() {
        assert!((v - 1.0).abs() < 1e-12);
    }
    // binning shifts the mean by at most half a bin width
    assert!((mean1 - 270.0 / 337.0).abs() < 0.05 + 3.0 * 0.022 / 4000f64.sqrt());
}

#[test]
fn simulate_smoke_and_infeasible() {
    let w = Work::new();
    let scn = w.file(
        "scn.json",
        r#"{"id": "smoke", "m": 2, "nu_g": 10, "mu_g": [0.6, 0.7],
            "correlation": {"type": "equicorrelation", "rho": 0.2},
            "n": 30, "analysis_prior": "correct", "methods": ["copula"], "n_sim": 1, "seed": 4}"#,
    );
    let out = w.path("sim.csv");
    let o = run(&["simulate", path_str(&scn), "-o", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = w.text("sim.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(
        lines[0].starts_with("scenario_id,method,target,analysis_prior,n,bcp,se,frac_outside,runs")
    );
    assert!(lines[1].starts_with("smoke,copula,raw_proportions,correct,30,"));

    let bad = w.file(
        "bad.json",
        r#"{"m": 2, "nu_g": 10, "mu_g": [0.9, 0.1], "correlation": {"type": "equicorrelation", "rho": 0.9},
            "n": 30, "analysis_prior": "correct", "n_sim": 1}"#,
    );
    assert_eq!(
        code(&run(&["simulate", path_str(&bad), "-o", path_str(&out)])),
        2
    );
}
