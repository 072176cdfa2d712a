use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pdn_core::numerics::load_tensor;

fn pdn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdn"))
        .args(args)
        .current_dir(cwd)
        .env("PDN_LOG", "error")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = r#"{"samples": 40, "clusters": 12, "plan_epochs": 4, "plan_dim": 8,
    "pdn_hidden": 8, "pdn_kmax": 4, "pdn_code": 4, "dynamics_epochs": 1,
    "er_epochs": 2, "er_proj": 8, "er_hidden": 8}"#;

fn small_dataset(dir: &Path) {
    fs::write(dir.join("c.json"), SMALL).unwrap();
    let o = pdn(&["synth", "--config", "c.json", "--seed", "3", "--out", "data"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdn(&["frobnicate"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&pdn(&["synth", "--bogus"], dir.path())), 1);
    assert_eq!(code(&pdn(&[], dir.path())), 1);
}

#[test]
fn help_on_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        "synth",
        "features",
        "amp-fit",
        "plan-train",
        "plan-recognize",
        "prda",
        "train",
        "eval",
        "export-map",
    ] {
        let o = pdn(&[sub, "--help"], dir.path());
        assert_eq!(code(&o), 0, "{sub}");
        let text = String::from_utf8_lossy(&o.stdout);
        for flag in ["--config", "--seed", "--out", "--threads", "--clusters", "--lambda"] {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
    }
    assert_eq!(code(&pdn(&["--help"], dir.path())), 0);
}

#[test]
fn missing_inputs_are_usage_errors_and_bad_data_is_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pdn(&["features"], dir.path())), 1);
    assert_eq!(code(&pdn(&["plan-recognize", "--affinity", "x"], dir.path())), 2);
    fs::write(dir.path().join("bad.json"), r#"{"not_a_key": 1}"#).unwrap();
    assert_eq!(code(&pdn(&["synth", "--config", "bad.json"], dir.path())), 2);
    assert_eq!(code(&pdn(&["features", "--data", "missing"], dir.path())), 2);
}

#[test]
fn amp_fit_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    for out in ["a", "b"] {
        let o = pdn(
            &[
                "amp-fit",
                "--data",
                "data",
                "--clusters",
                "12",
                "--seed",
                "7",
                "--out",
                out,
            ],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["amp.json", "amp.pdnt", "amp_report.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn plan_recognize_from_indices() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let run = |args: &[&str]| {
        let mut a = args.to_vec();
        a.extend(["--config", "c.json", "--data", "data"]);
        let o = pdn(&a, dir.path());
        assert_eq!(code(&o), 0, "{:?}: {}", args, String::from_utf8_lossy(&o.stderr));
        o
    };
    run(&["amp-fit", "--out", "amp"]);
    run(&["plan-train", "--amp", "amp", "--out", "plans"]);
    let o = run(&[
        "plan-recognize",
        "--affinity",
        "plans",
        "--indices",
        "0,1",
        "--out",
        "rec",
    ]);
    let plans: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plans[0]["steps"].as_array().unwrap().len(), 5);
    assert_eq!(code(&pdn(&["plan-recognize", "--affinity", "plans"], dir.path())), 1);
}

#[test]
fn prda_outputs_conserve_mass() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let cfg = SMALL.trim_end_matches('}').to_string() + r#", "data": "data", "model": "run/model"}"#;
    fs::write(dir.path().join("c.json"), cfg).unwrap();
    assert_eq!(
        code(&pdn(&["train", "--config", "c.json", "--out", "run"], dir.path())),
        0
    );
    let mut checked = 0;
    for sample in 0..10 {
        let out = format!("prda{sample}");
        let o = pdn(
            &[
                "prda",
                "--config",
                "c.json",
                "--sample",
                &sample.to_string(),
                "--out",
                &out,
            ],
            dir.path(),
        );
        if code(&o) != 0 {
            // A scene without any glimpse has no plan to drive attention.
            assert_eq!(code(&o), 2);
            continue;
        }
        let d = dir.path().join(&out);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("prda.json")).unwrap()).unwrap();
        let (m, k) = (summary["plans"].as_u64().unwrap(), summary["horizon"].as_u64().unwrap());
        let prda = load_tensor(d.join("prda.pdnt")).unwrap();
        assert_eq!(prda.sum(), (m * k * 64 * 64) as f64);
        for i in 0..m * k {
            let spm = load_tensor(d.join(format!("spm_{i:03}.pdnt"))).unwrap();
            assert_eq!(spm.sum(), 4096.0);
        }
        let pgm = fs::read(d.join("prda.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n64 64\n65535\n"));
        assert_eq!(pgm.len(), 15 + 2 * 4096);
        checked += 1;
    }
    assert!(checked > 0);
}
