#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

/// Golden runs: output file stem and arguments, with fixture names relative
/// to the fixtures directory. All runs use machine output.
pub const GOLDEN_RUNS: &[(&str, &[&str])] = &[
    ("born_recovery.validate", &["validate", "born_recovery.json"]),
    ("born_recovery.prob", &["prob", "born_recovery.json"]),
    ("collapse_recovery.validate", &["validate", "collapse_recovery.json"]),
    ("collapse_recovery.prob", &["prob", "collapse_recovery.json"]),
    (
        "collapse_recovery.update",
        &["update", "collapse_recovery.json", "--region", "A", "--outcome", "0"],
    ),
    ("collapse_recovery.sample", &["sample", "collapse_recovery.json", "--seed", "7"]),
    ("spacelike_product.validate", &["validate", "spacelike_product.json"]),
    ("spacelike_product.prob", &["prob", "spacelike_product.json"]),
    ("spacelike_product.reconstruct", &["reconstruct", "spacelike_product.json"]),
];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn golden_path(stem: &str) -> PathBuf {
    fixtures().join("golden").join(format!("{stem}.json"))
}

pub struct Run {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl Run {
    pub fn text(&self) -> String {
        String::from_utf8(self.stdout.clone()).unwrap()
    }
}

/// Runs the binary with `args`, resolving `*.json` arguments that name a
/// bundled fixture. `PROCESS_RULE_TOL` is cleared unless given in `env`.
pub fn run(args: &[&str], env: &[(&str, &str)]) -> Run {
    let dir = fixtures();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_process-rule"));
    cmd.env_remove("PROCESS_RULE_TOL");
    for a in args {
        let p = dir.join(a);
        if a.ends_with(".json") && p.exists() {
            cmd.arg(p);
        } else {
            cmd.arg(a);
        }
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn run_machine(args: &[&str]) -> Run {
    let mut all = args.to_vec();
    all.extend(["--output", "machine"]);
    run(&all, &[])
}
