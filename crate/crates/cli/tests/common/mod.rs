#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn fx(rel: &str) -> String {
    fixture(rel).display().to_string()
}

pub struct Run {
    pub code: i32,
    pub stderr: String,
    pub out: PathBuf,
}

impl Run {
    pub fn summary(&self) -> Value {
        let text = fs::read_to_string(self.out.join("summary.json")).expect("summary.json written");
        serde_json::from_str(&text).expect("summary.json parses")
    }

    /// Metrics of the `i`-th input; panics when that input failed.
    pub fn metrics(&self, i: usize) -> Value {
        let s = self.summary();
        let input = &s["inputs"][i];
        assert_eq!(
            input["status"], "ok",
            "input {i} failed: {}",
            input["error"]
        );
        input["metrics"].clone()
    }

    pub fn csv(&self, name: &str) -> Csv {
        Csv::read(&self.out.join(name))
    }
}

/// Run the binary with `--out-dir out` prepended to `args`.
pub fn spinekit(out: &Path, args: &[&str]) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_spinekit"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: output.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        out: out.to_path_buf(),
    }
}

pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> Csv {
        let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut lines = text
            .lines()
            .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
        let header = lines.next().expect("header");
        Csv {
            header,
            rows: lines.collect(),
        }
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name} in {:?}", self.header));
        self.rows
            .iter()
            .map(|r| r[i].parse().unwrap_or(f64::NAN))
            .collect()
    }
}

/// Every output file except the run metadata, keyed by file name.
pub fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run_metadata.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}
