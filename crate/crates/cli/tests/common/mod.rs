//! Offline workspace for driving the `assaymol` binary in tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAGMENTS: [&str; 12] = [
    "CCO",
    "c1ccccc1",
    "CC(=O)O",
    "CCN",
    "c1ccncc1",
    "CC(C)C",
    "OCCO",
    "C1CCCCC1",
    "CN(C)C",
    "c1ccc(O)cc1",
    "CS(=O)(=O)N",
    "FC(F)F",
];
const OUTCOMES: [&str; 3] = ["active", "inactive", "inconclusive"];

pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    /// Forty synthetic kinase assays, half of them with an activity table in CSV.
    pub fn new(extra_config: &str) -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let raw = dir.path().join("raw");
        fs::create_dir_all(&raw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut jsonl = String::new();
        for aid in 1..=40u64 {
            let rows: Vec<serde_json::Value> = (0..rng.gen_range(4..40))
                .map(|_| {
                    let smi = format!(
                        "{}{}",
                        FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())],
                        FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())]
                    );
                    serde_json::json!({
                        "smiles": smi,
                        "outcome": OUTCOMES[rng.gen_range(0..3)],
                        "activity_kind": "IC50",
                        "value": rng.gen_range(1..1000) as f64 / 100.0,
                        "unit": "uM",
                    })
                })
                .collect();
            let mut doc = serde_json::json!({
                "aid": aid,
                "title": format!("Kinase K{} inhibition, screen {aid}", aid % 5),
                "description": format!("Measures inhibition of protein kinase K{} in a cell-free format.", aid % 5),
                "protocol": "Compounds incubated for 30 minutes with ATP.",
                "targets": [{"uniprot_id": format!("P{:05}", aid % 7), "gene_symbol": format!("K{}", aid % 5)}],
            });
            if aid % 2 == 0 {
                let mut csv = String::from("SMILES,OUTCOME,KIND,RELATION,VALUE,UNIT\n");
                for r in &rows {
                    csv.push_str(&format!(
                        "{},{},IC50,=,{},uM\n",
                        r["smiles"].as_str().unwrap(),
                        r["outcome"].as_str().unwrap(),
                        r["value"]
                    ));
                }
                fs::write(raw.join(format!("{aid}.csv")), csv).unwrap();
            } else {
                doc["rows"] = serde_json::Value::Array(rows);
            }
            jsonl.push_str(&doc.to_string());
            jsonl.push('\n');
        }
        fs::write(raw.join("assays.jsonl"), jsonl).unwrap();
        fs::write(dir.path().join("scores.csv"), "SMILES,KIND,VALUE\n").unwrap();
        let config = format!(
            r#"seed = 11

[paths]
raw_dir = "raw"
store_dir = "store"
index_file = "index/assays.idx"
output_dir = "out"

[query]
target_id = "K1"
description = "Protein kinase K1, a serine/threonine kinase driving cell-cycle entry."
excluded_uniprot_ids = ["P00003"]
reference_score = -7.0

[counter]
description = "hERG potassium channel, an anti-target linked to cardiac toxicity."
aids = [2, 3]

[evaluation]
score_files = ["scores.csv"]
{extra_config}
"#
        );
        fs::write(dir.path().join("assaymol.toml"), config).unwrap();
        Workspace { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_assaymol"))
            .current_dir(self.path())
            .arg("--config")
            .arg("assaymol.toml")
            .args(args)
            .output()
            .expect("binary runs")
    }

    pub fn run_ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    pub fn run_dir(&self) -> PathBuf {
        let out = self.path().join("out");
        let mut dirs: Vec<PathBuf> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        assert_eq!(dirs.len(), 1, "one run directory expected");
        dirs.pop().unwrap()
    }

    /// Removes every generated artifact so the next invocation starts clean.
    pub fn reset(&self) {
        for d in ["out", "store", "index"] {
            let _ = fs::remove_dir_all(self.path().join(d));
        }
        fs::write(self.path().join("scores.csv"), "SMILES,KIND,VALUE\n").unwrap();
    }

    /// Deterministic imported scores for every listed molecule.
    pub fn write_scores(&self, molecules: &[String]) {
        let mut csv = String::from("SMILES,KIND,VALUE\n");
        for m in molecules {
            let heavy = m
                .chars()
                .filter(|c| c.is_ascii_uppercase() || "cnos".contains(*c))
                .count();
            csv.push_str(&format!("{m},vina_dock,{}\n", -4.0 - (heavy % 9) as f64 * 0.5));
            csv.push_str(&format!("{m},qed,{}\n", (heavy % 4) as f64 * 0.25));
        }
        fs::write(self.path().join("scores.csv"), csv).unwrap();
    }
}

/// Relative path to bytes for every file under `root`, skipping wall-clock timings.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "timings.json") {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
