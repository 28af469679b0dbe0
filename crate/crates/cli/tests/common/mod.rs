#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use tabcurate_cli::PipelineConfig;

/// Small enough for a full pipeline in seconds.
pub const TINY_TOML: &str = r#"
master_seed = 7

[paths]
data_dir = "data"
artifact_dir = "artifacts"

[synthetic]
count = 40

[control]
count = 6
feature_count = 4

[prior]
feature_count_range = [2, 6]
extra_node_range = [1, 3]
mlp_width_range = [4, 8]
mlp_depth_range = [1, 1]

[pfn]
d_model = 16
layers = 1
heads = 2
buckets = 8
max_features = 8
context_rows = 64
query_rows = 32
steps = 20
warmup_steps = 2

[gbt]
n_estimators = 20

[distinguish]
folds = 3

[selection]
k = 10
n_syn_train = 20
target_train_fraction = 0.7

[finetune]
epochs = 1

[eval]
folds = 3
"#;

/// Deterministic uniform numbers in [0, 1).
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// A CSV with `features` numeric inputs and a smooth noisy target.
pub fn regression_csv(rows: usize, features: usize, seed: u64) -> String {
    let mut r = Lcg(seed);
    let mut s = (0..features).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    s.push_str(",y\n");
    for _ in 0..rows {
        let x: Vec<f64> = (0..features).map(|_| 4.0 * r.next() - 2.0).collect();
        let y = x[0].sin() + 0.5 * x[1] * x[1] - 0.3 * x.iter().skip(2).sum::<f64>() + 0.1 * (r.next() - 0.5);
        for v in &x {
            write!(s, "{v},").unwrap();
        }
        writeln!(s, "{y}").unwrap();
    }
    s
}

/// Six engineering tables and three labelled non-engineering by sidecar.
pub fn write_corpus(data: &Path) {
    std::fs::create_dir_all(data).unwrap();
    for i in 0..6u64 {
        let csv = regression_csv(80 + 10 * i as usize, 3 + (i as usize % 3), 100 + i);
        std::fs::write(data.join(format!("eng{i}.csv")), csv).unwrap();
    }
    for i in 0..3u64 {
        let csv = regression_csv(90, 4, 200 + i);
        std::fs::write(data.join(format!("other{i}.csv")), csv).unwrap();
        std::fs::write(data.join(format!("other{i}.schema.json")), r#"{"label": "non_engineering"}"#).unwrap();
    }
}

/// Tiny config rooted at `dir`, with the corpus written to `dir/data`.
pub fn tiny_setup(dir: &Path) -> (PathBuf, PipelineConfig) {
    write_corpus(&dir.join("data"));
    let path = dir.join("tabcurate.toml");
    std::fs::write(&path, TINY_TOML).unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    (path, cfg)
}
