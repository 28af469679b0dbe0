//! Win counts and CSV exports.

use crate::error::{Error, Result};
use crate::eval::{EfficiencyResult, PerformanceCurve};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Test MSE of every model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub dataset: String,
    pub mse: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRow {
    pub baseline: String,
    pub wins: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub candidate: String,
    pub rows: Vec<WinRow>,
}

/// For each other model, on how many datasets `candidate` has strictly lower
/// test MSE. Datasets missing either model are skipped for that baseline.
pub fn win_matrix(results: &[DatasetResult], candidate: &str) -> Result<WinMatrix> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no datasets".into()));
    }
    let baselines: std::collections::BTreeSet<&String> =
        results.iter().flat_map(|r| r.mse.keys()).filter(|m| *m != candidate).collect();
    let rows = baselines
        .into_iter()
        .map(|b| {
            let (mut wins, mut total) = (0, 0);
            for r in results {
                if let (Some(c), Some(v)) = (r.mse.get(candidate), r.mse.get(b)) {
                    total += 1;
                    wins += usize::from(c < v);
                }
            }
            let fraction = if total == 0 { 0.0 } else { wins as f64 / total as f64 };
            WinRow { baseline: b.clone(), wins, total, fraction }
        })
        .collect();
    Ok(WinMatrix { candidate: candidate.to_string(), rows })
}

impl WinMatrix {
    pub fn to_text(&self) -> String {
        let w = self.rows.iter().map(|r| r.baseline.len()).max().unwrap_or(0).max("baseline".len());
        let mut s = format!("candidate: {}\n{:<w$}  {:>5}  {:>5}  {:>7}\n", self.candidate, "baseline", "wins", "total", "percent");
        for r in &self.rows {
            s.push_str(&format!("{:<w$}  {:>5}  {:>5}  {:>6.1}%\n", r.baseline, r.wins, r.total, 100.0 * r.fraction));
        }
        s
    }
}

pub fn curves_csv(curves: &[PerformanceCurve]) -> String {
    let mut s = String::from("dataset,model,train_size,mse_mean,mse_std\n");
    for c in curves {
        for p in &c.points {
            s.push_str(&format!("{},{},{},{:?},{:?}\n", c.dataset, c.model, p.train_size, p.mse_mean, p.mse_std));
        }
    }
    s
}

/// One efficiency comparison on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRecord {
    pub dataset: String,
    pub reference: String,
    pub new: String,
    pub result: EfficiencyResult,
}

pub fn efficiency_csv(records: &[EfficiencyRecord]) -> String {
    let mut s = String::from("dataset,ref,new,D_ref,D_new,E_add,E_mult,extrapolated\n");
    for r in records {
        let e = &r.result;
        s.push_str(&format!(
            "{},{},{},{:?},{:?},{:?},{:?},{}\n",
            r.dataset, r.reference, r.new, e.d_ref, e.d_new, e.e_add, e.e_mult, e.extrapolated
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(name: &str, a: f64, b: f64) -> DatasetResult {
        DatasetResult { dataset: name.into(), mse: [("cand".to_string(), a), ("base".to_string(), b)].into() }
    }

    #[test]
    fn counts_strict_wins() {
        let r = [res("x", 0.1, 0.2), res("y", 0.3, 0.2), res("z", 0.1, 0.5)];
        let m = win_matrix(&r, "cand").unwrap();
        assert_eq!(m.rows, vec![WinRow { baseline: "base".into(), wins: 2, total: 3, fraction: 2.0 / 3.0 }]);
        assert!(m.to_text().contains("66.7%"));
        let tie = [res("x", 0.2, 0.2)];
        assert_eq!(win_matrix(&tie, "cand").unwrap().rows[0].wins, 0);
        assert!(win_matrix(&[], "cand").is_err());
    }
}
