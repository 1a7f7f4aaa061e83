//! On-disk form of a simulated dataset: counts CSV, a JSON truth document
//! (log-rate matrix, true factors, group labels), and the inflation mask in
//! the shared mask-file format.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::generate::SimulatedDataset;
use crate::data::save_counts;
use crate::error::{Error, Result};

/// JSON-shaped truth file saved next to the counts.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthDocument {
    pub setting: String,
    pub tau: Option<f64>,
    pub lambda: Vec<Vec<f64>>,
    pub u_true: Vec<Vec<f64>>,
    pub v_true: Vec<Vec<f64>>,
    pub sample_groups: Vec<usize>,
    pub taxon_groups: Vec<usize>,
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl TruthDocument {
    pub fn from_dataset(data: &SimulatedDataset) -> Self {
        TruthDocument {
            setting: data.setting.to_string(),
            tau: (!data.tau.is_nan()).then_some(data.tau),
            lambda: rows_of(&data.lambda_true),
            u_true: rows_of(&data.u_true),
            v_true: rows_of(&data.v_true),
            sample_groups: data.sample_groups.clone(),
            taxon_groups: data.taxon_groups.clone(),
        }
    }

    pub fn lambda_matrix(&self) -> Result<Array2<f64>> {
        let n = self.lambda.len();
        let m = self.lambda.first().map_or(0, Vec::len);
        Array2::from_shape_vec((n, m), self.lambda.iter().flatten().copied().collect())
            .map_err(|e| Error::Input(e.to_string()))
    }
}

/// Writes `counts.csv`, `truth.json` and `mask.csv` (the inflated cells)
/// into `dir`.
pub fn save_dataset(data: &SimulatedDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_counts(&data.a, &dir.join("counts.csv"))?;

    let truth = TruthDocument::from_dataset(data);
    let text = serde_json::to_string_pretty(&truth)
        .map_err(|e| Error::Input(format!("truth serialization failed: {e}")))?;
    std::fs::write(dir.join("truth.json"), text + "\n")?;

    let mut mask_csv = String::from("row_index,col_index\n");
    for ((i, j), &hit) in data.inflation_mask.indexed_iter() {
        if hit {
            writeln!(mask_csv, "{i},{j}").expect("string write");
        }
    }
    std::fs::write(dir.join("mask.csv"), mask_csv)?;
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<TruthDocument> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("cannot parse truth file: {e}")))
}
