//! On-disk formats: the dataset manifest with its numeric payload files,
//! ground-truth JSON, fit-result JSON and the CSV exports.
//!
//! Numeric matrices live in flat little-endian `f64` binary files
//! (row-major, shape declared in the manifest); a plain CSV reader is
//! provided for hand-made fixtures. Everything loads back bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{SmoothingMatrix, StructuralPrior, StudyDataset};
use crate::error::{Error, Result};
use crate::metrics::{mse, score_selection, SelectionScore};
use crate::sim::GroundTruth;
use crate::vb::FitResult;

pub const MANIFEST_VERSION: &str = "1";

/// One numeric payload file: flat little-endian f64 (`f64_le`) or CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRef {
    pub file: String,
    pub format: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuralRef {
    pub group: usize,
    pub file: String,
    pub format: String,
    pub len: usize,
}

/// Top-level dataset description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub n_time: usize,
    pub n_regions: usize,
    pub n_subjects: usize,
    pub n_groups: usize,
    pub n_lags: usize,
    pub roi_names: Vec<String>,
    /// One-based group label per subject.
    pub group_labels: Vec<usize>,
    pub subjects: Vec<MatrixRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structural: Option<Vec<StructuralRef>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<MatrixRef>,
}

fn read_f64_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::io(format!("{}: {e}", path.display())))?
        .read_to_end(&mut buf)?;
    if buf.len() != expected * 8 {
        return Err(Error::io(format!(
            "{}: has {} bytes, expected {} (= {} f64 values)",
            path.display(),
            buf.len(),
            expected * 8,
            expected
        )));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)
        .map_err(|e| Error::io(format!("{}: {e}", path.display())))?
        .write_all(&out)?;
    Ok(())
}

fn read_csv_matrix(path: &Path, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::io(format!(
                "{} line {}: {} fields, expected {cols}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        for f in fields {
            values.push(f.trim().parse::<f64>().map_err(|e| {
                Error::io(format!("{} line {}: bad number {f:?}: {e}", path.display(), i + 1))
            })?);
        }
    }
    if values.len() != rows * cols {
        return Err(Error::io(format!(
            "{}: parsed {} values, expected {}",
            path.display(),
            values.len(),
            rows * cols
        )));
    }
    Ok(values)
}

fn load_matrix(dir: &Path, r: &MatrixRef) -> Result<DMatrix<f64>> {
    let path = dir.join(&r.file);
    let values = match r.format.as_str() {
        "f64_le" => read_f64_le(&path, r.rows * r.cols)?,
        "csv" => read_csv_matrix(&path, r.rows, r.cols)?,
        other => return Err(Error::io(format!("unknown matrix format {other:?}"))),
    };
    Ok(DMatrix::from_row_slice(r.rows, r.cols, &values))
}

/// Loads and fully validates a dataset (centering applied), plus any
/// structural prior and smoothing matrix the manifest references. A
/// missing smoothing entry means identity smoothing.
pub fn load_dataset(
    manifest_path: &Path,
) -> Result<(StudyDataset, Option<StructuralPrior>, Option<SmoothingMatrix>)> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(format!("{}: {e}", manifest_path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::io(format!("{}: {e}", manifest_path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::validation(format!(
            "manifest version {:?}, this build reads {MANIFEST_VERSION:?}",
            manifest.version
        )));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.subjects.len() != manifest.n_subjects {
        return Err(Error::validation(format!(
            "manifest lists {} subject files for n={}",
            manifest.subjects.len(),
            manifest.n_subjects
        )));
    }
    let mut series = Vec::with_capacity(manifest.n_subjects);
    for (s, m) in manifest.subjects.iter().enumerate() {
        if m.rows != manifest.n_time || m.cols != manifest.n_regions {
            return Err(Error::validation(format!(
                "subject {s} file declares {}x{}, manifest says {}x{}",
                m.rows, m.cols, manifest.n_time, manifest.n_regions
            )));
        }
        series.push(load_matrix(dir, m)?);
    }
    let labels: Vec<usize> = manifest
        .group_labels
        .iter()
        .map(|&g| {
            if g == 0 || g > manifest.n_groups {
                Err(Error::validation(format!(
                    "group label {g} outside 1..={}",
                    manifest.n_groups
                )))
            } else {
                Ok(g - 1)
            }
        })
        .collect::<Result<_>>()?;
    let dataset = StudyDataset::new(
        series,
        Some(manifest.roi_names.clone()),
        labels,
        manifest.n_groups,
        manifest.n_lags,
    )?;
    let dim = dataset.coeff_index().len();

    let structural = match &manifest.structural {
        Some(refs) => {
            let mut vectors = vec![None; manifest.n_groups];
            for r in refs {
                if r.group == 0 || r.group > manifest.n_groups {
                    return Err(Error::validation(format!(
                        "structural entry for group {} outside 1..={}",
                        r.group, manifest.n_groups
                    )));
                }
                if r.len != dim {
                    return Err(Error::validation(format!(
                        "structural vector for group {} has length {}, expected {dim}",
                        r.group, r.len
                    )));
                }
                let path = dir.join(&r.file);
                let values = match r.format.as_str() {
                    "f64_le" => read_f64_le(&path, r.len)?,
                    "csv" => read_csv_matrix(&path, r.len, 1)?,
                    other => return Err(Error::io(format!("unknown structural format {other:?}"))),
                };
                vectors[r.group - 1] = Some(values);
            }
            if let Some(g) = vectors.iter().position(|v| v.is_none()) {
                return Err(Error::validation(format!(
                    "manifest structural section is missing group {}",
                    g + 1
                )));
            }
            Some(StructuralPrior::new(
                vectors.into_iter().map(|v| v.unwrap()).collect(),
                dim,
            )?)
        }
        None => None,
    };

    let smoothing = match &manifest.smoothing {
        Some(r) => {
            if r.rows != dim || r.cols != dim {
                return Err(Error::validation(format!(
                    "smoothing matrix declares {}x{}, expected {dim}x{dim}",
                    r.rows, r.cols
                )));
            }
            Some(SmoothingMatrix::from_dense(&load_matrix(dir, r)?)?)
        }
        None => None,
    };

    Ok((dataset, structural, smoothing))
}

/// Writes a dataset (and optional structural prior) into `dir` as a
/// manifest plus binary payload files. Returns the manifest path.
pub fn save_dataset(
    dir: &Path,
    dataset: &StudyDataset,
    structural: Option<&StructuralPrior>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut subjects = Vec::with_capacity(dataset.n_subjects());
    for (s, m) in dataset.series.iter().enumerate() {
        let file = format!("subject_{:03}.bin", s + 1);
        // row-major flatten
        let mut flat = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                flat.push(m[(i, j)]);
            }
        }
        write_f64_le(&dir.join(&file), &flat)?;
        subjects.push(MatrixRef {
            file,
            format: "f64_le".into(),
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let structural_refs = match structural {
        Some(p) => {
            let mut refs = Vec::new();
            for (g, v) in p.vectors.iter().enumerate() {
                let file = format!("structural_g{}.bin", g + 1);
                write_f64_le(&dir.join(&file), v)?;
                refs.push(StructuralRef {
                    group: g + 1,
                    file,
                    format: "f64_le".into(),
                    len: v.len(),
                });
            }
            Some(refs)
        }
        None => None,
    };
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION.into(),
        n_time: dataset.n_time(),
        n_regions: dataset.n_regions(),
        n_subjects: dataset.n_subjects(),
        n_groups: dataset.n_groups,
        n_lags: dataset.n_lags,
        roi_names: dataset.roi_names.clone(),
        group_labels: dataset.group_labels.iter().map(|&g| g + 1).collect(),
        subjects,
        structural: structural_refs,
        smoothing: None,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Serializable ground truth for `evaluate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub groups: Vec<TruthGroup>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthGroup {
    pub group: usize,
    pub gamma: Vec<bool>,
    pub omega: Vec<f64>,
    pub structural: Vec<f64>,
}

pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let file = TruthFile {
        groups: truth
            .gamma
            .iter()
            .enumerate()
            .map(|(g, gamma)| TruthGroup {
                group: g + 1,
                gamma: gamma.clone(),
                omega: truth.omega[g].clone(),
                structural: truth.structural.vectors[g].clone(),
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<TruthFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_fit_result(path: &Path, fit: &FitResult) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(fit)?)?;
    Ok(())
}

pub fn load_fit_result(path: &Path) -> Result<FitResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Cross-group sharing tag of an exported edge.
fn sharing_tag(n_groups_with_edge: usize, n_groups: usize) -> &'static str {
    if n_groups_with_edge == 1 {
        "unique"
    } else if n_groups_with_edge == n_groups {
        "shared"
    } else {
        "other-combination"
    }
}

/// Which edges `export_edges` keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportMode {
    All,
    UniqueOnly,
    SharedOnly,
}

/// Renders the selected edges of a fit as the connectogram CSV: one row
/// per selected edge per group, deterministic ordering (group, lag,
/// source, target), with cross-group sharing tags.
pub fn export_edges(fit: &FitResult, roi_names: &[String], mode: ExportMode) -> Result<String> {
    if fit.groups.is_empty() {
        return Err(Error::validation("fit has no groups to export"));
    }
    for group in &fit.groups {
        if group.mpp.len() != fit.groups[0].mpp.len() {
            return Err(Error::validation(
                "groups disagree on coefficient count; cannot export",
            ));
        }
    }
    if roi_names.len() != fit.n_regions {
        return Err(Error::validation(format!(
            "{} ROI names for {} regions",
            roi_names.len(),
            fit.n_regions
        )));
    }
    let n_groups = fit.groups.len();
    let mut out = String::from("group,lag,source_roi,target_roi,mpp,strength,sign,sharing\n");
    for group in &fit.groups {
        let mut edges = group.selected.clone();
        edges.sort_by_key(|e| (e.lag, e.source, e.target));
        for e in edges {
            let groups_with_edge = fit
                .groups
                .iter()
                .filter(|other| other.selected.iter().any(|o| o.k == e.k))
                .count();
            let tag = sharing_tag(groups_with_edge, n_groups);
            let keep = match mode {
                ExportMode::All => true,
                ExportMode::UniqueOnly => tag == "unique",
                ExportMode::SharedOnly => tag == "shared",
            };
            if !keep {
                continue;
            }
            let sign = if e.strength >= 0.0 { "+" } else { "-" };
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{},{}\n",
                group.group + 1,
                e.lag,
                roi_names[e.source],
                roi_names[e.target],
                e.mpp,
                e.strength,
                sign,
                tag
            ));
        }
    }
    Ok(out)
}

/// Per-group evaluation row: selection score plus coefficient MSE.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationRow {
    pub group: usize,
    pub score: SelectionScore,
    pub mse: f64,
}

/// Scores a fit against ground truth, group by group.
pub fn evaluate_fit(fit: &FitResult, truth: &TruthFile) -> Result<Vec<EvaluationRow>> {
    if fit.groups.len() != truth.groups.len() {
        return Err(Error::validation(format!(
            "fit has {} groups, truth has {}",
            fit.groups.len(),
            truth.groups.len()
        )));
    }
    let mut rows = Vec::new();
    for (group, tg) in fit.groups.iter().zip(&truth.groups) {
        let selected = group.selected_mask(fit.threshold);
        let score = score_selection(&selected, &tg.gamma)?;
        let omega_hat = group.omega_hat(fit.threshold);
        let err = mse(&omega_hat, &tg.omega)?;
        rows.push(EvaluationRow {
            group: group.group + 1,
            score,
            mse: err,
        });
    }
    Ok(rows)
}

/// Renders evaluation rows as CSV.
pub fn scores_csv(rows: &[EvaluationRow]) -> String {
    let mut out = String::from("group,tp,fp,tn,fn,fpr,fnr,accuracy,f1,mse\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.8}\n",
            r.group,
            r.score.tp,
            r.score.fp,
            r.score.tn,
            r.score.fn_,
            r.score.fpr,
            r.score.fnr,
            r.score.accuracy,
            r.score.f1,
            r.mse
        ));
    }
    out
}
