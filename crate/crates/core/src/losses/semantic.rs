//! Language-guidance regularizer: row-wise KL divergence between softened
//! language similarities and softened visual similarities.
//!
//! The language side is ingested, never computed here: a class-embedding
//! table (CSV, one row per class) plus per-sample top-k class lists define k
//! batch-aligned similarity matrices whose mean is the regularization
//! target.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{check_len, SimilarityMatrix};
use crate::error::{Error, Result};

/// Class-embedding table with one row per class id (dense, 0..C).
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticTable {
    embeddings: Array2<f64>,
}

impl SemanticTable {
    pub fn new(embeddings: Array2<f64>) -> Result<Self> {
        if embeddings.nrows() == 0 || embeddings.ncols() == 0 {
            return Err(Error::domain("semantic table must be non-empty"));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("semantic table contains non-finite values"));
        }
        Ok(SemanticTable { embeddings })
    }

    pub fn class_count(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    /// Reads `class_id,e_1,…,e_m` rows; ids must cover 0..C densely.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.display().to_string(),
                line: line_no + 1,
                message,
            };
            let mut fields = line.split(',');
            let class_id: usize = fields
                .next()
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad class id: {e}")))?;
            let values = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("bad embedding value: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(parse_err("row has no embedding values".into()));
            }
            if rows.insert(class_id, values).is_some() {
                return Err(parse_err(format!("duplicate class id {class_id}")));
            }
        }
        let class_count = rows.len();
        if class_count == 0 {
            return Err(Error::domain("semantic table file is empty"));
        }
        let dim = rows.values().next().unwrap().len();
        let mut table = Array2::zeros((class_count, dim));
        for (class_id, values) in rows {
            if class_id >= class_count {
                return Err(Error::Domain(format!(
                    "semantic table ids are not dense: id {class_id} with {class_count} rows"
                )));
            }
            if values.len() != dim {
                return Err(Error::Domain(format!(
                    "semantic table row {class_id} has {} values, expected {dim}",
                    values.len()
                )));
            }
            for (j, v) in values.into_iter().enumerate() {
                table[(class_id, j)] = v;
            }
        }
        SemanticTable::new(table)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for (class_id, row) in self.embeddings.rows().into_iter().enumerate() {
            write!(out, "{class_id}")?;
            for v in row.iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-sample top-k class lists keyed by sample id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TopkAssignments {
    by_id: BTreeMap<String, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TopkLine {
    id: String,
    topk: Vec<usize>,
}

impl TopkAssignments {
    pub fn new(by_id: BTreeMap<String, Vec<usize>>) -> Self {
        TopkAssignments { by_id }
    }

    pub fn get(&self, id: &str) -> Option<&Vec<usize>> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Reads JSONL lines of the form `{"id": …, "topk": [c₁,…,c_k]}`.
    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut by_id = BTreeMap::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TopkLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: line_no + 1,
                message: e.to_string(),
            })?;
            by_id.insert(parsed.id, parsed.topk);
        }
        Ok(TopkAssignments { by_id })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for (id, topk) in &self.by_id {
            let line = serde_json::to_string(&TopkLine {
                id: id.clone(),
                topk: topk.clone(),
            })?;
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// k batch-aligned language-similarity matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticMatrixSet {
    matrices: Vec<Array2<f64>>,
}

impl SemanticMatrixSet {
    /// Builds the j-th matrix as the Gram matrix of the unit-normalized class
    /// embeddings selected by each sample's j-th top class.
    ///
    /// `topk_rows` holds one class list per batch sample, all of equal
    /// length k ≥ 1.
    pub fn from_topk(table: &SemanticTable, topk_rows: &[Vec<usize>]) -> Result<Self> {
        if topk_rows.is_empty() {
            return Err(Error::domain("semantic matrix set: empty batch"));
        }
        let k = topk_rows[0].len();
        if k == 0 {
            return Err(Error::domain("semantic matrix set: top-k lists are empty"));
        }
        if topk_rows.iter().any(|r| r.len() != k) {
            return Err(Error::domain(
                "semantic matrix set: top-k lists have unequal lengths",
            ));
        }
        let n = topk_rows.len();
        let normalized = normalized_rows(table.embeddings())?;
        let mut matrices = Vec::with_capacity(k);
        for j in 0..k {
            let mut selected = Array2::zeros((n, table.dim()));
            for (i, row) in topk_rows.iter().enumerate() {
                let class_id = row[j];
                if class_id >= table.class_count() {
                    return Err(Error::Domain(format!(
                        "semantic matrix set: class id {class_id} out of range"
                    )));
                }
                selected.row_mut(i).assign(&normalized.row(class_id));
            }
            matrices.push(selected.dot(&selected.t()));
        }
        Ok(SemanticMatrixSet { matrices })
    }

    /// Wraps explicit matrices (all n×n, finite).
    pub fn from_matrices(matrices: Vec<Array2<f64>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::domain("semantic matrix set: no matrices"));
        }
        let n = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::domain("semantic matrix set: shape mismatch"));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("semantic matrix set: non-finite entry"));
            }
        }
        Ok(SemanticMatrixSet { matrices })
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn n(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// Entrywise mean of the k matrices.
    pub fn mean_matrix(&self) -> Array2<f64> {
        let mut mean = self.matrices[0].clone();
        for m in &self.matrices[1..] {
            mean += m;
        }
        mean / self.matrices.len() as f64
    }
}

fn normalized_rows(m: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = m.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            return Err(Error::Domain(format!(
                "semantic table row {i} has zero norm"
            )));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// Per-sample regularizer loss:
/// `ℓᵢ = KL(softmax(langᵢ/T) ‖ softmax(Sᵢ/T))` with the self column masked
/// from both softmax rows. `lang` is the mean of the k language matrices.
pub fn semantic_regularizer_per_sample(
    s_visual: &SimilarityMatrix,
    sem: &SemanticMatrixSet,
    temperature: f64,
) -> Result<Vec<f64>> {
    let (p, q, _) = regularizer_distributions(s_visual, sem, temperature)?;
    let n = s_visual.n();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut kl = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let pj = p[(i, j)];
            if pj > 0.0 {
                kl += pj * (pj.ln() - q[(i, j)].ln());
            }
        }
        out.push(kl.max(0.0));
    }
    Ok(out)
}

/// Gradient of `Σᵢ wᵢ·ℓᵢ` with respect to the visual similarity matrix:
/// `∂ℓᵢ/∂Sᵢⱼ = (qᵢⱼ − pᵢⱼ)/T` off the diagonal.
pub fn semantic_regularizer_grad_similarity(
    s_visual: &SimilarityMatrix,
    sem: &SemanticMatrixSet,
    temperature: f64,
    sample_weights: &[f64],
) -> Result<Array2<f64>> {
    check_len(sample_weights, s_visual.n(), "regularizer weights")?;
    let (p, q, n) = regularizer_distributions(s_visual, sem, temperature)?;
    let mut grad = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            grad[(i, j)] = sample_weights[i] * (q[(i, j)] - p[(i, j)]) / temperature;
        }
    }
    Ok(grad)
}

/// Row-wise masked softmax pair (language target p, visual q).
fn regularizer_distributions(
    s_visual: &SimilarityMatrix,
    sem: &SemanticMatrixSet,
    temperature: f64,
) -> Result<(Array2<f64>, Array2<f64>, usize)> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Domain(format!(
            "regularizer temperature must be positive, got {temperature}"
        )));
    }
    let n = s_visual.n();
    if sem.n() != n {
        return Err(Error::Domain(format!(
            "regularizer: language matrices are {}x{} but batch is {n}",
            sem.n(),
            sem.n()
        )));
    }
    if n < 2 {
        return Err(Error::domain(
            "regularizer needs at least 2 samples per batch",
        ));
    }
    let lang = sem.mean_matrix();
    let p = masked_row_softmax(&lang, temperature);
    let q = masked_row_softmax(s_visual.matrix(), temperature);
    Ok((p, q, n))
}

fn masked_row_softmax(m: &Array2<f64>, temperature: f64) -> Array2<f64> {
    let n = m.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let logits: Array1<f64> = m.row(i).mapv(|v| v / temperature);
        let max = logits
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let e = (logits[j] - max).exp();
            out[(i, j)] = e;
            denom += e;
        }
        for j in 0..n {
            if j != i {
                out[(i, j)] /= denom;
            }
        }
    }
    out
}
