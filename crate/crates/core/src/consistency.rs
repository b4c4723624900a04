//! How similar are repeated trials? Pairwise TF-IDF cosine similarity of
//! the extracted factor text, and pairwise Pearson correlation of the
//! total-score series.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::FactorSet;

#[derive(Debug, Error, PartialEq)]
pub enum ConsistencyError {
    #[error("document {0} is empty")]
    EmptyDocument(usize),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("no date has two or more trials to compare")]
    InsufficientTrials,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("series is constant")]
    ConstantSeries,
    #[error("embedding backend failed: {0}")]
    Embedding(String),
}

pub type SparseVector = BTreeMap<String, f64>;

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Raw-count tf times smoothed idf `ln((1 + N) / (1 + df)) + 1`.
pub fn tfidf_vectors<S: AsRef<str>>(docs: &[S]) -> Result<Vec<SparseVector>, ConsistencyError> {
    let tokenized: Vec<Vec<String>> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let toks = tokenize(d.as_ref());
            if toks.is_empty() {
                Err(ConsistencyError::EmptyDocument(i))
            } else {
                Ok(toks)
            }
        })
        .collect::<Result<_, _>>()?;

    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for toks in &tokenized {
        let unique: BTreeSet<&str> = toks.iter().map(String::as_str).collect();
        for t in unique {
            *doc_freq.entry(t).or_default() += 1;
        }
    }
    let n = tokenized.len() as f64;
    Ok(tokenized
        .iter()
        .map(|toks| {
            let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            tf.into_iter()
                .map(|(t, count)| {
                    let idf = ((1.0 + n) / (1.0 + doc_freq[t] as f64)).ln() + 1.0;
                    (t.to_string(), count as f64 * idf)
                })
                .collect()
        })
        .collect())
}

pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> Result<f64, ConsistencyError> {
    let norm = |v: &SparseVector| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(ConsistencyError::ZeroVector);
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small.iter().filter_map(|(k, x)| large.get(k).map(|y| x * y)).sum();
    Ok(dot / (na * nb))
}

pub fn cosine_dense(a: &[f64], b: &[f64]) -> Result<f64, ConsistencyError> {
    if a.len() != b.len() {
        return Err(ConsistencyError::LengthMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(ConsistencyError::ZeroVector);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// A pluggable text embedder for the similarity study.
pub trait TextEmbedder {
    fn method(&self) -> &str;
    fn embed(&self, docs: &[String]) -> Result<Vec<Vec<f64>>, ConsistencyError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub method: String,
    pub mean: f64,
    pub std: f64,
    pub n_pairs: usize,
}

impl SimilarityStats {
    pub fn to_csv(rows: &[SimilarityStats]) -> String {
        let mut out = String::from("method,mean,std,n_pairs\n");
        for r in rows {
            out.push_str(&format!("{},{:.6},{:.6},{}\n", r.method, r.mean, r.std, r.n_pairs));
        }
        out
    }
}

fn mean_std(values: &[f64], kind: StdKind) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = match kind {
        StdKind::Population => n,
        StdKind::Sample if values.len() > 1 => n - 1.0,
        StdKind::Sample => 1.0,
    };
    (mean, (ss / denom).sqrt())
}

fn pair_similarities(vectors: &[SparseVector], offsets: &[(usize, usize)]) -> Result<Vec<f64>, ConsistencyError> {
    let mut sims = Vec::new();
    for &(start, len) in offsets {
        for i in start..start + len {
            for j in i + 1..start + len {
                sims.push(cosine_similarity(&vectors[i], &vectors[j])?);
            }
        }
    }
    Ok(sims)
}

/// Mean and spread of pairwise TF-IDF cosine similarity between trials.
///
/// `trials[d]` holds the factor sets of every trial for date `d`. The idf
/// table is fitted on all documents of all dates; pairs are only formed
/// within a date. Dates with fewer than two trials contribute nothing.
pub fn trial_similarity_stats(
    trials: &[Vec<FactorSet>],
    std_kind: StdKind,
) -> Result<SimilarityStats, ConsistencyError> {
    let mut docs = Vec::new();
    let mut offsets = Vec::new();
    for day in trials {
        offsets.push((docs.len(), day.len()));
        docs.extend(day.iter().map(FactorSet::joined));
    }
    if !trials.iter().any(|d| d.len() >= 2) {
        return Err(ConsistencyError::InsufficientTrials);
    }
    let vectors = tfidf_vectors(&docs)?;
    let sims = pair_similarities(&vectors, &offsets)?;
    let (mean, std) = mean_std(&sims, std_kind);
    Ok(SimilarityStats {
        method: "tfidf".into(),
        mean,
        std,
        n_pairs: sims.len(),
    })
}

/// Same study through an external embedder.
pub fn trial_similarity_stats_with(
    embedder: &dyn TextEmbedder,
    trials: &[Vec<FactorSet>],
    std_kind: StdKind,
) -> Result<SimilarityStats, ConsistencyError> {
    if !trials.iter().any(|d| d.len() >= 2) {
        return Err(ConsistencyError::InsufficientTrials);
    }
    let mut sims = Vec::new();
    for day in trials.iter().filter(|d| d.len() >= 2) {
        let docs: Vec<String> = day.iter().map(FactorSet::joined).collect();
        let vecs = embedder.embed(&docs)?;
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                sims.push(cosine_dense(&vecs[i], &vecs[j])?);
            }
        }
    }
    let (mean, std) = mean_std(&sims, std_kind);
    Ok(SimilarityStats {
        method: embedder.method().to_string(),
        mean,
        std,
        n_pairs: sims.len(),
    })
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, ConsistencyError> {
    if a.len() != b.len() {
        return Err(ConsistencyError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(ConsistencyError::TooShort(a.len()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(ConsistencyError::ConstantSeries);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Symmetric k-by-k matrix of pairwise Pearson coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Heatmap-ready CSV: header `trial,t0,t1,...`, one row per trial.
    pub fn to_csv(&self) -> String {
        let k = self.k();
        let mut out = String::from("trial");
        for j in 0..k {
            out.push_str(&format!(",t{j}"));
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            out.push_str(&format!("t{i}"));
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn trial_score_correlation(series: &[Vec<f64>]) -> Result<CorrelationMatrix, ConsistencyError> {
    let k = series.len();
    let mut values = vec![vec![1.0; k]; k];
    for i in 0..k {
        if series[i].len() < 2 {
            return Err(ConsistencyError::TooShort(series[i].len()));
        }
        for j in i + 1..k {
            let r = pearson(&series[i], &series[j])?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { values })
}
