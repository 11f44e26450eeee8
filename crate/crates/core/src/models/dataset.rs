//! Plain-text dataset parsing: one sample per line, whitespace-separated
//! reals; for supervised presets the last column is the label. Blank lines
//! and `#` comments are skipped.

use crate::error::{MfldError, Result};

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Row-major n x dim feature matrix.
    pub features: Vec<f64>,
    pub n: usize,
    pub dim: usize,
    pub labels: Option<Vec<f64>>,
}

pub fn parse_dataset(text: &str, labeled: bool) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = if labeled { Some(Vec::new()) } else { None };
    let mut dim = None;
    let mut n = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                MfldError::InvalidArgument(format!(
                    "dataset line {}: cannot parse '{tok}' as a real",
                    lineno + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(MfldError::InvalidArgument(format!(
                    "dataset line {}: non-finite value {tok}",
                    lineno + 1
                )));
            }
            row.push(v);
        }
        let feat_len = if labeled { row.len().saturating_sub(1) } else { row.len() };
        if feat_len == 0 {
            return Err(MfldError::InvalidArgument(format!(
                "dataset line {}: needs at least {} column(s)",
                lineno + 1,
                if labeled { 2 } else { 1 }
            )));
        }
        match dim {
            None => dim = Some(feat_len),
            Some(d) if d != feat_len => {
                return Err(MfldError::DimensionMismatch(format!(
                    "dataset line {}: {} feature column(s), expected {}",
                    lineno + 1,
                    feat_len,
                    d
                )));
            }
            _ => {}
        }
        if let Some(ls) = labels.as_mut() {
            ls.push(row.pop().unwrap());
        }
        features.extend(row);
        n += 1;
    }
    let dim = dim.ok_or_else(|| {
        MfldError::InvalidArgument("dataset is empty".to_string())
    })?;
    Ok(Dataset { features, n, dim, labels })
}
