//! Agreement and error metrics on ordinal grades.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadratic disagreement weights `(i-j)^2 / (N-1)^2`.
pub fn weight_matrix(n: usize) -> Vec<Vec<f64>> {
    let d = ((n.max(2) - 1) as f64).powi(2);
    (0..n)
        .map(|i| (0..n).map(|j| (i as f64 - j as f64).powi(2) / d).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n: usize,
    /// `counts[i][j]`: human grade i, model grade j.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(human: &[usize], predicted: &[usize], n: usize) -> Result<Self> {
        if human.len() != predicted.len() {
            return Err(Error::Invalid(format!(
                "length mismatch: {} human vs {} predicted grades",
                human.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![vec![0u64; n]; n];
        for (&h, &p) in human.iter().zip(predicted) {
            if h >= n || p >= n {
                return Err(Error::Invalid(format!("grade pair ({h}, {p}) outside [0, {}]", n.saturating_sub(1))));
            }
            counts[h][p] += 1;
        }
        Ok(ConfusionMatrix { n, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub value: f64,
    /// Set when both raters used a single identical grade, where kappa is 0/0.
    pub degenerate: bool,
}

/// Quadratic weighted kappa with full detail.
pub fn qwk_detail(human: &[usize], predicted: &[usize], n: usize) -> Result<Kappa> {
    if n < 2 {
        return Err(Error::Invalid("kappa needs at least two grade levels".into()));
    }
    if human.is_empty() {
        return Err(Error::Invalid("kappa needs at least one pair".into()));
    }
    let o = ConfusionMatrix::from_pairs(human, predicted, n)?;
    let w = weight_matrix(n);
    let total = o.total() as f64;
    let hist_h: Vec<f64> = (0..n).map(|i| o.counts[i].iter().sum::<u64>() as f64).collect();
    let hist_p: Vec<f64> = (0..n).map(|j| (0..n).map(|i| o.counts[i][j]).sum::<u64>() as f64).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            num += w[i][j] * o.counts[i][j] as f64;
            den += w[i][j] * hist_h[i] * hist_p[j] / total;
        }
    }
    if den == 0.0 {
        return Ok(Kappa { value: 1.0, degenerate: true });
    }
    Ok(Kappa { value: 1.0 - num / den, degenerate: false })
}

pub fn qwk(human: &[usize], predicted: &[usize], n: usize) -> Result<f64> {
    qwk_detail(human, predicted, n).map(|k| k.value)
}

/// Product-moment correlation; `None` when either side is constant.
pub fn pearson_detail(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Invalid("correlation needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson_detail(a, b).map(|r| r.unwrap_or(0.0))
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Invalid(format!("length mismatch: {} vs {}", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(Error::Invalid("mse needs at least one pair".into()));
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y_true.len() as f64)
}

/// Nearest ordinal, halves rounded up, clamped to `[0, n-1]`.
pub fn round_to_grade(raw: f64, n: usize) -> usize {
    let top = n.saturating_sub(1) as f64;
    (raw + 0.5).floor().clamp(0.0, top) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub qwk: f64,
    pub pearson_r: f64,
    pub mse: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    pub confusion: ConfusionMatrix,
}

impl MetricReport {
    /// All three metrics on grade ordinals.
    pub fn from_grades(human: &[usize], predicted: &[usize], n_grades: usize) -> Result<Self> {
        let k = qwk_detail(human, predicted, n_grades)?;
        let h: Vec<f64> = human.iter().map(|&g| g as f64).collect();
        let p: Vec<f64> = predicted.iter().map(|&g| g as f64).collect();
        let mut flags = Vec::new();
        if k.degenerate {
            flags.push("single shared grade: qwk defined as 1".to_string());
        }
        let r = if h.len() >= 2 {
            pearson_detail(&h, &p)?
        } else {
            None
        };
        if r.is_none() {
            flags.push("constant grades: pearson r set to 0".to_string());
        }
        Ok(MetricReport {
            qwk: k.value,
            pearson_r: r.unwrap_or(0.0),
            mse: mse(&h, &p)?,
            n: human.len(),
            flags,
            confusion: ConfusionMatrix::from_pairs(human, predicted, n_grades)?,
        })
    }
}
