use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Per-column z-scoring fitted on training rows. Uses the population standard
/// deviation; zero-variance columns pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &FeatureMatrix) -> Result<Self> {
        if train.n_rows() == 0 {
            return Err(Error::Invalid("cannot fit a standardizer on zero rows".into()));
        }
        let n = train.n_rows() as f64;
        let p = train.n_cols();
        let mut mean = vec![0.0; p];
        for row in &train.data {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in &train.data {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let zero_variance = train_is_constant(train);
        Ok(Standardizer {
            columns: train.names(),
            mean,
            std,
            zero_variance,
        })
    }

    fn check(&self, m: &FeatureMatrix) -> Result<()> {
        let names = m.names();
        if names != self.columns {
            let extra: Vec<&String> = names.iter().filter(|n| !self.columns.contains(n)).collect();
            let missing: Vec<&String> = self.columns.iter().filter(|n| !names.contains(n)).collect();
            return Err(Error::ColumnMismatch(format!(
                "standardizer fitted on {} columns, matrix has {} (extra {:?}, missing {:?})",
                self.columns.len(),
                names.len(),
                extra,
                missing
            )));
        }
        Ok(())
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(m)?;
        let mut out = m.clone();
        for row in &mut out.data {
            self.transform_row(row);
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            if !self.zero_variance[j] {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }

    pub fn inverse(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(m)?;
        let mut out = m.clone();
        for row in &mut out.data {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.inverse_value(j, *v);
            }
        }
        Ok(out)
    }

    pub fn inverse_value(&self, column: usize, v: f64) -> f64 {
        if self.zero_variance[column] {
            v
        } else {
            v * self.std[column] + self.mean[column]
        }
    }
}

fn train_is_constant(m: &FeatureMatrix) -> Vec<bool> {
    (0..m.n_cols())
        .map(|j| {
            let first = m.data[0][j];
            m.data.iter().all(|r| r[j] == first)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{Column, FeatureGroup};
    use proptest::prelude::*;

    fn matrix(cols: &[&str], rows: &[Vec<f64>]) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(
            cols.iter()
                .map(|c| Column { name: c.to_string(), group: FeatureGroup::FF })
                .collect(),
        );
        for (i, r) in rows.iter().enumerate() {
            m.push_row(format!("r{i}"), None, None, None, r.clone());
        }
        m
    }

    #[test]
    fn hand_z_scores() {
        // mean 4, population sd sqrt(8/3)
        let m = matrix(&["x"], &[vec![2.0], vec![4.0], vec![6.0]]);
        let s = Standardizer::fit(&m).unwrap();
        let z = s.apply(&m).unwrap().column(0);
        let expected = 2.0 / (8.0f64 / 3.0).sqrt();
        assert!((z[0] + expected).abs() < 1e-12);
        assert!(z[1].abs() < 1e-12);
        assert!((z[2] - expected).abs() < 1e-12);
        assert!((expected - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn constant_column_passes_through() {
        let m = matrix(&["c"], &[vec![5.0], vec![5.0], vec![5.0]]);
        let s = Standardizer::fit(&m).unwrap();
        assert_eq!(s.zero_variance, vec![true]);
        assert_eq!(s.apply(&m).unwrap().column(0), vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn extra_column_is_rejected() {
        let m = matrix(&["x"], &[vec![1.0], vec![2.0]]);
        let s = Standardizer::fit(&m).unwrap();
        let wider = matrix(&["x", "y"], &[vec![1.0, 0.0]]);
        assert!(matches!(s.apply(&wider), Err(Error::ColumnMismatch(_))));
    }

    #[test]
    fn empty_train_is_an_error() {
        assert!(Standardizer::fit(&matrix(&["x"], &[])).is_err());
    }

    proptest! {
        #[test]
        fn train_moments_and_round_trip(rows in proptest::collection::vec(
            proptest::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let m = matrix(&["a", "b", "c"], &rows);
            let s = Standardizer::fit(&m).unwrap();
            let z = s.apply(&m).unwrap();
            for j in 0..3 {
                let col = z.column(j);
                let n = col.len() as f64;
                let mu = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
                if s.zero_variance[j] {
                    prop_assert_eq!(col, m.column(j));
                } else {
                    prop_assert!(mu.abs() < 1e-9);
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                }
            }
            let back = s.inverse(&z).unwrap();
            for (r0, r1) in m.data.iter().zip(&back.data) {
                for (a, b) in r0.iter().zip(r1) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }
}
