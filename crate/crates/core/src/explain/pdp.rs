use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::FittedModel;
use crate::matrix::FeatureMatrix;

pub const DEFAULT_GRID: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature: String,
    pub grid: Vec<f64>,
    pub mean_prediction: Vec<f64>,
    pub n_background: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `n_grid` equally spaced points from the 1st to the 99th percentile, or a
/// single point when that range is empty.
pub fn percentile_grid(values: &[f64], n_grid: usize) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let lo = percentile(&s, 0.01);
    let hi = percentile(&s, 0.99);
    if hi <= lo || n_grid < 2 {
        return vec![lo];
    }
    (0..n_grid).map(|i| lo + (hi - lo) * i as f64 / (n_grid - 1) as f64).collect()
}

/// Partial dependence of `predict` on column `feature`: at each grid value,
/// the mean prediction over the background rows with that column overridden.
pub fn pdp<F>(predict: F, background: &[Vec<f64>], feature: usize, name: &str, n_grid: usize) -> Result<PdpCurve>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if background.is_empty() {
        return Err(Error::Invalid("partial dependence needs background rows".into()));
    }
    if feature >= background[0].len() {
        return Err(Error::UnknownFeature(name.to_string()));
    }
    let column: Vec<f64> = background.iter().map(|r| r[feature]).collect();
    let grid = percentile_grid(&column, n_grid);
    let mut flags = Vec::new();
    if grid.len() == 1 {
        flags.push(format!("{name} is constant between its 1st and 99th percentiles"));
    }
    let mean_prediction = grid
        .par_iter()
        .map(|&g| {
            let mut row = Vec::new();
            let mut total = 0.0;
            for r in background {
                row.clear();
                row.extend_from_slice(r);
                row[feature] = g;
                total += predict(&row);
            }
            total / background.len() as f64
        })
        .collect();
    Ok(PdpCurve { feature: name.to_string(), grid, mean_prediction, n_background: background.len(), flags })
}

/// Partial dependence of a fitted model's score, with the grid in the
/// feature's original units.
pub fn pdp_model(model: &FittedModel, background: &FeatureMatrix, feature: &str, n_grid: usize) -> Result<PdpCurve> {
    let cols = model.column_map(background)?;
    let j = model
        .feature_names()
        .iter()
        .position(|n| n == feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
    let rows: Vec<Vec<f64>> = background.data.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
    pdp(|r| model.score_raw(r), &rows, j, feature, n_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_for;
    use rand::Rng;

    fn background(n: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_for(8, 0);
        (0..n).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(0.0..5.0)]).collect()
    }

    #[test]
    fn percentile_interpolates() {
        let s = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(percentile(&s, 0.5), 20.0);
        assert!((percentile(&s, 0.01) - 0.4).abs() < 1e-12);
        assert!((percentile(&s, 0.99) - 39.6).abs() < 1e-12);
    }

    #[test]
    fn constant_model_is_flat() {
        let c = pdp(|_| 3.0, &background(50), 0, "x0", DEFAULT_GRID).unwrap();
        assert_eq!(c.grid.len(), 20);
        assert!(c.mean_prediction.iter().all(|v| *v == 3.0));
        assert!(c.grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn additive_model_identity() {
        let bg = background(200);
        let mean_x1 = bg.iter().map(|r| r[1]).sum::<f64>() / 200.0;
        let c = pdp(|r| r[0] + r[1], &bg, 0, "x0", DEFAULT_GRID).unwrap();
        for (g, v) in c.grid.iter().zip(&c.mean_prediction) {
            assert!((v - (g + mean_x1)).abs() < 1e-9);
        }
    }

    #[test]
    fn step_curve() {
        let bg = background(100);
        let c = pdp(|r| if r[0] <= 0.0 { 0.0 } else { 1.0 }, &bg, 0, "x0", DEFAULT_GRID).unwrap();
        for (g, v) in c.grid.iter().zip(&c.mean_prediction) {
            assert_eq!(*v, if *g <= 0.0 { 0.0 } else { 1.0 });
        }
        assert_eq!(c.mean_prediction[0], 0.0);
        assert_eq!(*c.mean_prediction.last().unwrap(), 1.0);
    }

    #[test]
    fn constant_feature_gives_one_flagged_point() {
        let bg: Vec<Vec<f64>> = (0..10).map(|i| vec![1.5, i as f64]).collect();
        let c = pdp(|r| r[1], &bg, 0, "x0", DEFAULT_GRID).unwrap();
        assert_eq!(c.grid, vec![1.5]);
        assert_eq!(c.flags.len(), 1);
        assert!((c.mean_prediction[0] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(pdp(|_| 0.0, &[], 0, "x", 20).is_err());
        assert!(matches!(pdp(|_| 0.0, &background(3), 5, "x", 20), Err(Error::UnknownFeature(_))));
    }
}
