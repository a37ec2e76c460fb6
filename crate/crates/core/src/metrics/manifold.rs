use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::acord_trainer::{evaluate_policy, EvalOptions, KSchedule, PolicySnapshot};
use crate::envs::Environment;
use crate::error::{Error, Result};

/// Achieved-feature statistics for one `(k_j, k_other)` setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCell {
    pub k_j: f64,
    pub k_other: f64,
    /// Mean over episodes of each episode's mean feature value.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub episodes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldReport {
    /// Which `k` axis was swept (and which mapped feature was measured).
    pub j: usize,
    pub feature_name: String,
    /// Row-major: outer loop over the cross grid, inner over the `k_j` grid.
    pub cells: Vec<ManifoldCell>,
}

impl ManifoldReport {
    /// Cells grouped by `k_other`, each row ordered by `k_j`.
    pub fn rows(&self) -> Vec<Vec<&ManifoldCell>> {
        let mut rows: Vec<Vec<&ManifoldCell>> = Vec::new();
        for c in &self.cells {
            match rows.last_mut() {
                Some(r) if r[0].k_other == c.k_other => r.push(c),
                _ => rows.push(vec![c]),
            }
        }
        rows
    }

    /// Spearman correlation of `k_j` against the mean feature, per row.
    pub fn row_spearman(&self) -> Vec<f64> {
        self.rows()
            .iter()
            .map(|r| {
                let x: Vec<f64> = r.iter().map(|c| c.k_j).collect();
                let y: Vec<f64> = r.iter().map(|c| c.mean).collect();
                spearman(&x, &y)
            })
            .collect()
    }

    /// `max - min` of the mean feature within each row.
    pub fn row_range(&self) -> Vec<f64> {
        self.rows()
            .iter()
            .map(|r| {
                let lo = r.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
                let hi = r.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,k_j,k_other,mean,min,max,episodes,failures\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.feature_name, c.k_j, c.k_other, c.mean, c.min, c.max, c.episodes, c.failures
            );
        }
        out
    }
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks). `NaN` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Sweeps `k_j` over `k_grid` with every other `k` held at each value of
/// `cross_grid`, running deterministic episodes per cell.
pub fn manifold_sweep(
    env: &mut dyn Environment,
    policy: &PolicySnapshot,
    j: usize,
    k_grid: &[f64],
    cross_grid: &[f64],
    episodes_per_cell: usize,
    opts: &EvalOptions,
) -> Result<ManifoldReport> {
    let m = policy.map.m();
    if j >= m {
        return Err(Error::config(format!("k axis {j} out of range for m = {m}")));
    }
    if k_grid.is_empty() || cross_grid.is_empty() || episodes_per_cell == 0 {
        return Err(Error::config("sweep grids and episode count must be non-empty"));
    }
    let mut cells = Vec::with_capacity(k_grid.len() * cross_grid.len());
    for &other in cross_grid {
        for &kj in k_grid {
            let mut k = vec![other; m];
            k[j] = kj;
            let summary = evaluate_policy(
                env,
                policy,
                &KSchedule::Fixed { k },
                &EvalOptions {
                    episodes: episodes_per_cell,
                    ..*opts
                },
            )?;
            let vals: Vec<f64> = summary.episodes.iter().map(|e| e.mean_features[j]).collect();
            cells.push(ManifoldCell {
                k_j: kj,
                k_other: other,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                episodes: vals.len(),
                failures: summary.episodes.iter().filter(|e| e.failed).count(),
            });
        }
    }
    Ok(ManifoldReport {
        j,
        feature_name: policy.map.entries()[j].name.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // monotone but nonlinear is still perfect
        assert!((spearman(&[0.0, 0.25, 0.5, 0.75, 1.0], &[0.1, 0.11, 0.5, 0.9, 0.91]) - 1.0).abs() < 1e-12);
        // one swap among five: 1 - 6*2/(5*24) = 0.9
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 4.0, 3.0, 5.0]) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
