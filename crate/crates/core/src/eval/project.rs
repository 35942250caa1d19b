use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::embed::EmbeddingTable;
use super::scatter::{EmbeddingScatter, ScatterRow};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

impl std::str::FromStr for ProjectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(Self::Pca),
            "tsne" | "t-sne" => Ok(Self::Tsne),
            other => Err(Error::Config(format!("unknown projection method {other:?} (expected pca or tsne)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 10.0,
            iterations: 750,
            learning_rate: 100.0,
            seed: 0,
        }
    }
}

/// Projects every row of `table` to 2-D. Duplicate rows always land on the same point.
pub fn project_2d(table: &EmbeddingTable, method: ProjectionMethod) -> Result<EmbeddingScatter> {
    project_2d_with(table, method, &TsneConfig::default())
}

pub fn project_2d_with(
    table: &EmbeddingTable,
    method: ProjectionMethod,
    tsne: &TsneConfig,
) -> Result<EmbeddingScatter> {
    let rows = table.rows();
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "projection needs at least 3 embeddings, got {}",
            rows.len()
        )));
    }
    let data: Vec<&[f64]> = rows.iter().map(|r| r.vector.as_slice()).collect();
    let coords = match method {
        ProjectionMethod::Pca => pca(&data),
        ProjectionMethod::Tsne => tsne_dedup(&data, tsne),
    };
    let out = rows
        .iter()
        .zip(coords)
        .map(|(r, (x, y))| ScatterRow {
            id: r.id.clone(),
            group: r.group.clone(),
            converted: r.converted,
            x,
            y,
        })
        .collect();
    Ok(EmbeddingScatter::new(out, table.config_hash().map(str::to_owned)))
}

/// Principal-component projection onto the two leading axes.
pub fn pca(data: &[&[f64]]) -> Vec<(f64, f64)> {
    let n = data.len();
    let d = data.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let scale = centered.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return vec![(0.0, 0.0); n];
    }
    // Work in whichever of the Gram or covariance spaces is smaller.
    let axes: Vec<Vec<f64>> = if n <= d {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        leading(&eig, 2)
            .into_iter()
            .map(|(val, u)| {
                if val <= 0.0 {
                    return vec![0.0; d];
                }
                let v = centered.transpose() * DMatrix::from_column_slice(n, 1, &u) / val.sqrt();
                v.iter().copied().collect()
            })
            .collect()
    } else {
        let cov = centered.transpose() * &centered;
        let eig = SymmetricEigen::new(cov);
        leading(&eig, 2).into_iter().map(|(_, v)| v).collect()
    };
    let axes: Vec<Vec<f64>> = axes.into_iter().map(orient).collect();
    (0..n)
        .map(|i| {
            let row = centered.row(i);
            let p = |a: &Vec<f64>| a.iter().zip(row.iter()).map(|(x, y)| x * y).sum::<f64>();
            (p(&axes[0]), axes.get(1).map_or(0.0, p))
        })
        .collect()
}

fn leading(eig: &SymmetricEigen<f64, nalgebra::Dyn>, k: usize) -> Vec<(f64, Vec<f64>)> {
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
        .collect()
}

fn orient(mut v: Vec<f64>) -> Vec<f64> {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() + 1e-12 { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn tsne_dedup(data: &[&[f64]], cfg: &TsneConfig) -> Vec<(f64, f64)> {
    let mut unique: Vec<&[f64]> = Vec::new();
    let index: Vec<usize> = data
        .iter()
        .map(|row| match unique.iter().position(|u| u == row) {
            Some(i) => i,
            None => {
                unique.push(row);
                unique.len() - 1
            }
        })
        .collect();
    let coords = if unique.len() < 4 {
        pca(&unique)
    } else {
        tsne(&unique, cfg)
    };
    index.into_iter().map(|i| coords[i]).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn affinities(data: &[&[f64]], perplexity: f64) -> Vec<f64> {
    let n = data.len();
    let target = perplexity.min((n - 1) as f64 / 3.0).max(1.0).ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let d: Vec<f64> = (0..n).map(|j| sq_dist(data[i], data[j])).collect();
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let dmin = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
        let mut row = vec![0.0; n];
        for _ in 0..100 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d[j] - dmin) * beta).exp() };
                sum += row[j];
                weighted += row[j] * (d[j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            row.iter_mut().for_each(|v| *v /= sum);
            if (entropy - target).abs() < 1e-5 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        p[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    sym
}

/// Exact t-SNE with early exaggeration and momentum.
pub fn tsne(data: &[&[f64]], cfg: &TsneConfig) -> Vec<(f64, f64)> {
    let n = data.len();
    let p = affinities(data, cfg.perplexity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    for iter in 0..cfg.iterations {
        let exaggeration = if iter < 100 { 12.0 } else { 1.0 };
        let momentum = if iter < 250 { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = if i == j {
                    0.0
                } else {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    1.0 / (1.0 + dx * dx + dy * dy)
                };
                num[i * n + j] = v;
                z += v;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i * n + j] / z).max(1e-12);
                let coef = 4.0 * (exaggeration * p[i * n + j] - q) * num[i * n + j];
                grad[0] += coef * (y[i][0] - y[j][0]);
                grad[1] += coef * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                let same = (grad[k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = if same { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 };
                gains[i][k] = gains[i][k].max(0.01);
                velocity[i][k] = momentum * velocity[i][k] - cfg.learning_rate * gains[i][k] * grad[k];
            }
        }
        for i in 0..n {
            y[i][0] += velocity[i][0];
            y[i][1] += velocity[i][1];
        }
        let cx = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        y.iter_mut().for_each(|p| {
            p[0] -= cx;
            p[1] -= cy;
        });
    }
    y.into_iter().map(|p| (p[0], p[1])).collect()
}
