use std::collections::BTreeMap;

use serde::Serialize;

use super::embed::EmbeddingTable;
use super::scatter::EmbeddingScatter;

/// Distances of one conversion group's converted embeddings to the target centroids.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSimilarity {
    pub group: String,
    pub n_converted: usize,
    /// Mean distance to the group's own ground-truth centroid.
    pub intra: f64,
    /// Mean distance to the nearest other ground-truth centroid; absent with a single group.
    pub inter: Option<f64>,
}

impl GroupSimilarity {
    pub fn closer_to_own(&self) -> bool {
        self.inter.is_some_and(|inter| self.intra < inter)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimilarityStats {
    pub groups: Vec<GroupSimilarity>,
}

impl SimilarityStats {
    pub fn mean_intra(&self) -> Option<f64> {
        mean(self.groups.iter().map(|g| g.intra))
    }

    pub fn mean_inter(&self) -> Option<f64> {
        mean(self.groups.iter().filter_map(|g| g.inter))
    }

    /// Mean intra distance over mean inter distance.
    pub fn ratio(&self) -> Option<f64> {
        Some(self.mean_intra()? / self.mean_inter()?)
    }

    pub fn groups_closer_to_own(&self) -> usize {
        self.groups.iter().filter(|g| g.closer_to_own()).count()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn stats<'a>(points: impl Iterator<Item = (&'a str, bool, Vec<f64>)>) -> SimilarityStats {
    let mut truth: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    let mut converted: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for (group, is_conv, v) in points {
        if is_conv {
            converted.entry(group).or_default().push(v);
        } else {
            let e = truth.entry(group).or_insert_with(|| (vec![0.0; v.len()], 0));
            e.0.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
            e.1 += 1;
        }
    }
    let centroids: BTreeMap<&str, Vec<f64>> = truth
        .into_iter()
        .map(|(g, (sum, n))| (g, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let groups = converted
        .into_iter()
        .filter_map(|(group, vs)| {
            let own = centroids.get(group)?;
            let n = vs.len() as f64;
            let intra = vs.iter().map(|v| dist(v, own)).sum::<f64>() / n;
            let others: Vec<&Vec<f64>> = centroids.iter().filter(|(g, _)| **g != group).map(|(_, c)| c).collect();
            let inter = (!others.is_empty()).then(|| {
                vs.iter()
                    .map(|v| others.iter().map(|c| dist(v, c)).fold(f64::INFINITY, f64::min))
                    .sum::<f64>()
                    / n
            });
            Some(GroupSimilarity {
                group: group.to_owned(),
                n_converted: vs.len(),
                intra,
                inter,
            })
        })
        .collect();
    SimilarityStats { groups }
}

/// Per-group centroid distances in the table's embedding space.
/// Ground-truth rows define one centroid per group; converted rows are scored against them.
pub fn similarity_stats(table: &EmbeddingTable) -> SimilarityStats {
    stats(table.rows().iter().map(|r| (r.group.as_str(), r.converted, r.vector.clone())))
}

/// Same statistics computed on projected 2-D coordinates.
pub fn scatter_similarity_stats(scatter: &EmbeddingScatter) -> SimilarityStats {
    stats(scatter.rows().iter().map(|r| (r.group.as_str(), r.converted, vec![r.x, r.y])))
}
