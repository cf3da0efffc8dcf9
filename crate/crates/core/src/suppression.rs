//! Niche suppression for the combined parent + offspring pool.
//!
//! Genomes are compared with `sqrt(hamming)`, clustered agglomeratively down to
//! the survivor count, and in every cluster with more than three members the
//! weakest member's fitness is scaled by `10^-2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Genome;

/// Members whose cluster has more than this many individuals are eligible.
pub const CROWDING_THRESHOLD: usize = 3;
/// Factor applied to the weakest member of a crowded cluster.
pub const SUPPRESSION_FACTOR: f64 = 1e-2;
/// Linkage values closer than this are treated as equal when choosing the next merge.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

/// `sqrt` of the number of differing bits.
pub fn hamming_distance(a: &Genome, b: &Genome) -> Result<f64> {
    Ok((a.differing_bits(b)? as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(size: usize, mut distance: impl FnMut(usize, usize) -> Result<f64>) -> Result<Self> {
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            for j in i + 1..size {
                let d = distance(i, j)?;
                values[i * size + j] = d;
                values[j * size + i] = d;
            }
        }
        Ok(Self { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            size: self.size,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub fn build_distance_matrix(genomes: &[Genome]) -> Result<DistanceMatrix> {
    if genomes.len() < 2 {
        return Err(Error::state("distance matrix needs at least 2 genomes"));
    }
    DistanceMatrix::from_fn(genomes.len(), |i, j| hamming_distance(&genomes[i], &genomes[j]))
}

/// Disjoint clusters of indices into the clustered population; each member
/// list is ascending and clusters are ordered by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<usize>>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Picks the pair to merge: the lexicographically first `(i, j)`, `i < j`,
/// whose linkage is within [`TIE_EPSILON`] of the minimum.
pub(crate) fn nearest_pair(q: usize, linkage: impl Fn(usize, usize) -> f64) -> (usize, usize) {
    let mut min = f64::INFINITY;
    for i in 0..q {
        for j in i + 1..q {
            min = min.min(linkage(i, j));
        }
    }
    for i in 0..q {
        for j in i + 1..q {
            if linkage(i, j) <= min + TIE_EPSILON {
                return (i, j);
            }
        }
    }
    unreachable!("nearest_pair needs at least two clusters")
}

/// Greedy agglomerative clustering until `target` clusters remain.
///
/// Cluster-to-cluster distances are kept in a working matrix and updated with
/// the Lance-Williams recurrence after each merge. The merged cluster takes
/// the lower slot and later slots shift down, so slot order always follows
/// the smallest member index.
pub fn agglomerate(matrix: &DistanceMatrix, target: usize, linkage: Linkage) -> Result<ClusterSet> {
    let size = matrix.size();
    if target == 0 || target > size {
        return Err(Error::config(format!(
            "cannot form {target} clusters from {size} individuals"
        )));
    }
    let mut clusters: Vec<Vec<usize>> = (0..size).map(|i| vec![i]).collect();
    let mut dist: Vec<Vec<f64>> = (0..size).map(|i| (0..size).map(|j| matrix.get(i, j)).collect()).collect();

    while clusters.len() > target {
        let (a, b) = nearest_pair(clusters.len(), |i, j| dist[i][j]);
        let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
        #[allow(clippy::needless_range_loop)]
        for k in 0..clusters.len() {
            if k == a || k == b {
                continue;
            }
            let (da, db) = (dist[a][k], dist[b][k]);
            let merged = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => (na * da + nb * db) / (na + nb),
            };
            dist[a][k] = merged;
            dist[k][a] = merged;
        }
        let absorbed = clusters.remove(b);
        clusters[a].extend(absorbed);
        clusters[a].sort_unstable();
        dist.remove(b);
        for row in &mut dist {
            row.remove(b);
        }
    }
    Ok(ClusterSet { clusters })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suppression {
    pub adjusted: Vec<f64>,
    /// Indices whose fitness was scaled, ascending.
    pub suppressed: Vec<usize>,
}

/// Scales the lowest raw fitness (ties to the lowest index) of every cluster
/// larger than [`CROWDING_THRESHOLD`] by [`SUPPRESSION_FACTOR`].
pub fn suppress(clusters: &ClusterSet, raw: &[f64]) -> Result<Suppression> {
    let mut seen = vec![false; raw.len()];
    for &i in clusters.clusters.iter().flatten() {
        if i >= raw.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::state(format!("cluster member {i} is out of range or repeated")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::state("clusters do not cover every individual"));
    }

    let mut adjusted = raw.to_vec();
    let mut suppressed = Vec::new();
    for members in &clusters.clusters {
        if members.len() <= CROWDING_THRESHOLD {
            continue;
        }
        let weakest = *members
            .iter()
            .min_by(|&&x, &&y| raw[x].total_cmp(&raw[y]).then(x.cmp(&y)))
            .unwrap();
        adjusted[weakest] = raw[weakest] * SUPPRESSION_FACTOR;
        suppressed.push(weakest);
    }
    suppressed.sort_unstable();
    Ok(Suppression { adjusted, suppressed })
}

/// Distance matrix, clustering into `target` groups, and suppression in one call.
pub fn suppress_population(genomes: &[Genome], raw: &[f64], target: usize, linkage: Linkage) -> Result<Suppression> {
    if genomes.len() != raw.len() {
        return Err(Error::state("one fitness value is needed per genome"));
    }
    let matrix = build_distance_matrix(genomes)?;
    let clusters = agglomerate(&matrix, target, linkage)?;
    suppress(&clusters, raw)
}
