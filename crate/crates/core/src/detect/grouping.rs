//! Partitions of covariates and the thresholding rule that produces them.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detect::misalign::misalignment_matrix;
use crate::detect::CoefficientScores;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A partition of `{0, .., p-1}` into nonempty disjoint blocks.
///
/// Always kept canonical: members sorted within a block and blocks sorted by
/// their smallest member, so structural equality is partition equality.
/// Serialized as lists of 1-based covariate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupingStructure {
    blocks: Vec<Vec<usize>>,
    p: usize,
}

impl GroupingStructure {
    /// Builds a partition from 0-based blocks, validating coverage and disjointness.
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        if blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::InvalidInput("partition contains an empty group".into()));
        }
        let p: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; p];
        for &j in blocks.iter().flatten() {
            if j >= p || seen[j] {
                return Err(Error::InvalidInput(format!(
                    "partition does not cover 1..={p} exactly once (covariate {})",
                    j + 1
                )));
            }
            seen[j] = true;
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks, p })
    }

    /// Builds a partition from 1-based blocks.
    pub fn from_one_based(blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.iter().flatten().any(|&j| j == 0) {
            return Err(Error::InvalidInput("covariate indices are 1-based".into()));
        }
        Self::new(blocks.into_iter().map(|b| b.into_iter().map(|j| j - 1).collect()).collect())
    }

    /// Groups covariates sharing a label.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut by_label: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (j, &l) in labels.iter().enumerate() {
            by_label.entry(l).or_default().push(j);
        }
        Self::new(by_label.into_values().collect())
    }

    pub fn singletons(p: usize) -> Self {
        Self { blocks: (0..p).map(|j| vec![j]).collect(), p }
    }

    pub fn single_group(p: usize) -> Self {
        Self { blocks: vec![(0..p).collect()], p }
    }

    pub fn n_groups(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Group index of each covariate.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.p];
        for (k, b) in self.blocks.iter().enumerate() {
            for &j in b {
                labels[j] = k;
            }
        }
        labels
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.iter().map(|j| j + 1).collect()).collect()
    }
}

impl TryFrom<Vec<Vec<usize>>> for GroupingStructure {
    type Error = Error;

    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_one_based(blocks)
    }
}

impl From<GroupingStructure> for Vec<Vec<usize>> {
    fn from(g: GroupingStructure) -> Self {
        g.to_one_based()
    }
}

impl fmt::Display for GroupingStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .to_one_based()
            .iter()
            .map(|b| {
                let s: Vec<String> = b.iter().map(usize::to_string).collect();
                format!("{{{}}}", s.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so the result does not depend on edge order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Average-linkage agglomeration of `members`, merging while the closest
/// pair of clusters has average distance `<= cutoff`.
fn average_linkage<T: Scalar>(dist: &DMatrix<T>, members: &[usize], cutoff: T) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = members.iter().map(|&j| vec![j]).collect();
    loop {
        let mut best: Option<(T, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = T::zero();
                for &x in &clusters[a] {
                    for &y in &clusters[b] {
                        sum += dist[(x, y)];
                    }
                }
                let avg = sum / T::from_usize_lossy(clusters[a].len() * clusters[b].len());
                if best.is_none_or(|(v, _, _)| avg < v) {
                    best = Some((avg, a, b));
                }
            }
        }
        match best {
            Some((avg, a, b)) if avg <= cutoff => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
            }
            _ => return clusters,
        }
    }
}

/// Partition induced by a symmetric distance matrix and threshold.
///
/// Connected components of the graph with edges `dist <= tilde_lambda` are
/// accepted when every within-component pair passes the threshold. Components
/// that do not are split by average-linkage agglomeration with the same cutoff.
pub fn partition_from_distances<T: Scalar>(dist: &DMatrix<T>, tilde_lambda: T) -> GroupingStructure {
    let p = dist.nrows();
    let mut uf = UnionFind::new(p);
    for i in 0..p {
        for j in i + 1..p {
            if dist[(i, j)] <= tilde_lambda {
                uf.union(i, j);
            }
        }
    }
    let mut components: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for j in 0..p {
        let root = uf.find(j);
        components.entry(root).or_default().push(j);
    }
    let mut blocks = Vec::new();
    for comp in components.into_values() {
        let all_pairs = comp
            .iter()
            .enumerate()
            .all(|(a, &i)| comp[a + 1..].iter().all(|&j| dist[(i, j)] <= tilde_lambda));
        if all_pairs {
            blocks.push(comp);
        } else {
            blocks.extend(average_linkage(dist, &comp, tilde_lambda));
        }
    }
    GroupingStructure::new(blocks).expect("components form a partition")
}

/// Groups covariates whose normalized misalignment is at most `tilde_lambda`.
pub fn threshold_grouping<T: Scalar>(
    b: &CoefficientScores<T>,
    tilde_lambda: T,
) -> Result<GroupingStructure> {
    if !(tilde_lambda >= T::zero()) {
        return Err(Error::InvalidInput("threshold must be nonnegative".into()));
    }
    let dist = misalignment_matrix(b)?;
    Ok(partition_from_distances(&dist, tilde_lambda))
}

/// Distinct partitions in first-seen order.
pub fn dedup_partitions<'a>(parts: impl IntoIterator<Item = &'a GroupingStructure>) -> Vec<GroupingStructure> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for g in parts {
        if seen.insert(g.clone()) {
            out.push(g.clone());
        }
    }
    out
}
