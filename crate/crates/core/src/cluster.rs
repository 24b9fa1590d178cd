//! Ward minimum-variance agglomerative clustering.
//!
//! Distances are Euclidean and the Lance–Williams recurrence is run on their
//! squares, so merge heights match R's `ward.D2`. Cluster ids follow the
//! scipy convention: leaves are `0..n`, the k-th merge creates id `n + k`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, features: Vec<Vec<f64>>, feature_names: Vec<String>) -> Result<Self> {
        if ids.len() != features.len() {
            return Err(Error::dims("feature rows", ids.len(), features.len()));
        }
        if features.len() < 2 {
            return Err(Error::invalid("clustering needs at least two rows"));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::dims("feature columns", feature_names.len(), row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {i} ({})", ids[i])));
            }
        }
        Ok(FeatureTable {
            ids,
            features,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Center each column and divide by its sample SD; constant columns
    /// become zero.
    pub fn zscored(&self) -> Self {
        let n = self.len() as f64;
        let d = self.feature_names.len();
        let mut out = self.clone();
        for j in 0..d {
            let m = self.features.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (self.features.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            for row in &mut out.features {
                row[j] = if sd > 0.0 { (row[j] - m) / sd } else { 0.0 };
            }
        }
        out
    }

    /// CSV with an id column followed by numeric features.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut features = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            ids.push(rec.get(0).unwrap_or("").to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("cannot parse feature {s:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            features.push(row);
        }
        FeatureTable::new(ids, features, names)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaf indices under cluster `id`, sorted.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < self.n {
                out.push(c);
            } else {
                let m = &self.merges[c - self.n];
                stack.push(m.a);
                stack.push(m.b);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn to_newick(&self, ids: &[String]) -> String {
        fn height(d: &Dendrogram, c: usize) -> f64 {
            if c < d.n {
                0.0
            } else {
                d.merges[c - d.n].height
            }
        }
        fn node(d: &Dendrogram, c: usize, ids: &[String], out: &mut String) {
            if c < d.n {
                out.push_str(ids.get(c).map(String::as_str).unwrap_or("?"));
                return;
            }
            let m = &d.merges[c - d.n];
            out.push('(');
            for (k, child) in [m.a, m.b].into_iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                node(d, child, ids, out);
                out.push_str(&format!(":{}", m.height - height(d, child)));
            }
            out.push(')');
        }
        let mut out = String::new();
        if self.n == 1 {
            node(self, 0, ids, &mut out);
        } else {
            node(self, self.n + self.merges.len() - 1, ids, &mut out);
        }
        out.push(';');
        out
    }
}

/// Ward agglomeration; ties go to the pair with the lowest cluster ids.
pub fn ward_cluster(table: &FeatureTable) -> Result<Dendrogram> {
    let n = table.len();
    if n < 2 {
        return Err(Error::invalid("clustering needs at least two rows"));
    }
    if table.features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering features".into()));
    }
    // slot-indexed squared distances; slots hold the current cluster ids
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v: f64 = table.features[i]
                .iter()
                .zip(&table.features[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    let mut active: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            let Some((id_i, _)) = active[i] else { continue };
            for j in i + 1..n {
                let Some((id_j, _)) = active[j] else { continue };
                let (lo, hi) = (id_i.min(id_j), id_i.max(id_j));
                let v = d2[i * n + j];
                let better = match best {
                    None => true,
                    Some((bv, _, _, blo, bhi)) => v < bv || (v == bv && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((v, i, j, lo, hi));
                }
            }
        }
        let (v, i, j, lo, hi) = best.expect("at least two active clusters");
        let (ni, nj) = (active[i].unwrap().1, active[j].unwrap().1);
        for l in 0..n {
            if l == i || l == j {
                continue;
            }
            let Some((_, nl)) = active[l] else { continue };
            let (ni, nj, nl) = (ni as f64, nj as f64, nl as f64);
            let upd = ((ni + nl) * d2[i * n + l] + (nj + nl) * d2[j * n + l] - nl * v) / (ni + nj + nl);
            d2[i * n + l] = upd;
            d2[l * n + i] = upd;
        }
        active[i] = Some((n + step, ni + nj));
        active[j] = None;
        merges.push(Merge {
            a: lo,
            b: hi,
            height: v.max(0.0).sqrt(),
            size: ni + nj,
        });
    }
    Ok(Dendrogram { n, merges })
}

/// Labels after the first `n − k` merges, numbered by smallest member.
pub fn cut_tree(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    let mut owner: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for m in &dendrogram.merges[..n - k] {
        let mut merged = std::mem::take(&mut members[m.a]);
        merged.extend(std::mem::take(&mut members[m.b]));
        members.push(merged);
    }
    let mut clusters: Vec<Vec<usize>> = members.into_iter().filter(|m| !m.is_empty()).collect();
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    for (label, c) in clusters.iter().enumerate() {
        for &i in c {
            owner[i] = label;
        }
    }
    Ok(owner)
}
