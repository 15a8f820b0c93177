//! Reference regressors used to separate algorithmic behaviour from
//! approximation error.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

fn key(row: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 share a key
    row.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect()
}

/// Exact lookup table: each distinct feature vector predicts the mean of its
/// targets; unseen vectors predict the global mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableDoc", into = "TableDoc")]
pub struct TableModel {
    dim: usize,
    fallback: f64,
    entries: HashMap<Vec<u64>, f64>,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    dim: usize,
    fallback: f64,
    keys: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl From<TableDoc> for TableModel {
    fn from(doc: TableDoc) -> Self {
        Self {
            dim: doc.dim,
            fallback: doc.fallback,
            entries: doc.keys.iter().map(|k| key(k)).zip(doc.values).collect(),
        }
    }
}

impl From<TableModel> for TableDoc {
    fn from(m: TableModel) -> Self {
        let mut pairs: Vec<(Vec<f64>, f64)> = m
            .entries
            .into_iter()
            .map(|(k, v)| (k.into_iter().map(f64::from_bits).collect(), v))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let (keys, values) = pairs.into_iter().unzip();
        Self {
            dim: m.dim,
            fallback: m.fallback,
            keys,
            values,
        }
    }
}

impl TableModel {
    pub fn fit(x: &FeatureMatrix, y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("cannot fit a table on zero samples".into()));
        }
        if x.n_rows() != y.len() {
            return Err(Error::Dimension(format!("{} rows but {} targets", x.n_rows(), y.len())));
        }
        let mut sums: HashMap<Vec<u64>, (f64, usize)> = HashMap::new();
        for (row, &target) in x.rows().zip(y) {
            let e = sums.entry(key(row)).or_insert((0.0, 0));
            e.0 += target;
            e.1 += 1;
        }
        Ok(Self {
            dim: x.dim(),
            fallback: y.iter().sum::<f64>() / y.len() as f64,
            entries: sums.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.entries.get(&key(x)).copied().unwrap_or(self.fallback)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Brute-force k-nearest-neighbour regressor (Euclidean, uniform weights;
/// equal distances resolved by training order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    x: FeatureMatrix,
    y: Vec<f64>,
}

impl KnnModel {
    pub fn fit(k: usize, x: &FeatureMatrix, y: &[f64]) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k-NN needs k >= 1".into()));
        }
        if y.is_empty() {
            return Err(Error::Empty("cannot fit k-NN on zero samples".into()));
        }
        if x.n_rows() != y.len() {
            return Err(Error::Dimension(format!("{} rows but {} targets", x.n_rows(), y.len())));
        }
        Ok(Self {
            k,
            x: x.clone(),
            y: y.to_vec(),
        })
    }

    pub fn predict(&self, q: &[f64]) -> f64 {
        let mut dists: Vec<(f64, usize)> = self
            .x
            .rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dists.len());
        dists.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        dists[..k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_averages_duplicates() {
        let x = FeatureMatrix::new(1, vec![0.0, 1.0, 0.0, -0.0]).unwrap();
        let t = TableModel::fit(&x, &[1.0, 5.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.predict(&[0.0]), 2.0);
        assert_eq!(t.predict(&[1.0]), 5.0);
        assert_eq!(t.predict(&[7.0]), 11.0 / 4.0);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<TableModel>(&json).unwrap(), t);
    }

    #[test]
    fn knn_averages_neighbours() {
        let x = FeatureMatrix::new(1, vec![0.0, 1.0, 2.0, 10.0]).unwrap();
        let m = KnnModel::fit(2, &x, &[0.0, 2.0, 4.0, 100.0]).unwrap();
        assert_eq!(m.predict(&[0.4]), 1.0);
        assert_eq!(m.predict(&[9.0]), 52.0);
        assert!(KnnModel::fit(0, &x, &[0.0; 4]).is_err());
    }
}
