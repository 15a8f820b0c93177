//! Regression back-ends for fitted Q-iteration.

mod extra_trees;
mod matrix;
mod oracle;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qfunction::QFunction;
use crate::seed;

pub use extra_trees::{ExtraTrees, ExtraTreesParams, MaxFeatures, Tree};
pub use matrix::FeatureMatrix;
pub use oracle::{KnnModel, TableModel};

/// Choice of regressor and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegressorSpec {
    ExtraTrees(ExtraTreesParams),
    /// Exact per-state lookup; meaningful for tabular state spaces.
    Table,
    Knn { k: usize },
}

impl Default for RegressorSpec {
    fn default() -> Self {
        Self::ExtraTrees(ExtraTreesParams::default())
    }
}

impl RegressorSpec {
    /// Fit one model. The extra-trees seed stored in the spec is replaced by
    /// `seed`.
    pub fn fit(&self, x: &FeatureMatrix, y: &[f64], seed: u64) -> Result<Model> {
        match self {
            Self::ExtraTrees(p) => {
                let params = ExtraTreesParams { seed, ..p.clone() };
                Ok(Model::ExtraTrees(ExtraTrees::fit(&params, x, y)?))
            }
            Self::Table => Ok(Model::Table(TableModel::fit(x, y)?)),
            Self::Knn { k } => Ok(Model::Knn(KnnModel::fit(*k, x, y)?)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ExtraTrees(p) => p.validate(),
            Self::Table => Ok(()),
            Self::Knn { k } if *k == 0 => Err(Error::Config("k-NN needs k >= 1".into())),
            Self::Knn { .. } => Ok(()),
        }
    }
}

/// A fitted single-output regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    ExtraTrees(ExtraTrees),
    Table(TableModel),
    Knn(KnnModel),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Self::ExtraTrees(m) => m.predict(x),
            Self::Table(m) => m.predict(x),
            Self::Knn(m) => m.predict(x),
        }
    }

    pub fn predict_rows(&self, rows: &[&[f64]]) -> Vec<f64> {
        match self {
            Self::ExtraTrees(m) => m.predict_rows(rows),
            _ => rows.iter().map(|r| self.predict(r)).collect(),
        }
    }
}

/// Action-value function with one regressor per action. An action without
/// a model evaluates to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedQ {
    feature_dim: usize,
    models: Vec<Option<Model>>,
}

impl FittedQ {
    /// `Q ≡ 0`.
    pub fn zero(feature_dim: usize, n_actions: usize) -> Self {
        Self {
            feature_dim,
            models: vec![None; n_actions],
        }
    }

    /// Fit one model per action on the rows labelled with that action.
    /// Action `a` uses the seed stream `derive(seed, "action", a)`.
    pub fn fit(
        spec: &RegressorSpec,
        states: &FeatureMatrix,
        actions: &[usize],
        targets: &[f64],
        n_actions: usize,
        seed: u64,
    ) -> Result<Self> {
        if states.n_rows() != actions.len() || actions.len() != targets.len() {
            return Err(Error::Dimension("states, actions and targets differ in length".into()));
        }
        if targets.is_empty() {
            return Err(Error::Empty("no training rows".into()));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::ActionOutOfRange { action: a, n_actions });
        }
        let dim = states.dim();
        let models = (0..n_actions)
            .into_par_iter()
            .map(|a| {
                let mut x = FeatureMatrix::with_capacity(dim, 0);
                let mut y = Vec::new();
                for (i, _) in actions.iter().enumerate().filter(|(_, &act)| act == a) {
                    x.push(states.row(i))?;
                    y.push(targets[i]);
                }
                if y.is_empty() {
                    Ok(None)
                } else {
                    spec.fit(&x, &y, seed::derive(seed, "action", a as u64)).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            feature_dim: dim,
            models,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn models(&self) -> &[Option<Model>] {
        &self.models
    }

    /// Prediction with an explicit unknown-action error.
    pub fn predict(&self, state: &[f64], action: usize) -> Result<f64> {
        match self.models.get(action) {
            None => Err(Error::ActionOutOfRange {
                action,
                n_actions: self.models.len(),
            }),
            Some(None) => Ok(0.0),
            Some(Some(m)) => Ok(m.predict(state)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl QFunction for FittedQ {
    fn n_actions(&self) -> usize {
        self.models.len()
    }

    fn value(&self, state: &[f64], action: usize) -> f64 {
        match &self.models[action] {
            None => 0.0,
            Some(m) => m.predict(state),
        }
    }

    fn value_rows(&self, rows: &[&[f64]], action: usize) -> Vec<f64> {
        match &self.models[action] {
            None => vec![0.0; rows.len()],
            Some(m) => m.predict_rows(rows),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_q_and_unknown_action() {
        let q = FittedQ::zero(2, 3);
        assert_eq!(q.predict(&[1.0, 2.0], 2).unwrap(), 0.0);
        assert!(matches!(q.predict(&[1.0, 2.0], 3), Err(Error::ActionOutOfRange { .. })));
    }

    #[test]
    fn per_action_fit_routes_rows() {
        let x = FeatureMatrix::new(1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let q = FittedQ::fit(&RegressorSpec::Table, &x, &[0, 0, 1, 1], &[1.0, 2.0, 3.0, 4.0], 3, 0).unwrap();
        assert_eq!(q.value(&[1.0], 0), 2.0);
        assert_eq!(q.value(&[0.0], 1), 3.0);
        assert_eq!(q.value(&[0.0], 2), 0.0);
        assert!(FittedQ::fit(&RegressorSpec::Table, &x, &[0, 0, 1, 5], &[0.0; 4], 3, 0).is_err());
    }

    #[test]
    fn model_json_roundtrip_preserves_predictions() {
        let x = FeatureMatrix::new(2, (0..40).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let actions: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let spec = RegressorSpec::ExtraTrees(ExtraTreesParams {
            n_estimators: 7,
            ..Default::default()
        });
        let q = FittedQ::fit(&spec, &x, &actions, &y, 2, 9).unwrap();
        let back = FittedQ::from_json(&q.to_json().unwrap()).unwrap();
        for i in 0..20 {
            for a in 0..2 {
                assert_eq!(back.value(x.row(i), a), q.value(x.row(i), a));
            }
        }
    }
}
