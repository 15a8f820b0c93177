//! Persistence selection by the index `B_k = Ĵ_k − ‖Q̃_k − Q_k‖_{1,D} / (1 − γ^k)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{fmt_f64, Dataset};
use crate::pfqi::PersistenceRun;
use crate::qfunction::QFunction;

/// `(1/m) Σ_i max_a Q(S_0^i, a)`.
pub fn estimate_return<Q: QFunction + ?Sized, S: AsRef<[f64]>>(q: &Q, initial_states: &[S]) -> Result<f64> {
    if initial_states.is_empty() {
        return Err(Error::Empty("no initial states".into()));
    }
    let total: f64 = initial_states.iter().map(|s| q.max_value(s.as_ref())).sum();
    Ok(total / initial_states.len() as f64)
}

/// Mean of `|Q̃(S, A) − Q(S, A)|` over every transition in the dataset.
pub fn empirical_bellman_residual<Q: QFunction + ?Sized, T: QFunction + ?Sized>(
    q: &Q,
    q_tilde: &T,
    dataset: &Dataset,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset has no transitions".into()));
    }
    let total: f64 = dataset
        .transitions()
        .map(|t| (q_tilde.value(&t.state, t.action) - q.value(&t.state, t.action)).abs())
        .sum();
    Ok(total / dataset.n_samples() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub k: usize,
    pub j_hat: f64,
    pub residual: f64,
    pub index: f64,
}

impl SelectionEntry {
    pub fn new(k: usize, j_hat: f64, residual: f64, gamma: f64) -> Self {
        Self {
            k,
            j_hat,
            residual,
            index: j_hat - residual / (1.0 - gamma.powi(k as i32)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub entries: Vec<SelectionEntry>,
    pub chosen: usize,
}

impl SelectionReport {
    /// Entries sorted by `k`; the largest index wins, smaller `k` on ties.
    pub fn from_entries(mut entries: Vec<SelectionEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("no candidate persistences".into()));
        }
        entries.sort_by_key(|e| e.k);
        let mut best = &entries[0];
        for e in &entries[1..] {
            if e.index > best.index {
                best = e;
            }
        }
        let chosen = best.k;
        Ok(Self { entries, chosen })
    }

    pub fn entry(&self, k: usize) -> Option<&SelectionEntry> {
        self.entries.iter().find(|e| e.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,j_hat,residual,index,chosen\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.k,
                fmt_f64(e.j_hat),
                fmt_f64(e.residual),
                fmt_f64(e.index),
                u8::from(e.k == self.chosen)
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Build a selection entry from a final iterate and its continuation.
pub fn selection_entry<Q: QFunction + ?Sized, T: QFunction + ?Sized>(
    k: usize,
    q: &Q,
    q_tilde: &T,
    dataset: &Dataset,
    gamma: f64,
) -> Result<SelectionEntry> {
    let heads = dataset.initial_states();
    let j_hat = estimate_return(q, &heads)?;
    let residual = empirical_bellman_residual(q, q_tilde, dataset)?;
    Ok(SelectionEntry::new(k, j_hat, residual, gamma))
}

/// Pick the persistence with the largest index among runs trained on `dataset`.
pub fn select_persistence(runs: &BTreeMap<usize, PersistenceRun>, dataset: &Dataset, gamma: f64) -> Result<SelectionReport> {
    let hash = dataset.fingerprint();
    let mut entries = Vec::with_capacity(runs.len());
    for (&k, run) in runs {
        if run.dataset_hash != hash {
            return Err(Error::DatasetMismatch(format!("run for k={k} was trained on another dataset")));
        }
        let cont = run
            .continuation_q
            .as_ref()
            .ok_or_else(|| Error::Missing(format!("continuation Q for k={k}")))?;
        entries.push(selection_entry(k, &run.final_q, cont, dataset, gamma)?);
    }
    SelectionReport::from_entries(entries)
}

/// `max_k evals[k] − evals[chosen]`.
pub fn performance_loss(evals: &BTreeMap<usize, f64>, chosen: usize) -> Result<f64> {
    let picked = evals
        .get(&chosen)
        .ok_or_else(|| Error::Missing(format!("evaluation for k={chosen}")))?;
    let best = evals.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(best - picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{counterexample_mdp, solve_q_persistent, PersistentMethod, SolveMode, TabularQ, S_MINUS};

    #[test]
    fn return_estimates() {
        let q = TabularQ::filled(3, 2, 1.5);
        assert_eq!(estimate_return(&q, &[vec![0.0], vec![2.0]]).unwrap(), 1.5);
        let q = TabularQ::from_values(2, 2, vec![3.0, 1.0, 0.0, 5.0]).unwrap();
        assert_eq!(estimate_return(&q, &[vec![0.0], vec![1.0]]).unwrap(), 4.0);
        assert!(estimate_return(&q, &Vec::<Vec<f64>>::new()).is_err());
    }

    #[test]
    fn counterexample_return_at_k2() {
        let (r, g) = (1.0, 0.9);
        let m = counterexample_mdp(r, g);
        let q2 = solve_q_persistent(&m, 2, SolveMode::Optimal, 1e-12, PersistentMethod::Explicit).unwrap();
        let j = estimate_return(&q2, &[vec![S_MINUS as f64]]).unwrap();
        assert!((j + g * r / (1.0 - g)).abs() < 1e-8);
    }

    #[test]
    fn index_identity_and_ties() {
        let e = SelectionEntry::new(2, 10.0, 0.19, 0.9);
        assert_eq!(e.index, 10.0 - 0.19 / (1.0 - 0.81));
        let r = SelectionReport::from_entries(vec![
            SelectionEntry::new(4, 1.0, 0.0, 0.9),
            SelectionEntry::new(1, 1.0, 0.0, 0.9),
            SelectionEntry::new(2, 0.5, 0.0, 0.9),
        ])
        .unwrap();
        assert_eq!(r.chosen, 1);
        assert_eq!(r.entries[0].k, 1);
        let single = SelectionReport::from_entries(vec![SelectionEntry::new(8, -3.0, 9.0, 0.9)]).unwrap();
        assert_eq!(single.chosen, 8);
        assert!(r.to_csv().starts_with("k,j_hat,residual,index,chosen\n1,"));
    }

    #[test]
    fn loss_is_gap_to_best() {
        let evals = BTreeMap::from([(1, 170.0), (4, 240.0)]);
        assert_eq!(performance_loss(&evals, 1).unwrap(), 70.0);
        assert_eq!(performance_loss(&evals, 4).unwrap(), 0.0);
        assert!(performance_loss(&evals, 2).is_err());
    }
}
