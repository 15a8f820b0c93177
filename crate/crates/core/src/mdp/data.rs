use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One base-MDP (or persistent-MDP) transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Environment-absorbing termination; horizon truncation is `false`.
    pub terminal: bool,
}

/// Chained transitions of a single episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        for (t, pair) in transitions.windows(2).enumerate() {
            if pair[0].next_state != pair[1].state {
                return Err(Error::Format(format!(
                    "transition {t} does not chain into transition {}",
                    t + 1
                )));
            }
        }
        if let Some(t) = transitions.iter().rev().skip(1).position(|tr| tr.terminal) {
            return Err(Error::Format(format!(
                "terminal transition at position {} is not the last one",
                transitions.len() - 2 - t
            )));
        }
        Ok(Self { transitions })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn initial_state(&self) -> Option<&[f64]> {
        self.transitions.first().map(|t| t.state.as_slice())
    }

    pub fn actions(&self) -> Vec<usize> {
        self.transitions.iter().map(|t| t.action).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    /// `Σ_t γ^t R_t`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut weight = 1.0;
        let mut total = 0.0;
        for t in &self.transitions {
            total += weight * t.reward;
            weight *= gamma;
        }
        total
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    pub fn ends_terminal(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminal)
    }
}

/// How a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub env_name: String,
    pub sampling_persistence: usize,
    pub collected_in_persistent_env: bool,
    pub seed: u64,
    pub n_samples: usize,
    pub n_trajectories: usize,
    pub discount: f64,
    pub state_dim: usize,
    pub n_actions: usize,
    pub action_set: Vec<Vec<f64>>,
}

/// Immutable batch of trajectories together with its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    manifest: DatasetManifest,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, manifest: DatasetManifest) -> Result<Self> {
        let total: usize = trajectories.iter().map(Trajectory::len).sum();
        if total != manifest.n_samples {
            return Err(Error::Format(format!(
                "manifest records {} samples but trajectories hold {total}",
                manifest.n_samples
            )));
        }
        if trajectories.len() != manifest.n_trajectories {
            return Err(Error::Format(format!(
                "manifest records {} trajectories but {} are present",
                manifest.n_trajectories,
                trajectories.len()
            )));
        }
        for tr in trajectories.iter().flat_map(|t| t.transitions()) {
            if tr.action >= manifest.n_actions {
                return Err(Error::ActionOutOfRange {
                    action: tr.action,
                    n_actions: manifest.n_actions,
                });
            }
            if tr.state.len() != manifest.state_dim || tr.next_state.len() != manifest.state_dim {
                return Err(Error::Format(format!(
                    "state of dimension {} in a dataset of dimension {}",
                    tr.state.len(),
                    manifest.state_dim
                )));
            }
        }
        Ok(Self {
            trajectories,
            manifest,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn n_samples(&self) -> usize {
        self.manifest.n_samples
    }

    pub fn n_actions(&self) -> usize {
        self.manifest.n_actions
    }

    pub fn state_dim(&self) -> usize {
        self.manifest.state_dim
    }

    pub fn discount(&self) -> f64 {
        self.manifest.discount
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.n_samples == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flat_map(|t| t.transitions().iter())
    }

    /// Heads of all non-empty trajectories.
    pub fn initial_states(&self) -> Vec<&[f64]> {
        self.trajectories.iter().filter_map(Trajectory::initial_state).collect()
    }

    fn header(&self) -> Vec<String> {
        let d = self.manifest.state_dim;
        let mut h = vec!["traj_id".to_string(), "t".to_string()];
        h.extend((0..d).map(|i| format!("state_{i}")));
        h.push("action".into());
        h.push("reward".into());
        h.extend((0..d).map(|i| format!("next_state_{i}")));
        h.push("terminal".into());
        h
    }

    /// CSV rendering, floats with 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for (id, traj) in self.trajectories.iter().enumerate() {
            for (t, tr) in traj.transitions().iter().enumerate() {
                let _ = write!(out, "{id},{t}");
                for x in &tr.state {
                    let _ = write!(out, ",{}", fmt_f64(*x));
                }
                let _ = write!(out, ",{},{}", tr.action, fmt_f64(tr.reward));
                for x in &tr.next_state {
                    let _ = write!(out, ",{}", fmt_f64(*x));
                }
                let _ = writeln!(out, ",{}", u8::from(tr.terminal));
            }
        }
        out
    }

    /// Content hash of the CSV rendering and manifest.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_csv_string().as_bytes());
        h.update(serde_json::to_vec(&self.manifest).unwrap_or_default());
        hex_digest(&h.finalize())
    }

    /// Write `<dir>/<stem>.csv` and its `<stem>.json` manifest sidecar.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        fs::write(&csv_path, self.to_csv_string())?;
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.manifest)? + "\n",
        )?;
        Ok(csv_path)
    }

    /// Read a CSV written by [`Dataset::write`]; the manifest is the sibling
    /// file with extension `.json`.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(&fs::read_to_string(csv_path.with_extension("json"))?)?;
        let d = manifest.state_dim;
        let mut reader = csv::Reader::from_path(csv_path)?;
        let expected_cols = 2 + 2 * d + 3;
        let mut trajectories: Vec<Vec<Transition>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != expected_cols {
                return Err(Error::Format(format!(
                    "row {line} has {} columns, expected {expected_cols}",
                    record.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {line}, column {i}: {e}")))
            };
            let int = |i: usize| -> Result<usize> {
                record[i]
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("row {line}, column {i}: {e}")))
            };
            let traj_id = int(0)?;
            let t = int(1)?;
            let state = (0..d).map(|i| num(2 + i)).collect::<Result<Vec<_>>>()?;
            let action = int(2 + d)?;
            let reward = num(3 + d)?;
            let next_state = (0..d).map(|i| num(4 + d + i)).collect::<Result<Vec<_>>>()?;
            let terminal = match &record[4 + 2 * d] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Format(format!("row {line}: terminal flag `{other}`"))),
            };
            if traj_id == trajectories.len() {
                trajectories.push(Vec::new());
            }
            if traj_id + 1 != trajectories.len() || t != trajectories[traj_id].len() {
                return Err(Error::Format(format!("row {line}: rows out of order")));
            }
            trajectories[traj_id].push(Transition {
                state,
                action,
                next_state,
                reward,
                terminal,
            });
        }
        let trajectories = trajectories
            .into_iter()
            .map(Trajectory::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(trajectories, manifest)
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(s: f64, a: usize, ns: f64, r: f64, terminal: bool) -> Transition {
        Transition {
            state: vec![s, -s],
            action: a,
            next_state: vec![ns, -ns],
            reward: r,
            terminal,
        }
    }

    fn manifest(n_samples: usize, n_trajectories: usize) -> DatasetManifest {
        DatasetManifest {
            env_name: "test".into(),
            sampling_persistence: 1,
            collected_in_persistent_env: false,
            seed: 1,
            n_samples,
            n_trajectories,
            discount: 0.9,
            state_dim: 2,
            n_actions: 2,
            action_set: vec![vec![0.0], vec![1.0]],
        }
    }

    #[test]
    fn trajectory_must_chain() {
        assert!(Trajectory::new(vec![tr(0.0, 0, 1.0, 0.0, false), tr(2.0, 0, 3.0, 0.0, false)]).is_err());
        assert!(Trajectory::new(vec![tr(0.0, 0, 1.0, 0.0, true), tr(1.0, 0, 3.0, 0.0, false)]).is_err());
        let ok = Trajectory::new(vec![tr(0.0, 0, 1.0, 1.0, false), tr(1.0, 1, 2.0, 2.0, true)]).unwrap();
        assert_eq!(ok.initial_state(), Some(&[0.0, -0.0][..]));
        assert!((ok.discounted_return(0.5) - 2.0).abs() < 1e-15);
        assert!(ok.ends_terminal());
    }

    #[test]
    fn manifest_count_checked() {
        let t = Trajectory::new(vec![tr(0.0, 0, 1.0, 0.0, false)]).unwrap();
        assert!(Dataset::new(vec![t.clone()], manifest(2, 1)).is_err());
        assert!(Dataset::new(vec![t], manifest(1, 1)).is_ok());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let t1 = Trajectory::new(vec![
            tr(0.1, 0, 1.0 / 3.0, -0.7, false),
            tr(1.0 / 3.0, 1, std::f64::consts::PI, 1e-300, true),
        ])
        .unwrap();
        let t2 = Trajectory::new(vec![tr(5.0, 1, 6.0, 2.0, false)]).unwrap();
        let ds = Dataset::new(vec![t1, t2], manifest(3, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = ds.write(dir.path(), "data").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("traj_id,t,state_0,state_1,action,reward,next_state_0,next_state_1,terminal\n"));
        let back = Dataset::read(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.fingerprint(), ds.fingerprint());
    }
}
