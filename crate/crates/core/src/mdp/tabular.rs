use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Finite MDP with expected rewards.
///
/// Transitions are stored flat in `[s][a][s']` order, rewards in `[s][a]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    r_max: f64,
}

/// JSON document accepted by the `tabular-file` environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdpDoc {
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<f64>>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

impl TabularMdp {
    /// Validating constructor. `r_max` defaults to the largest absolute reward.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        r_max: Option<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("empty state or action set".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::InvalidMdp(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::InvalidMdp(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!("discount {discount} outside [0,1)")));
        }
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidMdp(format!(
                    "row (s={}, a={}) has a negative or non-finite entry",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidMdp(format!(
                    "row (s={}, a={}) sums to {sum}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp("non-finite reward".into()));
        }
        let observed = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        let r_max = match r_max {
            Some(bound) if bound + 1e-12 < observed => {
                return Err(Error::InvalidMdp(format!(
                    "reward magnitude {observed} exceeds r_max {bound}"
                )))
            }
            Some(bound) => bound,
            None => observed,
        };
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            r_max,
        })
    }

    pub fn from_doc(doc: &TabularMdpDoc) -> Result<Self> {
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.p.len() != ns || doc.p.iter().any(|a| a.len() != na) {
            return Err(Error::InvalidMdp("P does not have shape [n_states][n_actions][n_states]".into()));
        }
        if doc.r.len() != ns || doc.r.iter().any(|row| row.len() != na) {
            return Err(Error::InvalidMdp("r does not have shape [n_states][n_actions]".into()));
        }
        let mut transition = Vec::with_capacity(ns * na * ns);
        for per_action in &doc.p {
            for row in per_action {
                if row.len() != ns {
                    return Err(Error::InvalidMdp("P row length differs from n_states".into()));
                }
                transition.extend_from_slice(row);
            }
        }
        let reward = doc.r.iter().flatten().copied().collect();
        Self::new(ns, na, transition, reward, doc.gamma, doc.r_max)
    }

    pub fn to_doc(&self) -> TabularMdpDoc {
        let ns = self.n_states;
        TabularMdpDoc {
            n_states: ns,
            n_actions: self.n_actions,
            p: (0..ns)
                .map(|s| (0..self.n_actions).map(|a| self.row(s, a).to_vec()).collect())
                .collect(),
            r: (0..ns)
                .map(|s| (0..self.n_actions).map(|a| self.reward(s, a)).collect())
                .collect(),
            gamma: self.discount,
            r_max: Some(self.r_max),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TabularMdpDoc = serde_json::from_str(text)?;
        Self::from_doc(&doc)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Next-state distribution `P[s][a][·]`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Propagate a state distribution one step while holding action `a`.
    pub fn push_forward(&self, dist: &[f64], a: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(s, a)) {
                *o += mass * p;
            }
        }
    }

    /// The k-persistent MDP: every step holds the chosen action for `k` base
    /// steps, accumulates the discounted reward and uses discount `γ^k`.
    ///
    /// Only state marginals under the held action are propagated; the joint
    /// state-action kernel is never built.
    pub fn persistent(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPersistence(k));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let (ns, na) = (self.n_states, self.n_actions);
        let gamma = self.discount;
        let mut transition = vec![0.0; ns * na * ns];
        let mut reward = vec![0.0; ns * na];
        let mut dist = vec![0.0; ns];
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                dist.copy_from_slice(self.row(s, a));
                let mut r = self.reward(s, a);
                let mut weight = 1.0;
                for _ in 1..k {
                    weight *= gamma;
                    r += weight * dist.iter().enumerate().map(|(s2, &m)| m * self.reward(s2, a)).sum::<f64>();
                    self.push_forward(&dist, a, &mut next);
                    std::mem::swap(&mut dist, &mut next);
                }
                let start = (s * na + a) * ns;
                transition[start..start + ns].copy_from_slice(&dist);
                reward[s * na + a] = r;
            }
        }
        let discount = gamma.powi(k as i32);
        let r_max = if gamma == 0.0 {
            self.r_max
        } else {
            self.r_max * (1.0 - discount) / (1.0 - gamma)
        };
        Ok(Self {
            n_states: ns,
            n_actions: na,
            transition,
            reward,
            discount,
            r_max,
        })
    }

    /// Random MDP with dense Dirichlet-like rows and rewards in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, discount: f64) -> Self {
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            // exponential draws give a flat Dirichlet; sparsify some rows
            let sparse = rng.gen_bool(0.3);
            let mut row: Vec<f64> = (0..n_states)
                .map(|_| {
                    if sparse && rng.gen_bool(0.5) {
                        0.0
                    } else {
                        -(1.0 - rng.gen::<f64>()).ln()
                    }
                })
                .collect();
            if row.iter().all(|&x| x == 0.0) {
                row[rng.gen_range(0..n_states)] = 1.0;
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            transition.extend(row);
        }
        let reward = (0..n_states * n_actions).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Self::new(n_states, n_actions, transition, reward, discount, Some(1.0))
            .expect("random MDP is valid by construction")
    }
}
