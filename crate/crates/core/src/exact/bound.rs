use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{apply_expectation, apply_persistent, solve_q, solve_q_persistent, PersistentMethod, SolveMode, TabularQ};
use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

const SOLVER_TOL: f64 = 1e-12;

/// Both sides of the persistence performance-loss bound for one `(π, ρ, k, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub p: f64,
    /// `‖Q^π − Q^π_k‖_{p,ρ}`.
    pub lhs: f64,
    /// `γ(1−γ^{k−1}) / ((1−γ)(1−γ^k))`.
    pub coefficient: f64,
    /// `‖d^π_{Q_k}‖_{p,η}`.
    pub dissimilarity_norm: f64,
    pub rhs: f64,
    /// `η^{ρ,π}_k[s][a]`; all zeros for `k = 1`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta_weights: Vec<Vec<f64>>,
}

impl BoundReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }

    /// JSON with or without the η table.
    pub fn to_json(&self, include_eta: bool) -> Result<String> {
        if include_eta {
            Ok(serde_json::to_string_pretty(self)?)
        } else {
            let mut slim = self.clone();
            slim.eta_weights.clear();
            Ok(serde_json::to_string_pretty(&slim)?)
        }
    }
}

/// `γ(1−γ^{k−1}) / ((1−γ)(1−γ^k))`.
pub fn bound_coefficient(gamma: f64, k: usize) -> f64 {
    if k <= 1 || gamma == 0.0 {
        return 0.0;
    }
    let gk = gamma.powi(k as i32);
    gamma * (1.0 - gamma.powi(k as i32 - 1)) / ((1.0 - gamma) * (1.0 - gk))
}

/// State-action kernel `P^π[(s,a), (s',a')] = P(s'|s,a) π(a'|s')`.
fn joint_kernel(m: &TabularMdp, pi: &TabularPolicy) -> DMatrix<f64> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let n = ns * na;
    DMatrix::from_fn(n, n, |row, col| {
        let (s, a) = (row / na, row % na);
        let (s2, a2) = (col / na, col % na);
        m.prob(s, a, s2) * pi.prob(s2, a2)
    })
}

fn validate_rho(rho: &[f64], n: usize) -> Result<()> {
    if rho.len() != n {
        return Err(Error::InvalidDistribution(format!("ρ has {} entries, expected {n}", rho.len())));
    }
    if rho.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidDistribution("ρ has a negative entry".into()));
    }
    let sum: f64 = rho.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDistribution(format!("ρ sums to {sum}")));
    }
    Ok(())
}

/// Row vector times matrix: `x M`.
fn left_mul(x: &DVector<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    m.tr_mul(x)
}

/// Solve `x (I − c·K) = b` for the row vector `x`.
fn left_neumann(b: &DVector<f64>, kernel: &DMatrix<f64>, c: f64) -> Result<DVector<f64>> {
    let n = kernel.nrows();
    let a = DMatrix::<f64>::identity(n, n) - kernel * c;
    a.transpose()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::InvalidMdp("singular Neumann system".into()))
}

/// Closed-form `η^{ρ,π}_k`: the normalized discounted visitation
/// `Σ_{i≥1, i mod k ≠ 0} γ^i ρ (P^π)^{i−1}`, computed as the full series
/// `γ ρ (I − γP^π)^{-1}` minus the k-step subseries
/// `γ^k ρ (P^π)^{k−1} (I − γ^k (P^π)^k)^{-1}`.
fn eta_closed_form(kernel: &DMatrix<f64>, rho: &DVector<f64>, gamma: f64, k: usize) -> Result<DVector<f64>> {
    let full = left_neumann(rho, kernel, gamma)? * gamma;
    let mut y = rho.clone();
    for _ in 0..k - 1 {
        y = left_mul(&y, kernel);
    }
    let kernel_k = kernel.pow((k - 1) as u32) * kernel;
    let gk = gamma.powi(k as i32);
    let sub = left_neumann(&y, &kernel_k, gk)? * gk;
    let norm = 1.0 / bound_coefficient(gamma, k);
    Ok((full - sub).map(|x| (x * norm).max(0.0)))
}

/// Truncated-sum `η^{ρ,π}_k` over `i = 1..=n_terms`, with the tail bound
/// `γ^{N}/(1−γ)` on the unnormalized mass that was dropped (scaled by the
/// normalization constant).
pub fn eta_truncated(
    m: &TabularMdp,
    pi: &TabularPolicy,
    rho: &[f64],
    k: usize,
    n_terms: usize,
) -> Result<(Vec<f64>, f64)> {
    if k < 2 {
        return Err(Error::InvalidPersistence(k));
    }
    let n = m.n_states() * m.n_actions();
    validate_rho(rho, n)?;
    let gamma = m.discount();
    let kernel = joint_kernel(m, pi);
    let mut acc = DVector::<f64>::zeros(n);
    let mut pow = DVector::from_column_slice(rho);
    let mut weight = gamma;
    for i in 1..=n_terms {
        if i % k != 0 {
            acc += &pow * weight;
        }
        pow = left_mul(&pow, &kernel);
        weight *= gamma;
    }
    let norm = 1.0 / bound_coefficient(gamma, k);
    let tail = gamma.powi(n_terms as i32) / (1.0 - gamma) * norm;
    Ok(((acc * norm).iter().copied().collect(), tail))
}

/// Evaluate both sides of the performance-loss bound
/// `‖Q^π − Q^π_k‖_{p,ρ} ≤ coefficient · ‖d^π_{Q_k}‖_{p,η}` exactly.
///
/// `rho` is a distribution over state-action pairs in `[s][a]` order;
/// `None` means uniform. `p` must be finite and at least 1.
pub fn persistence_loss_bound(
    m: &TabularMdp,
    pi: &TabularPolicy,
    rho: Option<&[f64]>,
    k: usize,
    p: f64,
) -> Result<BoundReport> {
    if k == 0 {
        return Err(Error::InvalidPersistence(0));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Config(format!("norm exponent p must be finite and >= 1, got {p}")));
    }
    if m.n_states() != pi.n_states() || m.n_actions() != pi.n_actions() {
        return Err(Error::Dimension("policy and MDP sizes differ".into()));
    }
    let (ns, na) = (m.n_states(), m.n_actions());
    let n = ns * na;
    let rho: Vec<f64> = match rho {
        Some(r) => {
            validate_rho(r, n)?;
            r.to_vec()
        }
        None => vec![1.0 / n as f64; n],
    };
    if k == 1 {
        return Ok(BoundReport {
            k,
            p,
            lhs: 0.0,
            coefficient: 0.0,
            dissimilarity_norm: 0.0,
            rhs: 0.0,
            eta_weights: vec![vec![0.0; na]; ns],
        });
    }
    let gamma = m.discount();
    let mode = SolveMode::Expectation(pi);
    let q_pi = solve_q(m, mode, SOLVER_TOL)?;
    let q_pi_k = solve_q_persistent(m, k, mode, SOLVER_TOL, PersistentMethod::Composition)?;

    let lhs = rho
        .iter()
        .zip(q_pi.values().iter().zip(q_pi_k.values()))
        .map(|(w, (a, b))| w * (a - b).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p);

    // Q_k = {(T^δ)^j T^π Q^π_k : j = 0..k−2}
    let mut family: Vec<TabularQ> = Vec::with_capacity(k - 1);
    family.push(apply_expectation(m, pi, &q_pi_k)?);
    for _ in 1..k - 1 {
        let next = apply_persistent(m, family.last().expect("non-empty"))?;
        family.push(next);
    }

    // d(s,a) = max_f |Σ_{s'} P(s'|s,a) (Σ_{a'} π(a'|s') f(s',a') − f(s',a))|
    let policy_values: Vec<Vec<f64>> = family.iter().map(|f| f.policy_values(pi)).collect();
    let mut dissimilarity = vec![0.0; n];
    for s in 0..ns {
        for a in 0..na {
            let row = m.row(s, a);
            let d = family
                .iter()
                .zip(&policy_values)
                .map(|(f, v)| {
                    row.iter()
                        .enumerate()
                        .map(|(s2, &prob)| prob * (v[s2] - f.get(s2, a)))
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0, f64::max);
            dissimilarity[s * na + a] = d;
        }
    }

    let kernel = joint_kernel(m, pi);
    let eta = eta_closed_form(&kernel, &DVector::from_vec(rho), gamma, k)?;
    let dissimilarity_norm = eta
        .iter()
        .zip(&dissimilarity)
        .map(|(w, d)| w * d.powf(p))
        .sum::<f64>()
        .powf(1.0 / p);
    let coefficient = bound_coefficient(gamma, k);
    Ok(BoundReport {
        k,
        p,
        lhs,
        coefficient,
        dissimilarity_norm,
        rhs: coefficient * dissimilarity_norm,
        eta_weights: (0..ns).map(|s| eta.as_slice()[s * na..(s + 1) * na].to_vec()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn coefficient_vanishes_at_k_one() {
        assert_eq!(bound_coefficient(0.9, 1), 0.0);
        // k = 2: γ/(1−γ²)
        assert!((bound_coefficient(0.9, 2) - 0.9 / (1.0 - 0.81)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_eta_matches_truncated_series() {
        let mut rng = seed::rng(21);
        for _ in 0..5 {
            let m = TabularMdp::random(&mut rng, 4, 3, 0.8);
            let pi = TabularPolicy::random(&mut rng, 4, 3);
            let rho = vec![1.0 / 12.0; 12];
            for k in 2..=4 {
                let report = persistence_loss_bound(&m, &pi, Some(&rho), k, 1.0).unwrap();
                let (trunc, tail) = eta_truncated(&m, &pi, &rho, k, 400).unwrap();
                let flat: Vec<f64> = report.eta_weights.iter().flatten().copied().collect();
                let sum: f64 = flat.iter().sum();
                assert!((sum - 1.0).abs() < 1e-10);
                for (a, b) in flat.iter().zip(&trunc) {
                    assert!((a - b).abs() <= tail + 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_rho_and_p() {
        let mut rng = seed::rng(2);
        let m = TabularMdp::random(&mut rng, 2, 2, 0.9);
        let pi = TabularPolicy::uniform(2, 2);
        assert!(matches!(
            persistence_loss_bound(&m, &pi, Some(&[0.5, 0.5, 0.5, 0.0]), 2, 1.0),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(persistence_loss_bound(&m, &pi, None, 2, f64::INFINITY).is_err());
        assert!(persistence_loss_bound(&m, &pi, None, 2, 0.5).is_err());
    }

    #[test]
    fn k_one_is_all_zero() {
        let mut rng = seed::rng(2);
        let m = TabularMdp::random(&mut rng, 3, 2, 0.9);
        let pi = TabularPolicy::random(&mut rng, 3, 2);
        let r = persistence_loss_bound(&m, &pi, None, 1, 2.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn report_json_optionally_drops_eta() {
        let mut rng = seed::rng(8);
        let m = TabularMdp::random(&mut rng, 3, 2, 0.9);
        let pi = TabularPolicy::random(&mut rng, 3, 2);
        let r = persistence_loss_bound(&m, &pi, None, 3, 2.0).unwrap();
        assert!(r.to_json(true).unwrap().contains("eta_weights"));
        let slim = r.to_json(false).unwrap();
        assert!(!slim.contains("eta_weights"));
        let back: BoundReport = serde_json::from_str(&slim).unwrap();
        assert_eq!(back.lhs, r.lhs);
    }
}
