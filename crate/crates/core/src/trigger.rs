//! Event-trigger rules, the Lyapunov monitor and inter-event lower bounds.
//!
//! Distributed rule: agent `i` broadcasts when `e_i^2 > theta_i r_i^2` with
//!
//! ```text
//! theta_i = rho_i a (lambda2 - a |N_i|) / |N_i|
//! ```
//!
//! where `r_i` is the reference signal chosen by [`TriggerSignal`].
//!
//! Lower bounds on the inter-event time, with `eta >= sup ||L(p)||`:
//!
//! ```text
//! tau   = 1 / (||Pi|| eta (1 + phi))                 centralized rule
//! tau_i = beta_i / (||Pi|| eta (beta_i + q_i))        agent i, beta_i = sqrt(theta_i)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::game::QuadraticPotential;
use crate::graph::Graph;

/// Floor applied to `theta_i` when feasibility is lost during a run.
pub const THETA_MIN: f64 = 1e-12;

/// What the gap of each agent is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerSignal {
    /// `z_i = sum_{j in N_i} (f_i - f_hat_j)`: own current fitness against
    /// the neighbours' last broadcasts. Vanishes at consensus.
    #[default]
    Disagreement,
    /// The raw fitness `f_i`.
    Fitness,
}

impl TriggerSignal {
    pub fn reference(self, graph: &Graph, f: &[f64], f_hat: &[f64]) -> Vec<f64> {
        match self {
            TriggerSignal::Fitness => f.to_vec(),
            TriggerSignal::Disagreement => local_disagreement(graph, f, f_hat),
        }
    }
}

/// `z_i = sum_{j in N_i} (f_i - f_hat_j)`.
pub fn local_disagreement(graph: &Graph, f: &[f64], f_hat: &[f64]) -> Vec<f64> {
    (0..graph.n())
        .map(|i| {
            graph.neighbors(i).unwrap_or(&[]).iter().map(|&j| f[i] - f_hat[j]).sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedRuleParams {
    pub rho: Vec<f64>,
    pub a: f64,
}

impl DistributedRuleParams {
    pub fn new(rho: Vec<f64>, a: f64) -> Result<Self> {
        if let Some(i) = rho.iter().position(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::validation(
                format!("trigger.rho[{i}]"),
                format!("must lie in (0, 1), got {}", rho[i]),
            ));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::validation("trigger.a", format!("must be positive, got {a}")));
        }
        Ok(DistributedRuleParams { rho, a })
    }

    /// `theta_i`; fails when `lambda2 <= a |N_i|`.
    pub fn threshold(&self, agent: usize, lambda2: f64, degree: usize) -> Result<f64> {
        if degree == 0 {
            return Err(Error::Argument(format!(
                "agent {agent} has no neighbours; its threshold is undefined"
            )));
        }
        let deg = degree as f64;
        let margin = lambda2 - self.a * deg;
        if !(margin > 0.0) {
            return Err(Error::InfeasibleParameter {
                agent,
                detail: format!(
                    "lambda2 - a*|N_i| = {lambda2} - {}*{degree} = {margin} <= 0",
                    self.a
                ),
            });
        }
        Ok(self.rho[agent] * self.a * margin / deg)
    }

    /// Checks feasibility for every agent with neighbours. `lambda2[i]` is
    /// the Fiedler value of agent `i`'s component.
    pub fn check_feasible(&self, graph: &Graph, lambda2: &[Option<f64>]) -> Result<()> {
        check_len("trigger.rho", self.rho.len(), graph.n())?;
        check_len("lambda2", lambda2.len(), graph.n())?;
        for (i, l2) in lambda2.iter().enumerate() {
            if let Some(l2) = *l2 {
                self.threshold(i, l2, graph.degree(i))?;
            }
        }
        Ok(())
    }

    /// Thresholds for all agents, with infeasible entries floored at
    /// [`THETA_MIN`]. The flag reports whether any floor was applied.
    /// Isolated agents get `0`.
    pub fn thresholds(&self, graph: &Graph, lambda2: &[Option<f64>]) -> (Vec<f64>, bool) {
        let mut lost = false;
        let theta = (0..graph.n())
            .map(|i| match lambda2[i] {
                None => 0.0,
                Some(l2) => match self.threshold(i, l2, graph.degree(i)) {
                    Ok(t) => t,
                    Err(_) => {
                        lost = true;
                        THETA_MIN
                    }
                },
            })
            .collect();
        (theta, lost)
    }
}

/// True iff `e_i^2 > theta_i r_i^2`.
pub fn check_distributed(gap: f64, reference: f64, theta: f64) -> bool {
    gap * gap > theta * reference * reference
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralizedRuleParams {
    pub gamma: f64,
    pub phi: f64,
}

impl CentralizedRuleParams {
    /// `phi` defaults to `gamma^{-1/2}`, the smallest admissible value.
    pub fn new(gamma: f64, phi: Option<f64>) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::validation(
                "trigger.gamma",
                format!("must be positive, got {gamma}"),
            ));
        }
        let min_phi = gamma.powf(-0.5);
        let phi = phi.unwrap_or(min_phi);
        if !(phi >= min_phi) || !phi.is_finite() {
            return Err(Error::validation(
                "trigger.phi",
                format!("must be at least gamma^-1/2 = {min_phi}, got {phi}"),
            ));
        }
        Ok(CentralizedRuleParams { gamma, phi })
    }
}

/// True iff `||e||^2 > gamma ||r||^2`.
pub fn check_centralized(gap: &[f64], reference: &[f64], gamma: f64) -> bool {
    let e2: f64 = gap.iter().map(|v| v * v).sum();
    let r2: f64 = reference.iter().map(|v| v * v).sum();
    e2 > gamma * r2
}

/// `V(f) = 1/2 f' Pi^{-1} f`.
pub fn lyapunov(pot: &QuadraticPotential, f: &[f64]) -> Result<f64> {
    let w = pot.solve(f)?;
    Ok(0.5 * f.iter().zip(&w).map(|(f, w)| f * w).sum::<f64>())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

pub fn tau_centralized(pi_norm: f64, eta: f64, phi: f64) -> Result<f64> {
    positive("||Pi||", pi_norm)?;
    positive("eta", eta)?;
    positive("phi", phi)?;
    Ok(1.0 / (pi_norm * eta + pi_norm * eta * phi))
}

pub fn tau_agent(beta: f64, q: f64, pi_norm: f64, eta: f64) -> Result<f64> {
    positive("beta_i", beta)?;
    positive("q_i", q)?;
    positive("||Pi||", pi_norm)?;
    positive("eta", eta)?;
    Ok(beta / (pi_norm * eta * (beta + q)))
}

/// One broadcast. `f_hat`/`p_hat` are the values sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub agent: usize,
    pub f_hat: f64,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZenoBounds {
    /// Centralized bound; `None` without centralized parameters.
    pub tau: Option<f64>,
    /// Per-agent bounds; `None` for isolated agents or without a distributed rule.
    pub tau_i: Vec<Option<f64>>,
    pub beta_i: Vec<Option<f64>>,
    pub q_i: Vec<f64>,
    pub pi_norm: f64,
    pub eta: f64,
}

/// Evaluates both bounds. `lambda2` holds per-agent component Fiedler
/// values; `q` defaults to `sqrt(n)` for every agent.
pub fn zeno_bounds(
    graph: &Graph,
    pot: &QuadraticPotential,
    lambda2: &[Option<f64>],
    distributed: Option<&DistributedRuleParams>,
    centralized: Option<&CentralizedRuleParams>,
    q: Option<&[f64]>,
) -> Result<ZenoBounds> {
    let n = graph.n();
    check_len("lambda2", lambda2.len(), n)?;
    let bound = graph.spectral_norm_bound(pot.total())?;
    if bound.degenerate {
        return Err(Error::Domain(
            "graph has no edges: eta = 0 and the bounds are undefined".into(),
        ));
    }
    let eta = bound.eta;
    let pi_norm = pot.pi_norm();
    let q_i = match q {
        Some(q) => {
            check_len("trigger.q", q.len(), n)?;
            q.to_vec()
        }
        None => vec![(n as f64).sqrt(); n],
    };
    let tau = centralized
        .map(|c| tau_centralized(pi_norm, eta, c.phi))
        .transpose()?;
    let mut beta_i = vec![None; n];
    let mut tau_i = vec![None; n];
    if let Some(rule) = distributed {
        rule.check_feasible(graph, lambda2)?;
        for i in 0..n {
            if let Some(l2) = lambda2[i] {
                let beta = rule.threshold(i, l2, graph.degree(i))?.sqrt();
                beta_i[i] = Some(beta);
                tau_i[i] = Some(tau_agent(beta, q_i[i], pi_norm, eta)?);
            }
        }
    }
    Ok(ZenoBounds {
        tau,
        tau_i,
        beta_i,
        q_i,
        pi_norm,
        eta,
    })
}
