//! Vector fields of the replicator family and the fixed-step integrator.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::game::{avg_fitness, QuadraticPotential};
use crate::graph::Graph;

/// Relative tolerance on `sum p = total` accepted by the field evaluations.
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub p: Vec<f64>,
    pub t: f64,
}

/// Last broadcast values per agent. The gap is `e = f_hat - f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledState {
    pub f_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub last_event_t: Vec<f64>,
}

impl SampledState {
    /// Every agent has just broadcast its current values.
    pub fn synchronized(pot: &QuadraticPotential, p: &[f64], t: f64) -> Result<Self> {
        Ok(SampledState {
            f_hat: pot.fitness(p)?,
            p_hat: p.to_vec(),
            last_event_t: vec![t; p.len()],
        })
    }

    pub fn n(&self) -> usize {
        self.f_hat.len()
    }

    pub fn broadcast(&mut self, agent: usize, p: f64, f: f64, t: f64) {
        self.p_hat[agent] = p;
        self.f_hat[agent] = f;
        self.last_event_t[agent] = t;
    }

    pub fn gap(&self, f: &[f64]) -> Vec<f64> {
        self.f_hat.iter().zip(f).map(|(fh, f)| fh - f).collect()
    }
}

pub fn check_simplex(p: &[f64], total: f64) -> Result<()> {
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::State(format!(
            "population of agent {i} is {v}, outside the simplex"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - total).abs() > SIMPLEX_TOL * total {
        return Err(Error::State(format!(
            "population sums to {sum}, expected {total}"
        )));
    }
    Ok(())
}

fn validated(pot: &QuadraticPotential, p: &[f64]) -> Result<()> {
    check_len("population vector", p.len(), pot.n())?;
    check_simplex(p, pot.total())
}

/// `p_i (f_i - f_bar)`.
pub fn classic_replicator_field(pot: &QuadraticPotential, p: &[f64]) -> Result<Vec<f64>> {
    validated(pot, p)?;
    let f = pot.fitness_unchecked(p);
    let sum: f64 = p.iter().sum();
    // normalise by the actual mass so the field is exactly zero-sum
    let fbar = avg_fitness(p, &f, sum)?;
    Ok(p.iter().zip(&f).map(|(p, f)| p * (f - fbar)).collect())
}

/// `sum_{j in N_i} p_i p_j (f_i - f_j)`, i.e. `L(p) f(p)`.
pub fn distributed_replicator_field(
    graph: &Graph,
    pot: &QuadraticPotential,
    p: &[f64],
) -> Result<Vec<f64>> {
    check_len("graph", graph.n(), pot.n())?;
    validated(pot, p)?;
    Ok(graph.apply_laplacian(p, &pot.fitness_unchecked(p)))
}

/// `-Pi L(p) f(p)`.
pub fn fitness_field(graph: &Graph, pot: &QuadraticPotential, p: &[f64]) -> Result<Vec<f64>> {
    let pdot = distributed_replicator_field(graph, pot, p)?;
    Ok(apply_neg_pi(pot, &pdot))
}

/// The fitness dynamic expressed purely in fitness coordinates: the
/// population is recovered as `Pi^{-1}(b - f)` before evaluating `L(p)`.
pub fn fitness_dynamic(graph: &Graph, pot: &QuadraticPotential, f: &[f64]) -> Result<Vec<f64>> {
    check_len("graph", graph.n(), pot.n())?;
    let p = pot.population_from_fitness(f)?;
    let pdot = graph.apply_laplacian(&p, f);
    Ok(apply_neg_pi(pot, &pdot))
}

fn apply_neg_pi(pot: &QuadraticPotential, x: &[f64]) -> Vec<f64> {
    match pot.diagonal() {
        Some(d) => d.iter().zip(x).map(|(d, x)| -d * x).collect(),
        None => {
            let v = pot.pi() * nalgebra::DVector::from_row_slice(x);
            v.iter().map(|v| -v).collect()
        }
    }
}

/// `sum_{j in N_i} p_hat_i p_hat_j (f_hat_i - f_hat_j)`.
///
/// Depends only on broadcast values, so edge flows are antisymmetric and the
/// field is constant between broadcasts.
pub fn triggered_field(
    graph: &Graph,
    pot: &QuadraticPotential,
    p: &[f64],
    sampled: &SampledState,
) -> Result<Vec<f64>> {
    check_len("graph", graph.n(), pot.n())?;
    validated(pot, p)?;
    check_len("sampled fitness", sampled.f_hat.len(), pot.n())?;
    check_len("sampled population", sampled.p_hat.len(), pot.n())?;
    Ok(graph.apply_laplacian(&sampled.p_hat, &sampled.f_hat))
}

/// One classical Runge-Kutta step of `x' = field(x)`.
pub fn rk4_step<F>(mut field: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!("step size must be positive, got {h}")));
    }
    let axpy = |k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + s * k).collect() };
    let k1 = field(x);
    let k2 = field(&axpy(&k1, h / 2.0));
    let k3 = field(&axpy(&k2, h / 2.0));
    let k4 = field(&axpy(&k3, h));
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "component {i} became non-finite after a step of size {h}"
        )));
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GuardOutcome {
    /// Number of sub-steps the step was finally split into.
    pub substeps: usize,
    pub clamped: bool,
}

/// RK4 step that keeps the population non-negative.
///
/// A step that would make some `p_i < 0` is retried as 2, 4, ... up to
/// `min_split` sub-steps. If that still fails, negative entries are set to 0
/// and the deficit is taken proportionally from the positive agents of the
/// same component, which preserves each component's sum.
pub fn guarded_step<F>(
    mut field: F,
    p: &[f64],
    h: f64,
    components: &[Vec<usize>],
    min_split: usize,
) -> Result<(Vec<f64>, GuardOutcome)>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut substeps = 1;
    let mut next = rk4_step(&mut field, p, h)?;
    while next.iter().any(|v| *v < 0.0) && substeps < min_split.max(1) {
        substeps *= 2;
        let sub = h / substeps as f64;
        next = p.to_vec();
        for _ in 0..substeps {
            next = rk4_step(&mut field, &next, sub)?;
        }
    }
    let mut clamped = false;
    if next.iter().any(|v| *v < 0.0) {
        clamped = true;
        for component in components {
            redistribute(&mut next, component);
        }
    }
    Ok((next, GuardOutcome { substeps, clamped }))
}

fn redistribute(p: &mut [f64], component: &[usize]) {
    let deficit: f64 = component.iter().map(|&i| (-p[i]).max(0.0)).sum();
    if deficit == 0.0 {
        return;
    }
    let positive: f64 = component.iter().map(|&i| p[i].max(0.0)).sum();
    for &i in component {
        p[i] = if p[i] <= 0.0 {
            0.0
        } else {
            p[i] - deficit * p[i] / positive
        };
    }
}
