//! The run loop.
//!
//! Each step: evaluate the trigger rule at the current state, apply the
//! resulting broadcasts, take one guarded RK4 step, and record a sample
//! every `sample_stride` steps (the final step is always recorded).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Lambda2Mode, Scenario, TriggerRule};
use crate::dynamics::{guarded_step, SampledState};
use crate::error::Error;
use crate::game::kkt_allocate_partitioned;
use crate::trigger::{check_centralized, check_distributed, lyapunov, zeno_bounds, EventRecord, ZenoBounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub p: Vec<f64>,
    pub f: Vec<f64>,
    /// Lyapunov value `1/2 f' Pi^{-1} f`.
    pub v: f64,
    /// Potential `S(p)`.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub p_final: Vec<f64>,
    pub f_final: Vec<f64>,
    /// Largest fitness spread `max f_i - min f_i` over the agents of any one
    /// component (equal to the max pairwise gap on a connected graph).
    pub consensus_residual: f64,
    /// `|sum p_final - total|`.
    pub conservation_error: f64,
    pub trigger_count: Vec<usize>,
    /// Smallest separation between consecutive broadcasts of each agent;
    /// `None` with fewer than two broadcasts.
    pub min_interevent: Vec<Option<f64>>,
    pub zeno_bounds: Option<ZenoBounds>,
    pub clamp_count: usize,
    pub feasibility_lost: bool,
    /// `max |p_final - p*|` against the allocation that maximizes the
    /// potential with every component's initial resource held fixed.
    pub oracle_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trajectory: Vec<TrajectorySample>,
    pub events: Vec<EventRecord>,
    pub summary: Summary,
    pub warnings: Vec<String>,
}

/// A run aborted by a numerical failure, with everything recorded so far.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub partial: Box<RunResult>,
}

/// Step-by-step driver. [`run`] is a thin loop over it.
#[derive(Debug)]
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    components: Vec<Vec<usize>>,
    p: Vec<f64>,
    step: usize,
    sampled: Option<SampledState>,
    lambda2: Vec<Option<f64>>,
    theta: Vec<f64>,
    theta_stale: bool,
    events: Vec<EventRecord>,
    clamp_count: usize,
    feasibility_lost: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, Error> {
        let n = scenario.n();
        let p = scenario.initial.clone();
        let triggered = scenario.rule != TriggerRule::None;
        let (sampled, events) = if triggered {
            let sampled = SampledState::synchronized(&scenario.potential, &p, 0.0)?;
            let events = (0..n)
                .map(|agent| EventRecord {
                    t: 0.0,
                    agent,
                    f_hat: sampled.f_hat[agent],
                    p_hat: sampled.p_hat[agent],
                })
                .collect();
            (Some(sampled), events)
        } else {
            (None, Vec::new())
        };
        let lambda2 = if matches!(scenario.rule, TriggerRule::Distributed(_)) {
            scenario.graph.component_fiedler_values(&p)?
        } else {
            vec![None; n]
        };
        let mut sim = Simulator {
            scenario,
            components: scenario.graph.connected_components(),
            p,
            step: 0,
            sampled,
            lambda2,
            theta: vec![0.0; n],
            theta_stale: true,
            events,
            clamp_count: 0,
            feasibility_lost: false,
        };
        sim.refresh_thresholds()?;
        Ok(sim)
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        if self.step == self.scenario.steps {
            self.scenario.horizon
        } else {
            self.step as f64 * self.scenario.h
        }
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.scenario.steps
    }

    pub fn population(&self) -> &[f64] {
        &self.p
    }

    pub fn sampled(&self) -> Option<&SampledState> {
        self.sampled.as_ref()
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    /// Current distributed thresholds `theta_i` (zero in other modes).
    pub fn thresholds(&self) -> &[f64] {
        &self.theta
    }

    /// Per-agent component Fiedler values the thresholds were built from.
    pub fn lambda2(&self) -> &[Option<f64>] {
        &self.lambda2
    }

    pub fn sample(&self) -> TrajectorySample {
        let pot = &self.scenario.potential;
        let f = pot.fitness_unchecked(&self.p);
        let v = lyapunov(pot, &f).expect("lengths agree");
        TrajectorySample {
            t: self.time(),
            s: pot.potential_unchecked(&self.p),
            p: self.p.clone(),
            f,
            v,
        }
    }

    fn refresh_thresholds(&mut self) -> Result<(), Error> {
        let TriggerRule::Distributed(rule) = &self.scenario.rule else {
            return Ok(());
        };
        if !self.theta_stale {
            return Ok(());
        }
        if self.scenario.lambda2_mode == Lambda2Mode::Recompute {
            let p_hat = &self.sampled.as_ref().expect("triggered mode").p_hat;
            self.lambda2 = self.scenario.graph.component_fiedler_values(p_hat)?;
        }
        let (theta, lost) = rule.thresholds(&self.scenario.graph, &self.lambda2);
        self.theta = theta;
        self.feasibility_lost |= lost;
        self.theta_stale = false;
        Ok(())
    }

    /// Evaluates the trigger rule at the current state and applies the
    /// broadcasts. Returns the agents that broadcast.
    pub fn evaluate_triggers(&mut self) -> Result<Vec<usize>, Error> {
        let scenario = self.scenario;
        let graph = &scenario.graph;
        if self.sampled.is_none() {
            return Ok(Vec::new());
        }
        self.refresh_thresholds()?;
        let sampled = self.sampled.as_ref().expect("checked above");
        let f = scenario.potential.fitness_unchecked(&self.p);
        let gap = sampled.gap(&f);
        let fired: Vec<usize> = match &scenario.rule {
            TriggerRule::None => Vec::new(),
            TriggerRule::Distributed(_) => {
                let reference = scenario.signal.reference(graph, &f, &sampled.f_hat);
                (0..graph.n())
                    .filter(|&i| {
                        graph.degree(i) > 0 && check_distributed(gap[i], reference[i], self.theta[i])
                    })
                    .collect()
            }
            TriggerRule::Centralized(params) => {
                let reference = scenario.signal.reference(graph, &f, &sampled.f_hat);
                if check_centralized(&gap, &reference, params.gamma) {
                    (0..graph.n()).collect()
                } else {
                    Vec::new()
                }
            }
            TriggerRule::Constant { threshold } => (0..graph.n())
                .filter(|&i| graph.degree(i) > 0 && gap[i].abs() > *threshold)
                .collect(),
        };
        if !fired.is_empty() {
            let t = self.time();
            let sampled = self.sampled.as_mut().expect("checked above");
            for &agent in &fired {
                sampled.broadcast(agent, self.p[agent], f[agent], t);
                self.events.push(EventRecord {
                    t,
                    agent,
                    f_hat: f[agent],
                    p_hat: self.p[agent],
                });
            }
            self.theta_stale = true;
        }
        Ok(fired)
    }

    /// One full step: triggers, then integration.
    pub fn advance(&mut self) -> Result<(), Error> {
        if self.is_finished() {
            return Ok(());
        }
        if self.step > 0 {
            self.evaluate_triggers()?;
        }
        let scenario = self.scenario;
        let graph = &scenario.graph;
        let pot = &scenario.potential;
        let (next, outcome) = match &self.sampled {
            Some(s) => {
                let flow = graph.apply_laplacian(&s.p_hat, &s.f_hat);
                guarded_step(|_| flow.clone(), &self.p, scenario.h, &self.components, scenario.min_split)?
            }
            None => guarded_step(
                |x| graph.apply_laplacian(x, &pot.fitness_unchecked(x)),
                &self.p,
                scenario.h,
                &self.components,
                scenario.min_split,
            )?,
        };
        if outcome.clamped {
            self.clamp_count += 1;
        }
        self.p = next;
        self.step += 1;
        Ok(())
    }

    fn diagnostics(&self) -> RunDiagnostics {
        RunDiagnostics {
            clamp_count: self.clamp_count,
            feasibility_lost: self.feasibility_lost,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunDiagnostics {
    pub clamp_count: usize,
    pub feasibility_lost: bool,
}

/// Runs a scenario to its horizon. Identical scenarios give identical results.
pub fn run(scenario: &Scenario) -> Result<RunResult, RunFailure> {
    let mut sim = match Simulator::new(scenario) {
        Ok(sim) => sim,
        Err(error) => {
            return Err(RunFailure {
                error,
                partial: Box::new(RunResult {
                    trajectory: Vec::new(),
                    events: Vec::new(),
                    summary: empty_summary(scenario),
                    warnings: scenario.warnings.clone(),
                }),
            })
        }
    };
    let mut trajectory = vec![sim.sample()];
    let stride = scenario.sample_stride;
    while !sim.is_finished() {
        if let Err(error) = sim.advance() {
            let summary = summarize(scenario, &trajectory, sim.events(), sim.diagnostics());
            return Err(RunFailure {
                error,
                partial: Box::new(RunResult {
                    trajectory,
                    events: sim.events().to_vec(),
                    summary,
                    warnings: scenario.warnings.clone(),
                }),
            });
        }
        if sim.step_index() % stride == 0 || sim.is_finished() {
            trajectory.push(sim.sample());
        }
    }
    let summary = summarize(scenario, &trajectory, sim.events(), sim.diagnostics());
    let mut warnings = scenario.warnings.clone();
    if summary.clamp_count > 0 {
        warnings.push(format!(
            "population clamped to zero in {} step(s)",
            summary.clamp_count
        ));
    }
    if summary.feasibility_lost {
        warnings.push("trigger feasibility lost during the run; thresholds were floored".into());
    }
    Ok(RunResult {
        events: sim.events().to_vec(),
        trajectory,
        summary,
        warnings,
    })
}

fn empty_summary(scenario: &Scenario) -> Summary {
    let n = scenario.n();
    Summary {
        p_final: Vec::new(),
        f_final: Vec::new(),
        consensus_residual: 0.0,
        conservation_error: 0.0,
        trigger_count: vec![0; n],
        min_interevent: vec![None; n],
        zeno_bounds: None,
        clamp_count: 0,
        feasibility_lost: false,
        oracle_gap: None,
    }
}

/// Summary statistics of a (possibly partial) run.
pub fn summarize(
    scenario: &Scenario,
    trajectory: &[TrajectorySample],
    events: &[EventRecord],
    diagnostics: RunDiagnostics,
) -> Summary {
    let n = scenario.n();
    let Some(last) = trajectory.last() else {
        return empty_summary(scenario);
    };
    let components = scenario.graph.connected_components();

    let consensus_residual = components
        .iter()
        .map(|c| {
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(last.f[i]), hi.max(last.f[i]))
            });
            hi - lo
        })
        .fold(0.0, f64::max);
    let conservation_error = (last.p.iter().sum::<f64>() - scenario.total()).abs();

    let mut trigger_count = vec![0; n];
    let mut last_t: Vec<Option<f64>> = vec![None; n];
    let mut min_interevent: Vec<Option<f64>> = vec![None; n];
    for e in events {
        trigger_count[e.agent] += 1;
        if let Some(prev) = last_t[e.agent] {
            let gap = e.t - prev;
            min_interevent[e.agent] = Some(min_interevent[e.agent].map_or(gap, |m: f64| m.min(gap)));
        }
        last_t[e.agent] = Some(e.t);
    }

    let zeno = match scenario.rule {
        TriggerRule::Distributed(_) | TriggerRule::Centralized(_) => scenario
            .initial_lambda2()
            .and_then(|l2| {
                zeno_bounds(
                    &scenario.graph,
                    &scenario.potential,
                    &l2,
                    scenario.distributed.as_ref(),
                    scenario.centralized.as_ref(),
                    scenario.q.as_deref(),
                )
            })
            .ok(),
        _ => None,
    };

    let totals: Vec<f64> = components
        .iter()
        .map(|c| c.iter().map(|&i| scenario.initial[i]).sum())
        .collect();
    let oracle_gap = kkt_allocate_partitioned(&scenario.potential, &components, &totals)
        .ok()
        .map(|star| {
            star.allocation
                .iter()
                .zip(&last.p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });

    Summary {
        p_final: last.p.clone(),
        f_final: last.f.clone(),
        consensus_residual,
        conservation_error,
        trigger_count,
        min_interevent,
        zeno_bounds: zeno,
        clamp_count: diagnostics.clamp_count,
        feasibility_lost: diagnostics.feasibility_lost,
        oracle_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::{load_config, load_config_with_overrides};

    const PAIR: &str = r#"{
        "agents": {"Pi": [[1.0, 0.0], [0.0, 2.0]], "b": [1.0, 0.0]},
        "edges": [[0, 1]],
        "total": 1.0,
        "integrator": {"h": 0.01, "T": 1.0},
        "output": {"sample_stride": 10},
        "trigger": {"mode": "distributed", "rho": [0.5, 0.5], "a": 0.05, "gamma": 0.2}
    }"#;

    #[test]
    fn sampling_grid() {
        let s = load_config(PAIR).unwrap();
        let r = run(&s).unwrap();
        assert_eq!(r.trajectory.len(), 11);
        assert_eq!(r.trajectory[0].t, 0.0);
        assert_eq!(r.trajectory.last().unwrap().t, 1.0);
        assert!(r.trajectory.windows(2).all(|w| w[0].t < w[1].t));

        let s = load_config_with_overrides(PAIR, &["output.sample_stride=7"]).unwrap();
        let r = run(&s).unwrap();
        // 0, 7, ..., 98, then the final step 100
        assert_eq!(r.trajectory.len(), 100 / 7 + 2);
        assert_eq!(r.trajectory.last().unwrap().t, 1.0);
    }

    #[test]
    fn initial_broadcast_is_logged() {
        let s = load_config(PAIR).unwrap();
        let r = run(&s).unwrap();
        assert_eq!(r.events[0].t, 0.0);
        assert_eq!(r.events[1].t, 0.0);
        assert_eq!(r.events[0].f_hat, 0.5);
        assert!(r.summary.zeno_bounds.as_ref().unwrap().tau.unwrap() > 0.0);
    }

    #[test]
    fn continuous_mode_has_no_events() {
        let s = load_config_with_overrides(PAIR, &["trigger.mode=none"]).unwrap();
        let r = run(&s).unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.summary.trigger_count, vec![0, 0]);
        assert_eq!(r.summary.min_interevent, vec![None, None]);
        assert!(r.summary.zeno_bounds.is_none());
    }

    #[test]
    fn consensus_start_never_triggers() {
        let text = r#"{
            "agents": [{"alpha": 0.5, "beta": 1.0}, {"alpha": 0.5, "beta": 1.0}, {"alpha": 0.5, "beta": 1.0}],
            "edges": [[0, 1], [1, 2]],
            "total": 3.0,
            "integrator": {"h": 0.01, "T": 1.0},
            "trigger": {"mode": "distributed", "rho": [0.5, 0.5, 0.5], "a": 0.1}
        }"#;
        let s = load_config(text).unwrap();
        let r = run(&s).unwrap();
        assert!(r.events.iter().all(|e| e.t == 0.0));
        assert_eq!(r.events.len(), 3);
        assert!(r.trajectory.iter().all(|x| x.p == vec![1.0; 3]));
    }

    #[test]
    fn single_agent_run() {
        let text = r#"{"agents": {"Pi": [[1.0]], "b": [0.0]}, "total": 2.0,
                       "integrator": {"h": 0.1, "T": 1.0}}"#;
        let r = run(&load_config(text).unwrap()).unwrap();
        assert_eq!(r.summary.p_final, vec![2.0]);
        assert_eq!(r.summary.consensus_residual, 0.0);
        assert_eq!(r.summary.oracle_gap, Some(0.0));
    }

    #[test]
    fn thresholds_follow_broadcast_state() {
        let s = load_config(PAIR).unwrap();
        let mut sim = Simulator::new(&s).unwrap();
        let l2 = sim.lambda2()[0].unwrap();
        // K2 at p = (0.5, 0.5): lambda2 = 2 * 0.25
        assert!((l2 - 0.5).abs() < 1e-12);
        let theta0 = sim.thresholds()[0];
        assert!((theta0 - 0.5 * 0.05 * (0.5 - 0.05)).abs() < 1e-15);
        while !sim.is_finished() {
            sim.advance().unwrap();
        }
        let s_frozen = load_config_with_overrides(PAIR, &["trigger.lambda2_mode=frozen"]).unwrap();
        let mut frozen = Simulator::new(&s_frozen).unwrap();
        while !frozen.is_finished() {
            frozen.advance().unwrap();
        }
        assert_eq!(frozen.thresholds()[0], theta0);
    }
}
