//! JSON scenario documents, dotted-path overrides and validation.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::game::{DispatchCosts, QuadraticPotential};
use crate::graph::Graph;
use crate::trigger::{CentralizedRuleParams, DistributedRuleParams, TriggerSignal};

const INITIAL_SUM_TOL: f64 = 1e-9;

/// The document as written. Field names follow the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub agents: AgentsSpec,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    /// `P_tot`, or the demand `P_D` for dispatch agents.
    pub total: f64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub normalize_initial: bool,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub trigger: TriggerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentsSpec {
    Dispatch(Vec<CostRow>),
    Potential(PotentialSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostRow {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(rename = "Pi")]
    pub pi: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Named(String),
    Values(Vec<f64>),
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Named("uniform".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    /// Largest sub-division tried before clamping a negative population.
    #[serde(default = "default_min_split")]
    pub min_split: usize,
}

fn default_h() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    10.0
}
fn default_min_split() -> usize {
    16
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            h: default_h(),
            horizon: default_horizon(),
            min_split: default_min_split(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerMode {
    Distributed,
    Centralized,
    Constant,
    /// Continuous communication: the plain distributed replicator dynamic.
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lambda2Mode {
    /// Fiedler value of `L(p_hat)` re-evaluated whenever a broadcast occurs.
    #[default]
    Recompute,
    /// Fiedler value of `L(p(0))` used throughout.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    #[serde(default)]
    pub mode: TriggerMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(rename = "e_T", default, skip_serializing_if = "Option::is_none")]
    pub e_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda2_mode: Lambda2Mode,
    #[serde(default)]
    pub signal: TriggerSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            sample_stride: default_stride(),
        }
    }
}

/// Rule used inside the run loop.
#[derive(Debug, Clone, PartialEq)]
pub enum TriggerRule {
    None,
    Distributed(DistributedRuleParams),
    Centralized(CentralizedRuleParams),
    Constant { threshold: f64 },
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub graph: Graph,
    pub potential: QuadraticPotential,
    pub costs: Option<DispatchCosts>,
    pub initial: Vec<f64>,
    pub h: f64,
    pub horizon: f64,
    pub steps: usize,
    pub sample_stride: usize,
    pub min_split: usize,
    pub rule: TriggerRule,
    /// Distributed parameters, when given, regardless of the mode.
    pub distributed: Option<DistributedRuleParams>,
    /// Centralized parameters, when `gamma` is given, regardless of the mode.
    pub centralized: Option<CentralizedRuleParams>,
    pub q: Option<Vec<f64>>,
    pub lambda2_mode: Lambda2Mode,
    pub signal: TriggerSignal,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn total(&self) -> f64 {
        self.potential.total()
    }

    /// Component Fiedler values of `L(p(0))`.
    pub fn initial_lambda2(&self) -> Result<Vec<Option<f64>>> {
        self.graph.component_fiedler_values(&self.initial)
    }
}

/// Parses and validates a scenario document.
pub fn load_config(text: &str) -> Result<Scenario> {
    load_config_with_overrides(text, &[] as &[&str])
}

/// Parses a document, applies `key=value` overrides in order, then validates.
pub fn load_config_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Scenario> {
    let mut doc = parse_document(text)?;
    for o in overrides {
        apply_override(&mut doc, o.as_ref())?;
    }
    let config: ScenarioConfig = serde_json::from_value(doc)
        .map_err(|e| Error::validation("config", e.to_string()))?;
    Scenario::from_config(config)
}

pub fn load_config_file<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_config_with_overrides(&text, overrides)
}

pub fn parse_document(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Sets the value at a dotted path, e.g. `trigger.a=1e6` or
/// `trigger.rho.2=0.1`. The right-hand side is read as JSON when it parses,
/// otherwise as a string. Missing object keys are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::validation(assignment, "override must have the form key=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::validation(assignment, "empty override key"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for segment in path.split('.') {
        node = match node {
            Value::Array(items) => {
                let index: usize = segment
                    .parse()
                    .map_err(|_| Error::validation(path, format!("`{segment}` is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(index)
                    .ok_or_else(|| Error::validation(path, format!("index {index} out of range (len {len})")))?
            }
            Value::Object(map) => map.entry(segment.to_string()).or_insert(Value::Null),
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut()
                    .expect("just inserted")
                    .entry(segment.to_string())
                    .or_insert(Value::Null)
            }
            _ => {
                return Err(Error::validation(
                    path,
                    format!("cannot descend into `{segment}`: parent is a scalar"),
                ))
            }
        };
    }
    *node = value;
    Ok(())
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Scenario> {
        let total = config.total;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::validation("total", format!("must be positive, got {total}")));
        }
        let (potential, costs) = build_potential(&config.agents, total)?;
        let n = potential.n();

        let graph = Graph::new(n, config.edges.iter().map(|e| (e[0], e[1])))
            .map_err(|e| Error::validation("edges", e.to_string()))?;

        let mut warnings = Vec::new();
        let initial = build_initial(&config, n, total, &mut warnings)?;

        let integ = config.integrator;
        if !(integ.h > 0.0) || !integ.h.is_finite() {
            return Err(Error::validation("integrator.h", format!("must be positive, got {}", integ.h)));
        }
        if !(integ.horizon > 0.0) || !integ.horizon.is_finite() {
            return Err(Error::validation(
                "integrator.T",
                format!("must be positive, got {}", integ.horizon),
            ));
        }
        let ratio = integ.horizon / integ.h;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::validation(
                "integrator.T",
                format!("must be a positive integer multiple of h = {}", integ.h),
            ));
        }
        if integ.min_split == 0 {
            return Err(Error::validation("integrator.min_split", "must be at least 1"));
        }
        if config.output.sample_stride == 0 {
            return Err(Error::validation("output.sample_stride", "must be at least 1"));
        }

        let trig = &config.trigger;
        let distributed = match (&trig.rho, trig.a) {
            (Some(rho), Some(a)) => {
                if rho.len() != n {
                    return Err(Error::validation(
                        "trigger.rho",
                        format!("has length {}, expected {n}", rho.len()),
                    ));
                }
                Some(DistributedRuleParams::new(rho.clone(), a)?)
            }
            (None, None) => None,
            (Some(_), None) => return Err(Error::validation("trigger.a", "required together with rho")),
            (None, Some(_)) => return Err(Error::validation("trigger.rho", "required together with a")),
        };
        let centralized = trig
            .gamma
            .map(|g| CentralizedRuleParams::new(g, trig.phi))
            .transpose()?;
        if trig.gamma.is_none() && trig.phi.is_some() {
            return Err(Error::validation("trigger.phi", "requires gamma"));
        }
        if let Some(q) = &trig.q {
            if q.len() != n {
                return Err(Error::validation("trigger.q", format!("has length {}, expected {n}", q.len())));
            }
            if let Some(i) = q.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::validation(format!("trigger.q[{i}]"), "must be positive"));
            }
        }

        let rule = match trig.mode {
            TriggerMode::None => TriggerRule::None,
            TriggerMode::Distributed => {
                let params = distributed
                    .clone()
                    .ok_or_else(|| Error::validation("trigger.rho", "distributed mode requires rho and a"))?;
                let lambda2 = graph.component_fiedler_values(&initial)?;
                params.check_feasible(&graph, &lambda2)?;
                TriggerRule::Distributed(params)
            }
            TriggerMode::Centralized => TriggerRule::Centralized(
                centralized.ok_or_else(|| Error::validation("trigger.gamma", "centralized mode requires gamma"))?,
            ),
            TriggerMode::Constant => {
                let threshold = trig
                    .e_t
                    .ok_or_else(|| Error::validation("trigger.e_T", "constant mode requires e_T"))?;
                if !(threshold > 0.0) || !threshold.is_finite() {
                    return Err(Error::validation("trigger.e_T", format!("must be positive, got {threshold}")));
                }
                TriggerRule::Constant { threshold }
            }
        };

        Ok(Scenario {
            graph,
            potential,
            costs,
            initial,
            h: integ.h,
            horizon: integ.horizon,
            steps: steps as usize,
            sample_stride: config.output.sample_stride,
            min_split: integ.min_split,
            rule,
            distributed,
            centralized,
            q: trig.q.clone(),
            lambda2_mode: trig.lambda2_mode,
            signal: trig.signal,
            warnings,
            config,
        })
    }
}

fn build_potential(agents: &AgentsSpec, total: f64) -> Result<(QuadraticPotential, Option<DispatchCosts>)> {
    match agents {
        AgentsSpec::Dispatch(rows) => {
            if rows.is_empty() {
                return Err(Error::validation("agents", "at least one agent is required"));
            }
            let costs = DispatchCosts::new(
                rows.iter().map(|r| r.alpha).collect(),
                rows.iter().map(|r| r.beta).collect(),
                rows.iter().map(|r| r.gamma).collect(),
                total,
            )
            .map_err(|e| Error::validation("agents", e.to_string()))?;
            let pot = costs.to_potential()?;
            Ok((pot, Some(costs)))
        }
        AgentsSpec::Potential(spec) => {
            let n = spec.b.len();
            if n == 0 {
                return Err(Error::validation("agents.b", "at least one agent is required"));
            }
            if spec.pi.len() != n || spec.pi.iter().any(|row| row.len() != n) {
                return Err(Error::validation("agents.Pi", format!("must be {n}x{n}")));
            }
            let pi = DMatrix::from_fn(n, n, |i, j| spec.pi[i][j]);
            let pot = QuadraticPotential::new(pi, spec.b.clone(), spec.c, total)
                .map_err(|e| Error::validation("agents.Pi", e.to_string()))?;
            Ok((pot, None))
        }
    }
}

fn build_initial(config: &ScenarioConfig, n: usize, total: f64, warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    match &config.initial {
        InitialSpec::Named(name) if name == "uniform" => Ok(vec![total / n as f64; n]),
        InitialSpec::Named(name) => Err(Error::validation(
            "initial",
            format!("unknown initial condition `{name}` (expected \"uniform\" or a vector)"),
        )),
        InitialSpec::Values(values) => {
            if values.len() != n {
                return Err(Error::validation("initial", format!("has length {}, expected {n}", values.len())));
            }
            if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::validation(format!("initial[{i}]"), "must be finite and non-negative"));
            }
            let sum: f64 = values.iter().sum();
            if (sum - total).abs() <= INITIAL_SUM_TOL * total {
                return Ok(values.clone());
            }
            if !config.normalize_initial {
                return Err(Error::validation(
                    "initial",
                    format!("sums to {sum}, expected total = {total}"),
                ));
            }
            if !(sum > 0.0) {
                return Err(Error::validation("initial", "cannot normalise an all-zero allocation"));
            }
            warnings.push(format!("initial allocation rescaled from sum {sum} to {total}"));
            Ok(values.iter().map(|v| v * total / sum).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEGENERATE: &str = r#"{
        "agents": {"Pi": [[1.0]], "b": [0.0]},
        "total": 1.0,
        "trigger": {"mode": "none"}
    }"#;

    fn dispatch(initial: &str, normalize: bool) -> String {
        format!(
            r#"{{
            "agents": [
                {{"alpha": 0.096, "beta": 1.22, "gamma": 51}},
                {{"alpha": 0.072, "beta": 3.41, "gamma": 31}},
                {{"alpha": 0.105, "beta": 2.53, "gamma": 72}},
                {{"alpha": 0.082, "beta": 4.02, "gamma": 48}}
            ],
            "edges": [[0,1],[1,2],[2,3],[3,0]],
            "total": 140,
            "initial": {initial},
            "normalize_initial": {normalize},
            "trigger": {{"mode": "distributed", "rho": [0.06, 0.01, 0.08, 0.05], "a": 0.0024787521766663585}}
        }}"#
        )
    }

    #[test]
    fn degenerate_single_agent() {
        let s = load_config(DEGENERATE).unwrap();
        assert_eq!(s.n(), 1);
        assert_eq!(s.initial, vec![1.0]);
        assert_eq!(s.rule, TriggerRule::None);
        assert_eq!(s.steps, 10_000);
    }

    #[test]
    fn uniform_expands() {
        let s = load_config(&dispatch("\"uniform\"", false)).unwrap();
        assert_eq!(s.initial, vec![35.0; 4]);
        assert!(matches!(s.rule, TriggerRule::Distributed(_)));
    }

    #[test]
    fn initial_sum_mismatch() {
        let err = load_config(&dispatch("[100, 100, 20, 20]", false)).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "initial"), "{err}");

        let s = load_config(&dispatch("[100, 100, 20, 20]", true)).unwrap();
        let want = [100.0, 100.0, 20.0, 20.0].map(|v| v * 140.0 / 240.0);
        for (got, want) in s.initial.iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn malformed_json_reports_location() {
        match load_config("{\n  \"agents\": [,\n}") {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_override() {
        let text = dispatch("\"uniform\"", false);
        match load_config_with_overrides(&text, &["trigger.a=1e6"]) {
            Err(Error::InfeasibleParameter { agent: 0, .. }) => {}
            other => panic!("expected infeasible error, got {other:?}"),
        }
    }

    #[test]
    fn overrides_last_write_wins() {
        let text = dispatch("\"uniform\"", false);
        let s = load_config_with_overrides(
            &text,
            &["integrator.T=2", "integrator.T=3", "trigger.rho.1=0.5", "trigger.mode=none"],
        )
        .unwrap();
        assert_eq!(s.horizon, 3.0);
        assert_eq!(s.distributed.as_ref().unwrap().rho[1], 0.5);
        assert_eq!(s.rule, TriggerRule::None);
    }

    #[test]
    fn override_errors() {
        let mut doc = parse_document(DEGENERATE).unwrap();
        assert!(apply_override(&mut doc, "no_equals").is_err());
        assert!(apply_override(&mut doc, "total.x=1").is_err());
        assert!(apply_override(&mut doc, "agents.b.5=1").is_err());
        apply_override(&mut doc, "output.sample_stride=5").unwrap();
        assert_eq!(doc["output"]["sample_stride"], 5);
    }

    #[test]
    fn validation_names_fields() {
        let field_of = |o: &str| match load_config_with_overrides(DEGENERATE, &[o]) {
            Err(Error::Validation { field, .. }) => field,
            other => panic!("{o}: expected validation error, got {other:?}"),
        };
        assert_eq!(field_of("total=-1"), "total");
        assert_eq!(field_of("integrator.h=0"), "integrator.h");
        assert_eq!(field_of("integrator.T=0.0015"), "integrator.T");
        assert_eq!(field_of("output.sample_stride=0"), "output.sample_stride");
        assert_eq!(field_of("trigger.mode=constant"), "trigger.e_T");
        assert_eq!(field_of("trigger.mode=centralized"), "trigger.gamma");
        assert_eq!(field_of("initial=\"corner\""), "initial");
        assert_eq!(field_of("edges=[[0,0]]"), "edges");
        assert_eq!(field_of("bogus=1"), "config");
    }
}
