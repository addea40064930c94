//! Paired source/target SEMs for the benchmark shift scenarios.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Mechanism, MechanismOverride, SemSpec, ShiftSpec};
use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    /// Stable drivers `C`, a large proxy block `S` whose link to `C` flips
    /// sign across domains, and a nuisance block `N` with a shifted mean.
    Motivating,
    /// Seven-node graph, only the context `C2` shifts.
    SevenNodeCovariate,
    /// Seven-node graph, `C1` shifts and `T` gets an offset and wider noise.
    SevenNodeTargetShift,
}

impl PresetName {
    pub const ALL: [PresetName; 3] =
        [PresetName::Motivating, PresetName::SevenNodeCovariate, PresetName::SevenNodeTargetShift];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Motivating => "motivating",
            PresetName::SevenNodeCovariate => "seven_node_covariate",
            PresetName::SevenNodeTargetShift => "seven_node_target_shift",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| Error::UnknownPreset(s.into()))
    }
}

/// Tunable preset parameters. Unused fields are ignored by presets they do
/// not apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetParams {
    /// Number of causal drivers `C`.
    pub k: usize,
    /// Size of the proxy block `S`.
    pub m: usize,
    /// Size of the nuisance block `N`.
    pub r: usize,
    /// Driver weights; defaults to `(2, 1, …, 1)`.
    pub w: Option<Vec<f64>>,
    pub sigma_t: f64,
    pub sigma_s: f64,
    pub sigma_n: f64,
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    /// Weight on every edge of the seven-node graph.
    pub edge_weight: f64,
    pub shift_mean: f64,
    pub shift_std: f64,
    pub target_offset: f64,
    pub target_noise_std: f64,
    pub n_source: usize,
    pub n_target: usize,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            k: 3,
            m: 50,
            r: 20,
            w: None,
            sigma_t: 1.0,
            sigma_s: 1.0,
            sigma_n: 1.0,
            a0: 1.0,
            a1: -1.0,
            b0: 0.0,
            b1: 5.0,
            edge_weight: 1.0,
            shift_mean: 5.0,
            shift_std: 2.0,
            target_offset: 2.0,
            target_noise_std: 2.0,
            n_source: 2000,
            n_target: 2000,
        }
    }
}

impl PresetParams {
    pub fn driver_weights(&self) -> Result<Vec<f64>> {
        match &self.w {
            Some(w) if w.len() != self.k => {
                Err(Error::InvalidConfig(format!("w has {} entries but k = {}", w.len(), self.k)))
            }
            Some(w) => Ok(w.clone()),
            None => Ok((0..self.k).map(|i| if i == 0 { 2.0 } else { 1.0 }).collect()),
        }
    }
}

/// A source/target pair sharing one DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: PresetName,
    pub dag: Dag,
    pub source: SemSpec,
    pub target: SemSpec,
    pub target_node: String,
    /// True when the target domain deliberately changes `T`'s own mechanism.
    pub target_mechanism_shifted: bool,
    pub n_source: usize,
    pub n_target: usize,
}

pub fn preset(name: PresetName, params: &PresetParams) -> Result<Preset> {
    let built = match name {
        PresetName::Motivating => motivating(params)?,
        PresetName::SevenNodeCovariate | PresetName::SevenNodeTargetShift => seven_node(name, params)?,
    };
    Ok(built)
}

fn mech(weights: Vec<(String, f64)>, intercept: f64, noise_std: f64) -> Mechanism {
    Mechanism { weights, ..Mechanism::exogenous(intercept, noise_std) }
}

fn motivating(p: &PresetParams) -> Result<Preset> {
    if p.k == 0 {
        return Err(Error::InvalidConfig("motivating preset needs k >= 1".into()));
    }
    let w = p.driver_weights()?;
    let cs: Vec<String> = (1..=p.k).map(|i| format!("C{i}")).collect();
    let ss: Vec<String> = (1..=p.m).map(|j| format!("S{j}")).collect();
    let ns: Vec<String> = (1..=p.r).map(|l| format!("N{l}")).collect();

    let mut nodes = cs.clone();
    nodes.push("T".into());
    nodes.extend(ss.iter().cloned());
    nodes.extend(ns.iter().cloned());
    let mut edges = Vec::new();
    for c in &cs {
        edges.push((c.clone(), "T".to_string()));
        for s in &ss {
            edges.push((c.clone(), s.clone()));
        }
    }
    let dag = Dag::new(nodes, edges)?;

    let proxy_weights = |a: f64| -> Vec<(String, f64)> { cs.iter().cloned().zip(w.iter().map(|wi| a * wi)).collect() };
    let mut mechanisms: Vec<(String, Mechanism)> = cs.iter().map(|c| (c.clone(), mech(vec![], 0.0, 1.0))).collect();
    mechanisms.push(("T".into(), mech(cs.iter().cloned().zip(w.iter().copied()).collect(), 0.0, p.sigma_t)));
    for s in &ss {
        mechanisms.push((s.clone(), mech(proxy_weights(p.a0), 0.0, p.sigma_s)));
    }
    for n in &ns {
        mechanisms.push((n.clone(), mech(vec![], p.b0, p.sigma_n)));
    }
    let source = SemSpec::new(dag.clone(), mechanisms)?;

    let mut shift = ShiftSpec::default();
    for s in &ss {
        shift = shift.with(s, MechanismOverride { weights: Some(proxy_weights(p.a1)), ..Default::default() });
    }
    for n in &ns {
        shift = shift.with(n, MechanismOverride { intercept: Some(p.b1), ..Default::default() });
    }
    let target = source.apply_shift(&shift)?;
    Ok(Preset {
        name: PresetName::Motivating,
        dag,
        source,
        target,
        target_node: "T".into(),
        target_mechanism_shifted: false,
        n_source: p.n_source,
        n_target: p.n_target,
    })
}

/// Contexts `C1, C2` feed intermediates `Z, X`; `T` depends on `(C1, X, Z)`
/// and drives `P, Y`.
pub fn seven_node_dag() -> Dag {
    Dag::new(
        vec!["C1", "C2", "Z", "X", "T", "P", "Y"],
        vec![
            ("C1", "Z"),
            ("C2", "Z"),
            ("C1", "X"),
            ("C2", "X"),
            ("C1", "T"),
            ("X", "T"),
            ("Z", "T"),
            ("T", "P"),
            ("T", "Y"),
        ],
    )
    .expect("static graph is acyclic")
}

fn seven_node(name: PresetName, p: &PresetParams) -> Result<Preset> {
    let dag = seven_node_dag();
    let mechanisms = dag
        .nodes()
        .iter()
        .map(|n| {
            let weights = dag.parents(n).expect("node exists").into_iter().map(|pa| (pa, p.edge_weight)).collect();
            (n.clone(), mech(weights, 0.0, 1.0))
        })
        .collect();
    let source = SemSpec::new(dag.clone(), mechanisms)?;
    let context = MechanismOverride { intercept: Some(p.shift_mean), noise_std: Some(p.shift_std), ..Default::default() };
    let (shift, shifted) = match name {
        PresetName::SevenNodeCovariate => (ShiftSpec::default().with("C2", context), false),
        _ => {
            let t = source.mechanism("T")?;
            let t_override = MechanismOverride {
                intercept: Some(t.intercept + p.target_offset),
                noise_std: Some(p.target_noise_std),
                ..Default::default()
            };
            (ShiftSpec::default().with("C1", context).with("T", t_override), true)
        }
    };
    let target = source.apply_shift(&shift)?;
    Ok(Preset {
        name,
        dag,
        source,
        target,
        target_node: "T".into(),
        target_mechanism_shifted: shifted,
        n_source: p.n_source,
        n_target: p.n_target,
    })
}
