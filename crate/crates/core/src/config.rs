//! Experiment configuration: TOML schema, per-plant defaults, validation
//! and a stable content hash.
//!
//! User files are merged over the defaults for the selected plant, so a
//! config only needs the values it changes. The resolved config serializes
//! back to TOML and reproduces the run when fed back in.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MetricOptions;
use crate::nominal::{linearize, lqr_gain, ControlLaw, LinearModel, NominalController, RiccatiOptions};
use crate::plant::{
    Plant, PlantKind, ReferenceMode, ReferenceSpec, RewardSpec, ShiftFamily, ShiftSpec,
};
use crate::residual::{HeadParams, TracePair, TrackingWeights};
use crate::sag::{GateFlags, GateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Frozen,
    ResidualFull,
    ResidualUnconstrained,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Frozen => "frozen",
            Method::ResidualFull => "residual-full",
            Method::ResidualUnconstrained => "residual-unconstrained",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(Method::Frozen),
            "residual-full" => Ok(Method::ResidualFull),
            "residual-unconstrained" => Ok(Method::ResidualUnconstrained),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub model: Plant,
    pub reference: ReferenceSpec,
    pub reward: RewardSpec,
    /// Half-width of the uniform initial offset on each tracked position.
    pub init_radius: Vec<f64>,
    /// Distance-to-reference bound validated for the nominal-only loop.
    pub nominal_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NominalLaw {
    Pd {
        kp: Vec<f64>,
        kd: Vec<f64>,
    },
    Lqr {
        q_diag: Vec<f64>,
        r_diag: Vec<f64>,
        iters: usize,
        tol: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalConfig {
    pub limits: Vec<f64>,
    pub law: NominalLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    /// Diagonal of Λ. Omitted: derived from the nominal gains.
    pub lambda: Option<Vec<f64>>,
    pub task_weights: Vec<f64>,
    /// `d × n` error-to-channel map. Omitted: derived from the nominal gains.
    pub error_map: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualConfig {
    pub features: usize,
    pub alpha_e: f64,
    pub alpha_i: f64,
    pub seed: u64,
    pub heads: HeadParams,
    pub tracking: TrackingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub family: ShiftFamily,
    pub severity: f64,
    #[serde(default)]
    pub channel: usize,
}

/// Mechanism switches for the ablation suite. All on for the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationFlags {
    pub dual_head: bool,
    pub directional: bool,
    pub temporal_filter: bool,
    pub adaptive_gain: bool,
    pub boost: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            dual_head: true,
            directional: true,
            temporal_filter: true,
            adaptive_gain: true,
            boost: true,
        }
    }
}

impl AblationFlags {
    pub fn gate_flags(&self, method: Method) -> GateFlags {
        let constrained = method != Method::ResidualUnconstrained;
        GateFlags {
            directional: self.directional && constrained,
            clip: constrained,
            adaptive_gain: self.adaptive_gain,
            boost: self.boost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub fault_step: usize,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub method: Method,
    pub calibration: Window,
    pub plant: PlantConfig,
    pub nominal: NominalConfig,
    pub residual: ResidualConfig,
    pub gate: GateParams,
    pub metrics: MetricOptions,
    pub ablation: AblationFlags,
    pub shift: Option<ShiftConfig>,
}

impl ExperimentConfig {
    /// Defaults for a plant. `limits` overrides the nominal action limits
    /// (the gate bounds scale with them).
    pub fn default_for(kind: PlantKind, limits: Option<Vec<f64>>) -> Self {
        let model = Plant::default_for(kind);
        let (reference, reward, init_radius, nominal_bound, default_limits, law, tracking, e_bar) =
            match kind {
                PlantKind::Pendulum => (
                    ReferenceSpec {
                        mode: ReferenceMode::Position,
                        offset: vec![0.0],
                        amplitude: vec![0.1],
                        period_steps: 100,
                    },
                    RewardSpec {
                        pos_weights: vec![10.0],
                        vel_weights: vec![1.0],
                        action_cost: 1e-4,
                    },
                    vec![0.05],
                    0.75,
                    vec![20.0],
                    NominalLaw::Pd {
                        kp: vec![40.0],
                        kd: vec![8.0],
                    },
                    TrackingConfig {
                        lambda: None,
                        task_weights: vec![1.0],
                        error_map: None,
                    },
                    vec![0.1],
                ),
                PlantKind::CartPole => (
                    ReferenceSpec {
                        mode: ReferenceMode::Position,
                        offset: vec![0.0, 0.0],
                        amplitude: vec![0.1, 0.0],
                        period_steps: 100,
                    },
                    RewardSpec {
                        pos_weights: vec![1.5, 3.0],
                        vel_weights: vec![0.3, 0.3],
                        action_cost: 1e-5,
                    },
                    vec![0.05, 0.02],
                    3.0,
                    vec![30.0],
                    NominalLaw::Lqr {
                        q_diag: vec![50.0, 20.0, 1.0, 1.0],
                        r_diag: vec![0.1],
                        iters: RiccatiOptions::default().iters,
                        tol: RiccatiOptions::default().tol,
                    },
                    TrackingConfig {
                        lambda: None,
                        task_weights: vec![1.0, 1.0],
                        error_map: None,
                    },
                    vec![0.1],
                ),
                PlantKind::Unicycle => (
                    ReferenceSpec {
                        mode: ReferenceMode::Velocity,
                        offset: vec![0.5, 0.0],
                        amplitude: vec![0.2, 0.3],
                        period_steps: 200,
                    },
                    RewardSpec {
                        pos_weights: vec![0.0, 0.0],
                        vel_weights: vec![2.0, 2.0],
                        action_cost: 1e-4,
                    },
                    vec![0.0, 0.0],
                    2.5,
                    vec![10.0, 5.0],
                    NominalLaw::Pd {
                        kp: vec![0.0, 0.0],
                        kd: vec![8.0, 1.0],
                    },
                    TrackingConfig {
                        lambda: Some(vec![0.0, 0.0]),
                        task_weights: vec![1.0, 1.0],
                        error_map: None,
                    },
                    vec![0.1, 0.1],
                ),
            };
        let limits = limits.unwrap_or(default_limits);
        let mut gate = GateParams::for_limits(&limits);
        gate.e_bar = if e_bar.len() == limits.len() {
            e_bar
        } else {
            vec![0.1; limits.len()]
        };
        Self {
            horizon: 3000,
            fault_step: 500,
            dt: 0.01,
            seeds: (0..20).collect(),
            method: Method::ResidualFull,
            calibration: Window { start: 250, end: 500 },
            plant: PlantConfig {
                model,
                reference,
                reward,
                init_radius,
                nominal_bound,
            },
            nominal: NominalConfig { limits, law },
            residual: ResidualConfig {
                features: 64,
                alpha_e: 0.2,
                alpha_i: 0.05,
                seed: 7,
                heads: HeadParams::default(),
                tracking,
            },
            gate,
            metrics: MetricOptions::default(),
            ablation: AblationFlags::default(),
            shift: None,
        }
    }

    /// Parses TOML text, merges it over plant defaults, fills derived fields
    /// and validates every invariant.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<toml>", e.to_string()))?;
        let kind = match user
            .get("plant")
            .and_then(|p| p.get("model"))
            .and_then(|m| m.get("kind"))
        {
            None => PlantKind::Pendulum,
            Some(v) => v
                .clone()
                .try_into::<PlantKind>()
                .map_err(|e| Error::config("plant.model.kind", e.to_string()))?,
        };
        let limits = match user.get("nominal").and_then(|n| n.get("limits")) {
            None => None,
            Some(v) => Some(
                v.clone()
                    .try_into::<Vec<f64>>()
                    .map_err(|e| Error::config("nominal.limits", e.to_string()))?,
            ),
        };
        let defaults = toml::Table::try_from(Self::default_for(kind, limits))
            .map_err(|e| Error::config("<defaults>", e.to_string()))?;
        let merged = merge(toml::Value::Table(defaults), toml::Value::Table(user));
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.resolved()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(
                "<file>",
                format!("cannot read config {}: {e}", path.display()),
            )
        })?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML of the resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn shift_spec(&self) -> Option<ShiftSpec> {
        self.shift.as_ref().map(|s| ShiftSpec {
            family: s.family,
            severity: s.severity,
            fault_step: self.fault_step,
            channel: s.channel,
        })
    }

    /// Builds the frozen nominal controller.
    pub fn controller(&self) -> Result<NominalController> {
        let plant = &self.plant.model;
        let law = match &self.nominal.law {
            NominalLaw::Pd { kp, kd } => ControlLaw::Pd {
                kp: kp.clone().into(),
                kd: kd.clone().into(),
            },
            NominalLaw::Lqr {
                q_diag,
                r_diag,
                iters,
                tol,
            } => {
                let (a, b) = linearize(plant, &plant.nominal_params(), self.dt)?;
                let model = LinearModel {
                    A: a,
                    B: b,
                    Q: nalgebra::DMatrix::from_diagonal(&q_diag.clone().into()),
                    R: nalgebra::DMatrix::from_diagonal(&r_diag.clone().into()),
                };
                let gain = lqr_gain(
                    &model,
                    RiccatiOptions {
                        iters: *iters,
                        tol: *tol,
                    },
                )?;
                ControlLaw::Lqr { gain }
            }
        };
        NominalController::new(law, self.nominal.limits.clone())
    }

    pub fn tracking(&self) -> TrackingWeights {
        let t = &self.residual.tracking;
        TrackingWeights {
            lambda: t.lambda.clone().unwrap_or_default(),
            task_weights: t.task_weights.clone(),
            error_map: t.error_map.clone().unwrap_or_default(),
        }
    }

    /// Fills Λ and the error map from the nominal gains when omitted, then validates.
    ///
    /// PD: `Λ_i = kp_i / kd_i`, identity map. LQR: `Λ_i = K_pos,i / K_vel,i` and the
    /// map is the velocity block of `K` scaled to unit max-norm, so that the mapped
    /// error points along the nominal feedback direction.
    pub fn resolved(mut self) -> Result<Self> {
        self.validate_shape()?;
        let n = self.plant.model.tracked_dim();
        let d = self.plant.model.action_dim();
        if self.residual.tracking.lambda.is_none() || self.residual.tracking.error_map.is_none() {
            let (lambda, map) = match self.controller()?.law() {
                ControlLaw::Pd { kp, kd } => {
                    let lambda = kp
                        .iter()
                        .zip(kd.iter())
                        .map(|(p, d)| if *d > 0.0 { p / d } else { 0.0 })
                        .collect::<Vec<_>>();
                    let map = (0..d)
                        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                        .collect::<Vec<Vec<f64>>>();
                    (lambda, map)
                }
                ControlLaw::Lqr { gain } => {
                    let lambda = (0..n)
                        .map(|i| {
                            let kv = gain[(0, n + i)];
                            let kq = gain[(0, i)];
                            if kv != 0.0 { (kq / kv).max(0.0) } else { 0.0 }
                        })
                        .collect::<Vec<_>>();
                    let map = (0..d)
                        .map(|r| {
                            let row: Vec<f64> = (0..n).map(|j| gain[(r, n + j)]).collect();
                            let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                            row.iter().map(|v| if scale > 0.0 { v / scale } else { 0.0 }).collect()
                        })
                        .collect::<Vec<Vec<f64>>>();
                    (lambda, map)
                }
            };
            if self.residual.tracking.lambda.is_none() {
                self.residual.tracking.lambda = Some(lambda);
            }
            if self.residual.tracking.error_map.is_none() {
                self.residual.tracking.error_map = Some(map);
            }
        }
        self.validate()?;
        Ok(self)
    }

    fn validate_shape(&self) -> Result<()> {
        let plant = &self.plant.model;
        let n = plant.tracked_dim();
        let d = plant.action_dim();
        let dim = |field: &str, want: usize, got: usize| {
            if want != got {
                Err(Error::config(field, format!("expected {want} entries, got {got}")))
            } else {
                Ok(())
            }
        };
        dim("nominal.limits", d, self.nominal.limits.len())?;
        match &self.nominal.law {
            NominalLaw::Pd { kp, kd } => {
                if n != d {
                    return Err(Error::config(
                        "nominal.law.kind",
                        format!("PD needs one action channel per tracked coordinate ({plant:?} has {d} for {n})", plant = plant.kind()),
                    ));
                }
                dim("nominal.law.kp", n, kp.len())?;
                dim("nominal.law.kd", n, kd.len())?;
            }
            NominalLaw::Lqr { q_diag, r_diag, tol, .. } => {
                let (nq, nv) = plant.state_dims();
                if nq != nv {
                    return Err(Error::config("nominal.law.kind", format!("LQR is not available for the {}", plant.kind())));
                }
                dim("nominal.law.q_diag", 2 * n, q_diag.len())?;
                dim("nominal.law.r_diag", d, r_diag.len())?;
                if q_diag.iter().any(|q| *q < 0.0) {
                    return Err(Error::config("nominal.law.q_diag", "Q must be positive semidefinite"));
                }
                if r_diag.iter().any(|r| !(*r > 0.0)) {
                    return Err(Error::config("nominal.law.r_diag", "R must be positive definite"));
                }
                if !(*tol > 0.0) {
                    return Err(Error::config("nominal.law.tol", "tolerance must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        let plant = &self.plant.model;
        let n = plant.tracked_dim();
        let d = plant.action_dim();
        let dim = |field: &str, want: usize, got: usize| {
            if want != got {
                Err(Error::config(field, format!("expected {want} entries, got {got}")))
            } else {
                Ok(())
            }
        };
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "time step must be > 0"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.calibration.start >= self.calibration.end {
            return Err(Error::config("calibration", "calibration window is empty"));
        }
        if self.calibration.end > self.fault_step {
            return Err(Error::config(
                "calibration.end",
                "calibration window must end at or before the fault step",
            ));
        }
        if self.fault_step >= self.horizon {
            return Err(Error::config("fault_step", "horizon must exceed the fault step"));
        }
        let r = &self.plant.reference;
        dim("plant.reference.offset", n, r.offset.len())?;
        dim("plant.reference.amplitude", n, r.amplitude.len())?;
        dim("plant.reward.pos_weights", n, self.plant.reward.pos_weights.len())?;
        dim("plant.reward.vel_weights", n, self.plant.reward.vel_weights.len())?;
        if self.plant.reward.action_cost < 0.0 {
            return Err(Error::config("plant.reward.action_cost", "must be ≥ 0"));
        }
        dim("plant.init_radius", n, self.plant.init_radius.len())?;
        if !(self.plant.nominal_bound > 0.0) {
            return Err(Error::config("plant.nominal_bound", "must be > 0"));
        }
        if self.nominal.limits.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("nominal.limits", "action limits must be > 0"));
        }

        let res = &self.residual;
        TracePair::new(1, res.alpha_e, res.alpha_i)?;
        res.heads.validate()?;
        if res.features == 0 {
            return Err(Error::config("residual.features", "must be ≥ 1"));
        }
        let t = &res.tracking;
        let lambda = t.lambda.as_deref().unwrap_or_default();
        dim("residual.tracking.lambda", n, lambda.len())?;
        if lambda.iter().any(|l| *l < 0.0) {
            return Err(Error::config("residual.tracking.lambda", "Λ ⪰ 0 must be diagonal with nonnegative entries"));
        }
        dim("residual.tracking.task_weights", n, t.task_weights.len())?;
        if t.task_weights.iter().any(|w| *w < 0.0) {
            return Err(Error::config("residual.tracking.task_weights", "task weights must be ≥ 0"));
        }
        let map = t.error_map.as_deref().unwrap_or_default();
        dim("residual.tracking.error_map", d, map.len())?;
        for row in map {
            dim("residual.tracking.error_map", n, row.len())?;
        }

        self.gate.validate()?;
        dim("gate.eps_j", d, self.gate.eps_j.len())?;
        dim("gate.e_bar", d, self.gate.e_bar.len())?;

        let m = &self.metrics;
        if !(m.delta > 0.0) {
            return Err(Error::config("metrics.delta", "δ must be > 0"));
        }
        if !(m.ttr_fraction > 0.0 && m.ttr_fraction <= 1.0) {
            return Err(Error::config("metrics.ttr_fraction", "must lie in (0, 1]"));
        }
        if !(m.ssr_window > 0.0 && m.ssr_window < 1.0) {
            return Err(Error::config("metrics.ssr_window", "must lie in (0, 1)"));
        }
        if let Some(s) = &self.shift {
            if !(s.severity > 0.0 && s.severity.is_finite()) {
                return Err(Error::config("shift.severity", "severity must be > 0"));
            }
            if s.family == ShiftFamily::SignFlip && s.channel >= d {
                return Err(Error::config("shift.channel", format!("channel {} out of range for {d} inputs", s.channel)));
            }
        }
        Ok(())
    }
}

fn merge(base: toml::Value, over: toml::Value) -> toml::Value {
    match (base, over) {
        // a different tagged variant replaces the default instead of merging into it
        (toml::Value::Table(b), toml::Value::Table(o))
            if o.contains_key("kind") && o.get("kind") != b.get("kind") =>
        {
            toml::Value::Table(o)
        }
        (toml::Value::Table(mut b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(existing) => merge(existing, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, o) => o,
    }
}

/// Severity grid and trial count for a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub family: ShiftFamily,
    pub severities: Vec<f64>,
    /// Leading seeds taken from the experiment config; all of them when omitted.
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default = "default_sweep_methods")]
    pub methods: Vec<Method>,
}

fn default_sweep_methods() -> Vec<Method> {
    vec![Method::Frozen, Method::ResidualFull]
}

impl SweepSpec {
    /// Default severity grid for a family.
    pub fn grid(family: ShiftFamily) -> Vec<f64> {
        match family {
            ShiftFamily::Actuator => vec![1.0, 0.9, 0.8, 0.76, 0.7, 0.6],
            ShiftFamily::Mass => vec![1.0, 1.05, 1.1, 1.15, 1.25, 1.5],
            ShiftFamily::Friction => vec![1.0, 1.4, 1.8, 2.1, 2.5, 3.0],
            ShiftFamily::SignFlip => vec![1.0],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<sweep>", e.to_string()))?;
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = format!("sweep.{}", e.path());
            Error::config(path, e.into_inner().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("<file>", format!("cannot read sweep {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.severities.is_empty() || self.severities.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config("sweep.severities", "need at least one severity, all > 0"));
        }
        if self.trials == Some(0) {
            return Err(Error::config("sweep.trials", "trials must be ≥ 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("sweep.methods", "need at least one method"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_pendulum_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.plant.model.kind(), PlantKind::Pendulum);
        assert_eq!((cfg.residual.alpha_e, cfg.residual.alpha_i), (0.2, 0.05));
        assert_eq!(cfg.residual.tracking.lambda, Some(vec![5.0]));
        assert_eq!(cfg.residual.tracking.error_map, Some(vec![vec![1.0]]));
    }

    #[test]
    fn trace_rate_violation_is_rejected_with_constraint() {
        let err = ExperimentConfig::from_toml_str("[residual]\nalpha_e = 0.2\nalpha_i = 0.3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0 < α_I < α_E < 1"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_field_reports_path() {
        let err = ExperimentConfig::from_toml_str("[gate]\nkapa = 0.3\n").unwrap_err();
        match err {
            Error::Config { field, message } => {
                assert!(field.starts_with("gate"), "{field}: {message}");
                assert!(message.contains("kapa"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn wrong_type_reports_path() {
        let err = ExperimentConfig::from_toml_str("[residual.heads]\neta_f0 = \"fast\"\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "residual.heads.eta_f0"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parsing_is_deterministic_and_round_trips() {
        let text = "horizon = 1200\n[plant.model]\nkind = \"cart-pole\"\n[shift]\nfamily = \"mass\"\nseverity = 1.5\n";
        let a = ExperimentConfig::from_toml_str(text).unwrap();
        let b = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let echoed = ExperimentConfig::from_toml_str(&a.to_toml()).unwrap();
        assert_eq!(echoed, a);
        assert_eq!(echoed.hash(), a.hash());
    }

    #[test]
    fn cartpole_error_map_follows_lqr_gain() {
        let cfg = ExperimentConfig::from_toml_str("[plant.model]\nkind = \"cart-pole\"\n").unwrap();
        let map = cfg.residual.tracking.error_map.clone().unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map[0].iter().fold(0.0f64, |m, v| m.max(v.abs())), 1.0);
        assert!(cfg.residual.tracking.lambda.unwrap().iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn invariant_violations() {
        for (text, field) in [
            ("horizon = 400\n", "fault_step"),
            ("seeds = []\n", "seeds"),
            ("[calibration]\nstart = 300\nend = 600\n", "calibration.end"),
            ("[gate]\nkappa = 1.0\n", "gate.kappa"),
            ("[shift]\nfamily = \"mass\"\nseverity = -1.0\n", "shift.severity"),
            ("[residual.tracking]\nlambda = [-1.0]\n", "residual.tracking.lambda"),
            ("[plant.model]\nkind = \"unicycle\"\n[nominal.law]\nkind = \"lqr\"\nq_diag = [1.0, 1.0, 1.0, 1.0]\nr_diag = [1.0, 1.0]\niters = 10\ntol = 1e-6\n", "nominal.law.kind"),
        ] {
            match ExperimentConfig::from_toml_str(text) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_shift_family_is_a_config_error() {
        let err = ExperimentConfig::from_toml_str("[shift]\nfamily = \"gravity\"\nseverity = 1.1\n").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn limits_override_rescales_gate_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[nominal]\nlimits = [10.0]\n").unwrap();
        assert_eq!(cfg.gate.eps, 3.0);
        assert_eq!(cfg.gate.eps_j, vec![5.0]);
    }

    #[test]
    fn sweep_spec_parses() {
        let s = SweepSpec::from_toml_str("family = \"mass\"\nseverities = [1.0, 1.5]\ntrials = 3\n").unwrap();
        assert_eq!(s.methods, vec![Method::Frozen, Method::ResidualFull]);
        assert!(SweepSpec::from_toml_str("family = \"mass\"\nseverities = []\n").is_err());
        assert!(SweepSpec::from_toml_str("family = \"mass\"\nseverities = [1.0]\nbogus = 1\n").is_err());
    }
}
