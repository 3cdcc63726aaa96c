//! Stability alignment gate.
//!
//! Four coupled mechanisms regulate the residual channel: hard magnitude
//! bounds, attenuation of components that oppose the nominal action,
//! activation only after sustained degradation of the smoothed performance,
//! and adaptive global/per-channel gains. The gate also owns the boost
//! variable that scales the fast-head learning rate.
//!
//! Per step the harness calls [`apply_gate`] with the current state, then
//! [`GateState::observe`] once the reward and tracking error are known.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::check_dim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateParams {
    /// Global bound on `‖u‖₂`.
    pub eps: f64,
    /// Per-channel bounds on `|u_j|`.
    pub eps_j: Vec<f64>,
    pub kappa: f64,
    pub xi: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub k_gamma: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub k_beta: f64,
    pub e_bar: Vec<f64>,
    pub b_max: f64,
    pub rho_b: f64,
    pub alpha_b: f64,
    pub eps_bar: f64,
    pub alpha_j: f64,
    /// Degradation threshold as a fraction of `|J*|`.
    pub act_drop_frac: f64,
    pub act_steps: usize,
    /// Clip γ to `[0, γ_max]` instead of `[γ_min, γ_max]`.
    pub gamma_clip_zero: bool,
    /// Let β decay toward `β_min` by `k_β` on steps where the channel error is below threshold.
    pub beta_decay: bool,
}

impl GateParams {
    /// Defaults scaled to a controller's action limits.
    pub fn for_limits(limits: &[f64]) -> Self {
        let max = limits.iter().copied().fold(0.0, f64::max);
        Self {
            eps: 0.3 * max,
            eps_j: limits.iter().map(|l| 0.5 * l).collect(),
            kappa: 0.2,
            xi: 1e-8,
            gamma_min: 0.0,
            gamma_max: 1.0,
            k_gamma: 1.0,
            beta_min: 0.5,
            beta_max: 2.0,
            k_beta: 0.05,
            e_bar: vec![0.1; limits.len()],
            b_max: 4.0,
            rho_b: 0.99,
            alpha_b: 0.1,
            eps_bar: 0.1,
            alpha_j: 0.02,
            act_drop_frac: 0.1,
            act_steps: 20,
            gamma_clip_zero: false,
            beta_decay: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("gate.{field}"), msg));
        if !(self.eps > 0.0) {
            return bad("eps", format!("ε must be > 0 (got {})", self.eps));
        }
        if self.eps_j.iter().any(|e| !(*e > 0.0)) {
            return bad("eps_j", "every ε_j must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return bad("kappa", format!("κ must lie in [0, 1) (got {})", self.kappa));
        }
        if !(self.xi > 0.0) {
            return bad("xi", "ξ must be > 0".into());
        }
        if !(0.0 <= self.gamma_min && self.gamma_min <= self.gamma_max) {
            return bad("gamma_min", "need 0 ≤ γ_min ≤ γ_max".into());
        }
        if !(self.beta_min <= self.beta_max && self.beta_min >= 0.0) {
            return bad("beta_min", "need 0 ≤ β_min ≤ β_max".into());
        }
        if !(self.rho_b > 0.0 && self.rho_b < 1.0) {
            return bad("rho_b", format!("ρ_b must lie in (0, 1) (got {})", self.rho_b));
        }
        if !(self.b_max >= 0.0) {
            return bad("b_max", "b_max must be ≥ 0".into());
        }
        if !(self.alpha_j > 0.0 && self.alpha_j <= 1.0) {
            return bad("alpha_j", "α_J must lie in (0, 1]".into());
        }
        if self.k_gamma < 0.0 || self.k_beta < 0.0 || self.alpha_b < 0.0 {
            return bad("k_gamma", "gain constants must be ≥ 0".into());
        }
        if self.eps_j.len() != self.e_bar.len() {
            return bad("e_bar", "e_bar and eps_j must have one entry per action channel".into());
        }
        Ok(())
    }
}

/// Mechanism switches used by the ablation suite and the unconstrained baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateFlags {
    pub directional: bool,
    pub clip: bool,
    /// Adaptive γ/β. When off, γ = γ_max and β ≡ 1 once active.
    pub adaptive_gain: bool,
    pub boost: bool,
}

impl Default for GateFlags {
    fn default() -> Self {
        Self {
            directional: true,
            clip: true,
            adaptive_gain: true,
            boost: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateState {
    pub gamma: f64,
    pub beta: DVector<f64>,
    pub b: f64,
    pub j_bar: f64,
    pub j_star: Option<f64>,
    pub j_min: f64,
    pub active: bool,
    pub drop_counter: usize,
}

impl GateState {
    pub fn new(channels: usize, params: &GateParams) -> Self {
        Self {
            gamma: params.gamma_min,
            beta: DVector::from_element(channels, 1.0f64.clamp(params.beta_min, params.beta_max)),
            b: 0.0,
            j_bar: 0.0,
            j_star: None,
            j_min: f64::INFINITY,
            active: false,
            drop_counter: 0,
        }
    }

    /// Post-step bookkeeping: performance smoothing, activation, γ, β, boost.
    ///
    /// Returns the fast-head learning-rate multiplier `1 + b_t` that applies to
    /// this step's plasticity update (boost before its own update).
    pub fn observe(
        &mut self,
        reward: f64,
        channel_error: &DVector<f64>,
        task_error: f64,
        params: &GateParams,
        flags: GateFlags,
    ) -> Result<f64> {
        self.j_bar = smooth_performance(self.j_bar, reward, params.alpha_j);
        update_activation(self, params);
        let boost = 1.0 + self.b;
        if self.active {
            if flags.adaptive_gain {
                self.gamma = authority_gain(self, params);
                self.beta = per_joint_gain_update(&self.beta, channel_error, params)?;
            } else {
                self.gamma = params.gamma_max;
                self.beta.fill(1.0);
            }
            self.b = if flags.boost {
                boost_update(self.b, task_error, params)
            } else {
                0.0
            };
        }
        Ok(boost)
    }
}

pub fn smooth_performance(j_bar: f64, r: f64, alpha_j: f64) -> f64 {
    j_bar + alpha_j * (r - j_bar)
}

/// Degradation counter, latch and running minimum. No-op until J* is known.
pub fn update_activation(gs: &mut GateState, params: &GateParams) {
    let Some(j_star) = gs.j_star else {
        return;
    };
    let threshold = j_star - params.act_drop_frac * j_star.abs();
    if gs.j_bar < threshold {
        gs.drop_counter += 1;
    } else {
        gs.drop_counter = 0;
    }
    if !gs.active && gs.drop_counter >= params.act_steps {
        gs.active = true;
        gs.j_min = gs.j_bar;
    }
    if gs.active {
        gs.j_min = gs.j_min.min(gs.j_bar);
    }
}

/// `c = ⟨a_nom, a_res⟩ / (‖a_nom‖‖a_res‖ + ξ)`.
pub fn cosine_alignment(a_nom: &DVector<f64>, a_res: &DVector<f64>, xi: f64) -> f64 {
    a_nom.dot(a_res) / (a_nom.norm() * a_res.norm() + xi)
}

/// `ρ(c) u` with `ρ = 1` for `c ≥ 0` and `κ` otherwise.
pub fn directional_gate(u: &DVector<f64>, c: f64, kappa: f64) -> DVector<f64> {
    if c >= 0.0 {
        u.clone()
    } else {
        u * kappa
    }
}

/// Global authority from the normalized performance deficit.
pub fn authority_gain(gs: &GateState, params: &GateParams) -> f64 {
    let Some(j_star) = gs.j_star.filter(|_| gs.active) else {
        return params.gamma_min;
    };
    let raw = params.gamma_min
        + params.k_gamma * (j_star - gs.j_bar) / (j_star - gs.j_min + params.xi);
    let lo = if params.gamma_clip_zero { 0.0 } else { params.gamma_min };
    if raw.is_nan() {
        return lo;
    }
    raw.clamp(lo, params.gamma_max)
}

pub fn per_joint_gain_update(beta: &DVector<f64>, e: &DVector<f64>, params: &GateParams) -> Result<DVector<f64>> {
    check_dim("per-channel gains", beta.len(), e.len())?;
    check_dim("per-channel thresholds", beta.len(), params.e_bar.len())?;
    Ok(DVector::from_fn(beta.len(), |j, _| {
        let above = e[j].abs() > params.e_bar[j];
        let next = if above {
            beta[j] + params.k_beta
        } else if params.beta_decay {
            beta[j] - params.k_beta
        } else {
            beta[j]
        };
        next.clamp(params.beta_min, params.beta_max)
    }))
}

pub fn boost_update(b: f64, eps_t: f64, params: &GateParams) -> f64 {
    let kick = if eps_t > params.eps_bar { params.alpha_b } else { 0.0 };
    (params.rho_b * b + kick).clamp(0.0, params.b_max)
}

pub fn effective_learning_rate(eta_f0: f64, b: f64) -> f64 {
    eta_f0 * (1.0 + b)
}

/// Component clamp to `±ε_j`, then radial projection onto `‖u‖₂ ≤ ε`.
pub fn clip_authority(u: &DVector<f64>, params: &GateParams) -> DVector<f64> {
    let mut out = DVector::from_fn(u.len(), |j, _| {
        let bound = params.eps_j.get(j).copied().unwrap_or(params.eps);
        u[j].clamp(-bound, bound)
    });
    let n = out.norm();
    if n > params.eps {
        out *= params.eps / n;
        // the rescale can land one ulp above ε; shrink until it does not
        while out.norm() > params.eps {
            out *= 1.0 - f64::EPSILON;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDiagnostics {
    pub c: f64,
    pub gamma: f64,
    pub u_norm: f64,
    pub active: bool,
}

/// Scale, align, clip. Inactive gates inject exactly zero.
pub fn apply_gate(
    a_nom: &DVector<f64>,
    a_res: &DVector<f64>,
    gs: &GateState,
    params: &GateParams,
    flags: GateFlags,
) -> Result<(DVector<f64>, GateDiagnostics)> {
    check_dim("gate residual", a_nom.len(), a_res.len())?;
    check_dim("gate β", a_nom.len(), gs.beta.len())?;
    if !gs.active {
        return Ok((
            DVector::zeros(a_nom.len()),
            GateDiagnostics {
                c: 0.0,
                gamma: gs.gamma,
                u_norm: 0.0,
                active: false,
            },
        ));
    }
    let mut u = gs.beta.component_mul(a_res) * gs.gamma;
    let c = cosine_alignment(a_nom, &u, params.xi);
    if flags.directional {
        u = directional_gate(&u, c, params.kappa);
    }
    if flags.clip {
        u = clip_authority(&u, params);
    }
    Ok((
        u.clone(),
        GateDiagnostics {
            c,
            gamma: gs.gamma,
            u_norm: u.norm(),
            active: true,
        },
    ))
}
