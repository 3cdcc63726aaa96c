//! Desk-scale testbed dynamics.
//!
//! Three plants integrate with semi-implicit Euler: an inverted pendulum
//! (1 input), a cart-pole (1 input) and a planar unicycle with first-order
//! velocity dynamics (2 inputs). Physical parameters can be shifted once,
//! mid-episode, through [`apply_shift`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    Pendulum,
    CartPole,
    Unicycle,
}

impl fmt::Display for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlantKind::Pendulum => "pendulum",
            PlantKind::CartPole => "cart-pole",
            PlantKind::Unicycle => "unicycle",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub t: usize,
}

impl PlantState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        Self {
            q: DVector::from_vec(q),
            qdot: DVector::from_vec(qdot),
            t: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// Physical parameter vector. Scales are multiplicative and nominally 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub actuator_scale: f64,
    pub mass_scale: f64,
    pub friction: f64,
    /// Extra gain on a single action channel, `(channel, gain)`. Used by the
    /// sign-flip fault; `None` under nominal conditions.
    pub channel_gain: Option<(usize, f64)>,
}

impl PlantParams {
    pub fn nominal(friction: f64) -> Self {
        Self {
            actuator_scale: 1.0,
            mass_scale: 1.0,
            friction,
            channel_gain: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftFamily {
    Actuator,
    Mass,
    Friction,
    /// Multiplies one action channel by `-severity`.
    SignFlip,
}

impl ShiftFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShiftFamily::Actuator => "actuator",
            ShiftFamily::Mass => "mass",
            ShiftFamily::Friction => "friction",
            ShiftFamily::SignFlip => "sign-flip",
        }
    }
}

impl fmt::Display for ShiftFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShiftFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actuator" => Ok(ShiftFamily::Actuator),
            "mass" => Ok(ShiftFamily::Mass),
            "friction" => Ok(ShiftFamily::Friction),
            "sign-flip" => Ok(ShiftFamily::SignFlip),
            other => Err(Error::config(
                "shift.family",
                format!("unknown shift family `{other}` (expected actuator, mass, friction or sign-flip)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub family: ShiftFamily,
    pub severity: f64,
    pub fault_step: usize,
    /// Target channel for [`ShiftFamily::SignFlip`].
    #[serde(default)]
    pub channel: usize,
}

/// Applies a parameter shift. Exactly one field of `params` changes.
pub fn apply_shift(params: &PlantParams, shift: &ShiftSpec) -> Result<PlantParams> {
    if !(shift.severity > 0.0 && shift.severity.is_finite()) {
        return Err(Error::config(
            "shift.severity",
            format!("severity must be finite and > 0, got {}", shift.severity),
        ));
    }
    let mut out = params.clone();
    match shift.family {
        ShiftFamily::Actuator => out.actuator_scale *= shift.severity,
        ShiftFamily::Mass => out.mass_scale *= shift.severity,
        ShiftFamily::Friction => out.friction *= shift.severity,
        ShiftFamily::SignFlip => out.channel_gain = Some((shift.channel, -shift.severity)),
    }
    Ok(out)
}

/// Reference in tracked coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    pub q_ref: DVector<f64>,
    pub qdot_ref: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// `offset + amplitude * sin(w t)` is a position setpoint.
    Position,
    /// `offset + amplitude * sin(w t)` is a commanded velocity; positions are its integral.
    Velocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub mode: ReferenceMode,
    pub offset: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// Period in steps; zero means constant.
    pub period_steps: usize,
}

pub fn reference(t: usize, spec: &ReferenceSpec, dt: f64) -> ReferenceSignal {
    let n = spec.offset.len();
    let amp = |i: usize| spec.amplitude.get(i).copied().unwrap_or(0.0);
    if spec.period_steps == 0 {
        return match spec.mode {
            ReferenceMode::Position => ReferenceSignal {
                q_ref: DVector::from_column_slice(&spec.offset),
                qdot_ref: DVector::zeros(n),
            },
            ReferenceMode::Velocity => ReferenceSignal {
                q_ref: DVector::from_iterator(n, spec.offset.iter().map(|v| v * t as f64 * dt)),
                qdot_ref: DVector::from_column_slice(&spec.offset),
            },
        };
    }
    // phase from the step index modulo the period keeps outputs exactly periodic
    let k = t % spec.period_steps;
    let phase = 2.0 * PI * k as f64 / spec.period_steps as f64;
    let w = 2.0 * PI / (spec.period_steps as f64 * dt);
    let (s, c) = phase.sin_cos();
    match spec.mode {
        ReferenceMode::Position => ReferenceSignal {
            q_ref: DVector::from_fn(n, |i, _| spec.offset[i] + amp(i) * s),
            qdot_ref: DVector::from_fn(n, |i, _| amp(i) * w * c),
        },
        ReferenceMode::Velocity => ReferenceSignal {
            q_ref: DVector::from_fn(n, |i, _| {
                spec.offset[i] * t as f64 * dt + amp(i) * (1.0 - c) / w
            }),
            qdot_ref: DVector::from_fn(n, |i, _| spec.offset[i] + amp(i) * s),
        },
    }
}

/// Reward shaping weights, per tracked coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub pos_weights: Vec<f64>,
    pub vel_weights: Vec<f64>,
    pub action_cost: f64,
}

/// `exp(-|weighted tracking error|^2) - action_cost * |action|^2`.
pub fn reward(
    pos: &DVector<f64>,
    vel: &DVector<f64>,
    action: &DVector<f64>,
    reference: &ReferenceSignal,
    spec: &RewardSpec,
) -> Result<f64> {
    check_dim("reward position", reference.q_ref.len(), pos.len())?;
    check_dim("reward velocity", reference.qdot_ref.len(), vel.len())?;
    check_dim("reward position weights", pos.len(), spec.pos_weights.len())?;
    check_dim("reward velocity weights", vel.len(), spec.vel_weights.len())?;
    let mut sq = 0.0;
    for i in 0..pos.len() {
        let e = spec.pos_weights[i] * (pos[i] - reference.q_ref[i]);
        sq += e * e;
    }
    for i in 0..vel.len() {
        let e = spec.vel_weights[i] * (vel[i] - reference.qdot_ref[i]);
        sq += e * e;
    }
    let r = (-sq).exp() - spec.action_cost * action.norm_squared();
    if !r.is_finite() {
        return Err(Error::Blowup {
            step: 0,
            what: "non-finite reward".into(),
        });
    }
    Ok(r)
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub friction: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            friction: 0.5,
        }
    }
}

impl Pendulum {
    /// Angular acceleration, angle measured from upright.
    pub fn accel(&self, theta: f64, omega: f64, torque: f64, params: &PlantParams) -> f64 {
        let inertia = params.mass_scale * self.mass * self.length * self.length;
        self.gravity / self.length * theta.sin() + (torque - params.friction * omega) / inertia
    }

    pub fn energy(&self, theta: f64, omega: f64) -> f64 {
        let m = self.mass;
        let l = self.length;
        0.5 * m * l * l * omega * omega + m * self.gravity * l * theta.cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartPole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub gravity: f64,
    pub friction: f64,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
            friction: 0.1,
        }
    }
}

impl CartPole {
    /// `(x_ddot, theta_ddot)` for a pole angle measured from upright.
    pub fn accel(&self, theta: f64, xdot: f64, thetadot: f64, force: f64, params: &PlantParams) -> (f64, f64) {
        let mc = params.mass_scale * self.cart_mass;
        let mp = params.mass_scale * self.pole_mass;
        let total = mc + mp;
        let l = self.half_length;
        let (s, c) = theta.sin_cos();
        let f = force - params.friction * xdot;
        let temp = (f + mp * l * thetadot * thetadot * s) / total;
        let theta_acc = (self.gravity * s - c * temp) / (l * (4.0 / 3.0 - mp * c * c / total));
        let x_acc = temp - mp * l * theta_acc * c / total;
        (x_acc, theta_acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Unicycle {
    pub mass: f64,
    pub inertia: f64,
    pub friction: f64,
    /// Rotational drag as a multiple of the translational coefficient.
    pub rot_friction_ratio: f64,
}

impl Default for Unicycle {
    fn default() -> Self {
        Self {
            mass: 2.0,
            inertia: 0.2,
            friction: 1.0,
            rot_friction_ratio: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Plant {
    Pendulum(Pendulum),
    CartPole(CartPole),
    Unicycle(Unicycle),
}

impl Plant {
    pub fn default_for(kind: PlantKind) -> Self {
        match kind {
            PlantKind::Pendulum => Plant::Pendulum(Pendulum::default()),
            PlantKind::CartPole => Plant::CartPole(CartPole::default()),
            PlantKind::Unicycle => Plant::Unicycle(Unicycle::default()),
        }
    }

    pub fn kind(&self) -> PlantKind {
        match self {
            Plant::Pendulum(_) => PlantKind::Pendulum,
            Plant::CartPole(_) => PlantKind::CartPole,
            Plant::Unicycle(_) => PlantKind::Unicycle,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Plant::Pendulum(_) | Plant::CartPole(_) => 1,
            Plant::Unicycle(_) => 2,
        }
    }

    /// `(dim q, dim qdot)`.
    pub fn state_dims(&self) -> (usize, usize) {
        match self {
            Plant::Pendulum(_) => (1, 1),
            Plant::CartPole(_) => (2, 2),
            Plant::Unicycle(_) => (3, 2),
        }
    }

    /// Number of tracked coordinates (positions and velocities have equal length).
    pub fn tracked_dim(&self) -> usize {
        match self {
            Plant::Pendulum(_) => 1,
            Plant::CartPole(_) | Plant::Unicycle(_) => 2,
        }
    }

    pub fn nominal_friction(&self) -> f64 {
        match self {
            Plant::Pendulum(p) => p.friction,
            Plant::CartPole(p) => p.friction,
            Plant::Unicycle(p) => p.friction,
        }
    }

    pub fn nominal_params(&self) -> PlantParams {
        PlantParams::nominal(self.nominal_friction())
    }

    pub fn equilibrium(&self) -> PlantState {
        let (nq, nv) = self.state_dims();
        PlantState {
            q: DVector::zeros(nq),
            qdot: DVector::zeros(nv),
            t: 0,
        }
    }

    /// Tracked `(positions, velocities)`. The unicycle tracks forward progress
    /// and heading against body velocities.
    pub fn tracked(&self, state: &PlantState) -> (DVector<f64>, DVector<f64>) {
        match self {
            Plant::Pendulum(_) | Plant::CartPole(_) => (state.q.clone(), state.qdot.clone()),
            Plant::Unicycle(_) => (
                DVector::from_vec(vec![state.q[0], state.q[2]]),
                state.qdot.clone(),
            ),
        }
    }

    /// Euclidean distance of the tracked coordinates from the reference.
    pub fn distance_to_reference(&self, state: &PlantState, reference: &ReferenceSignal) -> f64 {
        let (pos, vel) = self.tracked(state);
        ((pos - &reference.q_ref).norm_squared() + (vel - &reference.qdot_ref).norm_squared()).sqrt()
    }

    /// Action actually delivered by the actuators.
    pub fn applied_action(&self, action: &DVector<f64>, params: &PlantParams) -> DVector<f64> {
        let mut applied = action * params.actuator_scale;
        if let Some((ch, gain)) = params.channel_gain {
            if ch < applied.len() {
                applied[ch] *= gain;
            }
        }
        applied
    }

    /// One semi-implicit Euler step: velocities first, then positions from the
    /// updated velocities.
    pub fn step(
        &self,
        state: &PlantState,
        action: &DVector<f64>,
        params: &PlantParams,
        dt: f64,
    ) -> Result<PlantState> {
        check_dim("plant action", self.action_dim(), action.len())?;
        let (nq, nv) = self.state_dims();
        check_dim("plant q", nq, state.q.len())?;
        check_dim("plant qdot", nv, state.qdot.len())?;
        if !(dt > 0.0) {
            return Err(Error::config("dt", "time step must be > 0"));
        }
        if !state.is_finite() || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Blowup {
                step: state.t,
                what: "non-finite state or action".into(),
            });
        }
        let u = self.applied_action(action, params);
        let mut q = state.q.clone();
        let mut qdot = state.qdot.clone();
        match self {
            Plant::Pendulum(p) => {
                qdot[0] += dt * p.accel(q[0], qdot[0], u[0], params);
                q[0] += dt * qdot[0];
            }
            Plant::CartPole(p) => {
                let (xa, ta) = p.accel(q[1], qdot[0], qdot[1], u[0], params);
                qdot[0] += dt * xa;
                qdot[1] += dt * ta;
                q[0] += dt * qdot[0];
                q[1] += dt * qdot[1];
            }
            Plant::Unicycle(p) => {
                let m = params.mass_scale * p.mass;
                let inertia = params.mass_scale * p.inertia;
                qdot[0] += dt * (u[0] - params.friction * qdot[0]) / m;
                qdot[1] += dt * (u[1] - params.friction * p.rot_friction_ratio * qdot[1]) / inertia;
                let heading = q[2];
                q[0] += dt * qdot[0] * heading.cos();
                q[1] += dt * qdot[0] * heading.sin();
                q[2] += dt * qdot[1];
            }
        }
        let next = PlantState {
            q,
            qdot,
            t: state.t + 1,
        };
        if !next.is_finite() {
            return Err(Error::Blowup {
                step: state.t,
                what: "non-finite successor state".into(),
            });
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum() -> Plant {
        Plant::default_for(PlantKind::Pendulum)
    }

    /// Classical RK4 on the continuous cart-pole dynamics; independent of `step`.
    fn cartpole_rk4(p: &CartPole, s: [f64; 4], force: f64, dt: f64, substeps: usize) -> [f64; 4] {
        let params = PlantParams::nominal(p.friction);
        let f = |s: [f64; 4]| {
            let (xa, ta) = p.accel(s[1], s[2], s[3], force, &params);
            [s[2], s[3], xa, ta]
        };
        let h = dt / substeps as f64;
        let mut s = s;
        for _ in 0..substeps {
            let add = |a: [f64; 4], b: [f64; 4], k: f64| {
                [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]]
            };
            let k1 = f(s);
            let k2 = f(add(s, k1, h / 2.0));
            let k3 = f(add(s, k2, h / 2.0));
            let k4 = f(add(s, k3, h));
            for i in 0..4 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        s
    }

    #[test]
    fn pendulum_upright_is_fixed_point() {
        let plant = pendulum();
        let s0 = plant.equilibrium();
        let s1 = plant
            .step(&s0, &DVector::zeros(1), &plant.nominal_params(), 0.01)
            .unwrap();
        assert_eq!(s1.q, s0.q);
        assert_eq!(s1.qdot, s0.qdot);
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn zero_actuator_gain_ignores_torque() {
        let plant = pendulum();
        let mut params = plant.nominal_params();
        params.actuator_scale = 0.0;
        let s0 = plant.equilibrium();
        let a = plant.step(&s0, &DVector::from_element(1, 3.0), &params, 0.01).unwrap();
        let b = plant.step(&s0, &DVector::zeros(1), &params, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cartpole_step_matches_rk4_oracle() {
        let plant = Plant::default_for(PlantKind::CartPole);
        let Plant::CartPole(cp) = &plant else { unreachable!() };
        let s0 = PlantState::new(vec![0.0, 0.05], vec![0.0, 0.0]);
        let s1 = plant
            .step(&s0, &DVector::zeros(1), &plant.nominal_params(), 0.01)
            .unwrap();
        let oracle = cartpole_rk4(cp, [0.0, 0.05, 0.0, 0.0], 0.0, 0.01, 100);
        let got = [s1.q[0], s1.q[1], s1.qdot[0], s1.qdot[1]];
        for i in 0..4 {
            assert!((got[i] - oracle[i]).abs() < 1e-4, "component {i}: {} vs {}", got[i], oracle[i]);
        }
    }

    #[test]
    fn cartpole_and_unicycle_equilibria_are_fixed_points() {
        for kind in [PlantKind::CartPole, PlantKind::Unicycle] {
            let plant = Plant::default_for(kind);
            let s0 = plant.equilibrium();
            let a = DVector::zeros(plant.action_dim());
            let s1 = plant.step(&s0, &a, &plant.nominal_params(), 0.01).unwrap();
            assert_eq!(s1.q, s0.q, "{kind}");
            assert_eq!(s1.qdot, s0.qdot, "{kind}");
        }
    }

    #[test]
    fn step_is_deterministic() {
        let plant = Plant::default_for(PlantKind::CartPole);
        let s0 = PlantState::new(vec![0.1, -0.2], vec![0.3, 0.05]);
        let a = DVector::from_element(1, 1.7);
        let p = plant.nominal_params();
        let s1 = plant.step(&s0, &a, &p, 0.01).unwrap();
        let s2 = plant.step(&s0, &a, &p, 0.01).unwrap();
        assert_eq!(s1.q.as_slice(), s2.q.as_slice());
        assert_eq!(s1.qdot.as_slice(), s2.qdot.as_slice());
    }

    #[test]
    fn non_finite_action_reports_step() {
        let plant = pendulum();
        let mut s0 = plant.equilibrium();
        s0.t = 17;
        let err = plant
            .step(&s0, &DVector::from_element(1, f64::NAN), &plant.nominal_params(), 0.01)
            .unwrap_err();
        assert!(matches!(err, Error::Blowup { step: 17, .. }));
        assert!(err.to_string().contains("numerical blowup"));
    }

    #[test]
    fn wrong_action_dimension_is_rejected() {
        let plant = Plant::default_for(PlantKind::Unicycle);
        let err = plant
            .step(&plant.equilibrium(), &DVector::zeros(1), &plant.nominal_params(), 0.01)
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn pendulum_energy_drift_is_second_order() {
        let plant = pendulum();
        let Plant::Pendulum(p) = &plant else { unreachable!() };
        let mut params = plant.nominal_params();
        params.friction = 0.0;
        for dt in [0.01, 0.005] {
            // swing through the bottom from a large angle
            let mut s = PlantState::new(vec![2.5], vec![0.0]);
            let mut worst: f64 = 0.0;
            for _ in 0..2000 {
                let n = plant.step(&s, &DVector::zeros(1), &params, dt).unwrap();
                let de = p.energy(n.q[0], n.qdot[0]) - p.energy(s.q[0], s.qdot[0]);
                worst = worst.max(de.abs());
                s = n;
            }
            // |dE| per step bounded by C dt^2 with C from the energy scale m g l omega_max
            assert!(worst <= 20.0 * p.mass * p.gravity * p.length * dt * dt, "dt={dt} worst={worst}");
        }
    }

    #[test]
    fn shift_examples() {
        let nominal = PlantParams::nominal(0.5);
        let shift = |family, severity| ShiftSpec {
            family,
            severity,
            fault_step: 500,
            channel: 0,
        };
        let m = apply_shift(&nominal, &shift(ShiftFamily::Mass, 1.15)).unwrap();
        assert_eq!(m.mass_scale, 1.15);
        assert_eq!((m.actuator_scale, m.friction), (1.0, 0.5));
        let f = apply_shift(&nominal, &shift(ShiftFamily::Friction, 2.1)).unwrap();
        assert_eq!(f.friction, 0.5 * 2.1);
        let a = apply_shift(&nominal, &shift(ShiftFamily::Actuator, 1.0)).unwrap();
        assert_eq!(a, nominal);
        let flip = apply_shift(&nominal, &shift(ShiftFamily::SignFlip, 1.0)).unwrap();
        assert_eq!(flip.channel_gain, Some((0, -1.0)));
        assert!(apply_shift(&nominal, &shift(ShiftFamily::Mass, 0.0)).is_err());
        assert!("gravity".parse::<ShiftFamily>().is_err());
    }

    #[test]
    fn reward_examples() {
        let spec = RewardSpec {
            pos_weights: vec![2.0],
            vel_weights: vec![0.5],
            action_cost: 0.01,
        };
        let r = ReferenceSignal {
            q_ref: DVector::from_element(1, 0.3),
            qdot_ref: DVector::from_element(1, 0.0),
        };
        let on = reward(&r.q_ref, &r.qdot_ref, &DVector::zeros(1), &r, &spec).unwrap();
        assert_eq!(on, 1.0);
        let mut last = on;
        for k in 1..20 {
            let pos = DVector::from_element(1, 0.3 + 0.05 * k as f64);
            let v = reward(&pos, &r.qdot_ref, &DVector::zeros(1), &r, &spec).unwrap();
            assert!(v < last);
            last = v;
        }
        // exp(-((2*0.2)^2 + (0.5*1.0)^2)) - 0.01 * 1.5^2, evaluated by hand
        let v = reward(
            &DVector::from_element(1, 0.5),
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 1.5),
            &r,
            &spec,
        )
        .unwrap();
        assert!((v - 0.641_150_250_136_319_4).abs() < 1e-12, "{v}");
    }

    #[test]
    fn reference_examples() {
        let constant = ReferenceSpec {
            mode: ReferenceMode::Position,
            offset: vec![0.0],
            amplitude: vec![0.0],
            period_steps: 0,
        };
        for t in [0, 1, 999] {
            let r = reference(t, &constant, 0.01);
            assert_eq!(r.q_ref[0], 0.0);
            assert_eq!(r.qdot_ref[0], 0.0);
        }
        let wheeled = ReferenceSpec {
            mode: ReferenceMode::Velocity,
            offset: vec![0.5, 0.0],
            amplitude: vec![0.0, 0.0],
            period_steps: 0,
        };
        let r = reference(40, &wheeled, 0.01);
        assert_eq!(r.qdot_ref.as_slice(), &[0.5, 0.0]);
        let periodic = ReferenceSpec {
            mode: ReferenceMode::Position,
            offset: vec![0.1, 0.0],
            amplitude: vec![0.3, 0.0],
            period_steps: 150,
        };
        for t in [0, 7, 149, 1234] {
            assert_eq!(reference(t, &periodic, 0.01), reference(t + 150, &periodic, 0.01));
        }
    }
}
