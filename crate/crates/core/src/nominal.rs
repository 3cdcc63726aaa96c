//! Frozen nominal controllers: per-DOF PD and discrete-time LQR.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plant::{check_dim, Plant, PlantParams, PlantState, ReferenceSignal};

#[derive(Debug, Clone, PartialEq)]
pub enum ControlLaw {
    /// `kp ⊙ (q_ref - q) + kd ⊙ (qdot_ref - qdot)`, one pair per tracked coordinate.
    Pd { kp: DVector<f64>, kd: DVector<f64> },
    /// `-K [q - q_ref; qdot - qdot_ref]`.
    Lqr { gain: DMatrix<f64> },
}

/// A stateless control map whose gains cannot change after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalController {
    law: ControlLaw,
    limits: DVector<f64>,
}

impl NominalController {
    pub fn new(law: ControlLaw, limits: Vec<f64>) -> Result<Self> {
        if limits.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("nominal.limits", "action limits must be > 0"));
        }
        let limits = DVector::from_vec(limits);
        match &law {
            ControlLaw::Pd { kp, kd } => {
                check_dim("PD gains", kp.len(), kd.len())?;
                check_dim("PD limits", kp.len(), limits.len())?;
            }
            ControlLaw::Lqr { gain } => check_dim("LQR limits", gain.nrows(), limits.len())?,
        }
        Ok(Self { law, limits })
    }

    pub fn law(&self) -> &ControlLaw {
        &self.law
    }

    pub fn limits(&self) -> &DVector<f64> {
        &self.limits
    }

    pub fn action_dim(&self) -> usize {
        self.limits.len()
    }

    /// Saturated nominal action from tracked coordinates.
    pub fn action(
        &self,
        pos: &DVector<f64>,
        vel: &DVector<f64>,
        reference: &ReferenceSignal,
    ) -> Result<DVector<f64>> {
        if pos.iter().chain(vel.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Blowup {
                step: 0,
                what: "non-finite state passed to nominal controller".into(),
            });
        }
        check_dim("nominal position", reference.q_ref.len(), pos.len())?;
        check_dim("nominal velocity", reference.qdot_ref.len(), vel.len())?;
        let raw = match &self.law {
            ControlLaw::Pd { kp, kd } => {
                check_dim("PD state", kp.len(), pos.len())?;
                kp.component_mul(&(&reference.q_ref - pos))
                    + kd.component_mul(&(&reference.qdot_ref - vel))
            }
            ControlLaw::Lqr { gain } => {
                let mut err = DVector::zeros(pos.len() + vel.len());
                err.rows_mut(0, pos.len()).copy_from(&(pos - &reference.q_ref));
                err.rows_mut(pos.len(), vel.len())
                    .copy_from(&(vel - &reference.qdot_ref));
                check_dim("LQR state", gain.ncols(), err.len())?;
                -(gain * err)
            }
        };
        Ok(raw.zip_map(&self.limits, |a, l| a.clamp(-l, l)))
    }

    /// Convenience wrapper over [`NominalController::action`] for a plant state.
    pub fn nominal_action(
        &self,
        plant: &Plant,
        state: &PlantState,
        reference: &ReferenceSignal,
    ) -> Result<DVector<f64>> {
        let (pos, vel) = plant.tracked(state);
        self.action(&pos, &vel, reference).map_err(|e| match e {
            Error::Blowup { what, .. } => Error::Blowup {
                step: state.t,
                what,
            },
            other => other,
        })
    }

    /// SHA-256 over the gain and limit bit patterns.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |xs: &[f64]| {
            for x in xs {
                h.update(x.to_bits().to_le_bytes());
            }
        };
        match &self.law {
            ControlLaw::Pd { kp, kd } => {
                feed(kp.as_slice());
                feed(kd.as_slice());
            }
            ControlLaw::Lqr { gain } => feed(gain.as_slice()),
        }
        feed(self.limits.as_slice());
        hex::encode(h.finalize())
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub A: DMatrix<f64>,
    pub B: DMatrix<f64>,
    pub Q: DMatrix<f64>,
    pub R: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiOptions {
    pub iters: usize,
    pub tol: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            iters: 10_000,
            tol: 1e-10,
        }
    }
}

#[allow(non_snake_case)]
fn riccati_map(m: &LinearModel, P: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let bt_p = m.B.transpose() * P;
    let s = &m.R + &bt_p * &m.B;
    let s_inv = s.try_inverse().ok_or(Error::DareDivergence {
        iters: 0,
        last_delta: f64::NAN,
    })?;
    let k = s_inv * &bt_p * &m.A;
    let at_p = m.A.transpose() * P;
    let next = &m.Q + &at_p * &m.A - &at_p * &m.B * &k;
    // symmetrize to stop round-off asymmetry from accumulating
    let next = (&next + next.transpose()) * 0.5;
    Ok((next, k))
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// from `P = Q` and returns `(K, P)` with `K = (R + BᵀPB)⁻¹BᵀPA`.
#[allow(non_snake_case)]
pub fn lqr_solve(model: &LinearModel, opts: RiccatiOptions) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = model.A.nrows();
    check_dim("LQR A columns", n, model.A.ncols())?;
    check_dim("LQR B rows", n, model.B.nrows())?;
    check_dim("LQR Q", n, model.Q.nrows())?;
    check_dim("LQR R", model.B.ncols(), model.R.nrows())?;
    if !(opts.tol > 0.0) {
        return Err(Error::config("lqr.tol", "tolerance must be > 0"));
    }
    let mut P = model.Q.clone();
    let mut delta = f64::INFINITY;
    for _ in 0..opts.iters {
        let (next, _) = riccati_map(model, &P)?;
        delta = (&next - &P).amax();
        if !delta.is_finite() {
            break;
        }
        P = next;
        if delta <= opts.tol {
            let (_, k) = riccati_map(model, &P)?;
            return Ok((k, P));
        }
    }
    Err(Error::DareDivergence {
        iters: opts.iters,
        last_delta: delta,
    })
}

pub fn lqr_gain(model: &LinearModel, opts: RiccatiOptions) -> Result<DMatrix<f64>> {
    lqr_solve(model, opts).map(|(k, _)| k)
}

/// Linearizes one plant step about its equilibrium by central differences,
/// returning `(A, B)` over the stacked tracked state `[q; qdot]`.
///
/// Only meaningful for plants whose tracked coordinates are the full state
/// (pendulum, cart-pole).
#[allow(non_snake_case)]
pub fn linearize(plant: &Plant, params: &PlantParams, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eq = plant.equilibrium();
    let (nq, nv) = plant.state_dims();
    check_dim("linearize (q and qdot)", nq, nv)?;
    let n = nq + nv;
    let d = plant.action_dim();
    let h = 1e-6;
    let flat = |s: &PlantState| {
        let mut v = DVector::zeros(n);
        v.rows_mut(0, nq).copy_from(&s.q);
        v.rows_mut(nq, nv).copy_from(&s.qdot);
        v
    };
    let unflat = |v: &DVector<f64>| PlantState {
        q: v.rows(0, nq).into_owned(),
        qdot: v.rows(nq, nv).into_owned(),
        t: 0,
    };
    let x0 = flat(&eq);
    let u0 = DVector::zeros(d);
    let mut A = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = flat(&plant.step(&unflat(&xp), &u0, params, dt)?);
        let fm = flat(&plant.step(&unflat(&xm), &u0, params, dt)?);
        A.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    let mut B = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut up = u0.clone();
        let mut um = u0.clone();
        up[j] += h;
        um[j] -= h;
        let fp = flat(&plant.step(&eq, &up, params, dt)?);
        let fm = flat(&plant.step(&eq, &um, params, dt)?);
        B.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    Ok((A, B))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
