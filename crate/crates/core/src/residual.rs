//! Residual generator: fixed random tanh expansion, band-pass trace pair,
//! fast/slow linear heads and error-driven plasticity.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{check_dim, ReferenceSignal};

/// Fixed expansion `h = tanh(V x)`. `V` is never written after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionBasis {
    v: DMatrix<f64>,
}

impl ExpansionBasis {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("residual.basis", "expansion matrix must be finite"));
        }
        Ok(Self { v })
    }

    /// `p × m` matrix with i.i.d. `N(0, 1/m)` entries.
    pub fn seeded<R: Rng>(features: usize, inputs: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1.0 / (inputs as f64).sqrt()).expect("valid std");
        let v = DMatrix::from_fn(features, inputs, |_, _| normal.sample(rng));
        Self { v }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn features(&self) -> usize {
        self.v.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.v.ncols()
    }

    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("expansion input", self.v.ncols(), x.len())?;
        Ok((&self.v * x).map(f64::tanh))
    }
}

/// Excitatory/inhibitory exponential traces with `0 < alpha_i < alpha_e < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePair {
    pub phi_e: DVector<f64>,
    pub phi_i: DVector<f64>,
    alpha_e: f64,
    alpha_i: f64,
}

impl TracePair {
    pub fn new(features: usize, alpha_e: f64, alpha_i: f64) -> Result<Self> {
        if !(0.0 < alpha_i && alpha_i < alpha_e && alpha_e < 1.0) {
            return Err(Error::config(
                "residual.alpha_e/alpha_i",
                format!("trace rates must satisfy 0 < α_I < α_E < 1 (got α_E={alpha_e}, α_I={alpha_i})"),
            ));
        }
        Ok(Self {
            phi_e: DVector::zeros(features),
            phi_i: DVector::zeros(features),
            alpha_e,
            alpha_i,
        })
    }

    pub fn rates(&self) -> (f64, f64) {
        (self.alpha_e, self.alpha_i)
    }

    /// Advances both traces and returns their difference.
    pub fn update(&mut self, h: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("trace input", self.phi_e.len(), h.len())?;
        self.phi_e = &self.phi_e * (1.0 - self.alpha_e) + h * self.alpha_e;
        self.phi_i = &self.phi_i * (1.0 - self.alpha_i) + h * self.alpha_i;
        Ok(&self.phi_e - &self.phi_i)
    }
}

pub fn update_traces(traces: &TracePair, h: &DVector<f64>) -> Result<(TracePair, DVector<f64>)> {
    let mut next = traces.clone();
    let phi = next.update(h)?;
    Ok((next, phi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadParams {
    pub eta_f0: f64,
    pub eta_s: f64,
    pub lambda_f: f64,
    pub lambda_s: f64,
    /// Frobenius-norm cap applied to each head after every update.
    pub w_max: f64,
}

impl Default for HeadParams {
    fn default() -> Self {
        Self {
            eta_f0: 5e-3,
            eta_s: 5e-4,
            lambda_f: 1e-3,
            lambda_s: 1e-5,
            w_max: 50.0,
        }
    }
}

impl HeadParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_f > self.lambda_s && self.lambda_s >= 0.0 && self.lambda_f < 1.0) {
            return Err(Error::config(
                "residual.lambda_f/lambda_s",
                format!(
                    "decay rates must satisfy λ_f > λ_s ≥ 0 and λ_f < 1 (got λ_f={}, λ_s={})",
                    self.lambda_f, self.lambda_s
                ),
            ));
        }
        if !(self.eta_f0 > self.eta_s && self.eta_s > 0.0) {
            return Err(Error::config(
                "residual.eta_f0/eta_s",
                format!(
                    "learning rates must satisfy η_f⁰ > η_s > 0 (got η_f⁰={}, η_s={})",
                    self.eta_f0, self.eta_s
                ),
            ));
        }
        if !(self.w_max > 0.0) {
            return Err(Error::config("residual.w_max", "weight cap must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHeads {
    pub fast: DMatrix<f64>,
    pub slow: DMatrix<f64>,
    pub params: HeadParams,
}

impl ResidualHeads {
    pub fn zeros(outputs: usize, features: usize, params: HeadParams) -> Self {
        Self {
            fast: DMatrix::zeros(outputs, features),
            slow: DMatrix::zeros(outputs, features),
            params,
        }
    }
}

/// `a_res = W_fast φ + W_slow φ`.
pub fn residual_output(heads: &ResidualHeads, phi: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("residual heads", heads.fast.ncols(), phi.len())?;
    Ok(&heads.fast * phi + &heads.slow * phi)
}

/// `W' = (1 - lambda) W + eta e φᵀ`.
pub fn plasticity_update(
    w: &DMatrix<f64>,
    e: &DVector<f64>,
    phi: &DVector<f64>,
    eta: f64,
    lambda: f64,
    step: usize,
) -> Result<DMatrix<f64>> {
    check_dim("plasticity rows", w.nrows(), e.len())?;
    check_dim("plasticity cols", w.ncols(), phi.len())?;
    let mut next = w * (1.0 - lambda);
    next.ger(eta, e, phi, 1.0);
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::PlasticityBlowup { step });
    }
    Ok(next)
}

fn cap_frobenius(w: &mut DMatrix<f64>, w_max: f64) {
    let m = w.amax();
    if m == 0.0 || !m.is_finite() {
        return;
    }
    // scaled so the sum of squares cannot overflow
    let n = m * (&*w / m).norm();
    if n > w_max {
        *w *= w_max / n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingWeights {
    /// Diagonal of Λ, one entry per tracked coordinate, in 1/s.
    pub lambda: Vec<f64>,
    /// Weights of the task-level error components.
    pub task_weights: Vec<f64>,
    /// Row-major `d × n` map from tracked error to action channels.
    pub error_map: Vec<Vec<f64>>,
}

impl TrackingWeights {
    pub fn error_map_matrix(&self) -> DMatrix<f64> {
        let rows = self.error_map.len();
        let cols = self.error_map.first().map_or(0, Vec::len);
        DMatrix::from_fn(rows, cols, |i, j| self.error_map[i][j])
    }
}

/// `e = (qdot_ref - qdot) + Λ (q_ref - q)` in tracked coordinates.
pub fn tracking_error(
    pos: &DVector<f64>,
    vel: &DVector<f64>,
    reference: &ReferenceSignal,
    w: &TrackingWeights,
) -> Result<DVector<f64>> {
    check_dim("tracking position", reference.q_ref.len(), pos.len())?;
    check_dim("tracking velocity", reference.qdot_ref.len(), vel.len())?;
    check_dim("tracking Λ", pos.len(), w.lambda.len())?;
    Ok(DVector::from_fn(pos.len(), |i, _| {
        (reference.qdot_ref[i] - vel[i]) + w.lambda[i] * (reference.q_ref[i] - pos[i])
    }))
}

/// `ε = Σ w_i |e_i|`.
pub fn task_error(e: &DVector<f64>, w: &TrackingWeights) -> Result<f64> {
    check_dim("task weights", e.len(), w.task_weights.len())?;
    Ok(e.iter().zip(&w.task_weights).map(|(e, w)| w * e.abs()).sum())
}

/// Per-episode residual memory. Mutated only by its owning episode loop.
#[derive(Debug, Clone)]
pub struct ResidualMemory {
    pub basis: ExpansionBasis,
    pub traces: TracePair,
    pub heads: ResidualHeads,
    /// When false, `φ := h` (no band-pass).
    pub temporal_filter: bool,
    /// When false, only the fast head is used and updated.
    pub dual_head: bool,
}

impl ResidualMemory {
    /// Residual input `x = [q_ref - q; qdot_ref - qdot; qdot_ref]`.
    pub fn input(pos: &DVector<f64>, vel: &DVector<f64>, reference: &ReferenceSignal) -> DVector<f64> {
        let n = pos.len();
        let mut x = DVector::zeros(3 * n);
        x.rows_mut(0, n).copy_from(&(&reference.q_ref - pos));
        x.rows_mut(n, n).copy_from(&(&reference.qdot_ref - vel));
        x.rows_mut(2 * n, n).copy_from(&reference.qdot_ref);
        x
    }

    /// Encodes, filters and reads out. Returns `(φ, a_res)`.
    pub fn forward(&mut self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let h = self.basis.encode(x)?;
        let phi = if self.temporal_filter {
            self.traces.update(&h)?
        } else {
            h
        };
        let out = if self.dual_head {
            residual_output(&self.heads, &phi)?
        } else {
            check_dim("residual heads", self.heads.fast.ncols(), phi.len())?;
            &self.heads.fast * &phi
        };
        Ok((phi, out))
    }

    /// One plasticity step with fast-head rate `eta_fast`; the slow head uses `eta_s`.
    pub fn learn(&mut self, e: &DVector<f64>, phi: &DVector<f64>, eta_fast: f64, step: usize) -> Result<()> {
        let p = &self.heads.params;
        let (w_max, lambda_f, lambda_s, eta_s) = (p.w_max, p.lambda_f, p.lambda_s, p.eta_s);
        self.heads.fast = plasticity_update(&self.heads.fast, e, phi, eta_fast, lambda_f, step)?;
        cap_frobenius(&mut self.heads.fast, w_max);
        if self.dual_head {
            self.heads.slow = plasticity_update(&self.heads.slow, e, phi, eta_s, lambda_s, step)?;
            cap_frobenius(&mut self.heads.slow, w_max);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dv(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn encode_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = ExpansionBasis::seeded(64, 3, &mut rng);
        assert_eq!(basis.encode(&DVector::zeros(3)).unwrap(), DVector::zeros(64));
        let id = ExpansionBasis::new(DMatrix::identity(1, 1)).unwrap();
        assert!((id.encode(&dv(&[1.0])).unwrap()[0] - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert!(basis.encode(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn encode_matches_rowwise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = ExpansionBasis::seeded(16, 4, &mut rng);
        let x = dv(&[0.3, -1.2, 0.05, 2.0]);
        let h = basis.encode(&x).unwrap();
        let v = basis.matrix();
        for i in 0..16 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += v[(i, j)] * x[j];
            }
            assert_eq!(h[i], acc.tanh());
            assert!(h[i].abs() < 1.0);
        }
    }

    #[test]
    fn trace_one_step_and_impulse() {
        let mut tr = TracePair::new(1, 0.2, 0.05).unwrap();
        let phi = tr.update(&dv(&[1.0])).unwrap();
        assert!((tr.phi_e[0] - 0.2).abs() < 1e-15);
        assert!((tr.phi_i[0] - 0.05).abs() < 1e-15);
        assert!((phi[0] - 0.15).abs() < 1e-15);
        let phi2 = tr.update(&dv(&[0.0])).unwrap();
        assert!((phi2[0] - 0.1125).abs() < 1e-15);
    }

    #[test]
    fn trace_constant_input_closed_form() {
        let (ae, ai) = (0.2, 0.05);
        let mut tr = TracePair::new(1, ae, ai).unwrap();
        for t in 1..=400 {
            let phi = tr.update(&dv(&[0.7])).unwrap()[0];
            let closed = 0.7 * ((1.0f64 - ai).powi(t) - (1.0f64 - ae).powi(t));
            assert!((phi - closed).abs() < 1e-14, "t={t}");
        }
        assert!(tr.update(&dv(&[0.7])).unwrap()[0] < 1e-8);
    }

    #[test]
    fn trace_rate_ordering_is_enforced() {
        assert!(TracePair::new(1, 0.2, 0.3).is_err());
        assert!(TracePair::new(1, 0.2, 0.2).is_err());
        assert!(TracePair::new(1, 1.0, 0.2).is_err());
        assert!(TracePair::new(1, 0.2, 0.0).is_err());
    }

    #[test]
    fn transient_peaks_then_decays() {
        let (ae, ai): (f64, f64) = (0.2, 0.05);
        let mut tr = TracePair::new(1, ae, ai).unwrap();
        let mut series = Vec::new();
        for _ in 0..300 {
            series.push(tr.update(&dv(&[1.0])).unwrap()[0].abs());
        }
        let peak = series
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        let bound = ((ae / ai).ln() / ((1.0 - ai) / (1.0 - ae)).ln()).ceil() as usize;
        assert!(peak + 1 <= bound, "peak at step {} exceeds bound {bound}", peak + 1);
        for w in series[peak..].windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn residual_output_examples() {
        let params = HeadParams::default();
        let zero = ResidualHeads::zeros(1, 2, params.clone());
        assert_eq!(residual_output(&zero, &dv(&[0.5, 0.25])).unwrap()[0], 0.0);
        let heads = ResidualHeads {
            fast: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            slow: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            params,
        };
        assert_eq!(residual_output(&heads, &dv(&[0.5, 0.25])).unwrap()[0], 0.75);
    }

    #[test]
    fn tracking_and_task_error_examples() {
        let w = TrackingWeights {
            lambda: vec![2.0],
            task_weights: vec![2.0],
            error_map: vec![vec![1.0]],
        };
        let r = ReferenceSignal {
            q_ref: dv(&[0.1]),
            qdot_ref: dv(&[-0.05]),
        };
        let on = tracking_error(&r.q_ref, &r.qdot_ref, &r, &w).unwrap();
        assert_eq!(on[0], 0.0);
        assert_eq!(task_error(&on, &w).unwrap(), 0.0);
        let e = tracking_error(&dv(&[0.0]), &dv(&[0.0]), &r, &w).unwrap();
        assert!((e[0] - 0.15).abs() < 1e-15);
        assert!((task_error(&dv(&[0.2]), &w).unwrap() - 0.4).abs() < 1e-15);
        let w0 = TrackingWeights {
            lambda: vec![0.0],
            ..w.clone()
        };
        let e0 = tracking_error(&dv(&[0.3]), &dv(&[0.2]), &r, &w0).unwrap();
        assert_eq!(e0[0], -0.05 - 0.2);
    }

    #[test]
    fn task_error_multi_component() {
        let w = TrackingWeights {
            lambda: vec![0.0; 3],
            task_weights: vec![0.5, 2.0, 1.25],
            error_map: vec![],
        };
        let e = dv(&[-0.4, 0.1, -2.0]);
        // 0.5*0.4 + 2*0.1 + 1.25*2.0
        assert!((task_error(&e, &w).unwrap() - 2.9).abs() < 1e-15);
    }

    #[test]
    fn plasticity_examples() {
        let w = DMatrix::zeros(1, 2);
        let out = plasticity_update(&w, &dv(&[1.0]), &dv(&[1.0, 0.0]), 0.01, 0.0, 0).unwrap();
        assert_eq!(out.as_slice(), &[0.01, 0.0]);
        let w = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let decayed = plasticity_update(&w, &dv(&[0.0]), &dv(&[1.0, 1.0]), 0.5, 0.1, 0).unwrap();
        assert_eq!(decayed.as_slice(), &[0.9, 0.0]);
        let same = plasticity_update(&w, &dv(&[0.0]), &dv(&[1.0, 1.0]), 0.5, 0.0, 0).unwrap();
        assert_eq!(same, w);
        let err = plasticity_update(&w, &dv(&[f64::INFINITY]), &dv(&[1.0, 1.0]), 0.5, 0.0, 42).unwrap_err();
        assert!(matches!(err, Error::PlasticityBlowup { step: 42 }));
    }

    #[test]
    fn decay_contraction_is_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w0 = DMatrix::from_fn(2, 8, |_, _| rng.random_range(-1.0..1.0));
        let lambda = 0.01;
        let mut w = w0.clone();
        let e = DVector::zeros(2);
        let phi = DVector::from_element(8, 0.3);
        for t in 1..=500 {
            w = plasticity_update(&w, &e, &phi, 0.1, lambda, t).unwrap();
            let expect = (1.0f64 - lambda).powi(t as i32) * w0.norm();
            assert!((w.norm() - expect).abs() <= 1e-12 * w0.norm(), "t={t}");
        }
    }

    #[test]
    fn fast_contribution_falls_below_slow() {
        let params = HeadParams::default();
        let mut heads = ResidualHeads::zeros(1, 4, params.clone());
        let phi = dv(&[0.2, -0.1, 0.05, 0.3]);
        let e = dv(&[1.0]);
        heads.fast = plasticity_update(&heads.fast, &e, &phi, params.eta_f0, params.lambda_f, 0).unwrap();
        heads.slow = plasticity_update(&heads.slow, &e, &phi, params.eta_s, params.lambda_s, 0).unwrap();
        let zero = DVector::zeros(1);
        let mut crossed = None;
        for t in 1..100_000 {
            heads.fast = plasticity_update(&heads.fast, &zero, &phi, params.eta_f0, params.lambda_f, t).unwrap();
            heads.slow = plasticity_update(&heads.slow, &zero, &phi, params.eta_s, params.lambda_s, t).unwrap();
            if (&heads.fast * &phi).norm() < (&heads.slow * &phi).norm() {
                crossed = Some(t);
                break;
            }
        }
        // (1-λf)^t η_f < (1-λs)^t η_s  =>  t > ln(η_f/η_s) / ln((1-λs)/(1-λf))
        let bound = ((params.eta_f0 / params.eta_s).ln()
            / ((1.0 - params.lambda_s) / (1.0 - params.lambda_f)).ln())
        .ceil() as usize;
        let t = crossed.expect("fast contribution never dropped below slow");
        assert!(t.abs_diff(bound) <= 1, "crossover {t} vs analytic {bound}");
    }

    #[test]
    fn head_param_validation() {
        assert!(HeadParams::default().validate().is_ok());
        let bad = HeadParams {
            lambda_f: 1e-6,
            ..HeadParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = HeadParams {
            eta_s: 1.0,
            ..HeadParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn band_pass_bound(h in -1.0f64..1.0, ae in 0.1f64..0.9, ratio in 0.05f64..0.95) {
            let ai = ae * ratio;
            let mut tr = TracePair::new(1, ae, ai).unwrap();
            for t in 1..=300 {
                let phi = tr.update(&dv(&[h])).unwrap()[0];
                // rounding floor of an EMA at rate α is about ε|h|/α
                let floor = 4.0 * f64::EPSILON * h.abs() / ai;
                prop_assert!(phi.abs() <= h.abs() * (1.0 - ai).powi(t) + floor);
            }
        }

        #[test]
        fn output_superposition(
            a in proptest::collection::vec(-2.0f64..2.0, 6),
            b in proptest::collection::vec(-2.0f64..2.0, 6),
            s in -3.0f64..3.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let heads = ResidualHeads {
                fast: DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0)),
                slow: DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0)),
                params: HeadParams::default(),
            };
            let (a, b) = (dv(&a), dv(&b));
            let lhs = residual_output(&heads, &(&a * s + &b)).unwrap();
            let rhs = residual_output(&heads, &a).unwrap() * s + residual_output(&heads, &b).unwrap();
            prop_assert!((lhs - rhs).amax() < 1e-12);
            let single = (&heads.fast + &heads.slow) * &a;
            prop_assert!((residual_output(&heads, &a).unwrap() - single).amax() < 1e-14);
        }
    }
}
