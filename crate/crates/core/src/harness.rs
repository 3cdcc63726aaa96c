//! Episode orchestration: calibration, fault injection, the closed loop,
//! severity sweeps and ablations.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{AblationFlags, ExperimentConfig, Method, SweepSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, EpisodeTrace, MetricStats, MetricName, RecoveryMetrics, StepRecord};
use crate::nominal::NominalController;
use crate::plant::{apply_shift, reference, reward, Plant, PlantState, ShiftFamily};
use crate::residual::{
    task_error, tracking_error, ExpansionBasis, ResidualHeads, ResidualMemory, TracePair,
    TrackingWeights,
};
use crate::sag::{apply_gate, effective_learning_rate, smooth_performance, GateState};

/// Everything derived from a config that does not depend on the seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub controller: NominalController,
    pub tracking: TrackingWeights,
    pub basis: ExpansionBasis,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let controller = cfg.controller()?;
        let n = cfg.plant.model.tracked_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.residual.seed);
        let basis = ExpansionBasis::seeded(cfg.residual.features, 3 * n, &mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            controller,
            tracking: cfg.tracking(),
            basis,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub trace: EpisodeTrace,
    pub metrics: RecoveryMetrics,
    pub wall: Duration,
}

/// Start state: equilibrium plus a seeded uniform offset on each tracked position.
pub fn initial_state(plant: &Plant, radius: &[f64], seed: u64) -> PlantState {
    let mut state = plant.equilibrium();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots: &[usize] = match plant {
        Plant::Unicycle(_) => &[0, 2],
        _ => &[0, 1],
    };
    for (i, r) in radius.iter().enumerate() {
        if *r > 0.0 {
            state.q[slots[i]] += rng.random_range(-r..=*r);
        }
    }
    state
}

/// Mean of `J̄` over the calibration window `[start, end)`.
pub fn calibrate_nominal_level(j_bar: &[f64], start: usize, end: usize) -> Result<f64> {
    if start >= end || end > j_bar.len() {
        return Err(Error::config("calibration", "calibration window is empty or out of range"));
    }
    Ok(j_bar[start..end].iter().sum::<f64>() / (end - start) as f64)
}

/// Runs one closed-loop episode.
///
/// Per step: nominal action, residual forward pass, gate, plant step (the
/// shift lands once, at the fault step), reward, `J̄`, gate bookkeeping, then
/// plasticity while the gate is active. `J*` is fixed at the end of the
/// calibration window. The frozen method skips the residual and never activates.
pub fn run_prepared(prep: &Prepared, method: Method, seed: u64) -> Result<EpisodeOutcome> {
    let started = Instant::now();
    let cfg = &prep.cfg;
    let plant = &cfg.plant.model;
    let d = plant.action_dim();
    let n = plant.tracked_dim();
    let flags = cfg.ablation.gate_flags(method);
    let gate = &cfg.gate;
    let heads = &cfg.residual.heads;

    let nominal_params = plant.nominal_params();
    let shifted = match cfg.shift_spec() {
        Some(s) => apply_shift(&nominal_params, &s)?,
        None => nominal_params.clone(),
    };
    let mut params = nominal_params;

    let mut memory = ResidualMemory {
        basis: prep.basis.clone(),
        traces: TracePair::new(cfg.residual.features, cfg.residual.alpha_e, cfg.residual.alpha_i)?,
        heads: ResidualHeads::zeros(d, cfg.residual.features, heads.clone()),
        temporal_filter: cfg.ablation.temporal_filter,
        dual_head: cfg.ablation.dual_head,
    };
    let error_map = prep.tracking.error_map_matrix();
    let mut gs = GateState::new(d, gate);
    let mut state = initial_state(plant, &cfg.plant.init_radius, seed);
    let mut steps: Vec<StepRecord> = Vec::with_capacity(cfg.horizon);
    let mut j_star = f64::NAN;

    let abort = |step: usize, err: Error, steps: &[StepRecord], j_star: f64| Error::EpisodeAborted {
        step,
        source: Box::new(err),
        prefix: Box::new(EpisodeTrace {
            tau: cfg.fault_step,
            horizon: cfg.horizon,
            j_star,
            steps: steps.to_vec(),
        }),
    };

    for t in 0..cfg.horizon {
        if t == cfg.fault_step {
            params = shifted.clone();
        }
        let r_now = reference(t, &cfg.plant.reference, cfg.dt);
        let (pos, vel) = plant.tracked(&state);
        let a_nom = prep
            .controller
            .nominal_action(plant, &state, &r_now)
            .map_err(|e| abort(t, e, &steps, j_star))?;

        let (u, phi, c, gamma) = if method == Method::Frozen {
            (DVector::zeros(d), None, 0.0, gs.gamma)
        } else {
            let x = ResidualMemory::input(&pos, &vel, &r_now);
            let (phi, a_res) = memory.forward(&x).map_err(|e| abort(t, e, &steps, j_star))?;
            let (u, diag) = apply_gate(&a_nom, &a_res, &gs, gate, flags)
                .map_err(|e| abort(t, e, &steps, j_star))?;
            (u, Some(phi), diag.c, diag.gamma)
        };
        let action = &a_nom + &u;
        let next = plant
            .step(&state, &action, &params, cfg.dt)
            .map_err(|e| abort(t, e, &steps, j_star))?;

        let r_next = reference(t + 1, &cfg.plant.reference, cfg.dt);
        let (pos1, vel1) = plant.tracked(&next);
        let r = reward(&pos1, &vel1, &action, &r_next, &cfg.plant.reward).map_err(|e| {
            let e = match e {
                Error::Blowup { what, .. } => Error::Blowup { step: t, what },
                other => other,
            };
            abort(t, e, &steps, j_star)
        })?;
        let e = tracking_error(&pos1, &vel1, &r_next, &prep.tracking)?;
        let channel_error = &error_map * &e;
        let eps_t = task_error(&e, &prep.tracking)?;

        if t == 0 {
            gs.j_bar = r;
        }
        let multiplier = if method == Method::Frozen {
            gs.j_bar = smooth_performance(gs.j_bar, r, gate.alpha_j);
            1.0
        } else {
            gs.observe(r, &channel_error, eps_t, gate, flags)?
        };
        let eta_f = effective_learning_rate(heads.eta_f0, multiplier - 1.0);
        if let (Some(phi), true) = (phi.as_ref(), gs.active) {
            memory
                .learn(&channel_error, phi, eta_f, t)
                .map_err(|e| abort(t, e, &steps, j_star))?;
        }

        let dist = plant.distance_to_reference(&next, &r_next);
        steps.push(StepRecord {
            step: t,
            reward: r,
            j_bar: gs.j_bar,
            u_norm: u.norm(),
            u: u.iter().copied().collect(),
            c,
            gamma,
            b: multiplier - 1.0,
            eta_f,
            active: gs.active,
            dist_to_ref: dist,
        });
        if !dist.is_finite() {
            let err = Error::Blowup {
                step: t,
                what: "non-finite distance to reference".into(),
            };
            return Err(abort(t, err, &steps, j_star));
        }

        if t + 1 == cfg.calibration.end {
            let j_bar: Vec<f64> = steps.iter().map(|s| s.j_bar).collect();
            j_star = calibrate_nominal_level(&j_bar, cfg.calibration.start, cfg.calibration.end)?;
            gs.j_star = Some(j_star);
        }
        state = next;
    }
    debug_assert_eq!(n, plant.tracked_dim());

    let trace = EpisodeTrace {
        tau: cfg.fault_step,
        horizon: cfg.horizon,
        j_star,
        steps,
    };
    let metrics = metrics::compute(&trace, &cfg.metrics)?;
    Ok(EpisodeOutcome {
        seed,
        trace,
        metrics,
        wall: started.elapsed(),
    })
}

pub fn run_episode(cfg: &ExperimentConfig, seed: u64) -> Result<EpisodeOutcome> {
    run_prepared(&Prepared::new(cfg)?, cfg.method, seed)
}

/// Runs every seed of the config in parallel; results come back in seed order.
pub fn run_seeds(cfg: &ExperimentConfig, method: Method, seeds: &[u64]) -> Result<Vec<EpisodeOutcome>> {
    let prep = Prepared::new(cfg)?;
    seeds
        .par_iter()
        .map(|&s| run_prepared(&prep, method, s))
        .collect()
}

/// One `(family, severity, method, seed)` result of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub family: ShiftFamily,
    pub severity: f64,
    pub method: Method,
    pub seed: u64,
    pub metrics: RecoveryMetrics,
    /// Largest residual norm seen in the episode.
    pub max_u_norm: f64,
    /// Largest distance to the reference seen in the episode.
    pub max_dist: f64,
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub family: ShiftFamily,
    pub severity: f64,
    pub method: Method,
    pub stats: Vec<(MetricName, MetricStats)>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub cells: Vec<SweepCell>,
}

fn seeds_for(cfg: &ExperimentConfig, trials: Option<usize>) -> Vec<u64> {
    let k = trials.unwrap_or(cfg.seeds.len()).min(cfg.seeds.len());
    cfg.seeds[..k].to_vec()
}

/// Severity × method × seed grid. Output order follows the spec's severity
/// order, then method order, then seed order, regardless of completion order.
pub fn severity_sweep(cfg: &ExperimentConfig, sweep: &SweepSpec) -> Result<SweepResult> {
    sweep.validate()?;
    let seeds = seeds_for(cfg, sweep.trials);
    let mut preps = Vec::with_capacity(sweep.severities.len());
    for &severity in &sweep.severities {
        let mut c = cfg.clone();
        let channel = cfg.shift.as_ref().map_or(0, |s| s.channel);
        c.shift = Some(crate::config::ShiftConfig {
            family: sweep.family,
            severity,
            channel,
        });
        c.validate()?;
        preps.push(Prepared::new(&c)?);
    }
    let jobs: Vec<(usize, Method, u64)> = (0..preps.len())
        .flat_map(|i| {
            let seeds = &seeds;
            sweep
                .methods
                .iter()
                .flat_map(move |&m| seeds.iter().map(move |&s| (i, m, s)))
        })
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(i, method, seed)| {
            let out = run_prepared(&preps[i], method, seed)?;
            Ok(SweepRecord {
                family: sweep.family,
                severity: sweep.severities[i],
                method,
                seed,
                metrics: out.metrics,
                max_u_norm: out.trace.steps.iter().map(|s| s.u_norm).fold(0.0, f64::max),
                max_dist: out.trace.steps.iter().map(|s| s.dist_to_ref).fold(0.0, f64::max),
                wall: out.wall,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for (i, &severity) in sweep.severities.iter().enumerate() {
        for &method in &sweep.methods {
            let ms: Vec<RecoveryMetrics> = records
                .iter()
                .filter(|r| r.method == method && r.severity.to_bits() == severity.to_bits())
                .map(|r| r.metrics)
                .collect();
            let _ = i;
            cells.push(SweepCell {
                family: sweep.family,
                severity,
                method,
                stats: metrics::aggregate(&ms)?,
            });
        }
    }
    Ok(SweepResult { records, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Full,
    NoDualHead,
    NoDirAlign,
    NoTemporalFilter,
    NoNucleiGate,
    NoBoost,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoDualHead,
        Variant::NoDirAlign,
        Variant::NoTemporalFilter,
        Variant::NoNucleiGate,
        Variant::NoBoost,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDualHead => "no-dual-head",
            Variant::NoDirAlign => "no-dir-align",
            Variant::NoTemporalFilter => "no-temporal-filter",
            Variant::NoNucleiGate => "no-nuclei-gate",
            Variant::NoBoost => "no-boost",
        }
    }

    /// The config's own flags with this variant's mechanism switched off.
    pub fn flags(&self, base: AblationFlags) -> AblationFlags {
        let mut f = base;
        match self {
            Variant::Full => {}
            Variant::NoDualHead => f.dual_head = false,
            Variant::NoDirAlign => f.directional = false,
            Variant::NoTemporalFilter => f.temporal_filter = false,
            Variant::NoNucleiGate => f.adaptive_gain = false,
            Variant::NoBoost => f.boost = false,
        }
        f
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub metrics: Vec<RecoveryMetrics>,
    pub stats: Vec<(MetricName, MetricStats)>,
}

/// Residual-full and its five single-mechanism ablations on shared seeds.
pub fn ablation_suite(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let preps = Variant::ALL
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.method = Method::ResidualFull;
            c.ablation = v.flags(cfg.ablation);
            Prepared::new(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..preps.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let outs = jobs
        .par_iter()
        .map(|&(i, s)| run_prepared(&preps[i], Method::ResidualFull, s).map(|o| o.metrics))
        .collect::<Result<Vec<_>>>()?;
    Variant::ALL
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let ms = outs[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            Ok(AblationRow {
                variant,
                seeds: seeds.to_vec(),
                stats: metrics::aggregate(&ms)?,
                metrics: ms,
            })
        })
        .collect()
}
