//! Recovery metrics over smoothed-performance traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step diagnostics recorded by the episode loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub reward: f64,
    pub j_bar: f64,
    pub u: Vec<f64>,
    pub u_norm: f64,
    pub c: f64,
    pub gamma: f64,
    pub b: f64,
    pub eta_f: f64,
    pub active: bool,
    pub dist_to_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub tau: usize,
    pub horizon: usize,
    pub j_star: f64,
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    pub fn j_bar(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.j_bar).collect()
    }
}

/// A recovery time in steps after the fault, with a flag for censoring at
/// `horizon - tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Steps {
    pub steps: usize,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub t_delta: Steps,
    pub ttr50: Steps,
    pub auc: f64,
    pub ssr: f64,
    pub total_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Ttr50,
    TDelta,
    Auc,
    Ssr,
    TotalReturn,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Ttr50,
        MetricName::TDelta,
        MetricName::Auc,
        MetricName::Ssr,
        MetricName::TotalReturn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::Ttr50 => "ttr50",
            MetricName::TDelta => "t_delta",
            MetricName::Auc => "auc",
            MetricName::Ssr => "ssr",
            MetricName::TotalReturn => "total_return",
        }
    }
}

impl RecoveryMetrics {
    pub fn value(&self, name: MetricName) -> f64 {
        match name {
            MetricName::Ttr50 => self.ttr50.steps as f64,
            MetricName::TDelta => self.t_delta.steps as f64,
            MetricName::Auc => self.auc,
            MetricName::Ssr => self.ssr,
            MetricName::TotalReturn => self.total_return,
        }
    }

    pub fn censored(&self, name: MetricName) -> bool {
        match name {
            MetricName::Ttr50 => self.ttr50.censored,
            MetricName::TDelta => self.t_delta.censored,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    pub delta: f64,
    pub ttr_fraction: f64,
    pub ssr_window: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            delta: 0.05,
            ttr_fraction: 0.5,
            ssr_window: 0.1,
        }
    }
}

/// First `t ≥ tau` with `J̄_t ≥ J* - delta`, as `t - tau`.
pub fn recovery_time(j_bar: &[f64], tau: usize, j_star: f64, delta: f64) -> Steps {
    let horizon = j_bar.len();
    let threshold = j_star - delta;
    match j_bar[tau..].iter().position(|&j| j >= threshold) {
        Some(k) => Steps { steps: k, censored: false },
        None => Steps {
            steps: horizon - tau,
            censored: true,
        },
    }
}

/// Steps to recover `frac` of the post-fault drop, searched from the
/// post-fault minimum forward.
pub fn ttr_fraction(j_bar: &[f64], tau: usize, j_star: f64, frac: f64) -> Steps {
    let horizon = j_bar.len();
    let post = &j_bar[tau..];
    let (arg, min) = post
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &j)| if j < acc.1 { (i, j) } else { acc });
    let drop = j_star - min;
    if !(drop > 0.0) {
        return Steps { steps: 0, censored: false };
    }
    let threshold = j_star - (1.0 - frac) * drop;
    match post[arg..].iter().position(|&j| j >= threshold) {
        Some(k) => Steps {
            steps: arg + k,
            censored: false,
        },
        None => Steps {
            steps: horizon - tau,
            censored: true,
        },
    }
}

/// Mean of `J̄_t / J*` over the post-fault span.
pub fn recovery_auc(j_bar: &[f64], tau: usize, j_star: f64) -> f64 {
    let post = &j_bar[tau..];
    post.iter().map(|j| j / j_star).sum::<f64>() / post.len() as f64
}

/// Mean `J̄` over the final `window_frac` of the episode, over `J*`.
pub fn steady_state_ratio(j_bar: &[f64], j_star: f64, window_frac: f64) -> f64 {
    let horizon = j_bar.len();
    let len = ((horizon as f64 * window_frac).round() as usize).clamp(1, horizon);
    let tail = &j_bar[horizon - len..];
    tail.iter().sum::<f64>() / len as f64 / j_star
}

pub fn total_return(rewards: impl IntoIterator<Item = f64>) -> f64 {
    rewards.into_iter().sum()
}

fn validate(j_bar: &[f64], tau: usize, j_star: f64, opts: &MetricOptions) -> Result<()> {
    if tau >= j_bar.len() {
        return Err(Error::config("fault_step", "fault step must be before the horizon"));
    }
    if !(j_star > 0.0) {
        return Err(Error::config("j_star", format!("nominal level must be > 0 (got {j_star})")));
    }
    if !(opts.delta > 0.0) {
        return Err(Error::config("metrics.delta", "δ must be > 0"));
    }
    if !(opts.ttr_fraction > 0.0 && opts.ttr_fraction <= 1.0) {
        return Err(Error::config("metrics.ttr_fraction", "fraction must lie in (0, 1]"));
    }
    if !(opts.ssr_window > 0.0 && opts.ssr_window < 1.0) {
        return Err(Error::config("metrics.ssr_window", "window fraction must lie in (0, 1)"));
    }
    Ok(())
}

/// All metrics for one trace. `delta` is relative to `J*`.
pub fn compute(trace: &EpisodeTrace, opts: &MetricOptions) -> Result<RecoveryMetrics> {
    let j_bar = trace.j_bar();
    validate(&j_bar, trace.tau, trace.j_star, opts)?;
    Ok(RecoveryMetrics {
        t_delta: recovery_time(&j_bar, trace.tau, trace.j_star, opts.delta * trace.j_star),
        ttr50: ttr_fraction(&j_bar, trace.tau, trace.j_star, opts.ttr_fraction),
        auc: recovery_auc(&j_bar, trace.tau, trace.j_star),
        ssr: steady_state_ratio(&j_bar, trace.j_star, opts.ssr_window),
        total_return: total_return(trace.rewards()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub censored: usize,
}

/// Mean, sample standard deviation, median and censoring count per metric.
pub fn aggregate(metrics: &[RecoveryMetrics]) -> Result<Vec<(MetricName, MetricStats)>> {
    if metrics.is_empty() {
        return Err(Error::Empty("no metrics to aggregate"));
    }
    Ok(MetricName::ALL
        .iter()
        .map(|&name| {
            let values: Vec<f64> = metrics.iter().map(|m| m.value(name)).collect();
            let censored = metrics.iter().filter(|m| m.censored(name)).count();
            (name, stats(&values, censored))
        })
        .collect())
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn stats(values: &[f64], censored: usize) -> MetricStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricStats {
        mean,
        std,
        median: median(values),
        censored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Synthetic trace: 1.0 until `tau`, 0 at `tau`, linear back to 1.0 at `tau + rise`.
    fn vee(tau: usize, rise: usize, horizon: usize) -> Vec<f64> {
        (0..horizon)
            .map(|t| {
                if t < tau {
                    1.0
                } else {
                    ((t - tau) as f64 / rise as f64).min(1.0)
                }
            })
            .collect()
    }

    #[test]
    fn recovery_time_examples() {
        let flat = vec![1.0; 100];
        assert_eq!(recovery_time(&flat, 10, 1.0, 0.05), Steps { steps: 0, censored: false });
        let low = [vec![1.0; 500], vec![0.2; 4500]].concat();
        assert_eq!(recovery_time(&low, 500, 1.0, 0.05), Steps { steps: 4500, censored: true });
        let mut j = vec![1.0; 200];
        for v in j.iter_mut().take(73).skip(10) {
            *v = 0.3;
        }
        assert_eq!(recovery_time(&j, 10, 1.0, 0.05).steps, 63);
    }

    #[test]
    fn ttr_examples() {
        let flat = vec![1.0; 100];
        assert_eq!(ttr_fraction(&flat, 10, 1.0, 0.5), Steps { steps: 0, censored: false });
        let j = vee(10, 100, 300);
        assert_eq!(ttr_fraction(&j, 10, 1.0, 0.5), Steps { steps: 50, censored: false });
        assert_eq!(ttr_fraction(&j, 10, 1.0, 1.0), recovery_time(&j, 10, 1.0, 1e-12));
    }

    #[test]
    fn auc_ssr_examples() {
        let mut j = vec![1.0; 100];
        assert_eq!(recovery_auc(&j, 10, 1.0), 1.0);
        for v in j.iter_mut().skip(10) {
            *v = 0.5;
        }
        assert_eq!(recovery_auc(&j, 10, 1.0), 0.5);
        let above = vec![1.2; 100];
        assert!(recovery_auc(&above, 10, 1.0) > 1.0);
        assert!((steady_state_ratio(&vec![0.7; 100], 0.7, 0.1) - 1.0).abs() < 1e-15);
        let tail = vec![1.044; 100];
        assert!((steady_state_ratio(&tail, 1.0, 0.1) - 1.044).abs() < 1e-12);
        let ramp: Vec<f64> = (0..100).map(|t| t as f64).collect();
        // last 10 of 0..100: mean of 90..=99
        assert_eq!(steady_state_ratio(&ramp, 1.0, 0.1), 94.5);
    }

    #[test]
    fn total_return_examples() {
        assert_eq!(total_return(vec![0.0; 50]), 0.0);
        assert_eq!(total_return(vec![0.25; 40]), 10.0);
    }

    #[test]
    fn aggregate_examples() {
        let m = |v: f64| RecoveryMetrics {
            t_delta: Steps { steps: v as usize, censored: false },
            ttr50: Steps { steps: v as usize, censored: v > 50.0 },
            auc: v,
            ssr: v,
            total_return: v,
        };
        let one = aggregate(&[m(10.0)]).unwrap();
        for (_, s) in &one {
            assert_eq!(s.mean, 10.0);
            assert_eq!(s.std, 0.0);
        }
        let two = aggregate(&[m(10.0), m(90.0)]).unwrap();
        let auc = two.iter().find(|(n, _)| *n == MetricName::Auc).unwrap().1;
        assert_eq!(auc.mean, 50.0);
        assert_eq!(auc.median, 50.0);
        let ttr = two.iter().find(|(n, _)| *n == MetricName::Ttr50).unwrap().1;
        assert_eq!(ttr.censored, 1);
        assert!(aggregate(&[]).is_err());
    }

    proptest! {
        #[test]
        fn censoring_and_bounds(j in proptest::collection::vec(-1.0f64..2.0, 20..200), tau_frac in 0.0f64..0.9, frac in 0.05f64..1.0) {
            let tau = (j.len() as f64 * tau_frac) as usize;
            let s = ttr_fraction(&j, tau, 1.0, frac);
            prop_assert!(s.steps <= j.len() - tau);
            if s.censored {
                prop_assert_eq!(s.steps, j.len() - tau);
            }
        }

        #[test]
        fn pointwise_better_never_hurts(j in proptest::collection::vec(0.0f64..1.0, 30..120), lift in proptest::collection::vec(0.0f64..0.5, 120)) {
            let tau = 10;
            let better: Vec<f64> = j.iter().zip(&lift).map(|(a, b)| a + b).collect();
            prop_assert!(recovery_auc(&better, tau, 1.0) >= recovery_auc(&j, tau, 1.0));
            prop_assert!(recovery_time(&better, tau, 1.0, 0.05).steps <= recovery_time(&j, tau, 1.0, 0.05).steps);
        }

        #[test]
        fn lifting_away_from_the_minimum_never_slows_ttr(j in proptest::collection::vec(0.0f64..1.0, 30..120), lift in proptest::collection::vec(0.0f64..0.5, 120)) {
            let tau = 10;
            let post = &j[tau..];
            let arg = tau + post.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a }).0;
            let better: Vec<f64> = j.iter().zip(&lift).enumerate().map(|(t, (a, b))| if t == arg { *a } else { a + b }).collect();
            prop_assert!(ttr_fraction(&better, tau, 1.0, 0.5).steps <= ttr_fraction(&j, tau, 1.0, 0.5).steps);
        }
    }
}
