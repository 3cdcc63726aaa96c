//! CSV and JSON emission with fixed formatting, column order and row order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::harness::{AblationRow, EpisodeOutcome, SweepResult};
use crate::metrics::{EpisodeTrace, MetricName, MetricStats, RecoveryMetrics};

/// Nine significant digits, shortest round-trip form of the rounded value.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("round trip");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

fn num(x: f64) -> Value {
    // JSON numbers go through the same rounding as the CSVs
    match serde_json::from_str::<Value>(&fmt_f64(x)) {
        Ok(v @ Value::Number(_)) => v,
        _ => Value::Null,
    }
}

pub const TRACE_COLUMNS: [&str; 10] = [
    "step", "reward", "J_bar", "u_norm", "c", "gamma", "b", "eta_f", "active", "dist_to_ref",
];

pub fn trace_csv(trace: &EpisodeTrace) -> String {
    let mut s = TRACE_COLUMNS.join(",");
    s.push('\n');
    for r in &trace.steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.reward),
            fmt_f64(r.j_bar),
            fmt_f64(r.u_norm),
            fmt_f64(r.c),
            fmt_f64(r.gamma),
            fmt_f64(r.b),
            fmt_f64(r.eta_f),
            u8::from(r.active),
            fmt_f64(r.dist_to_ref),
        );
    }
    s
}

fn metrics_json(m: &RecoveryMetrics) -> Value {
    let mut o = Map::new();
    for name in MetricName::ALL {
        o.insert(name.as_str().into(), num(m.value(name)));
    }
    o.insert("t_delta_censored".into(), m.t_delta.censored.into());
    o.insert("ttr50_censored".into(), m.ttr50.censored.into());
    Value::Object(o)
}

fn stats_json(stats: &[(MetricName, MetricStats)]) -> Value {
    let mut o = Map::new();
    for (name, s) in stats {
        o.insert(
            name.as_str().into(),
            json!({
                "mean": num(s.mean),
                "std": num(s.std),
                "median": num(s.median),
                "censored": s.censored,
            }),
        );
    }
    Value::Object(o)
}

pub fn run_summary_json(cfg: &ExperimentConfig, outs: &[EpisodeOutcome]) -> Result<String> {
    let episodes: Vec<Value> = outs
        .iter()
        .map(|o| {
            json!({
                "seed": o.seed,
                "j_star": num(o.trace.j_star),
                "metrics": metrics_json(&o.metrics),
            })
        })
        .collect();
    let all: Vec<RecoveryMetrics> = outs.iter().map(|o| o.metrics).collect();
    let v = json!({
        "method": cfg.method.as_str(),
        "plant": cfg.plant.model.kind().to_string(),
        "shift": cfg.shift.as_ref().map(|s| json!({
            "family": s.family.as_str(),
            "severity": num(s.severity),
            "channel": s.channel,
        })),
        "fault_step": cfg.fault_step,
        "horizon": cfg.horizon,
        "episodes": episodes,
        "aggregate": stats_json(&crate::metrics::aggregate(&all)?),
    });
    Ok(pretty(&v))
}

pub fn sweep_long_csv(res: &SweepResult) -> String {
    let mut s = String::from("family,severity,method,seed,metric,value\n");
    for r in &res.records {
        for name in MetricName::ALL {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.family.as_str(),
                fmt_f64(r.severity),
                r.method,
                r.seed,
                name.as_str(),
                fmt_f64(r.metrics.value(name)),
            );
        }
    }
    s
}

fn stats_rows(s: &mut String, prefix: &str, stats: &[(MetricName, MetricStats)]) {
    for (name, st) in stats {
        let _ = writeln!(
            s,
            "{prefix},{},{},{},{},{}",
            name.as_str(),
            fmt_f64(st.mean),
            fmt_f64(st.std),
            fmt_f64(st.median),
            st.censored,
        );
    }
}

pub fn sweep_aggregate_csv(res: &SweepResult) -> String {
    let mut s = String::from("family,severity,method,metric,mean,std,median,censored\n");
    for c in &res.cells {
        let prefix = format!("{},{},{}", c.family.as_str(), fmt_f64(c.severity), c.method);
        stats_rows(&mut s, &prefix, &c.stats);
    }
    s
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,metric,mean,std,median,censored\n");
    for r in rows {
        stats_rows(&mut s, r.variant.as_str(), &r.stats);
    }
    s
}

pub fn ablation_long_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,seed,metric,value\n");
    for r in rows {
        for (seed, m) in r.seeds.iter().zip(&r.metrics) {
            for name in MetricName::ALL {
                let _ = writeln!(s, "{},{seed},{},{}", r.variant.as_str(), name.as_str(), fmt_f64(m.value(name)));
            }
        }
    }
    s
}

/// Run manifest. `wall_clock_s` is the only field that varies between
/// otherwise identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub wall_clock_s: Vec<f64>,
    pub config: String,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, seeds: Vec<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.hash(),
            seeds,
            outputs: Vec::new(),
            wall_clock_s: Vec::new(),
            config: cfg.to_toml(),
        }
    }

    pub fn to_json(&self) -> String {
        pretty(&serde_json::to_value(self).expect("manifest serializes"))
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Writes files under `dir`, recording their names in order.
pub struct OutputDir {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.written.push(name.into());
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}
