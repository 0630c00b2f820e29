//! Experiment presets, replicated sweeps, CSV output and the analytic sweep.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::analytic::{self, AnalyticParams, PsMode};
use crate::config::{ProtocolKind, SimConfig};
use crate::error::{Result, SimError};
use crate::metrics::MetricsReport;
use crate::protocol::{Ambr, FloodReactive, Proactive};
use crate::sim::{RunResult, Simulation};

/// A sweep over one parameter with every other parameter fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub name: String,
    pub swept_param: String,
    pub values: Vec<f64>,
    pub base: SimConfig,
    pub protocols: Vec<ProtocolKind>,
}

pub const PRESET_NAMES: [&str; 6] = [
    "fig8-size-sweep",
    "fig9-mobility-sweep",
    "fig10-pause-sweep",
    "desk-size-sweep",
    "desk-mobility-sweep",
    "desk-pause-sweep",
];

const SIZE_COMPARE: [ProtocolKind; 3] = [
    ProtocolKind::Ambr,
    ProtocolKind::FloodReactive,
    ProtocolKind::Proactive,
];

const PAUSE_COMPARE: [ProtocolKind; 4] = [
    ProtocolKind::Ambr,
    ProtocolKind::FloodReactiveLr,
    ProtocolKind::FloodReactive,
    ProtocolKind::Proactive,
];

/// Looks up a named preset. The `fig*` presets use the published sweep
/// values; the `desk-*` presets are reduced versions that run in minutes.
pub fn preset(name: &str) -> Result<ScenarioPreset> {
    let base = SimConfig::default();
    let (param, values, base, protocols): (&str, Vec<f64>, SimConfig, &[ProtocolKind]) = match name
    {
        "fig8-size-sweep" => (
            "n",
            vec![80.0, 90.0, 100.0, 150.0, 200.0],
            SimConfig {
                v_max: 10.0,
                pause: 10.0,
                sim_time: 200.0,
                cbr_rate: 10.0,
                ..base
            },
            &SIZE_COMPARE,
        ),
        "fig9-mobility-sweep" => (
            "V_max",
            vec![10.0, 20.0, 30.0, 40.0, 50.0],
            SimConfig {
                n: 100,
                pause: 10.0,
                sim_time: 200.0,
                cbr_rate: 10.0,
                ..base
            },
            &SIZE_COMPARE,
        ),
        "fig10-pause-sweep" => (
            "p",
            vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0],
            SimConfig {
                n: 50,
                sim_time: 7500.0,
                cbr_rate: 5.0,
                ..base
            },
            &PAUSE_COMPARE,
        ),
        "desk-size-sweep" => (
            "n",
            vec![40.0, 60.0, 80.0],
            SimConfig {
                v_max: 10.0,
                pause: 10.0,
                sim_time: 100.0,
                cbr_rate: 10.0,
                ..base
            },
            &SIZE_COMPARE,
        ),
        "desk-mobility-sweep" => (
            "V_max",
            vec![5.0, 15.0, 30.0],
            SimConfig {
                n: 50,
                pause: 10.0,
                sim_time: 200.0,
                cbr_rate: 10.0,
                ..base
            },
            &SIZE_COMPARE,
        ),
        "desk-pause-sweep" => (
            "p",
            vec![20.0, 60.0, 120.0],
            SimConfig {
                n: 30,
                sim_time: 600.0,
                cbr_rate: 5.0,
                ..base
            },
            &PAUSE_COMPARE,
        ),
        _ => return Err(SimError::UnknownPreset(name.to_string())),
    };
    Ok(ScenarioPreset {
        name: name.to_string(),
        swept_param: param.to_string(),
        values,
        base,
        protocols: protocols.to_vec(),
    })
}

impl ScenarioPreset {
    /// A one-point "sweep" that just runs `cfg` under its own protocol.
    pub fn single(name: &str, cfg: SimConfig) -> Self {
        ScenarioPreset {
            name: name.to_string(),
            swept_param: "none".into(),
            values: vec![0.0],
            protocols: vec![cfg.protocol],
            base: cfg,
        }
    }

    /// The config for one sweep point under one protocol and seed.
    pub fn point_config(&self, value: f64, protocol: ProtocolKind, seed: u64) -> Result<SimConfig> {
        let mut cfg = self.base.clone();
        match self.swept_param.as_str() {
            "none" => {}
            "n" => cfg.n = value as usize,
            "V_max" => cfg.v_max = value,
            "p" => cfg.pause = value,
            other => cfg
                .set(other, &value.to_string())
                .map_err(|msg| SimError::Config {
                    line: 0,
                    key: other.to_string(),
                    msg,
                })?,
        }
        cfg.protocol = protocol;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one configuration to completion under its configured protocol.
pub fn run_config(cfg: &SimConfig) -> Result<RunResult> {
    match cfg.protocol {
        ProtocolKind::Ambr => Simulation::new(cfg.clone(), Ambr::new(cfg))?.run(),
        ProtocolKind::FloodReactive => {
            Simulation::new(cfg.clone(), FloodReactive::new(cfg, false))?.run()
        }
        ProtocolKind::FloodReactiveLr => {
            Simulation::new(cfg.clone(), FloodReactive::new(cfg, true))?.run()
        }
        ProtocolKind::Proactive => Simulation::new(cfg.clone(), Proactive::new(cfg))?.run(),
    }
}

/// One finished run inside a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub point: usize,
    pub value: f64,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub report: MetricsReport,
    pub trace_hash: u64,
}

/// Aggregate over the replications of one (point, protocol).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub swept_param: String,
    pub value: f64,
    pub protocol: ProtocolKind,
    pub seed_count: usize,
    pub overhead_per_node_mean: f64,
    pub overhead_per_node_sd: f64,
    pub delivery_ratio_mean: f64,
    pub delivery_ratio_sd: f64,
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for a single sample).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (point, protocol, seed) of a preset, seeds `base_seed..base_seed+replications`.
/// Runs execute in parallel; records come back sorted by (point, protocol, seed).
pub fn run_sweep(preset: &ScenarioPreset, replications: usize, base_seed: u64) -> Result<Vec<RunRecord>> {
    if replications == 0 {
        return Err(SimError::InvalidParameter("replications must be at least 1".into()));
    }
    let mut jobs = Vec::new();
    for (point, &value) in preset.values.iter().enumerate() {
        for &protocol in &preset.protocols {
            for r in 0..replications as u64 {
                jobs.push((point, value, protocol, base_seed + r));
            }
        }
    }
    let mut records = jobs
        .into_par_iter()
        .map(|(point, value, protocol, seed)| {
            let cfg = preset.point_config(value, protocol, seed)?;
            let run = run_config(&cfg).map_err(|e| match e {
                SimError::Invariant { seed, detail, point: at } => SimError::Invariant {
                    point: format!("{}={} {} {}", preset.swept_param, value, protocol, at),
                    seed,
                    detail,
                },
                other => other,
            })?;
            Ok(RunRecord {
                point,
                value,
                protocol,
                seed,
                report: run.report,
                trace_hash: run.trace_hash,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| (r.point, r.protocol, r.seed));
    Ok(records)
}

/// Collapses records into one row per (point, protocol).
pub fn summarize(preset: &ScenarioPreset, records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let key = (records[i].point, records[i].protocol);
        let mut j = i;
        while j < records.len() && (records[j].point, records[j].protocol) == key {
            j += 1;
        }
        let group = &records[i..j];
        let oh: Vec<f64> = group.iter().map(|r| r.report.overhead_per_node).collect();
        let dr: Vec<f64> = group.iter().map(|r| r.report.delivery_ratio).collect();
        let (ohm, ohs) = mean_sd(&oh);
        let (drm, drs) = mean_sd(&dr);
        rows.push(SummaryRow {
            scenario: preset.name.clone(),
            swept_param: preset.swept_param.clone(),
            value: group[0].value,
            protocol: key.1,
            seed_count: group.len(),
            overhead_per_node_mean: ohm,
            overhead_per_node_sd: ohs,
            delivery_ratio_mean: drm,
            delivery_ratio_sd: drs,
        });
        i = j;
    }
    rows
}

/// Convenience: sweep and summarize.
pub fn run_scenario(preset: &ScenarioPreset, replications: usize, base_seed: u64) -> Result<Vec<SummaryRow>> {
    let records = run_sweep(preset, replications, base_seed)?;
    Ok(summarize(preset, &records))
}

pub const CSV_HEADER: [&str; 9] = [
    "scenario",
    "swept_param",
    "value",
    "protocol",
    "seed_count",
    "overhead_per_node_mean",
    "overhead_per_node_sd",
    "delivery_ratio_mean",
    "delivery_ratio_sd",
];

fn csv_err(e: csv::Error) -> SimError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::Io(io),
        other => SimError::InvalidParameter(format!("csv: {other:?}")),
    }
}

/// Writes the header and one row per summary row. Floats use the shortest
/// representation that parses back to the same value.
pub fn emit_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.swept_param.clone(),
            r.value.to_string(),
            r.protocol.name().to_string(),
            r.seed_count.to_string(),
            r.overhead_per_node_mean.to_string(),
            r.overhead_per_node_sd.to_string(),
            r.delivery_ratio_mean.to_string(),
            r.delivery_ratio_sd.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses CSV produced by [`emit_csv`].
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let bad = |what: &str| SimError::InvalidParameter(format!("csv: bad {what}"));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec.get(i).ok_or_else(|| bad(CSV_HEADER[i]));
        let num = |i: usize| -> Result<f64> { f(i)?.parse().map_err(|_| bad(CSV_HEADER[i])) };
        rows.push(SummaryRow {
            scenario: f(0)?.to_string(),
            swept_param: f(1)?.to_string(),
            value: num(2)?,
            protocol: f(3)?.parse().map_err(|_| bad("protocol"))?,
            seed_count: f(4)?.parse().map_err(|_| bad("seed_count"))?,
            overhead_per_node_mean: num(5)?,
            overhead_per_node_sd: num(6)?,
            delivery_ratio_mean: num(7)?,
            delivery_ratio_sd: num(8)?,
        });
    }
    Ok(rows)
}

/// Value lists for the analytic sweep; the rows are their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticRanges {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub e_l: Vec<f64>,
    pub e_n: Vec<u32>,
    pub kk: Vec<u32>,
    pub p0: Vec<f64>,
    pub k: Vec<f64>,
}

impl Default for AnalyticRanges {
    fn default() -> Self {
        AnalyticRanges {
            lambda: vec![1.0],
            mu: vec![1.0],
            e_l: vec![2.0],
            e_n: vec![1],
            kk: vec![1],
            p0: vec![0.5],
            k: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticRow {
    pub params: AnalyticParams,
    pub p_b: f64,
    pub p_n: f64,
    pub p_f0: f64,
    pub p_f1: f64,
    pub p_r: f64,
    pub ps_literal: f64,
    pub ps_dedup: f64,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
}

pub fn analytic_sweep(ranges: &AnalyticRanges) -> Result<Vec<AnalyticRow>> {
    let lists = [
        ("lambda", ranges.lambda.len()),
        ("mu", ranges.mu.len()),
        ("e_l", ranges.e_l.len()),
        ("e_n", ranges.e_n.len()),
        ("kk", ranges.kk.len()),
        ("p0", ranges.p0.len()),
        ("k", ranges.k.len()),
    ];
    for (name, len) in lists {
        if len == 0 {
            return Err(SimError::InvalidParameter(format!("empty range for {name}")));
        }
    }
    let mut rows = Vec::new();
    for &lambda in &ranges.lambda {
        for &mu in &ranges.mu {
            for &e_l in &ranges.e_l {
                for &e_n in &ranges.e_n {
                    for &kk in &ranges.kk {
                        for &p0 in &ranges.p0 {
                            for &k in &ranges.k {
                                let params = AnalyticParams {
                                    lambda,
                                    mu,
                                    e_l,
                                    e_n,
                                    kk,
                                    p0,
                                    k,
                                    n: 0,
                                    r: 0.0,
                                };
                                params.validate()?;
                                let p_b = params.pb()?;
                                let inputs = params.ps_inputs()?;
                                let lit = analytic::eval_ps(&inputs, PsMode::Literal)?;
                                let ded = analytic::eval_ps(&inputs, PsMode::Dedup)?;
                                rows.push(AnalyticRow {
                                    p_b,
                                    p_n: analytic::eval_pn(p_b, e_n)?,
                                    p_f0: analytic::eval_pf0(p0, kk)?,
                                    p_f1: analytic::eval_pf1(p0, kk, e_n)?,
                                    p_r: analytic::eval_pr(p0, kk, e_n)?,
                                    ps_literal: lit.value,
                                    ps_dedup: ded.value,
                                    term1: lit.term1,
                                    term2: lit.term2,
                                    term3: lit.term3,
                                    params,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub const ANALYTIC_HEADER: [&str; 17] = [
    "lambda", "mu", "e_l", "e_n", "kk", "p0", "k", "p_b", "p_n", "p_f0", "p_f1", "p_r",
    "ps_literal", "ps_dedup", "term1", "term2", "term3",
];

pub fn emit_analytic_csv<W: Write>(rows: &[AnalyticRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ANALYTIC_HEADER).map_err(csv_err)?;
    for r in rows {
        let p = &r.params;
        let cells = [
            p.lambda, p.mu, p.e_l, p.e_n as f64, p.kk as f64, p.p0, p.k, r.p_b, r.p_n, r.p_f0,
            r.p_f1, r.p_r, r.ps_literal, r.ps_dedup, r.term1, r.term2, r.term3,
        ];
        w.write_record(cells.iter().map(|c| c.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_bindings_match_published_sweeps() {
        let p = preset("fig8-size-sweep").unwrap();
        assert_eq!(p.values, vec![80.0, 90.0, 100.0, 150.0, 200.0]);
        assert_eq!(
            (p.base.v_max, p.base.pause, p.base.sim_time, p.base.cbr_rate),
            (10.0, 10.0, 200.0, 10.0)
        );
        let p = preset("fig9-mobility-sweep").unwrap();
        assert_eq!(p.values, vec![10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!((p.base.n, p.base.pause, p.base.sim_time, p.base.cbr_rate), (100, 10.0, 200.0, 10.0));
        let p = preset("fig10-pause-sweep").unwrap();
        assert_eq!(p.values, vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0]);
        assert_eq!((p.base.n, p.base.sim_time, p.base.cbr_rate), (50, 7500.0, 5.0));
        assert_eq!(p.protocols.len(), 4);
        assert!(matches!(preset("fig11"), Err(SimError::UnknownPreset(_))));
    }

    #[test]
    fn every_named_preset_resolves() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            for &v in &p.values {
                p.point_config(v, ProtocolKind::Ambr, 1).unwrap();
            }
        }
    }

    #[test]
    fn mean_sd_oracle() {
        assert_eq!(mean_sd(&[]), (0.0, 0.0));
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    fn row(v: f64) -> SummaryRow {
        SummaryRow {
            scenario: "s".into(),
            swept_param: "n".into(),
            value: v,
            protocol: ProtocolKind::Ambr,
            seed_count: 3,
            overhead_per_node_mean: 0.1 + v / 3.0,
            overhead_per_node_sd: 1.0 / 7.0,
            delivery_ratio_mean: 2.0 / 3.0,
            delivery_ratio_sd: 0.0,
        }
    }

    #[test]
    fn csv_header_only_for_empty_results() {
        let mut buf = Vec::new();
        emit_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![row(40.0), row(60.0)];
        let mut buf = Vec::new();
        emit_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn analytic_sweep_single_point_and_monotone_pn() {
        let rows = analytic_sweep(&AnalyticRanges::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].p_b, 0.5);
        let ranges = AnalyticRanges {
            e_n: (1..=5).collect(),
            ..AnalyticRanges::default()
        };
        let rows = analytic_sweep(&ranges).unwrap();
        assert!(rows.windows(2).all(|w| w[1].p_n >= w[0].p_n));
        for r in &rows {
            assert!((r.p_r - (1.0 - r.p_f0 * r.p_f1)).abs() <= 1e-15);
        }
        let bad = AnalyticRanges {
            mu: vec![],
            ..AnalyticRanges::default()
        };
        assert!(analytic_sweep(&bad).is_err());
    }
}
