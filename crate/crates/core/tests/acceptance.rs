//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are reported but do not fail the process unless
//! `ACCEPTANCE_STRICT=1` is set.

mod common;

use std::time::Instant;

use ambrsim::analytic::{
    eval_pb, eval_pf0, eval_pf1, eval_pk_distribution, eval_pn, eval_pr, eval_ps, monte_carlo_pb,
    PsInputs, PsMode,
};
use ambrsim::harness::{emit_csv, preset, run_scenario, run_sweep, ScenarioPreset, SummaryRow, PRESET_NAMES};
use ambrsim::kernel::{RngStream, StreamLabel};
use ambrsim::packet::PacketKind;
use ambrsim::sim::place_nodes;
use ambrsim::{run_config, FloodReactive, Placement, Proactive, ProtocolKind, SimConfig, Simulation};
use common::{bfs_hops, fixed, id, line};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const TOL: f64 = 1e-12;

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name} = {got}, expected {want}"))
    }
}

fn pb_closed_form() -> Outcome {
    close("pb(1,1)", eval_pb(1.0, 1.0).unwrap(), 0.5, TOL)?;
    close("pb(lambda=3,mu=2)", eval_pb(3.0, 2.0).unwrap(), 0.4, TOL)?;
    close("pb(lambda=2,mu=0)", eval_pb(2.0, 0.0).unwrap(), 0.0, TOL)?;
    Ok("0.5, 0.4, 0".into())
}

fn pn_closed_form() -> Outcome {
    close("pn(0.5,2)", eval_pn(0.5, 2).unwrap(), 0.234375, TOL)?;
    close("pn(0,1)", eval_pn(0.0, 1).unwrap(), 1.0, TOL)?;
    close("pn(0.3,0)", eval_pn(0.3, 0).unwrap(), 0.0, TOL)?;
    Ok("0.234375, 1, 0".into())
}

fn pmf_normalized() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let e_n = rng.random_range(0..=64);
        let pb = rng.random_range(0.0..=1.0);
        let sum: f64 = eval_pk_distribution(e_n, pb).unwrap().iter().sum();
        worst = worst.max((sum - 1.0).abs());
        close(&format!("sum pmf(e_n={e_n}, pb={pb})"), sum, 1.0, TOL)?;
    }
    Ok(format!("200 cases, max |sum - 1| = {worst:.1e}"))
}

fn pr_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let p0 = rng.random_range(0.0..=1.0);
        let kk = rng.random_range(0..=8);
        let e_n = rng.random_range(0..=16);
        let direct = 1.0 - eval_pf0(p0, kk).unwrap() * eval_pf1(p0, kk, e_n).unwrap();
        close(&format!("pr({p0},{kk},{e_n})"), eval_pr(p0, kk, e_n).unwrap(), direct, TOL)?;
    }
    close("pr(0.5,2,1)", eval_pr(0.5, 2, 1).unwrap(), 0.9375, TOL)?;
    Ok("200 cases, pr(0.5,2,1) = 0.9375".into())
}

fn ps_terms() -> Outcome {
    let inp = PsInputs {
        e_l: 2.0,
        k: 1.0,
        kk: 1,
        e_n: 1,
        p0: 0.5,
        pb: 0.5,
    };
    let lit = eval_ps(&inp, PsMode::Literal).unwrap();
    let dedup = eval_ps(&inp, PsMode::Dedup).unwrap();
    close("term1", lit.term1, 0.25, TOL)?;
    close("term2", lit.term2, 0.5, TOL)?;
    close("term3", lit.term3, 0.375, TOL)?;
    close("literal", lit.value, 1.625, TOL)?;
    close("dedup", dedup.value, 1.125, TOL)?;
    Ok("terms (0.25, 0.5, 0.375), literal 1.625, dedup 1.125".into())
}

fn monte_carlo() -> Outcome {
    let n = 1_000_000u64;
    let mut parts = Vec::new();
    for (i, (mu, lambda)) in [(1.0, 1.0), (3.0, 1.0), (1.0, 4.0)].into_iter().enumerate() {
        let p = eval_pb(lambda, mu).unwrap();
        let mut s = RngStream::indexed(17, StreamLabel::Analytic, i as u64);
        let est = monte_carlo_pb(lambda, mu, n, &mut s).unwrap();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let z = (est - p) / sigma;
        if z.abs() > 4.0 {
            return Err(format!("mu={mu} lambda={lambda}: {est} vs {p} ({z:.2} sigma)"));
        }
        parts.push(format!("{z:+.2}"));
    }
    Ok(format!("z-scores {}", parts.join(", ")))
}

fn csv_bytes(p: &ScenarioPreset, reps: usize) -> Result<Vec<u8>, String> {
    let rows = run_scenario(p, reps, 1).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    emit_csv(&rows, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn capped(name: &str, horizon: f64) -> ScenarioPreset {
    let mut p = preset(name).unwrap();
    p.base.sim_time = p.base.sim_time.min(horizon);
    p
}

fn determinism() -> Outcome {
    let mut checked = 0;
    for name in PRESET_NAMES {
        let mut p = if name.starts_with("desk") {
            preset(name).unwrap()
        } else {
            capped(name, 100.0)
        };
        p.values.truncate(1);
        let a = csv_bytes(&p, 2)?;
        let b = csv_bytes(&p, 2)?;
        if a != b {
            return Err(format!("{name}: CSV differs between runs"));
        }
        checked += 1;
    }
    Ok(format!("first point of {checked} presets, 2 seeds each, byte-identical"))
}

fn static_delivery() -> Outcome {
    let mut total = 0;
    for seed in 1..=5 {
        let cfg = SimConfig {
            n: 30,
            area_width: 400.0,
            area_height: 400.0,
            v_max: 0.0,
            placement: Placement::Connected,
            loss_prob: 0.0,
            sim_time: 100.0,
            seed,
            protocol: ProtocolKind::Ambr,
            ..SimConfig::default()
        };
        let r = run_config(&cfg).map_err(|e| e.to_string())?.report;
        if r.delivery_ratio != 1.0 {
            return Err(format!("seed {seed}: delivery {} ({}/{})", r.delivery_ratio, r.flows_delivered, r.flows_generated));
        }
        total += r.flows_generated;
    }
    Ok(format!("seeds 1-5, {total} packets, delivery 1.0"))
}

fn row(rows: &[SummaryRow], value: f64, p: ProtocolKind) -> &SummaryRow {
    rows.iter()
        .find(|r| r.value == value && r.protocol == p)
        .expect("row present")
}

fn fmt(r: &SummaryRow) -> String {
    format!("{:.1}±{:.1}", r.overhead_per_node_mean, r.overhead_per_node_sd)
}

/// Nondecreasing in sweep order, except for at most one step down that is
/// no larger than the bigger of the two standard deviations.
fn nondecreasing(series: &[&SummaryRow]) -> Result<(), String> {
    let mut inversions = 0;
    for w in series.windows(2) {
        let drop = w[0].overhead_per_node_mean - w[1].overhead_per_node_mean;
        if drop > 0.0 {
            inversions += 1;
            let sd = w[0].overhead_per_node_sd.max(w[1].overhead_per_node_sd);
            if drop > sd || inversions > 1 {
                return Err(format!("AMBR falls from {} to {} at {}", fmt(w[0]), fmt(w[1]), w[1].value));
            }
        }
    }
    Ok(())
}

fn desk(name: &str) -> Result<(ScenarioPreset, Vec<SummaryRow>), String> {
    let p = preset(name).unwrap();
    let rows = run_scenario(&p, 5, 1).map_err(|e| e.to_string())?;
    Ok((p, rows))
}

fn table(p: &ScenarioPreset, rows: &[SummaryRow]) -> String {
    p.values
        .iter()
        .map(|&v| {
            let cells: Vec<String> = p
                .protocols
                .iter()
                .map(|&k| format!("{k} {}", fmt(row(rows, v, k))))
                .collect();
            format!("{}={v}: {}", p.swept_param, cells.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn size_trend() -> Outcome {
    let (p, rows) = desk("desk-size-sweep")?;
    let detail = table(&p, &rows);
    let mut errs = Vec::new();
    for &v in &p.values {
        let a = row(&rows, v, ProtocolKind::Ambr).overhead_per_node_mean;
        for other in [ProtocolKind::FloodReactive, ProtocolKind::Proactive] {
            if a >= row(&rows, v, other).overhead_per_node_mean {
                errs.push(format!("n={v}: AMBR not below {other}"));
            }
        }
    }
    let series: Vec<_> = p.values.iter().map(|&v| row(&rows, v, ProtocolKind::Ambr)).collect();
    if let Err(e) = nondecreasing(&series) {
        errs.push(e);
    }
    verdict(errs, detail)
}

fn mobility_trend() -> Outcome {
    let (p, rows) = desk("desk-mobility-sweep")?;
    let detail = table(&p, &rows);
    let mut errs = Vec::new();
    for &v in &p.values {
        let a = row(&rows, v, ProtocolKind::Ambr).overhead_per_node_mean;
        if a >= row(&rows, v, ProtocolKind::FloodReactive).overhead_per_node_mean {
            errs.push(format!("V_max={v}: AMBR not below flood-reactive"));
        }
    }
    let series: Vec<_> = p.values.iter().map(|&v| row(&rows, v, ProtocolKind::Ambr)).collect();
    if let Err(e) = nondecreasing(&series) {
        errs.push(e);
    }
    verdict(errs, detail)
}

/// `lo` at most `hi`, allowing the larger of the two standard deviations.
fn at_most(lo: &SummaryRow, hi: &SummaryRow) -> bool {
    lo.overhead_per_node_mean <= hi.overhead_per_node_mean + lo.overhead_per_node_sd.max(hi.overhead_per_node_sd)
}

fn pause_trend() -> Outcome {
    let (p, rows) = desk("desk-pause-sweep")?;
    let detail = table(&p, &rows);
    let mut errs = Vec::new();
    for &v in &p.values {
        let a = row(&rows, v, ProtocolKind::Ambr);
        let lr = row(&rows, v, ProtocolKind::FloodReactiveLr);
        let fr = row(&rows, v, ProtocolKind::FloodReactive);
        if !at_most(a, lr) {
            errs.push(format!("p={v}: AMBR above flood-reactive-lr"));
        }
        if !at_most(lr, fr) {
            errs.push(format!("p={v}: flood-reactive-lr above flood-reactive"));
        }
    }
    verdict(errs, detail)
}

fn verdict(errs: Vec<String>, detail: String) -> Outcome {
    if errs.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} [{detail}]", errs.join("; ")))
    }
}

fn invariant_smoke() -> Outcome {
    let mut runs = 0;
    for name in PRESET_NAMES {
        let p = capped(name, 100.0);
        runs += run_sweep(&p, 1, 1).map_err(|e| format!("{name}: {e}"))?.len();
    }
    Ok(format!("{runs} runs over every preset point and protocol (horizon 100 s), no violations"))
}

fn proactive_tables() -> Outcome {
    for seed in 1..=5 {
        let draw = SimConfig {
            n: 20,
            area_width: 700.0,
            area_height: 700.0,
            placement: Placement::Connected,
            seed,
            ..SimConfig::default()
        };
        let pts = place_nodes(&draw).map_err(|e| e.to_string())?;
        let cfg = SimConfig {
            seed,
            ..fixed(pts.clone(), ProtocolKind::Proactive)
        };
        let mut s = Simulation::new(cfg.clone(), Proactive::new(&cfg)).unwrap();
        s.run_until(2.0 * cfg.update_period).map_err(|e| e.to_string())?;
        let dist: Vec<_> = (0..pts.len()).map(|j| bfs_hops(&pts, cfg.range, j)).collect();
        for i in 0..pts.len() {
            for j in (0..pts.len()).filter(|&j| j != i) {
                let hops = s.proto.route(id(i as u32), id(j as u32)).map(|r| r.hops);
                if hops != dist[j][i] {
                    return Err(format!("seed {seed}: {i}->{j} table {hops:?}, shortest {:?}", dist[j][i]));
                }
            }
        }
    }
    Ok("5 frozen 20-node graphs match all-pairs shortest hops after 2 periods".into())
}

fn line_flood() -> Outcome {
    let cfg = fixed(line(6, 200.0), ProtocolKind::FloodReactive);
    let mut s = Simulation::new(cfg.clone(), FloodReactive::new(&cfg, false)).unwrap();
    s.inject(1.0, id(0), id(5));
    s.run_until(50.0).map_err(|e| e.to_string())?;
    let m = s.net.metrics();
    let (rreq, rrep) = (m.control_of(PacketKind::Rreq), m.control_of(PacketKind::Rrep));
    if (rreq, rrep) != (5, 5) {
        return Err(format!("RREQ {rreq}, RREP {rrep}"));
    }
    Ok("RREQ 5, RREP 5".into())
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("route-break probability closed form", pb_closed_form),
        ("monitor routing success closed form", pn_closed_form),
        ("monitor count distribution sums to one", pmf_normalized),
        ("discovery success identity", pr_identity),
        ("end-to-end success terms", ps_terms),
        ("Monte Carlo route-break estimate", monte_carlo),
        ("deterministic CSV output", determinism),
        ("static connected AMBR delivers everything", static_delivery),
        ("network size trend", size_trend),
        ("mobility trend", mobility_trend),
        ("pause time ordering", pause_trend),
        ("invariants over preset smoke sweep", invariant_smoke),
        ("proactive tables match shortest paths", proactive_tables),
        ("six-node line flood accounting", line_flood),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
