//! Python bindings: configs, single runs, preset sweeps and the analytic model.

use std::collections::BTreeMap;

use ::ambrsim as core;
use core::analytic::{self, PsInputs, PsMode};
use core::harness;
use core::kernel::{RngStream, StreamLabel};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: core::SimError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Simulation parameters. Keyword arguments use the config-file keys.
#[pyclass(name = "SimConfig", module = "ambrsim", skip_from_py_object)]
struct PySimConfig {
    inner: core::SimConfig,
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut cfg = PySimConfig {
            inner: core::SimConfig::default(),
        };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string())?;
            }
        }
        Ok(cfg)
    }

    /// Parses `key = value` lines.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PySimConfig {
            inner: core::SimConfig::parse(text).map_err(err)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(PyValueError::new_err)?;
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn sim_time(&self) -> f64 {
        self.inner.sim_time
    }

    #[getter]
    fn protocol(&self) -> String {
        self.inner.protocol.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "SimConfig(n={}, protocol={}, sim_time={}, seed={})",
            self.inner.n, self.inner.protocol, self.inner.sim_time, self.inner.seed
        )
    }
}

/// Metrics of one finished run.
#[pyclass(name = "Report", module = "ambrsim", get_all)]
struct PyReport {
    control_tx: BTreeMap<String, u64>,
    control_total: u64,
    data_tx: u64,
    flows_generated: u64,
    flows_delivered: u64,
    overhead_per_node: f64,
    delivery_ratio: f64,
    mean_hops: f64,
    mean_latency: f64,
    nodes: usize,
    events: u64,
    trace_hash: u64,
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "Report(overhead_per_node={:.3}, delivery_ratio={:.4}, control_total={})",
            self.overhead_per_node, self.delivery_ratio, self.control_total
        )
    }
}

/// One (point, protocol) row of a sweep.
#[pyclass(name = "SummaryRow", module = "ambrsim", get_all)]
struct PySummaryRow {
    scenario: String,
    swept_param: String,
    value: f64,
    protocol: String,
    seed_count: usize,
    overhead_per_node_mean: f64,
    overhead_per_node_sd: f64,
    delivery_ratio_mean: f64,
    delivery_ratio_sd: f64,
}

#[pymethods]
impl PySummaryRow {
    fn __repr__(&self) -> String {
        format!(
            "SummaryRow({}={} {} overhead={:.2}±{:.2} delivery={:.3})",
            self.swept_param,
            self.value,
            self.protocol,
            self.overhead_per_node_mean,
            self.overhead_per_node_sd,
            self.delivery_ratio_mean
        )
    }
}

/// Runs one simulation; the GIL is released while it runs.
#[pyfunction]
fn run(py: Python<'_>, config: &PySimConfig) -> PyResult<PyReport> {
    let cfg = config.inner.clone();
    let res = py.detach(move || harness::run_config(&cfg)).map_err(err)?;
    let r = &res.report;
    Ok(PyReport {
        control_tx: r.control_tx.iter().map(|(k, v)| (format!("{k:?}"), *v)).collect(),
        control_total: r.control_total,
        data_tx: r.data_tx,
        flows_generated: r.flows_generated,
        flows_delivered: r.flows_delivered,
        overhead_per_node: r.overhead_per_node,
        delivery_ratio: r.delivery_ratio,
        mean_hops: r.mean_hops(),
        mean_latency: r.mean_latency(),
        nodes: r.nodes,
        events: res.events,
        trace_hash: res.trace_hash,
    })
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    harness::PRESET_NAMES.to_vec()
}

/// Runs a named preset and returns one row per (point, protocol).
#[pyfunction]
#[pyo3(signature = (name, replications = 5, base_seed = 1, sim_time = None))]
fn run_preset(
    py: Python<'_>,
    name: &str,
    replications: usize,
    base_seed: u64,
    sim_time: Option<f64>,
) -> PyResult<Vec<PySummaryRow>> {
    let mut p = harness::preset(name).map_err(err)?;
    if let Some(t) = sim_time {
        p.base.sim_time = t;
    }
    let rows = py
        .detach(move || harness::run_scenario(&p, replications, base_seed))
        .map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| PySummaryRow {
            scenario: r.scenario,
            swept_param: r.swept_param,
            value: r.value,
            protocol: r.protocol.to_string(),
            seed_count: r.seed_count,
            overhead_per_node_mean: r.overhead_per_node_mean,
            overhead_per_node_sd: r.overhead_per_node_sd,
            delivery_ratio_mean: r.delivery_ratio_mean,
            delivery_ratio_sd: r.delivery_ratio_sd,
        })
        .collect())
}

#[pyfunction]
fn eval_pb(lambda: f64, mu: f64) -> PyResult<f64> {
    analytic::eval_pb(lambda, mu).map_err(err)
}

#[pyfunction]
fn eval_pn(pb: f64, e_n: u32) -> PyResult<f64> {
    analytic::eval_pn(pb, e_n).map_err(err)
}

#[pyfunction]
fn eval_pk_distribution(e_n: u32, pb: f64) -> PyResult<Vec<f64>> {
    analytic::eval_pk_distribution(e_n, pb).map_err(err)
}

#[pyfunction]
fn eval_pr(p0: f64, kk: u32, e_n: u32) -> PyResult<f64> {
    analytic::eval_pr(p0, kk, e_n).map_err(err)
}

/// End-to-end success expression; returns `(term1, term2, term3, value)`.
#[pyfunction]
#[pyo3(signature = (e_l, k, kk, e_n, p0, pb, mode = "literal"))]
fn eval_ps(e_l: f64, k: f64, kk: u32, e_n: u32, p0: f64, pb: f64, mode: &str) -> PyResult<(f64, f64, f64, f64)> {
    let mode = match mode {
        "literal" => PsMode::Literal,
        "dedup" => PsMode::Dedup,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let inp = PsInputs { e_l, k, kk, e_n, p0, pb };
    let b = analytic::eval_ps(&inp, mode).map_err(err)?;
    Ok((b.term1, b.term2, b.term3, b.value))
}

#[pyfunction]
#[pyo3(signature = (lambda_, mu, samples, seed = 1))]
fn monte_carlo_pb(lambda_: f64, mu: f64, samples: u64, seed: u64) -> PyResult<f64> {
    let mut s = RngStream::new(seed, StreamLabel::Analytic);
    analytic::monte_carlo_pb(lambda_, mu, samples, &mut s).map_err(err)
}

#[pymodule]
fn ambrsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PySummaryRow>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(eval_pb, m)?)?;
    m.add_function(wrap_pyfunction!(eval_pn, m)?)?;
    m.add_function(wrap_pyfunction!(eval_pk_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(eval_pr, m)?)?;
    m.add_function(wrap_pyfunction!(eval_ps, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_pb, m)?)?;
    Ok(())
}
