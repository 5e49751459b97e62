//! Python bindings: catalog networks, accelerator configs, simulation and
//! comparison. Structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use sqnext_core::dataflow::DataflowMode;
use sqnext_core::hwmodel::{self, AcceleratorConfig};
use sqnext_core::netir::{self, LayerGraph};
use sqnext_core::simrun::{self, figure_data, ModePolicy, NetworkResult};
use sqnext_core::{zoo, SimError};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Infeasible { .. } | SimError::OracleTooLarge { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => value_err(other),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A layer graph with inferred shapes.
#[pyclass(module = "sqnext", frozen)]
struct Network {
    graph: LayerGraph,
}

#[pymethods]
impl Network {
    /// Builds a catalog network by name.
    #[staticmethod]
    fn from_catalog(name: &str) -> PyResult<Self> {
        let graph = zoo::build_variant(name).map_err(value_err)?;
        Ok(Network { graph })
    }

    /// Parses a network document and infers shapes.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let graph = netir::from_text(text)
            .and_then(|g| g.infer_shapes())
            .map_err(value_err)?;
        Ok(Network { graph })
    }

    fn to_text(&self) -> String {
        netir::to_text(&self.graph)
    }

    #[getter]
    fn name(&self) -> &str {
        self.graph.name()
    }

    #[getter]
    fn params(&self) -> PyResult<u64> {
        Ok(self.graph.param_count().map_err(value_err)?.total)
    }

    #[getter]
    fn macs(&self) -> PyResult<u64> {
        Ok(self.graph.mac_count().map_err(value_err)?.total)
    }

    fn __len__(&self) -> usize {
        self.graph.len()
    }

    /// One dict per layer: id, kind, shape (c, h, w), params, macs.
    fn layers<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let params = self.graph.param_count().map_err(value_err)?;
        let macs = self.graph.mac_count().map_err(value_err)?;
        let rows: Vec<serde_json::Value> = self
            .graph
            .nodes()
            .iter()
            .enumerate()
            .zip(params.per_layer.iter().zip(&macs.per_layer))
            .map(|((i, n), ((_, p), (_, m)))| {
                let s = self.graph.shape(i);
                serde_json::json!({
                    "id": n.id,
                    "kind": n.kind.tag(),
                    "shape": s.map(|s| [s.channels, s.height, s.width]),
                    "params": p,
                    "macs": m,
                })
            })
            .collect();
        to_py(py, &rows)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network({:?}, {} layers)",
            self.graph.name(),
            self.graph.len()
        )
    }
}

/// Accelerator configuration.
#[pyclass(module = "sqnext", frozen)]
struct Accelerator {
    cfg: AcceleratorConfig,
}

#[pymethods]
impl Accelerator {
    #[new]
    #[pyo3(signature = (pe_rows, pe_cols, buffer_bytes, weight_sparsity=None, dram_bytes_per_cycle=None, dram_latency_cycles=None))]
    fn new(
        pe_rows: u64,
        pe_cols: u64,
        buffer_bytes: u64,
        weight_sparsity: Option<f64>,
        dram_bytes_per_cycle: Option<f64>,
        dram_latency_cycles: Option<u64>,
    ) -> PyResult<Self> {
        let mut cfg = AcceleratorConfig::new(pe_rows, pe_cols, buffer_bytes);
        if let Some(s) = weight_sparsity {
            cfg.weight_sparsity = s;
        }
        if let Some(b) = dram_bytes_per_cycle {
            cfg.dram_bytes_per_cycle = b;
        }
        if let Some(l) = dram_latency_cycles {
            cfg.dram_latency_cycles = l;
        }
        cfg.check().map_err(value_err)?;
        Ok(Accelerator { cfg })
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Accelerator {
            cfg: hwmodel::preset(name).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Accelerator {
            cfg: hwmodel::load_config(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        hwmodel::save_config(&self.cfg)
    }

    /// Copy with a different weight sparsity.
    fn with_sparsity(&self, sparsity: f64) -> PyResult<Self> {
        let cfg = AcceleratorConfig {
            weight_sparsity: sparsity,
            ..self.cfg
        };
        cfg.check().map_err(value_err)?;
        Ok(Accelerator { cfg })
    }

    #[getter]
    fn label(&self) -> String {
        self.cfg.label()
    }

    #[getter]
    fn pe_rows(&self) -> u64 {
        self.cfg.pe_rows
    }

    #[getter]
    fn pe_cols(&self) -> u64 {
        self.cfg.pe_cols
    }

    #[getter]
    fn buffer_bytes(&self) -> u64 {
        self.cfg.buffer_bytes
    }

    #[getter]
    fn weight_sparsity(&self) -> f64 {
        self.cfg.weight_sparsity
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.cfg == other.cfg
    }

    fn __repr__(&self) -> String {
        format!("Accelerator({:?})", self.cfg.label())
    }
}

/// Result of simulating one network.
#[pyclass(module = "sqnext", frozen)]
struct SimResult {
    result: NetworkResult,
}

#[pymethods]
impl SimResult {
    #[getter]
    fn network(&self) -> &str {
        &self.result.network
    }

    #[getter]
    fn config(&self) -> &str {
        &self.result.config
    }

    #[getter]
    fn total_cycles(&self) -> u64 {
        self.result.total_cycles
    }

    #[getter]
    fn total_energy(&self) -> f64 {
        self.result.total_energy
    }

    #[getter]
    fn total_macs(&self) -> u64 {
        self.result.total_macs
    }

    #[getter]
    fn params(&self) -> u64 {
        self.result.params
    }

    /// Dense MACs per cycle.
    #[getter]
    fn efficiency(&self) -> f64 {
        self.result.efficiency()
    }

    fn layers<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.result.layers)
    }

    #[pyo3(signature = (merge=true))]
    fn figure_data<'py>(&self, py: Python<'py>, merge: bool) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &figure_data(&self.result, merge))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.result).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SimResult({:?} on {}, {} cycles)",
            self.result.network, self.result.config, self.result.total_cycles
        )
    }
}

fn resolve_network(net: &Bound<'_, PyAny>) -> PyResult<LayerGraph> {
    if let Ok(n) = net.cast::<Network>() {
        return Ok(n.get().graph.clone());
    }
    let name: String = net.extract()?;
    zoo::build_variant(&name).map_err(value_err)
}

fn resolve_config(config: Option<&Bound<'_, PyAny>>) -> PyResult<AcceleratorConfig> {
    match config {
        None => hwmodel::preset("16x16_128KB").map_err(value_err),
        Some(c) => {
            if let Ok(a) = c.cast::<Accelerator>() {
                return Ok(a.get().cfg);
            }
            let name: String = c.extract()?;
            hwmodel::preset(&name).map_err(value_err)
        }
    }
}

fn parse_mode(mode: &str) -> PyResult<ModePolicy> {
    match mode {
        "auto" => Ok(ModePolicy::Auto),
        "ws" => Ok(ModePolicy::Force(DataflowMode::Ws)),
        "os" => Ok(ModePolicy::Force(DataflowMode::Os)),
        other => Err(PyValueError::new_err(format!(
            "unknown mode `{other}` (auto, ws, os)"
        ))),
    }
}

/// Catalog entries as dicts.
#[pyfunction]
fn catalog(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &zoo::catalog())
}

/// Simulates a network (catalog name or `Network`) on a config (preset
/// name or `Accelerator`, default 16x16_128KB).
#[pyfunction]
#[pyo3(signature = (net, config=None, mode="auto"))]
fn simulate(
    py: Python<'_>,
    net: &Bound<'_, PyAny>,
    config: Option<&Bound<'_, PyAny>>,
    mode: &str,
) -> PyResult<SimResult> {
    let graph = resolve_network(net)?;
    let cfg = resolve_config(config)?;
    let policy = parse_mode(mode)?;
    let result = py
        .detach(|| simrun::simulate_network(&graph, &cfg, policy))
        .map_err(sim_err)?;
    Ok(SimResult { result })
}

/// Normalized comparison rows, one per network in the given order.
#[pyfunction]
#[pyo3(signature = (nets, config=None))]
fn compare<'py>(
    py: Python<'py>,
    nets: Vec<Bound<'py, PyAny>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let graphs = nets
        .iter()
        .map(resolve_network)
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = resolve_config(config)?;
    let rows = py
        .detach(|| simrun::compare_graphs(&graphs, &cfg))
        .map_err(sim_err)?;
    to_py(py, &rows)
}

#[pymodule]
fn sqnext(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Accelerator>()?;
    m.add_class::<SimResult>()?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add("PRESETS", hwmodel::PRESET_NAMES.to_vec())?;
    Ok(())
}
