//! `sqnext` command-line frontend.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataflow::DataflowMode;
use crate::error::SimError;
use crate::hwmodel::{load_config, preset, AcceleratorConfig, PRESET_NAMES};
use crate::netir::{from_text, to_text, LayerGraph};
use crate::simrun::report::{self, Format, Grid};
use crate::simrun::{compare_results, figure_data, simulate_network, ModePolicy};
use crate::zoo::{build_variant, catalog, ZooError};

#[derive(Debug, Parser)]
#[command(
    name = "sqnext",
    version,
    about = "CNN layer accounting and PE-array accelerator simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// Preset name (8x8_32KB, 16x16_128KB) or path to a config file.
    #[arg(long, default_value = "16x16_128KB")]
    pub config: String,
    /// Override the weight sparsity exploited in OS mode.
    #[arg(long)]
    pub sparsity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Ws,
    Os,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List catalog networks with their published counts.
    List {
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Per-layer shapes, parameters and MACs of a network.
    Describe {
        /// Catalog name or network file.
        net: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Simulate a network on one accelerator configuration.
    Simulate {
        net: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        /// Add each layer's tiling plan to the table output.
        #[arg(long)]
        verbose_tiling: bool,
        /// Also write merged per-layer cycles/efficiency series here.
        #[arg(long)]
        figure_data: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compare networks; time is normalized to the fastest.
    Compare {
        #[arg(required = true)]
        nets: Vec<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Simulate one network over a grid of array sizes, buffers and sparsities.
    Sweep {
        net: String,
        /// Base configuration for everything not swept.
        #[arg(long, default_value = "16x16_128KB")]
        config: String,
        /// Array sizes, e.g. 8x8,16x16.
        #[arg(long, value_delimiter = ',')]
        pe: Vec<String>,
        /// Buffer sizes, e.g. 32KB,128KB or plain bytes.
        #[arg(long, value_delimiter = ',')]
        buffer: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        sparsity: Vec<f64>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Write a network file.
    Export { net: String, path: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Model(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Model(_) | CliError::Io { .. } => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Zoo(ZooError::UnknownNetwork(_)) => CliError::Usage(e.to_string()),
            other => CliError::Model(other.to_string()),
        }
    }
}

/// Catalog name, or else a network file on disk.
pub fn resolve_network(sel: &str) -> Result<LayerGraph, CliError> {
    match build_variant(sel) {
        Ok(g) => Ok(g),
        Err(ZooError::UnknownNetwork(_)) => {
            let path = Path::new(sel);
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "unknown network `{sel}` (not in the catalog and no such file)"
                )));
            }
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: sel.to_string(),
                source,
            })?;
            from_text(&text)
                .and_then(|g| g.infer_shapes())
                .map_err(|e| CliError::Model(format!("{sel}: {e}")))
        }
        Err(e) => Err(CliError::Model(e.to_string())),
    }
}

/// Preset or config file, then command-line overrides.
pub fn resolve_config(sel: &str, sparsity: Option<f64>) -> Result<AcceleratorConfig, CliError> {
    let mut cfg = match preset(sel) {
        Ok(c) => c,
        Err(_) => {
            let path = Path::new(sel);
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "unknown config `{sel}` (expected one of {} or a file)",
                    PRESET_NAMES.join(", ")
                )));
            }
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: sel.to_string(),
                source,
            })?;
            load_config(&text).map_err(|e| CliError::Model(format!("{sel}: {e}")))?
        }
    };
    if let Some(s) = sparsity {
        cfg.weight_sparsity = s;
    }
    cfg.check().map_err(|e| CliError::Model(e.to_string()))?;
    Ok(cfg)
}

fn emit(out: &OutputArgs, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &out.output {
        Some(p) => write_file(p, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn write_file(p: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(p, text).map_err(|source| CliError::Io {
        path: p.display().to_string(),
        source,
    })
}

fn render(grid: Grid, json: &impl Serialize, format: Format) -> String {
    match format {
        Format::Table => grid.to_table(),
        Format::Csv => grid.to_csv(),
        Format::Json => report::to_json(json),
    }
}

fn millions(v: Option<u64>) -> String {
    match v {
        Some(v) if v >= 10_000_000 => format!("{:.0}M", v as f64 / 1e6),
        Some(v) => format!("{:.2}M", v as f64 / 1e6),
        None => "-".into(),
    }
}

fn list(out: &OutputArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let entries = catalog();
    let mut g = Grid::new(["name", "params", "macs", "source", "description"]);
    for e in &entries {
        let source = serde_json::to_value(e.source_table).expect("enum serializes");
        g.push(vec![
            e.name.to_string(),
            millions(e.expected_params),
            e.expected_macs
                .map_or("-".into(), |m| format!("{:.0}M", m as f64 / 1e6)),
            source.as_str().unwrap_or_default().to_string(),
            e.description.to_string(),
        ]);
    }
    emit(out, &render(g, &entries, out.format), stdout)
}

#[derive(Serialize)]
struct DescribeRow {
    layer: String,
    kind: &'static str,
    output: String,
    params: u64,
    macs: u64,
}

#[derive(Serialize)]
struct Description {
    network: String,
    layers: Vec<DescribeRow>,
    total_params: u64,
    total_macs: u64,
}

fn describe(net: &str, out: &OutputArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let graph = resolve_network(net)?;
    let model = |e: crate::netir::NetError| CliError::Model(e.to_string());
    let params = graph.param_count().map_err(model)?;
    let macs = graph.mac_count().map_err(model)?;
    let layers: Vec<DescribeRow> = graph
        .nodes()
        .iter()
        .enumerate()
        .zip(params.per_layer.iter().zip(&macs.per_layer))
        .map(|((i, n), ((_, p), (_, m)))| DescribeRow {
            layer: n.id.clone(),
            kind: n.kind.tag(),
            output: graph.shape(i).map(|s| s.to_string()).unwrap_or_default(),
            params: *p,
            macs: *m,
        })
        .collect();
    let d = Description {
        network: graph.name().to_string(),
        layers,
        total_params: params.total,
        total_macs: macs.total,
    };
    let mut g = Grid::new(["layer", "kind", "output", "params", "macs"]);
    for r in &d.layers {
        g.push(vec![
            r.layer.clone(),
            r.kind.into(),
            r.output.clone(),
            r.params.to_string(),
            r.macs.to_string(),
        ]);
    }
    let text = match out.format {
        Format::Table => format!(
            "{}\n{}total: {} params, {} MACs\n",
            d.network,
            g.to_table(),
            d.total_params,
            d.total_macs
        ),
        Format::Csv => {
            g.push(vec![
                "total".into(),
                String::new(),
                String::new(),
                d.total_params.to_string(),
                d.total_macs.to_string(),
            ]);
            g.to_csv()
        }
        Format::Json => report::to_json(&d),
    };
    emit(out, &text, stdout)
}

fn parse_pe(s: &str) -> Result<(u64, u64), CliError> {
    let bad = || {
        CliError::Usage(format!(
            "invalid array size `{s}` (expected RxC, e.g. 16x16)"
        ))
    };
    let (r, c) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let r: u64 = r.parse().map_err(|_| bad())?;
    let c: u64 = c.parse().map_err(|_| bad())?;
    if r == 0 || c == 0 {
        return Err(bad());
    }
    Ok((r, c))
}

fn parse_bytes(s: &str) -> Result<u64, CliError> {
    let t = s.trim();
    let upper = t.to_ascii_uppercase();
    let (digits, mult) = if let Some(d) = upper.strip_suffix("KB") {
        (d, 1024)
    } else if let Some(d) = upper.strip_suffix("MB") {
        (d, 1024 * 1024)
    } else if let Some(d) = upper.strip_suffix('B') {
        (d, 1)
    } else {
        (upper.as_str(), 1)
    };
    match digits.trim().parse::<u64>() {
        Ok(v) if v > 0 => Ok(v * mult),
        _ => Err(CliError::Usage(format!(
            "invalid buffer size `{s}` (e.g. 32KB)"
        ))),
    }
}

#[derive(Serialize)]
struct SweepRow {
    pe: String,
    buffer_bytes: u64,
    sparsity: f64,
    total_cycles: u64,
    total_energy: f64,
    total_macs: u64,
    params: u64,
    efficiency: f64,
}

fn sweep(
    net: &str,
    base: &str,
    pe: &[String],
    buffer: &[String],
    sparsity: &[f64],
    out: &OutputArgs,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let graph = resolve_network(net)?;
    let base = resolve_config(base, None)?;
    let pes = if pe.is_empty() {
        vec![(base.pe_rows, base.pe_cols)]
    } else {
        pe.iter().map(|s| parse_pe(s)).collect::<Result<_, _>>()?
    };
    let buffers = if buffer.is_empty() {
        vec![base.buffer_bytes]
    } else {
        buffer
            .iter()
            .map(|s| parse_bytes(s))
            .collect::<Result<_, _>>()?
    };
    let sparsities = if sparsity.is_empty() {
        vec![base.weight_sparsity]
    } else {
        sparsity.to_vec()
    };
    let mut points = Vec::new();
    for &(r, c) in &pes {
        for &b in &buffers {
            for &s in &sparsities {
                let cfg = AcceleratorConfig {
                    pe_rows: r,
                    pe_cols: c,
                    buffer_bytes: b,
                    weight_sparsity: s,
                    ..base
                };
                cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
                points.push(cfg);
            }
        }
    }
    let rows = points
        .par_iter()
        .map(|cfg| {
            let r = simulate_network(&graph, cfg, ModePolicy::Auto)?;
            Ok(SweepRow {
                pe: format!("{}x{}", cfg.pe_rows, cfg.pe_cols),
                buffer_bytes: cfg.buffer_bytes,
                sparsity: cfg.weight_sparsity,
                total_cycles: r.total_cycles,
                total_energy: r.total_energy,
                total_macs: r.total_macs,
                params: r.params,
                efficiency: r.efficiency(),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let mut g = Grid::new([
        "pe",
        "buffer_bytes",
        "sparsity",
        "total_cycles",
        "total_energy",
        "total_macs",
        "params",
        "efficiency",
    ]);
    for r in &rows {
        g.push(vec![
            r.pe.clone(),
            r.buffer_bytes.to_string(),
            r.sparsity.to_string(),
            r.total_cycles.to_string(),
            r.total_energy.to_string(),
            r.total_macs.to_string(),
            r.params.to_string(),
            r.efficiency.to_string(),
        ]);
    }
    emit(out, &render(g, &rows, out.format), stdout)
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::List { out } => list(&out, stdout),
        Command::Describe { net, out } => describe(&net, &out, stdout),
        Command::Simulate {
            net,
            cfg,
            mode,
            verbose_tiling,
            figure_data: fig,
            out,
        } => {
            let graph = resolve_network(&net)?;
            let config = resolve_config(&cfg.config, cfg.sparsity)?;
            let policy = match mode {
                ModeArg::Auto => ModePolicy::Auto,
                ModeArg::Ws => ModePolicy::Force(DataflowMode::Ws),
                ModeArg::Os => ModePolicy::Force(DataflowMode::Os),
            };
            let result = simulate_network(&graph, &config, policy)?;
            if let Some(p) = fig {
                write_file(&p, &report::figure_csv(&figure_data(&result, true)))?;
            }
            emit(
                &out,
                &report::render_network(&result, out.format, verbose_tiling),
                stdout,
            )
        }
        Command::Compare { nets, cfg, out } => {
            let graphs = nets
                .iter()
                .map(|n| resolve_network(n))
                .collect::<Result<Vec<_>, _>>()?;
            let config = resolve_config(&cfg.config, cfg.sparsity)?;
            let results = graphs
                .par_iter()
                .map(|g| simulate_network(g, &config, ModePolicy::Auto))
                .collect::<Result<Vec<_>, _>>()?;
            emit(
                &out,
                &report::render_compare(&compare_results(&results), out.format),
                stdout,
            )
        }
        Command::Sweep {
            net,
            config,
            pe,
            buffer,
            sparsity,
            out,
        } => sweep(&net, &config, &pe, &buffer, &sparsity, &out, stdout),
        Command::Export { net, path } => {
            let graph = resolve_network(&net)?;
            write_file(&path, &to_text(&graph))
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sizes() {
        assert_eq!(parse_pe("16x16").unwrap(), (16, 16));
        assert!(parse_pe("16").is_err());
        assert_eq!(parse_bytes("32KB").unwrap(), 32768);
        assert_eq!(parse_bytes("4096").unwrap(), 4096);
        assert!(parse_bytes("0KB").is_err());
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["sqnext", "list", "--bogus"], &mut o, &mut e), 2);
    }
}
