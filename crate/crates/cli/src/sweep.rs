//! Grid execution and CSV / JSON output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use majolyap_core::circuit::{Boundary, CircuitParams, OutcomeRecord};
use majolyap_core::entanglement::trajectory_entanglement;
use majolyap_core::lyapunov::{normalization_shift, run_until_converged, Caps};
use majolyap_core::rng::TrajectorySeed;
use majolyap_core::topology::{chi_with_record, ChiMode};

use crate::config::{Protocol, SweepConfig};
use crate::error::{CliError, CliResult};
use crate::oracle_check::{run_oracle_suite, OracleGrid, OracleReport, Tolerances};

pub const CSV_HEADER: &str = "# majolyap-csv v1";

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRow {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub mu_o: f64,
    pub mu_e: f64,
    pub bc: Boundary,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    pub converged: bool,
    pub z1: f64,
    pub z3: f64,
    pub edge_weight: f64,
    pub orthogonality_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiRow {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub mu_o: f64,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "P_pbc")]
    pub p_pbc: f64,
    #[serde(rename = "P_apbc")]
    pub p_apbc: f64,
    pub chi: f64,
    pub converged_pbc: bool,
    pub converged_apbc: bool,
    pub det_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EntanglementRow {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub mu_o: f64,
    pub mu_e: f64,
    pub bc: Boundary,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "I2_AC")]
    pub i2_ac: f64,
    #[serde(rename = "S_topo")]
    pub s_topo: f64,
    #[serde(rename = "S_half")]
    pub s_half: f64,
}

#[derive(Clone, Debug)]
pub enum Row {
    Spectrum(SpectrumRow),
    Chi(ChiRow),
    Entanglement(EntanglementRow),
}

impl Row {
    fn key(&self) -> (usize, f64, u64) {
        match self {
            Row::Spectrum(r) => (r.l, r.mu_o, r.seed),
            Row::Chi(r) => (r.l, r.mu_o, r.seed),
            Row::Entanglement(r) => (r.l, r.mu_o, r.seed),
        }
    }

    /// Numeric columns averaged in the aggregate file.
    fn metrics(&self) -> Vec<(&'static str, f64)> {
        match self {
            Row::Spectrum(r) => vec![("z1", r.z1), ("z3", r.z3), ("edge_weight", r.edge_weight), ("converged", r.converged as u8 as f64)],
            Row::Chi(r) => vec![
                ("chi", r.chi),
                ("P_pbc", r.p_pbc),
                ("P_apbc", r.p_apbc),
                ("converged", (r.converged_pbc && r.converged_apbc) as u8 as f64),
            ],
            Row::Entanglement(r) => vec![("I2_AC", r.i2_ac), ("S_topo", r.s_topo), ("S_half", r.s_half)],
        }
    }

    fn converged(&self) -> bool {
        match self {
            Row::Spectrum(r) => r.converged,
            Row::Chi(r) => r.converged_pbc && r.converged_apbc,
            Row::Entanglement(_) => true,
        }
    }
}

pub struct TaskOutput {
    pub row: Row,
    pub detail: serde_json::Value,
    pub record: OutcomeRecord,
}

fn run_task(cfg: &SweepConfig, params: CircuitParams, seed: TrajectorySeed) -> CliResult<TaskOutput> {
    let caps: Caps = cfg.caps.into();
    let (l, j, mu_o) = (params.l, params.j, params.mu_o);
    match cfg.protocol {
        Protocol::Spectrum => {
            let r = run_until_converged(params, seed, caps)?;
            let row = SpectrumRow {
                l,
                j,
                mu_o,
                mu_e: params.mu_e,
                bc: params.bc,
                seed: seed.index,
                t: r.metadata.steps,
                converged: r.converged,
                z1: r.spectrum.z1(),
                z3: r.spectrum.z.get(1).copied().unwrap_or(f64::NAN),
                edge_weight: r.edge_weight,
                orthogonality_residual: r.metadata.orthogonality_residual,
            };
            Ok(TaskOutput { row: Row::Spectrum(row), detail: serde_json::to_value(&r.metadata).unwrap_or_default(), record: r.record })
        }
        Protocol::ChiConverged | Protocol::ChiAtT => {
            let mode = match cfg.protocol {
                Protocol::ChiConverged => ChiMode::Converged(caps),
                _ => ChiMode::FixedT(cfg.t_fixed.unwrap_or(l)),
            };
            let (r, record) = chi_with_record(params, seed, mode)?;
            let row = ChiRow {
                l,
                j,
                mu_o,
                seed: seed.index,
                t: r.t,
                p_pbc: r.p_pbc,
                p_apbc: r.p_apbc,
                chi: r.chi,
                converged_pbc: r.converged_pbc,
                converged_apbc: r.converged_apbc,
                det_residual: r.det_residual,
            };
            let detail = serde_json::json!({ "params": params, "seed": seed, "result": r });
            Ok(TaskOutput { row: Row::Chi(row), detail, record })
        }
        Protocol::Entanglement => {
            let e = cfg.entanglement;
            let (s, record) = trajectory_entanglement(params, seed, e.warmup, e.window)?;
            let row = EntanglementRow {
                l,
                j,
                mu_o,
                mu_e: params.mu_e,
                bc: params.bc,
                seed: seed.index,
                t: s.steps,
                i2_ac: s.mutual_information,
                s_topo: s.topological_entropy,
                s_half: s.half_chain_entropy,
            };
            let detail = serde_json::json!({ "params": params, "seed": seed, "sample": s });
            Ok(TaskOutput { row: Row::Entanglement(row), detail, record })
        }
        Protocol::OracleCheck => unreachable!("oracle check runs as a suite"),
    }
}

/// Runs every (cell, seed) task on the current rayon pool; output sorted by (L, μ_o, seed).
pub fn run_tasks(cfg: &SweepConfig) -> CliResult<Vec<TaskOutput>> {
    let mut tasks = Vec::new();
    for (l, mu) in cfg.cells() {
        let params = cfg.params(l, mu)?;
        for i in 0..cfg.seeds.count {
            tasks.push((params, TrajectorySeed::new(cfg.seeds.base, i)));
        }
    }
    let mut out = tasks.par_iter().map(|&(p, s)| run_task(cfg, p, s)).collect::<CliResult<Vec<_>>>()?;
    out.sort_by(|a, b| {
        let (ka, kb) = (a.row.key(), b.row.key());
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2))
    });
    Ok(out)
}

fn create(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

fn write_csv_with_header<F>(path: &Path, protocol: Protocol, body: F) -> CliResult<()>
where
    F: FnOnce(&mut csv::Writer<&mut fs::File>) -> CliResult<()>,
{
    let mut file = create(path)?;
    let tag = serde_json::to_value(protocol).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    writeln!(file, "{CSV_HEADER} protocol={tag}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(&mut file);
    body(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn write_runs_csv(path: &Path, protocol: Protocol, outputs: &[TaskOutput]) -> CliResult<()> {
    write_csv_with_header(path, protocol, |w| {
        for o in outputs {
            match &o.row {
                Row::Spectrum(r) => w.serialize(r)?,
                Row::Chi(r) => w.serialize(r)?,
                Row::Entanglement(r) => w.serialize(r)?,
            }
        }
        Ok(())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub l: usize,
    pub mu_o: f64,
    pub n: usize,
    /// (name, mean, standard error); the error is NaN for a single seed.
    pub metrics: Vec<(&'static str, f64, f64)>,
}

pub fn aggregate(outputs: &[TaskOutput]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = Vec::new();
    let mut start = 0;
    while start < outputs.len() {
        let (l, mu, _) = outputs[start].row.key();
        let mut end = start;
        while end < outputs.len() && {
            let k = outputs[end].row.key();
            k.0 == l && k.1 == mu
        } {
            end += 1;
        }
        let group = &outputs[start..end];
        let n = group.len();
        let names: Vec<&'static str> = group[0].row.metrics().iter().map(|m| m.0).collect();
        let metrics = names
            .iter()
            .enumerate()
            .map(|(i, &name)| {
                let vals: Vec<f64> = group.iter().map(|o| o.row.metrics()[i].1).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let stderr = if n > 1 {
                    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt()
                } else {
                    f64::NAN
                };
                (name, mean, stderr)
            })
            .collect();
        rows.push(AggregateRow { l, mu_o: mu, n, metrics });
        start = end;
    }
    rows
}

pub fn write_aggregate_csv(path: &Path, protocol: Protocol, cfg: &SweepConfig, rows: &[AggregateRow]) -> CliResult<()> {
    write_csv_with_header(path, protocol, |w| {
        if let Some(first) = rows.first() {
            let mut header = vec!["L".to_string(), "J".into(), "mu_o".into(), "n".into()];
            for (name, _, _) in &first.metrics {
                header.push(format!("{name}_mean"));
                header.push(format!("{name}_stderr"));
            }
            w.write_record(&header)?;
        }
        for r in rows {
            let mut rec = vec![r.l.to_string(), cfg.j.to_string(), r.mu_o.to_string(), r.n.to_string()];
            for (_, mean, err) in &r.metrics {
                rec.push(mean.to_string());
                rec.push(if err.is_nan() { String::new() } else { err.to_string() });
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub struct SweepSummary {
    pub tasks: usize,
    pub unconverged: usize,
    pub oracle: Option<OracleReport>,
}

fn fmt_mu(mu: f64) -> String {
    format!("{mu}").replace('.', "p")
}

/// Runs the sweep and writes runs.csv, aggregate.csv, runs.jsonl, metadata.json (and records/).
pub fn run_sweep(cfg: &SweepConfig, outdir: &Path, threads: usize) -> CliResult<SweepSummary> {
    fs::create_dir_all(outdir).map_err(|e| CliError::io(outdir, e))?;
    let started = unix_now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::io(outdir, std::io::Error::other(e.to_string())))?;

    if cfg.protocol == Protocol::OracleCheck {
        let grid = OracleGrid::from_config(cfg)?;
        let report = pool.install(|| run_oracle_suite(&grid, Tolerances::default()))?;
        let path = outdir.join("oracle_report.json");
        fs::write(&path, serde_json::to_string_pretty(&report).unwrap_or_default()).map_err(|e| CliError::io(&path, e))?;
        write_metadata(cfg, outdir, threads, started, report.trajectories, 0)?;
        let tasks = report.trajectories;
        let report = report.into_result()?;
        return Ok(SweepSummary { tasks, unconverged: 0, oracle: Some(report) });
    }

    let outputs = pool.install(|| run_tasks(cfg))?;
    write_runs_csv(&outdir.join("runs.csv"), cfg.protocol, &outputs)?;
    write_aggregate_csv(&outdir.join("aggregate.csv"), cfg.protocol, cfg, &aggregate(&outputs))?;

    let jsonl = outdir.join("runs.jsonl");
    let mut f = create(&jsonl)?;
    for o in &outputs {
        writeln!(f, "{}", o.detail).map_err(|e| CliError::io(&jsonl, e))?;
    }

    if cfg.write_records {
        let dir = outdir.join("records");
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for o in &outputs {
            let (l, mu, seed) = o.row.key();
            let path = dir.join(format!("L{l}_mu{}_seed{seed}.rec", fmt_mu(mu)));
            fs::write(&path, o.record.to_text()).map_err(|e| CliError::io(&path, e))?;
        }
    }

    let unconverged = outputs.iter().filter(|o| !o.row.converged()).count();
    write_metadata(cfg, outdir, threads, started, outputs.len(), unconverged)?;
    Ok(SweepSummary { tasks: outputs.len(), unconverged, oracle: None })
}

fn write_metadata(cfg: &SweepConfig, outdir: &Path, threads: usize, started: u64, tasks: usize, unconverged: usize) -> CliResult<()> {
    let shift = cfg.cells().first().and_then(|&(l, mu)| cfg.params(l, mu).ok()).map_or(0.0, |p| normalization_shift(&p));
    let meta = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "threads": threads,
        "tasks": tasks,
        "unconverged": unconverged,
        "normalization_shift": shift,
        "started_unix": started,
        "finished_unix": unix_now(),
        "git_revision": git_revision(),
    });
    let path = outdir.join("metadata.json");
    fs::write(&path, serde_json::to_string_pretty(&meta).unwrap_or_default()).map_err(|e| CliError::io(&path, e))
}

pub fn read_config(path: &Path) -> CliResult<SweepConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    SweepConfig::parse(&text)
}

pub fn default_outdir() -> PathBuf {
    PathBuf::from("majolyap-out")
}
