//! Benchmark grid, per-run records and the CSV layouts the CLI emits.

use std::io::Write;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::problem::{build_instance, ProblemInstance};
use crate::solver::{solve, Method, SolveOutcome, SolverConfig, StopRule};

/// Column order of the per-run CSV.
pub const CSV_HEADER: &str =
    "method,blocks,m,n,coherence,seed,workers,iterations,projections,time_s,rel_err,converged";

fn micros<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{value:.6}"))
}

/// One benchmark run. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub blocks: usize,
    pub m: usize,
    pub n: usize,
    /// Empty for instances that were not generated from a descriptor.
    pub coherence: Option<f64>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub iterations: usize,
    pub projections: u64,
    #[serde(rename = "time_s", serialize_with = "micros")]
    pub wall_time_s: f64,
    pub rel_err: Option<f64>,
    pub converged: bool,
}

/// Grid of runs. Missing JSON fields take the defaults of the reference
/// experiment: `m ∈ {5000, 7500, 10000, 12500}`, `n ∈ {100, 250, 500}`,
/// `c ∈ {0, 0.1, 0.2}`, CRM and P-CRM, three seeds, tolerance `1e-5`,
/// at most `10⁴` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub coherences: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub workers: Vec<usize>,
    pub output: Option<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m_values: vec![5000, 7500, 10000, 12500],
            n_values: vec![100, 250, 500],
            coherences: vec![0.0, 0.1, 0.2],
            methods: vec![Method::Crm, Method::Pcrm],
            seeds: vec![0, 1, 2],
            tolerance: 1e-5,
            max_iterations: 10_000,
            workers: vec![1],
            output: None,
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("m_values", self.m_values.is_empty()),
            ("n_values", self.n_values.is_empty()),
            ("coherences", self.coherences.is_empty()),
            ("methods", self.methods.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("workers", self.workers.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidConfig(format!("{name} must not be empty")));
        }
        if let Some(c) = self.coherences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidCoherence(*c));
        }
        if self.workers.contains(&0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if !self
            .m_values
            .iter()
            .any(|&m| self.n_values.iter().any(|&n| n >= 1 && m > n))
        {
            return Err(Error::InvalidConfig("grid has no cell with m > n".into()));
        }
        SolverConfig::new(Method::Pcrm)
            .tolerance(self.tolerance)
            .max_iterations(self.max_iterations)
            .validate()
    }

    /// Number of (m, n) pairs with `m > n`.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::new();
        for &m in &self.m_values {
            for &n in &self.n_values {
                if n >= 1 && m > n {
                    sizes.push((m, n));
                }
            }
        }
        sizes
    }
}

impl BenchRecord {
    /// Packages a finished solve. Generation fields come from the instance
    /// descriptor when there is one.
    pub fn from_outcome(
        instance: &ProblemInstance,
        method: Method,
        workers: usize,
        outcome: &SolveOutcome,
    ) -> Self {
        let descriptor = instance.descriptor();
        Self {
            method,
            blocks: instance.block_count(),
            m: instance.total_rows(),
            n: instance.ambient_dim(),
            coherence: descriptor.map(|d| d.coherence),
            seed: descriptor.map(|d| d.seed),
            workers,
            iterations: outcome.trace.iterations(),
            projections: outcome.trace.projections(),
            wall_time_s: outcome.trace.elapsed_s(),
            rel_err: outcome.rel_err,
            converged: outcome.trace.converged(),
        }
    }
}

/// Solves one method on one generated instance and packages the result.
pub fn run_cell(
    instance: &ProblemInstance,
    method: Method,
    workers: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(BenchRecord, SolveOutcome)> {
    if instance.known_solution().is_none() {
        return Err(Error::MissingReference);
    }
    let config = SolverConfig::new(method)
        .tolerance(tolerance)
        .max_iterations(max_iterations)
        .stop_rule(StopRule::RelErrToKnown)
        .workers(workers);
    let outcome = solve(instance, &config)?;
    Ok((
        BenchRecord::from_outcome(instance, method, workers, &outcome),
        outcome,
    ))
}

#[derive(Debug, Clone, Default)]
pub struct BenchSummary {
    pub records: Vec<BenchRecord>,
    /// Cells that errored or did not converge, with a description.
    pub failures: Vec<String>,
}

/// Runs the grid cell by cell, handing each record to `sink` as soon as it
/// is available. CRM is sequential by construction and runs once per
/// instance with one worker; the other methods run once per worker count.
pub fn run_bench<F>(config: &BenchConfig, mut sink: F) -> Result<BenchSummary>
where
    F: FnMut(&BenchRecord) -> Result<()>,
{
    config.validate()?;
    let mut summary = BenchSummary::default();
    for (m, n) in config.sizes() {
        for &c in &config.coherences {
            for &seed in &config.seeds {
                let instance = match build_instance(m, n, c, seed) {
                    Ok(instance) => instance,
                    Err(e) => {
                        summary
                            .failures
                            .push(format!("m={m} n={n} c={c} seed={seed}: {e}"));
                        continue;
                    }
                };
                for &method in &config.methods {
                    let worker_counts: &[usize] = if method == Method::Crm {
                        &[1]
                    } else {
                        &config.workers
                    };
                    for &workers in worker_counts {
                        let label =
                            format!("{method} m={m} n={n} c={c} seed={seed} workers={workers}");
                        match run_cell(
                            &instance,
                            method,
                            workers,
                            config.tolerance,
                            config.max_iterations,
                        ) {
                            Ok((record, _)) => {
                                if !record.converged {
                                    summary.failures.push(format!("{label}: did not converge"));
                                }
                                sink(&record)?;
                                summary.records.push(record);
                            }
                            Err(e) => summary.failures.push(format!("{label}: {e}")),
                        }
                    }
                }
            }
        }
    }
    Ok(summary)
}

/// Means over coherence levels and seeds for one (method, blocks, m, n, workers) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub blocks: usize,
    pub m: usize,
    pub n: usize,
    pub workers: usize,
    pub runs: usize,
    pub iterations: f64,
    pub projections: f64,
    #[serde(serialize_with = "micros")]
    pub time_s: f64,
    pub rel_err: f64,
    pub converged_runs: usize,
}

/// Groups records in order of first appearance and averages each group.
pub fn aggregate(records: &[BenchRecord]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = Vec::new();
    for r in records {
        let key = (r.method, r.blocks, r.m, r.n, r.workers);
        let row = match rows
            .iter_mut()
            .find(|a| (a.method, a.blocks, a.m, a.n, a.workers) == key)
        {
            Some(row) => row,
            None => {
                rows.push(AggregateRow {
                    method: r.method,
                    blocks: r.blocks,
                    m: r.m,
                    n: r.n,
                    workers: r.workers,
                    runs: 0,
                    iterations: 0.0,
                    projections: 0.0,
                    time_s: 0.0,
                    rel_err: 0.0,
                    converged_runs: 0,
                });
                rows.last_mut().unwrap()
            }
        };
        row.runs += 1;
        row.iterations += r.iterations as f64;
        row.projections += r.projections as f64;
        row.time_s += r.wall_time_s;
        row.rel_err += r.rel_err.unwrap_or(f64::NAN);
        row.converged_runs += usize::from(r.converged);
    }
    for row in &mut rows {
        let runs = row.runs as f64;
        row.iterations /= runs;
        row.projections /= runs;
        row.time_s /= runs;
        row.rel_err /= runs;
    }
    rows
}

/// CSV writer over any sink; the header is written with the first row.
pub fn csv_writer<W: Write>(sink: W, with_header: bool) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(with_header)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

/// Serializes records (with header) into a string.
pub fn records_to_csv(records: &[BenchRecord]) -> Result<String> {
    let mut writer = csv_writer(Vec::new(), true);
    if records.is_empty() {
        writer.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut writer = csv_writer(Vec::new(), true);
    for r in rows {
        writer.serialize(r)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
