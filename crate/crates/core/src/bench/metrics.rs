//! Strong-scaling metrics: parallel efficiency, `n_0.8` and time to solution.

use super::{run_bench, BenchRecord, BpConfig, BpKind};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Efficiency level at which the strong-scale limit is read off.
pub const TARGET_EFFICIENCY: f64 = 0.8;

pub const CSV_HEADER: &str = "bp,p,q,E,n,P,iters,seconds,dofs_rate,n_per_rank,eta";

/// `eta = T_1 / (P T_P)`.
pub fn parallel_efficiency(t_1: f64, workers: usize, t_p: f64) -> f64 {
    t_1 / (workers as f64 * t_p)
}

/// `t_eta = C n / (eta P r_max)`.
pub fn time_to_solution(c: f64, n: f64, eta: f64, workers: f64, r_max: f64) -> f64 {
    c * n / (eta * workers * r_max)
}

/// Run time at the strong-scale limit, `(C / 0.8) n_0.8 / r_max`.
pub fn strong_scale_time(c: f64, n_08: f64, r_max: f64) -> f64 {
    c / TARGET_EFFICIENCY * n_08 / r_max
}

/// Efficiency data of one sweep row, with the fitted sweep-wide quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    /// Seconds at `P = 1` for the same problem size.
    pub t_1: f64,
    pub t_p: f64,
    pub eta: f64,
    /// Largest observed work rate per worker.
    pub r_max: f64,
    /// Points per worker at which efficiency reaches 0.8, when bracketed.
    pub n_08: Option<f64>,
    /// Work per gridpoint in `t = C n / (eta P r_max)`.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub record: BenchRecord,
    pub scaling: ScalingRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub r_max: f64,
    pub n_08: Option<f64>,
    pub c: f64,
    /// `(C / 0.8) n_0.8 / r_max` when `n_0.8` is available.
    pub t_08: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by `n / P` ascending.
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

/// Source of timings for a sweep. The measured implementation runs the
/// benchmark; tests inject closed-form models.
pub trait SweepTimer {
    fn measure(&self, config: &BpConfig) -> Result<BenchRecord>;
}

/// Times real runs with [`run_bench`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MeasuredTimer;

impl SweepTimer for MeasuredTimer {
    fn measure(&self, config: &BpConfig) -> Result<BenchRecord> {
        run_bench(config)
    }
}

/// Reports `seconds(n, P)` without running anything.
pub struct ModelTimer<F>(pub F);

impl<F: Fn(usize, usize) -> f64> SweepTimer for ModelTimer<F> {
    fn measure(&self, config: &BpConfig) -> Result<BenchRecord> {
        let iterations = match config.mode {
            crate::krylov::SolveMode::FixedIterations(k) => k,
            crate::krylov::SolveMode::Solve => 1,
        };
        Ok(BenchRecord::new(config, iterations, (self.0)(config.dofs(), config.threads)))
    }
}

/// Runs every `(dims, threads)` pair and derives efficiencies against the
/// single-worker time of the same size.
pub fn run_scaling_sweep(
    template: &BpConfig,
    dims_list: &[[usize; 3]],
    threads_list: &[usize],
    timer: &dyn SweepTimer,
) -> Result<SweepResult> {
    if !threads_list.contains(&1) {
        return Err(Error::InvalidConfig("thread list must include 1 for the baseline".into()));
    }
    let mut rows = Vec::new();
    for &dims in dims_list {
        let mut records = Vec::new();
        for &threads in threads_list {
            let config = BpConfig {
                dims,
                threads,
                ..template.clone()
            };
            config.validate()?;
            records.push(timer.measure(&config)?);
        }
        let t_1 = records
            .iter()
            .find(|r| r.workers == 1)
            .map(|r| r.seconds)
            .expect("baseline present");
        for record in records {
            let eta = if record.workers == 1 {
                1.0
            } else {
                parallel_efficiency(t_1, record.workers, record.seconds)
            };
            rows.push(SweepRow {
                scaling: ScalingRecord {
                    t_1,
                    t_p: record.seconds,
                    eta,
                    r_max: 0.0,
                    n_08: None,
                    c: 0.0,
                },
                record,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.record
            .n_per_rank
            .total_cmp(&b.record.n_per_rank)
            .then(a.record.workers.cmp(&b.record.workers))
    });

    let r_max = rows
        .iter()
        .map(|r| r.record.dofs_rate / r.record.workers as f64)
        .fold(0.0, f64::max);
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.record.workers > 1)
        .map(|r| (r.record.n_per_rank, r.scaling.eta))
        .collect();
    let n_08 = efficiency_crossing(&points, TARGET_EFFICIENCY);
    let c = fit_work_constant(&rows, r_max);
    for row in &mut rows {
        row.scaling.r_max = r_max;
        row.scaling.n_08 = n_08;
        row.scaling.c = c;
    }
    let summary = SweepSummary {
        r_max,
        n_08,
        c,
        t_08: n_08.map(|n| strong_scale_time(c, n, r_max)),
    };
    Ok(SweepResult { rows, summary })
}

/// `n / P` at which efficiency reaches `target`, interpolated linearly in
/// `log(n / P)` between the bracketing points of the last upward crossing.
/// `points` are `(n / P, eta)` sorted by `n / P`. Returns `None` unless the
/// crossing is bracketed by data.
pub fn efficiency_crossing(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let below = points.iter().rposition(|&(_, eta)| eta < target)?;
    let (x0, e0) = points[below];
    let (x1, e1) = *points.get(below + 1)?;
    if x1 <= x0 {
        return Some(x1);
    }
    let (s0, s1) = (x0.ln(), x1.ln());
    Some((s0 + (target - e0) * (s1 - s0) / (e1 - e0)).exp())
}

/// Least-squares `C` in `t = C y` with `y = n / (eta P r_max)`.
fn fit_work_constant(rows: &[SweepRow], r_max: f64) -> f64 {
    let (num, den) = rows.iter().fold((0.0, 0.0), |(num, den), r| {
        let y = r.record.n as f64 / (r.scaling.eta * r.record.workers as f64 * r_max);
        (num + r.record.seconds * y, den + y * y)
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// One line of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub bp: BpKind,
    pub p: usize,
    pub q: usize,
    #[serde(rename = "E")]
    pub num_elem: usize,
    pub n: usize,
    #[serde(rename = "P")]
    pub workers: usize,
    pub iters: usize,
    pub seconds: f64,
    pub dofs_rate: f64,
    pub n_per_rank: f64,
    pub eta: f64,
}

impl From<&SweepRow> for CsvRow {
    fn from(row: &SweepRow) -> Self {
        let r = &row.record;
        Self {
            bp: r.bp,
            p: r.p,
            q: r.q,
            num_elem: r.num_elem,
            n: r.n,
            workers: r.workers,
            iters: r.iterations,
            seconds: r.seconds,
            dofs_rate: r.dofs_rate,
            n_per_rank: r.n_per_rank,
            eta: row.scaling.eta,
        }
    }
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(CsvRow::from(row)).map_err(io_error)?;
    }
    w.flush().map_err(|e| io_error(e.into()))?;
    Ok(())
}

pub fn read_sweep_csv(input: impl Read) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(io_error)?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidConfig(format!("unexpected CSV header '{}'", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(io_error)).collect()
}

/// Writes a single record as a one-row CSV table.
pub fn write_record_csv(record: &BenchRecord, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.serialize(record).map_err(io_error)?;
    w.flush().map_err(|e| io_error(e.into()))?;
    Ok(())
}

fn io_error(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("CSV error: {e}"))
}
