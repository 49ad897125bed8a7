//! Experiment drivers and their CSV artifacts.
//!
//! Timings only ever go to `costs.csv` and `cost_error.csv`; every other file
//! is a deterministic function of the configuration and the root seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use emlmc_core::agfem::CgStatus;
use emlmc_core::executor::{Executor, ExecutorError};
use emlmc_core::mlmc::{
    cross_run_stats, run_estimator, CrossRunStats, EstimatorSettings, MlmcError, MlmcSchedule, RunReport,
};
use emlmc_core::stochastics::RandomStream;

use crate::config::{Experiment, ExperimentConfig};
use crate::samplers::{CircleSampler, FluxSampler, IterationRecord, PopcornSampler, REFERENCE_Q1, REFERENCE_Q2};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Mlmc(#[from] MlmcError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("sample {sample}: {message}")]
    Sample { sample: usize, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// First level of the least-squares decay fits.
pub const FIT_FROM_LEVEL: usize = 1;

struct Table {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join(name);
        let writer = csv::Writer::from_path(&path).map_err(|source| HarnessError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let mut table = Self { path, writer };
        table.row(header.iter().map(|h| h.to_string()))?;
        Ok(table)
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), HarnessError> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer.write_record(&fields).map_err(|source| HarnessError::Csv {
            path: self.path.display().to_string(),
            source,
        })
    }

    fn finish(mut self) -> Result<(), HarnessError> {
        self.writer.flush().map_err(|source| HarnessError::Io {
            path: self.path.display().to_string(),
            source,
        })
    }
}

macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($v.to_string()),*] };
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn estimator_settings(config: &ExperimentConfig) -> EstimatorSettings {
    EstimatorSettings {
        root_seed: config.root_seed,
        max_attempts: config.max_attempts,
    }
}

fn schedule(config: &ExperimentConfig) -> Result<MlmcSchedule, HarnessError> {
    Ok(MlmcSchedule::with_cap(
        config.gamma,
        config.refinement,
        config.levels,
        config.finest_samples,
        config.sample_cap,
    )?)
}

fn manifest(config: &ExperimentConfig, schedule: Option<&MlmcSchedule>, extra: &[(String, String)]) -> String {
    let mut text = config.to_manifest();
    text.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
    if let Some(s) = schedule {
        let counts: Vec<String> = s.counts.iter().map(usize::to_string).collect();
        text.push_str(&format!("samples_per_level={}\n", counts.join(",")));
        text.push_str(&format!(
            "sample_index=((realization*{}+level)*{}+sample)\n",
            s.num_levels(),
            s.stride()
        ));
    }
    text.push_str("cost_scope=domain draw+cut geometry+aggregation+assembly+solve+quantities, fine and coarse level\n");
    for (k, v) in extra {
        text.push_str(&format!("{k}={v}\n"));
    }
    text
}

fn write_levels(dir: &Path, reports: &[RunReport], qoi: usize) -> Result<(), HarnessError> {
    let mut t = Table::create(
        dir,
        "levels.csv",
        &[
            "realization",
            "level",
            "N",
            "Ybar",
            "VarY",
            "iter_min",
            "iter_mean",
            "iter_max",
            "rejected",
        ],
    )?;
    for r in reports {
        for s in &r.levels {
            t.row(row![
                r.realization,
                s.level,
                s.samples,
                s.mean[qoi],
                s.variance[qoi],
                s.iter_min,
                s.iter_mean,
                s.iter_max,
                s.rejected
            ])?;
        }
    }
    t.finish()
}

fn write_cross(dir: &Path, cross: &CrossRunStats, qoi: usize) -> Result<(), HarnessError> {
    let mut t = Table::create(dir, "cross.csv", &["level", "E_L", "V_l", "slope_E", "slope_V"])?;
    let se = cross.error_slope(qoi, FIT_FROM_LEVEL);
    let sv = cross.variance_slope(qoi, FIT_FROM_LEVEL);
    for l in 0..cross.errors.len() {
        t.row(row![l, cross.errors[l][qoi], cross.variances[l][qoi], se, sv])?;
    }
    t.finish()
}

fn write_costs(dir: &Path, reports: &[RunReport]) -> Result<(), HarnessError> {
    let mut t = Table::create(dir, "costs.csv", &["level", "mean_seconds", "total_seconds"])?;
    let nlev = reports[0].levels.len();
    for l in 0..nlev {
        let k = reports.len() as f64;
        let mean = reports.iter().map(|r| r.levels[l].mean_seconds).sum::<f64>() / k;
        let total: f64 = reports.iter().map(|r| r.levels[l].total_seconds).sum();
        t.row(row![l, mean, total])?;
    }
    t.finish()
}

fn run_realizations<S: emlmc_core::mlmc::LevelSampler>(
    config: &ExperimentConfig,
    schedule: &MlmcSchedule,
    sampler: &S,
    executor: &Executor,
) -> Result<Vec<RunReport>, HarnessError> {
    let settings = estimator_settings(config);
    (0..config.realizations as u64)
        .map(|k| Ok(run_estimator(schedule, sampler, k, &settings, executor)?))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CircleSummary {
    pub reports: Vec<RunReport>,
    pub cross: CrossRunStats,
    pub references: [f64; 2],
}

impl CircleSummary {
    pub fn mean_total_seconds(&self) -> f64 {
        self.cross.mean_total_seconds
    }
}

/// Convergence study on the random circle: `K` realizations of the
/// estimator for the full-domain and box averages.
pub fn run_circle_convergence(
    config: &ExperimentConfig,
    out: &Path,
    executor: &Executor,
) -> Result<CircleSummary, HarnessError> {
    let schedule = schedule(config)?;
    let sampler = CircleSampler::new(config).map_err(HarnessError::Setup)?;
    let reports = run_realizations(config, &schedule, &sampler, executor)?;
    let references = [REFERENCE_Q1, REFERENCE_Q2];
    let cross = cross_run_stats(&reports, &references)?;

    let mut est = Table::create(out, "estimates.csv", &["realization", "qoi", "QtildeL", "stderr"])?;
    for r in &reports {
        let q = r.estimate();
        let se = r.standard_error(schedule.finest);
        for j in 0..2 {
            est.row(row![r.realization, format!("q{}", j + 1), q[j], se[j]])?;
        }
    }
    est.finish()?;
    for j in 0..2 {
        let dir = out.join(format!("q{}", j + 1));
        write_levels(&dir, &reports, j)?;
        write_cross(&dir, &cross, j)?;
    }
    write_costs(out, &reports)?;
    let mut ce = Table::create(
        out,
        "cost_error.csv",
        &["qoi", "finest_samples", "mean_total_seconds", "E_L"],
    )?;
    for j in 0..2 {
        ce.row(row![
            format!("q{}", j + 1),
            config.finest_samples,
            cross.mean_total_seconds,
            cross.errors[schedule.finest][j]
        ])?;
    }
    ce.finish()?;
    let extra = vec![
        ("reference_q1".to_string(), REFERENCE_Q1.to_string()),
        ("reference_q2".to_string(), REFERENCE_Q2.to_string()),
        (
            "fit_levels".to_string(),
            format!("{}..{}", FIT_FROM_LEVEL, schedule.finest),
        ),
        (
            "rejected_total".to_string(),
            reports.iter().map(RunReport::total_rejected).sum::<usize>().to_string(),
        ),
    ];
    write_text(&out.join("manifest.txt"), &manifest(config, Some(&schedule), &extra))?;
    Ok(CircleSummary {
        reports,
        cross,
        references,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmLevelStats {
    pub samples: usize,
    pub iter_min: usize,
    pub iter_mean: f64,
    pub iter_median: f64,
    pub iter_max: usize,
    pub nonconverged: usize,
    pub indefinite: usize,
}

#[derive(Debug, Clone)]
pub struct PopcornSummary {
    /// Indexed `[arm][level]`; arm 0 aggregates, arm 1 does not.
    pub stats: [Vec<ArmLevelStats>; 2],
    /// Median over samples of `iters(l) / iters(l - 1)`, per arm, for `l >= 1`.
    pub growth: [Vec<f64>; 2],
    pub rejected: usize,
    /// Per sample and level, both arms.
    pub records: Vec<Vec<[IterationRecord; 2]>>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn status_name(s: CgStatus) -> &'static str {
    match s {
        CgStatus::Converged => "converged",
        CgStatus::MaxIterations => "max_iterations",
        CgStatus::Indefinite => "indefinite",
    }
}

/// CG iteration statistics on random popcorn domains with and without
/// aggregation. Sample `i` uses stream index `i` on every level, so the
/// per-sample growth ratios compare the same domain across levels.
pub fn run_popcorn_robustness(
    config: &ExperimentConfig,
    out: &Path,
    executor: &Executor,
) -> Result<PopcornSummary, HarnessError> {
    let sampler = PopcornSampler::new(config).map_err(HarnessError::Setup)?;
    let thresholds = [config.threshold, 0.0];
    let n = config.samples_per_level;
    let results = executor.map(n, |i| {
        let clock = Instant::now();
        let mut reason = String::new();
        for attempt in 0..config.max_attempts {
            let mut stream = RandomStream::redraw(config.root_seed, i as u64, attempt);
            match sampler.solve_all_levels(&mut stream, thresholds) {
                Ok(records) => return Ok((records, attempt as usize, clock.elapsed().as_secs_f64())),
                Err(emlmc_core::mlmc::SampleFailure::Rejected(why)) => reason = why,
                Err(emlmc_core::mlmc::SampleFailure::Fatal(message)) => {
                    return Err(HarnessError::Sample { sample: i, message })
                }
            }
        }
        Err(HarnessError::Sample {
            sample: i,
            message: format!("rejected {} times: {reason}", config.max_attempts),
        })
    });
    let mut records = Vec::with_capacity(n);
    let mut rejected = 0;
    let mut seconds = Vec::with_capacity(n);
    for r in results {
        let (rec, rej, sec) = r?;
        records.push(rec);
        rejected += rej;
        seconds.push(sec);
    }
    let nlev = config.levels + 1;
    let stats = [0, 1].map(|arm| {
        (0..nlev)
            .map(|l| {
                let its: Vec<usize> = records.iter().map(|r| r[l][arm].iterations).collect();
                let mut itsf: Vec<f64> = its.iter().map(|&v| v as f64).collect();
                ArmLevelStats {
                    samples: n,
                    iter_min: *its.iter().min().unwrap(),
                    iter_mean: itsf.iter().sum::<f64>() / n as f64,
                    iter_median: median(&mut itsf),
                    iter_max: *its.iter().max().unwrap(),
                    nonconverged: records
                        .iter()
                        .filter(|r| r[l][arm].status != CgStatus::Converged)
                        .count(),
                    indefinite: records
                        .iter()
                        .filter(|r| r[l][arm].status == CgStatus::Indefinite)
                        .count(),
                }
            })
            .collect::<Vec<_>>()
    });
    let growth = [0, 1].map(|arm| {
        (1..nlev)
            .map(|l| {
                let mut ratios: Vec<f64> = records
                    .iter()
                    .map(|r| r[l][arm].iterations as f64 / r[l - 1][arm].iterations.max(1) as f64)
                    .collect();
                median(&mut ratios)
            })
            .collect::<Vec<_>>()
    });

    let arm_name = ["on", "off"];
    let mut t = Table::create(
        out,
        "iterations.csv",
        &[
            "arm",
            "level",
            "N",
            "iter_min",
            "iter_mean",
            "iter_median",
            "iter_max",
            "nonconverged",
            "indefinite",
            "rejected",
        ],
    )?;
    for arm in 0..2 {
        for (l, s) in stats[arm].iter().enumerate() {
            t.row(row![
                arm_name[arm],
                l,
                s.samples,
                s.iter_min,
                s.iter_mean,
                s.iter_median,
                s.iter_max,
                s.nonconverged,
                s.indefinite,
                rejected
            ])?;
        }
    }
    t.finish()?;
    let mut g = Table::create(out, "growth.csv", &["arm", "level", "median_ratio"])?;
    for arm in 0..2 {
        for (k, r) in growth[arm].iter().enumerate() {
            g.row(row![arm_name[arm], k + 1, r])?;
        }
    }
    g.finish()?;
    let mut s = Table::create(out, "samples.csv", &["sample", "level", "arm", "iterations", "status"])?;
    for (i, rec) in records.iter().enumerate() {
        for (l, arms) in rec.iter().enumerate() {
            for arm in 0..2 {
                s.row(row![
                    i,
                    l,
                    arm_name[arm],
                    arms[arm].iterations,
                    status_name(arms[arm].status)
                ])?;
            }
        }
    }
    s.finish()?;
    let mut c = Table::create(out, "costs.csv", &["level", "mean_seconds", "total_seconds"])?;
    let total: f64 = seconds.iter().sum();
    c.row(row!["all", total / n as f64, total])?;
    c.finish()?;
    let extra = vec![
        (
            "arms".to_string(),
            format!("on:threshold={},off:threshold=0", config.threshold),
        ),
        (
            "sample_index".to_string(),
            "sample (same stream on every level)".to_string(),
        ),
        ("rejected_total".to_string(), rejected.to_string()),
    ];
    write_text(&out.join("manifest.txt"), &manifest(config, None, &extra))?;
    Ok(PopcornSummary {
        stats,
        growth,
        rejected,
        records,
    })
}

#[derive(Debug, Clone)]
pub struct FluxEstimate {
    pub radius: f64,
    /// Partial estimates `Qtilde_l` per level (mean over realizations).
    pub estimates: Vec<f64>,
    /// `sqrt(sum_{j <= l} V_j / N_j / K)` per level.
    pub stderr: Vec<f64>,
    pub reports: Vec<RunReport>,
}

impl FluxEstimate {
    pub fn finest(&self) -> (f64, f64) {
        (*self.estimates.last().unwrap(), *self.stderr.last().unwrap())
    }
}

/// Heat flux through the plate for each hole radius. All radii share the
/// root seed, so the hole centers are common random numbers across radii.
pub fn run_two_holes_flux(
    config: &ExperimentConfig,
    out: &Path,
    executor: &Executor,
) -> Result<Vec<FluxEstimate>, HarnessError> {
    let schedule = schedule(config)?;
    let mut flux = Table::create(out, "flux.csv", &["radius", "level", "QtildeL", "stderr"])?;
    let mut results = Vec::with_capacity(config.hole_radii.len());
    for &radius in &config.hole_radii {
        let sampler = FluxSampler::new(config, radius).map_err(HarnessError::Setup)?;
        let reports = run_realizations(config, &schedule, &sampler, executor)?;
        let k = reports.len() as f64;
        let mut estimates = Vec::new();
        let mut stderr = Vec::new();
        for l in 0..=schedule.finest {
            estimates.push(reports.iter().map(|r| r.partial_estimate(l)[0]).sum::<f64>() / k);
            let var: f64 = reports.iter().map(|r| r.standard_error(l)[0].powi(2)).sum::<f64>() / k;
            stderr.push((var / k).sqrt());
            flux.row(row![radius, l, estimates[l], stderr[l]])?;
        }
        let dir = out.join(format!("radius_{radius}"));
        write_levels(&dir, &reports, 0)?;
        let mut est = Table::create(&dir, "estimates.csv", &["realization", "qoi", "QtildeL", "stderr"])?;
        for r in &reports {
            est.row(row![
                r.realization,
                "flux",
                r.estimate()[0],
                r.standard_error(schedule.finest)[0]
            ])?;
        }
        est.finish()?;
        write_costs(&dir, &reports)?;
        results.push(FluxEstimate {
            radius,
            estimates,
            stderr,
            reports,
        });
    }
    flux.finish()?;
    let rejected: usize = results
        .iter()
        .flat_map(|f| f.reports.iter().map(RunReport::total_rejected))
        .sum();
    let extra = vec![
        (
            "common_random_numbers".to_string(),
            "hole centers shared across radii".to_string(),
        ),
        ("rejected_total".to_string(), rejected.to_string()),
    ];
    write_text(&out.join("manifest.txt"), &manifest(config, Some(&schedule), &extra))?;
    Ok(results)
}

/// Runs the configured experiment, writing artifacts under `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let executor = Executor::with_threads(config.threads)?;
    match config.experiment {
        Experiment::CircleConvergence => run_circle_convergence(config, out, &executor).map(|_| ()),
        Experiment::PopcornRobustness => run_popcorn_robustness(config, out, &executor).map(|_| ()),
        Experiment::TwoHolesFlux => run_two_holes_flux(config, out, &executor).map(|_| ()),
    }
}
