//! Multilevel Monte Carlo: sample schedules, the coupled-level estimator and
//! statistics across independent realizations.

use std::time::Instant;

use thiserror::Error;

use crate::executor::Executor;
use crate::stochastics::RandomStream;

/// Default bound on the number of level-0 samples of a schedule.
pub const DEFAULT_SAMPLE_CAP: u64 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlmcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("level {level} needs more than {cap} samples")]
    ScheduleOverflow { level: usize, cap: u64 },
    #[error("level {level} sample {sample}: still rejected after {attempts} draws ({reason})")]
    RejectionLimit {
        level: usize,
        sample: usize,
        attempts: u32,
        reason: String,
    },
    #[error("level {level} sample {sample}: {message}")]
    SamplerFailed {
        level: usize,
        sample: usize,
        message: String,
    },
    #[error("sampler returned {got} quantities, expected {expected}")]
    QoiCountMismatch { expected: usize, got: usize },
    #[error("no reports to combine")]
    NoReports,
}

/// Per-level sample counts `N_l = ceil(s^(Gamma (L - l)) N_L)`.
///
/// Exponents with a small denominator (`Gamma = 7/2` and the like) are
/// resolved exactly with integer arithmetic, so the ceiling never suffers
/// from rounding in `powf`.
pub fn schedule_samples(
    gamma: f64,
    refinement: usize,
    finest: usize,
    finest_samples: usize,
    cap: u64,
) -> Result<Vec<usize>, MlmcError> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(MlmcError::InvalidArgument(format!("Gamma = {gamma}")));
    }
    if refinement < 2 {
        return Err(MlmcError::InvalidArgument(format!("refinement ratio {refinement}")));
    }
    if finest_samples == 0 {
        return Err(MlmcError::InvalidArgument("N_L must be at least 1".into()));
    }
    (0..=finest)
        .map(|level| {
            let exponent = gamma * (finest - level) as f64;
            let n = scaled_ceil(refinement as u64, exponent, finest_samples as u64)
                .filter(|&n| n <= cap as u128)
                .ok_or(MlmcError::ScheduleOverflow { level, cap })?;
            Ok(n as usize)
        })
        .collect()
}

/// `ceil(s^e * m)`, or `None` on overflow.
fn scaled_ceil(s: u64, e: f64, m: u64) -> Option<u128> {
    let whole = e.floor();
    let frac = e - whole;
    let base = checked_pow(s as u128, whole as u32)?.checked_mul(m as u128)?;
    if frac == 0.0 {
        return Some(base);
    }
    let approx = (base as f64 * (s as f64).powf(frac)).ceil();
    if !(approx < 1e30) {
        return None;
    }
    let mut n = approx as u128;
    // frac = p / q for a small q: n >= base * s^(p/q)  <=>  n^q >= base^q * s^p.
    if let Some((p, q)) = small_fraction(frac) {
        let covers = |n: u128| -> Option<bool> {
            let lhs = checked_pow(n, q)?;
            let rhs = checked_pow(base, q)?.checked_mul(checked_pow(s as u128, p)?)?;
            Some(lhs >= rhs)
        };
        if let (Some(ok), Some(below)) = (covers(n), n.checked_sub(1).map(covers)) {
            if !ok {
                n += 1;
            } else if below == Some(true) {
                n -= 1;
            }
        }
    }
    Some(n)
}

fn small_fraction(x: f64) -> Option<(u32, u32)> {
    (1..=16u32).find_map(|q| {
        let p = x * q as f64;
        ((p - p.round()).abs() < 1e-12).then(|| (p.round() as u32, q))
    })
}

fn checked_pow(b: u128, e: u32) -> Option<u128> {
    (0..e).try_fold(1u128, |acc, _| acc.checked_mul(b))
}

/// `L = ceil(log_s(sqrt(2) c_alpha / eps) / alpha)`, clamped below at 0.
pub fn levels_for_tolerance(alpha: f64, c_alpha: f64, eps: f64, refinement: f64) -> Result<usize, MlmcError> {
    if !(alpha > 0.0 && c_alpha > 0.0 && eps > 0.0 && refinement > 1.0) {
        return Err(MlmcError::InvalidArgument(format!(
            "alpha {alpha}, c_alpha {c_alpha}, eps {eps}, s {refinement}"
        )));
    }
    let l = ((2f64.sqrt() * c_alpha / eps).ln() / refinement.ln() / alpha).ceil();
    Ok(if l > 0.0 { l as usize } else { 0 })
}

/// `N_l = ceil(2 eps^-2 sqrt(V_l / C_l) sum_i sqrt(V_i C_i))`, at least 1.
pub fn optimal_samples(variances: &[f64], costs: &[f64], eps: f64) -> Result<Vec<usize>, MlmcError> {
    if variances.len() != costs.len() || variances.is_empty() {
        return Err(MlmcError::InvalidArgument(
            "variances and costs differ in length".into(),
        ));
    }
    if !(eps > 0.0) || variances.iter().any(|v| !(*v >= 0.0)) || costs.iter().any(|c| !(*c > 0.0)) {
        return Err(MlmcError::InvalidArgument("need V >= 0, C > 0, eps > 0".into()));
    }
    let total: f64 = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum();
    Ok(variances
        .iter()
        .zip(costs)
        .map(|(v, c)| {
            let n = (2.0 / (eps * eps) * (v / c).sqrt() * total).ceil();
            if n >= 1.0 {
                n as usize
            } else {
                1
            }
        })
        .collect())
}

/// Least-squares slope of `log2(y)` against `x`.
pub fn log2_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, y.log2())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcSchedule {
    pub finest: usize,
    pub refinement: usize,
    pub gamma: f64,
    pub finest_samples: usize,
    pub counts: Vec<usize>,
}

impl MlmcSchedule {
    pub fn new(gamma: f64, refinement: usize, finest: usize, finest_samples: usize) -> Result<Self, MlmcError> {
        Self::with_cap(gamma, refinement, finest, finest_samples, DEFAULT_SAMPLE_CAP)
    }

    pub fn with_cap(
        gamma: f64,
        refinement: usize,
        finest: usize,
        finest_samples: usize,
        cap: u64,
    ) -> Result<Self, MlmcError> {
        let counts = schedule_samples(gamma, refinement, finest, finest_samples, cap)?;
        Ok(Self {
            finest,
            refinement,
            gamma,
            finest_samples,
            counts,
        })
    }

    /// An explicit list of counts, e.g. a fixed number of samples per level.
    pub fn from_counts(refinement: usize, counts: Vec<usize>) -> Result<Self, MlmcError> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(MlmcError::InvalidArgument(
                "every level needs at least one sample".into(),
            ));
        }
        Ok(Self {
            finest: counts.len() - 1,
            refinement,
            gamma: f64::NAN,
            finest_samples: *counts.last().unwrap(),
            counts,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.finest + 1
    }

    /// The schedule of the estimator whose finest level is `finest`, with the
    /// same `Gamma` and `N_L`. Explicit count lists are truncated instead.
    pub fn truncated(&self, finest: usize) -> Result<Self, MlmcError> {
        if finest > self.finest {
            return Err(MlmcError::InvalidArgument(format!(
                "level {finest} beyond the finest level {}",
                self.finest
            )));
        }
        if self.gamma.is_nan() {
            return Self::from_counts(self.refinement, self.counts[..=finest].to_vec());
        }
        Self::new(self.gamma, self.refinement, finest, self.finest_samples)
    }

    /// `N_max` of the global sample counter: the largest level count.
    pub fn stride(&self) -> u64 {
        *self.counts.iter().max().unwrap() as u64
    }

    /// `((k (L + 1) + l) N_max + i)`.
    pub fn sample_index(&self, realization: u64, level: usize, sample: usize) -> u64 {
        (realization * self.num_levels() as u64 + level as u64) * self.stride() + sample as u64
    }
}

/// One level evaluation of a sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Evaluation {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            iterations: 0,
            converged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleFailure {
    /// The drawn input is unusable; draw a new one.
    Rejected(String),
    Fatal(String),
}

/// Computes the quantities of interest on one level for the random input
/// drawn from `stream`.
pub trait LevelSampler: Sync {
    fn evaluate(&self, level: usize, stream: &mut RandomStream) -> Result<Evaluation, SampleFailure>;
}

impl<F> LevelSampler for F
where
    F: Fn(usize, &mut RandomStream) -> Result<Evaluation, SampleFailure> + Sync,
{
    fn evaluate(&self, level: usize, stream: &mut RandomStream) -> Result<Evaluation, SampleFailure> {
        self(level, stream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorSettings {
    pub root_seed: u64,
    /// Draws per sample before giving up (the first draw included).
    pub max_attempts: u32,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            root_seed: 0,
            max_attempts: 100,
        }
    }
}

/// One level correction `Y_l^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSample {
    pub correction: Vec<f64>,
    pub fine: Evaluation,
    pub seconds: f64,
    pub rejected: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    pub samples: usize,
    /// `Ybar_l` per quantity.
    pub mean: Vec<f64>,
    /// Sample variance with divisor `N_l`, per quantity.
    pub variance: Vec<f64>,
    pub mean_seconds: f64,
    pub total_seconds: f64,
    pub iter_min: usize,
    pub iter_mean: f64,
    pub iter_max: usize,
    pub nonconverged: usize,
    pub rejected: usize,
}

impl LevelStats {
    /// Reduces samples in index order.
    pub fn from_samples(level: usize, samples: &[LevelSample]) -> Self {
        let n = samples.len();
        let q = samples.first().map_or(0, |s| s.correction.len());
        let nf = n as f64;
        let mut mean = vec![0.0; q];
        for s in samples {
            for (m, y) in mean.iter_mut().zip(&s.correction) {
                *m += y;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut variance = vec![0.0; q];
        for s in samples {
            for ((v, y), m) in variance.iter_mut().zip(&s.correction).zip(&mean) {
                *v += (y - m).powi(2);
            }
        }
        variance.iter_mut().for_each(|v| *v /= nf);
        let total_seconds: f64 = samples.iter().map(|s| s.seconds).sum();
        let iters = samples.iter().map(|s| s.fine.iterations);
        Self {
            level,
            samples: n,
            mean,
            variance,
            mean_seconds: total_seconds / nf,
            total_seconds,
            iter_min: iters.clone().min().unwrap_or(0),
            iter_mean: iters.clone().sum::<usize>() as f64 / nf,
            iter_max: iters.max().unwrap_or(0),
            nonconverged: samples.iter().filter(|s| !s.fine.converged).count(),
            rejected: samples.iter().map(|s| s.rejected as usize).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub schedule: MlmcSchedule,
    pub realization: u64,
    pub root_seed: u64,
    pub levels: Vec<LevelStats>,
    /// Per level, per sample corrections in index order.
    pub corrections: Vec<Vec<Vec<f64>>>,
}

impl RunReport {
    /// `Qtilde_l = sum_{j <= l} Ybar_j` per quantity.
    pub fn partial_estimate(&self, level: usize) -> Vec<f64> {
        let q = self.levels[0].mean.len();
        (0..q)
            .map(|k| self.levels[..=level].iter().map(|s| s.mean[k]).sum())
            .collect()
    }

    pub fn estimate(&self) -> Vec<f64> {
        self.partial_estimate(self.levels.len() - 1)
    }

    /// The estimator with finest level `finest` and its own schedule
    /// (`N_l = ceil(s^(Gamma (finest - l)) N_L)`), evaluated on the leading
    /// samples of each level of this run.
    pub fn nested_estimate(&self, finest: usize) -> Result<Vec<f64>, MlmcError> {
        let sub = self.schedule.truncated(finest)?;
        let q = self.levels[0].mean.len();
        let mut total = vec![0.0; q];
        for (level, &n) in sub.counts.iter().enumerate() {
            for (t, mean) in total.iter_mut().zip(leading_mean(&self.corrections[level][..n], q)) {
                *t += mean;
            }
        }
        Ok(total)
    }

    /// `sqrt(sum_{j <= l} V(Y_j) / N_j)` per quantity.
    pub fn standard_error(&self, level: usize) -> Vec<f64> {
        let q = self.levels[0].mean.len();
        (0..q)
            .map(|k| {
                self.levels[..=level]
                    .iter()
                    .map(|s| s.variance[k] / s.samples as f64)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn total_seconds(&self) -> f64 {
        self.levels.iter().map(|s| s.total_seconds).sum()
    }

    pub fn total_rejected(&self) -> usize {
        self.levels.iter().map(|s| s.rejected).sum()
    }
}

fn leading_mean(samples: &[Vec<f64>], q: usize) -> Vec<f64> {
    let mut mean = vec![0.0; q];
    for y in samples {
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= samples.len() as f64);
    mean
}

fn evaluate_with_redraws<S: LevelSampler + ?Sized>(
    sampler: &S,
    levels: &[usize],
    index: u64,
    settings: &EstimatorSettings,
    label: (usize, usize),
) -> Result<(Vec<Evaluation>, u32), MlmcError> {
    let mut reason = String::new();
    for attempt in 0..settings.max_attempts {
        let start = RandomStream::redraw(settings.root_seed, index, attempt);
        let mut out = Vec::with_capacity(levels.len());
        let mut rejected = false;
        for &level in levels {
            match sampler.evaluate(level, &mut start.clone()) {
                Ok(e) => out.push(e),
                Err(SampleFailure::Rejected(why)) => {
                    reason = why;
                    rejected = true;
                    break;
                }
                Err(SampleFailure::Fatal(message)) => {
                    return Err(MlmcError::SamplerFailed {
                        level: label.0,
                        sample: label.1,
                        message,
                    })
                }
            }
        }
        if !rejected {
            return Ok((out, attempt));
        }
    }
    Err(MlmcError::RejectionLimit {
        level: label.0,
        sample: label.1,
        attempts: settings.max_attempts,
        reason,
    })
}

/// Draws `Y_l^i` for one `(level, sample)`: the fine and coarse evaluations
/// restart from the same stream, so both see the same random input.
pub fn level_sample<S: LevelSampler + ?Sized>(
    sampler: &S,
    schedule: &MlmcSchedule,
    realization: u64,
    level: usize,
    sample: usize,
    settings: &EstimatorSettings,
) -> Result<LevelSample, MlmcError> {
    let index = schedule.sample_index(realization, level, sample);
    let levels: Vec<usize> = if level == 0 { vec![0] } else { vec![level, level - 1] };
    let clock = Instant::now();
    let (evals, rejected) = evaluate_with_redraws(sampler, &levels, index, settings, (level, sample))?;
    let seconds = clock.elapsed().as_secs_f64();
    let mut evals = evals.into_iter();
    let fine = evals.next().unwrap();
    let correction = match evals.next() {
        None => fine.values.clone(),
        Some(coarse) => {
            if coarse.values.len() != fine.values.len() {
                return Err(MlmcError::QoiCountMismatch {
                    expected: fine.values.len(),
                    got: coarse.values.len(),
                });
            }
            fine.values.iter().zip(&coarse.values).map(|(f, c)| f - c).collect()
        }
    };
    Ok(LevelSample {
        correction,
        fine,
        seconds,
        rejected,
    })
}

/// One realization of the MLMC estimator. Samples run on `executor`; the
/// per-level reduction is sequential in sample order, so the report does not
/// depend on the thread count (timings aside).
pub fn run_estimator<S: LevelSampler + ?Sized>(
    schedule: &MlmcSchedule,
    sampler: &S,
    realization: u64,
    settings: &EstimatorSettings,
    executor: &Executor,
) -> Result<RunReport, MlmcError> {
    if settings.max_attempts == 0 {
        return Err(MlmcError::InvalidArgument("max_attempts must be positive".into()));
    }
    let tasks: Vec<(usize, usize)> = schedule
        .counts
        .iter()
        .enumerate()
        .flat_map(|(level, &n)| (0..n).map(move |i| (level, i)))
        .collect();
    // Fine levels are the expensive ones; hand them out first.
    let order: Vec<usize> = (0..tasks.len()).rev().collect();
    let results = executor.map(order.len(), |t| {
        let (level, i) = tasks[order[t]];
        level_sample(sampler, schedule, realization, level, i, settings)
    });
    let mut slots: Vec<Option<LevelSample>> = vec![None; tasks.len()];
    for (t, result) in results.into_iter().enumerate() {
        slots[order[t]] = Some(result?);
    }
    let mut slots = slots.into_iter().map(Option::unwrap);
    let mut levels = Vec::with_capacity(schedule.num_levels());
    let mut corrections = Vec::with_capacity(schedule.num_levels());
    let mut qois = None;
    for (level, &n) in schedule.counts.iter().enumerate() {
        let samples: Vec<LevelSample> = slots.by_ref().take(n).collect();
        for s in &samples {
            let expected = *qois.get_or_insert(s.correction.len());
            if s.correction.len() != expected {
                return Err(MlmcError::QoiCountMismatch {
                    expected,
                    got: s.correction.len(),
                });
            }
        }
        levels.push(LevelStats::from_samples(level, &samples));
        corrections.push(samples.into_iter().map(|s| s.correction).collect());
    }
    Ok(RunReport {
        schedule: schedule.clone(),
        realization,
        root_seed: settings.root_seed,
        levels,
        corrections,
    })
}

/// Averages over `K` realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossRunStats {
    pub realizations: usize,
    /// `E_l` per level and quantity: root mean square error against the
    /// reference of the estimator with finest level `l` (see
    /// [`RunReport::nested_estimate`]).
    pub errors: Vec<Vec<f64>>,
    /// `V_l` per level and quantity: mean of `V(Y_l)` over realizations.
    pub variances: Vec<Vec<f64>>,
    /// Mean per-sample seconds per level.
    pub mean_seconds: Vec<f64>,
    /// Mean over realizations of the total run time.
    pub mean_total_seconds: f64,
}

impl CrossRunStats {
    pub fn error_slope(&self, qoi: usize, from_level: usize) -> f64 {
        slope_over(&self.errors, qoi, from_level)
    }

    pub fn variance_slope(&self, qoi: usize, from_level: usize) -> f64 {
        slope_over(&self.variances, qoi, from_level)
    }
}

fn slope_over(table: &[Vec<f64>], qoi: usize, from_level: usize) -> f64 {
    let points: Vec<(f64, f64)> = table
        .iter()
        .enumerate()
        .skip(from_level)
        .map(|(l, row)| (l as f64, row[qoi]))
        .collect();
    if points.len() < 2 {
        return f64::NAN;
    }
    log2_slope(&points)
}

pub fn cross_run_stats(reports: &[RunReport], reference: &[f64]) -> Result<CrossRunStats, MlmcError> {
    let first = reports.first().ok_or(MlmcError::NoReports)?;
    let nlev = first.levels.len();
    if reports.iter().any(|r| r.levels.len() != nlev) {
        return Err(MlmcError::InvalidArgument("reports have different level counts".into()));
    }
    let q = reference.len();
    if first.levels[0].mean.len() != q {
        return Err(MlmcError::QoiCountMismatch {
            expected: first.levels[0].mean.len(),
            got: q,
        });
    }
    let k = reports.len() as f64;
    let mut errors = vec![vec![0.0; q]; nlev];
    let mut variances = vec![vec![0.0; q]; nlev];
    let mut mean_seconds = vec![0.0; nlev];
    for report in reports {
        for l in 0..nlev {
            let estimate = report.nested_estimate(l)?;
            for j in 0..q {
                errors[l][j] += (estimate[j] - reference[j]).powi(2);
                variances[l][j] += report.levels[l].variance[j];
            }
            mean_seconds[l] += report.levels[l].mean_seconds;
        }
    }
    for l in 0..nlev {
        for j in 0..q {
            errors[l][j] = (errors[l][j] / k).sqrt();
            variances[l][j] /= k;
        }
        mean_seconds[l] /= k;
    }
    Ok(CrossRunStats {
        realizations: reports.len(),
        errors,
        variances,
        mean_seconds,
        mean_total_seconds: reports.iter().map(RunReport::total_seconds).sum::<f64>() / k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(
            schedule_samples(3.5, 2, 5, 3, DEFAULT_SAMPLE_CAP).unwrap(),
            vec![556092, 49152, 4345, 384, 34, 3]
        );
        assert_eq!(schedule_samples(3.5, 2, 0, 7, DEFAULT_SAMPLE_CAP).unwrap(), vec![7]);
        assert_eq!(schedule_samples(0.0, 2, 3, 5, DEFAULT_SAMPLE_CAP).unwrap(), vec![5; 4]);
        assert!(matches!(
            schedule_samples(3.5, 2, 12, 6, 1_000_000),
            Err(MlmcError::ScheduleOverflow { level: 0, .. })
        ));
        assert!(schedule_samples(-1.0, 2, 1, 1, DEFAULT_SAMPLE_CAP).is_err());
        assert!(schedule_samples(1.0, 1, 1, 1, DEFAULT_SAMPLE_CAP).is_err());
    }

    #[test]
    fn exact_ceiling_on_integer_results() {
        // 4^(1/2) = 2 exactly: no spurious round-up.
        assert_eq!(schedule_samples(0.5, 4, 1, 3, DEFAULT_SAMPLE_CAP).unwrap(), vec![6, 3]);
        assert_eq!(
            schedule_samples(1.5, 4, 2, 1, DEFAULT_SAMPLE_CAP).unwrap(),
            vec![64, 8, 1]
        );
    }

    #[test]
    fn tolerance_levels() {
        assert_eq!(levels_for_tolerance(2.0, 1.0, 0.01, 2.0).unwrap(), 4);
        assert_eq!(levels_for_tolerance(2.0, 1.0, 2.0, 2.0).unwrap(), 0);
        let mut prev = 0;
        let mut eps = 1.0;
        for _ in 0..40 {
            let l = levels_for_tolerance(2.0, 1.0, eps, 2.0).unwrap();
            assert!(l >= prev);
            prev = l;
            eps /= 2.0;
        }
        assert!(levels_for_tolerance(0.0, 1.0, 0.1, 2.0).is_err());
    }

    #[test]
    fn optimal_sample_examples() {
        assert_eq!(optimal_samples(&[1.0], &[1.0], 1.0).unwrap(), vec![2]);
        assert_eq!(optimal_samples(&[4.0, 1.0], &[1.0, 4.0], 0.1).unwrap(), vec![1600, 400]);
        assert_eq!(optimal_samples(&[0.0, 0.0], &[1.0, 2.0], 0.1).unwrap(), vec![1, 1]);
        let base = optimal_samples(&[3.0, 0.5, 0.01], &[1.0, 7.0, 40.0], 0.05).unwrap();
        let scaled = optimal_samples(&[3.0, 0.5, 0.01], &[4.0, 28.0, 160.0], 0.05).unwrap();
        assert_eq!(base, scaled);
    }

    #[test]
    fn sample_index_layout() {
        let s = MlmcSchedule::new(3.5, 2, 2, 1).unwrap();
        assert_eq!(s.counts, vec![128, 12, 1]);
        assert_eq!(s.sample_index(0, 0, 5), 5);
        assert_eq!(s.sample_index(0, 2, 0), 256);
        assert_eq!(s.sample_index(1, 0, 0), 3 * 128);
    }

    #[test]
    fn variance_uses_divisor_n() {
        let samples: Vec<LevelSample> = [0.0, 2.0]
            .iter()
            .map(|&y| LevelSample {
                correction: vec![y],
                fine: Evaluation::new(vec![y]),
                seconds: 0.0,
                rejected: 0,
            })
            .collect();
        let stats = LevelStats::from_samples(0, &samples);
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.variance, vec![1.0]);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = (0..5).map(|l| (l as f64, 3.0 * 2f64.powi(-2 * l))).collect();
        assert!((log2_slope(&pts) + 2.0).abs() < 1e-12);
    }
}
