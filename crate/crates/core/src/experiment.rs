//! Experiment runner behind the `abc-prc` binary: schedule loading, per-seed
//! sampler runs and the CSV / SVG outputs.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::{ReaderBuilder, Terminator, WriterBuilder};
use rayon::prelude::*;

use crate::diagnostics::{
    histogram, posterior_stats, sample_moments, ConvergenceTrace, TracePoint,
};
use crate::error::{invalid, AbcError, Result};
use crate::kernel::{kernel_density, GaussianKernel};
use crate::model::{analytic_posterior, GaussianModelSpec, PosteriorSummary, UniformPrior};
use crate::rng::RandomStream;
use crate::sampler::{
    abc_mcmc, abc_prc_corrected, abc_prc_uncorrected, abc_rejection, Execution, RunTrace,
    SamplerConfig, ToleranceSchedule, DEFAULT_CHECKPOINT_COUNT, DEFAULT_MAX_SIM_CALLS,
};

/// Environment variable consulted for the default output directory.
pub const OUT_DIR_ENV: &str = "ABC_PRC_OUT_DIR";
pub const PAPER_PRESET: &str = "paper-2007";
pub const TRACE_HEADER: [&str; 6] = [
    "iteration",
    "epsilon",
    "mean",
    "variance",
    "sim_calls",
    "acceptance_rate",
];
const HISTOGRAM_BINS: usize = 40;
const MCMC_TRACE_POINTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Rejection,
    Mcmc,
    Prc,
    PrcCorrected,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rejection => "rejection",
            Algorithm::Mcmc => "mcmc",
            Algorithm::Prc => "prc",
            Algorithm::PrcCorrected => "prc-corrected",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = AbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rejection" => Ok(Algorithm::Rejection),
            "mcmc" => Ok(Algorithm::Mcmc),
            "prc" => Ok(Algorithm::Prc),
            "prc-corrected" => Ok(Algorithm::PrcCorrected),
            other => Err(invalid(format!(
                "unknown algorithm `{other}` (expected rejection, mcmc, prc or prc-corrected)"
            ))),
        }
    }
}

/// Format a float with 17 significant digits; parses back bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Parse a schedule file: one tolerance per line, `#` starts a comment line,
/// blank lines are ignored.
pub fn parse_schedule(text: &str) -> Result<ToleranceSchedule> {
    let mut eps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| AbcError::Parse {
            line: idx + 1,
            message: format!("`{line}` is not a number"),
        })?;
        if !(value > 0.0) {
            return Err(AbcError::Parse {
                line: idx + 1,
                message: format!("tolerance must be > 0, got {value}"),
            });
        }
        eps.push(value);
    }
    if eps.is_empty() {
        return Err(AbcError::Parse {
            line: 0,
            message: "schedule contains no tolerances".into(),
        });
    }
    ToleranceSchedule::new(eps)
}

/// Render a schedule in the file format accepted by [`parse_schedule`].
pub fn format_schedule(schedule: &ToleranceSchedule) -> String {
    let mut out = String::new();
    for e in schedule.epsilons() {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

pub fn preset_schedule(name: &str) -> Option<ToleranceSchedule> {
    match name {
        PAPER_PRESET => Some(ToleranceSchedule::paper_2007()),
        _ => None,
    }
}

/// Resolve a preset name, or else read and parse a schedule file.
pub fn load_schedule(source: &str) -> Result<ToleranceSchedule> {
    if let Some(s) = preset_schedule(source) {
        return Ok(s);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(invalid(format!(
            "`{source}` is neither a known preset ({PAPER_PRESET}) nor a readable file"
        )));
    }
    parse_schedule(&fs::read_to_string(path)?)
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub ybar: f64,
    pub n: usize,
    pub sigma2: f64,
    pub prior_lo: f64,
    pub prior_hi: f64,
    pub kernel_var: f64,
    pub kernel_mean: f64,
    pub schedule: ToleranceSchedule,
    /// Tolerance for rejection and MCMC runs.
    pub eps: f64,
    pub particles: usize,
    pub chain_len: usize,
    pub burn_in: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub max_sim_calls: u64,
    pub checkpoint_count: usize,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub plot: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Prc,
            ybar: 4.786624,
            n: 10,
            sigma2: 9.0,
            prior_lo: -15.0,
            prior_hi: 15.0,
            kernel_var: 0.1,
            kernel_mean: 0.0,
            schedule: ToleranceSchedule::paper_2007(),
            eps: 0.01,
            particles: 1000,
            chain_len: 200_000,
            burn_in: 10_000,
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("out"),
            max_sim_calls: DEFAULT_MAX_SIM_CALLS,
            checkpoint_count: DEFAULT_CHECKPOINT_COUNT,
            threads: None,
            plot: false,
        }
    }
}

impl ExperimentConfig {
    pub fn model(&self) -> Result<GaussianModelSpec> {
        GaussianModelSpec::flat(self.ybar, self.n, self.sigma2)
    }

    pub fn prior(&self) -> Result<UniformPrior> {
        UniformPrior::new(self.prior_lo, self.prior_hi)
    }

    pub fn kernel(&self) -> Result<GaussianKernel> {
        GaussianKernel::with_offset(self.kernel_mean, self.kernel_var)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seed list is empty"));
        }
        if self.particles == 0 {
            return Err(invalid("particle count must be >= 1"));
        }
        if self.algorithm == Algorithm::Mcmc && self.chain_len < 2 {
            return Err(invalid("chain length must be >= 2"));
        }
        if matches!(self.algorithm, Algorithm::Prc | Algorithm::PrcCorrected) && self.particles < 2
        {
            return Err(invalid("PRC runs need at least 2 particles"));
        }
        if matches!(self.threads, Some(0)) {
            return Err(invalid("thread count must be >= 1"));
        }
        self.model()?;
        self.prior()?;
        self.kernel()?;
        Ok(())
    }

    fn file_stem(&self, seed: u64) -> String {
        format!("{}-seed{seed}", self.algorithm)
    }
}

/// One row of the trace CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub epsilon: f64,
    pub mean: f64,
    pub variance: f64,
    pub sim_calls: u64,
    pub acceptance_rate: f64,
}

/// Convert trace rows into a convergence trace against `reference_variance`.
pub fn rows_to_trace(rows: &[TraceRow], reference_variance: f64) -> ConvergenceTrace {
    ConvergenceTrace {
        points: rows
            .iter()
            .map(|r| TracePoint {
                iteration: r.iteration,
                mean: r.mean,
                variance: r.variance,
            })
            .collect(),
        reference_variance,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub final_particles: Vec<f64>,
}

impl SeedResult {
    pub fn final_variance(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.variance)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub algorithm: Algorithm,
    pub kernel_var: f64,
    pub seeds: Vec<SeedResult>,
    pub median_final_variance: f64,
    pub oracle: PosteriorSummary,
}

impl ExperimentSummary {
    pub fn summary_line(&self) -> String {
        format!(
            "algorithm={} kernel_var={} median_final_variance={:.6} oracle_variance={}",
            self.algorithm, self.kernel_var, self.median_final_variance, self.oracle.variance
        )
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn prc_rows(trace: &RunTrace) -> Result<Vec<TraceRow>> {
    trace
        .checkpoints
        .iter()
        .map(|cp| {
            let (mean, variance) = posterior_stats(&cp.particles)?;
            let tally = trace.tally(cp.iteration);
            Ok(TraceRow {
                iteration: cp.iteration,
                epsilon: cp.epsilon,
                mean,
                variance,
                sim_calls: tally.map_or(0, |t| t.proposed),
                acceptance_rate: tally.map_or(0.0, |t| t.rate()),
            })
        })
        .collect()
}

/// Run the configured sampler for one seed without writing anything.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let spec = config.model()?;
    let prior = config.prior()?;
    let kernel = config.kernel()?;
    let mut rng = RandomStream::derive(seed, &[]);

    let (rows, final_particles) = match config.algorithm {
        Algorithm::Rejection => {
            let out = abc_rejection(
                &spec,
                &prior,
                config.eps,
                config.particles,
                config.max_sim_calls,
                &mut rng,
            )?;
            let values = out.particles.values().to_vec();
            let (mean, variance) = if values.len() >= 2 {
                sample_moments(&values)?
            } else {
                (values[0], 0.0)
            };
            let row = TraceRow {
                iteration: 1,
                epsilon: config.eps,
                mean,
                variance,
                sim_calls: out.sim_calls,
                acceptance_rate: values.len() as f64 / out.sim_calls as f64,
            };
            (vec![row], values)
        }
        Algorithm::Mcmc => {
            let init = if prior.contains(spec.ybar()) {
                spec.ybar()
            } else {
                0.5 * (prior.lo() + prior.hi())
            };
            let chain = abc_mcmc(
                &spec,
                &prior,
                &kernel,
                config.eps,
                config.burn_in + config.chain_len,
                init,
                &mut rng,
            )?;
            let kept = chain.states[config.burn_in..].to_vec();
            let step = (kept.len() / MCMC_TRACE_POINTS).max(2);
            let mut ends: Vec<usize> = (1..=MCMC_TRACE_POINTS)
                .map(|k| (k * step).min(kept.len()))
                .collect();
            ends.push(kept.len());
            ends.dedup();
            let rate = chain.accepted as f64 / (config.burn_in + config.chain_len) as f64;
            let rows = ends
                .into_iter()
                .map(|end| {
                    let (mean, variance) = sample_moments(&kept[..end])?;
                    Ok(TraceRow {
                        iteration: end,
                        epsilon: config.eps,
                        mean,
                        variance,
                        sim_calls: chain.sim_calls,
                        acceptance_rate: rate,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (rows, kept)
        }
        Algorithm::Prc | Algorithm::PrcCorrected => {
            let mut sampler =
                SamplerConfig::new(config.particles, kernel, config.schedule.clone(), seed);
            sampler.prior = prior;
            sampler.max_sim_calls_per_iteration = config.max_sim_calls;
            sampler.checkpoint_count = config.checkpoint_count;
            sampler.execution = Execution::PerSlot;
            let trace = if config.algorithm == Algorithm::Prc {
                abc_prc_uncorrected(&spec, &sampler, &mut rng)?
            } else {
                abc_prc_corrected(&spec, &sampler, &mut rng)?
            };
            let rows = prc_rows(&trace)?;
            let last = trace
                .final_checkpoint()
                .ok_or_else(|| invalid("sampler produced no checkpoints"))?;
            (rows, last.particles.values().to_vec())
        }
    };
    Ok(SeedResult {
        seed,
        rows,
        final_particles,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            fmt_f64(r.epsilon),
            fmt_f64(r.mean),
            fmt_f64(r.variance),
            r.sim_calls.to_string(),
            fmt_f64(r.acceptance_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut rdr = ReaderBuilder::new().from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(AbcError::Parse {
            line: 1,
            message: format!("unexpected trace header {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |k: usize| -> Result<&str> {
            record.get(k).ok_or_else(|| AbcError::Parse {
                line,
                message: format!("missing column {}", TRACE_HEADER[k]),
            })
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?.parse().map_err(|_| AbcError::Parse {
                line,
                message: format!("bad value in column {}", TRACE_HEADER[k]),
            })
        };
        let int = |k: usize| -> Result<u64> {
            field(k)?.parse().map_err(|_| AbcError::Parse {
                line,
                message: format!("bad value in column {}", TRACE_HEADER[k]),
            })
        };
        rows.push(TraceRow {
            iteration: int(0)? as usize,
            epsilon: num(1)?,
            mean: num(2)?,
            variance: num(3)?,
            sim_calls: int(4)?,
            acceptance_rate: num(5)?,
        });
    }
    Ok(rows)
}

fn write_particles_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

fn histogram_rows(values: &[f64], oracle: &PosteriorSummary) -> Vec<[f64; 5]> {
    let n = values.len() as f64;
    histogram(values, HISTOGRAM_BINS)
        .into_iter()
        .map(|(lo, hi, count)| {
            let centre = 0.5 * (lo + hi);
            [
                lo,
                hi,
                count as f64,
                count as f64 / (n * (hi - lo)),
                kernel_density(centre, oracle.mean, oracle.variance),
            ]
        })
        .collect()
}

fn write_histogram_csv(path: &Path, rows: &[[f64; 5]]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["bin_lo", "bin_hi", "count", "density", "oracle_density"])?;
    for r in rows {
        w.write_record([
            fmt_f64(r[0]),
            fmt_f64(r[1]),
            (r[2] as u64).to_string(),
            fmt_f64(r[3]),
            fmt_f64(r[4]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Histogram bars with the oracle density drawn over them.
fn write_histogram_svg(
    path: &Path,
    rows: &[[f64; 5]],
    oracle: &PosteriorSummary,
    title: &str,
) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return Ok(());
    };
    let sd = oracle.variance.sqrt();
    let x_lo = first[0].min(oracle.mean - 4.0 * sd);
    let x_hi = last[1].max(oracle.mean + 4.0 * sd);
    let peak = kernel_density(oracle.mean, oracle.mean, oracle.variance);
    let y_hi = rows.iter().map(|r| r[3]).fold(peak, f64::max) * 1.05;
    let sx = |x: f64| PAD + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / y_hi * (H - 2.0 * PAD);

    let mut f = BufWriter::new(File::create(path)?);
    writeln!(
        f,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )?;
    writeln!(f, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        f,
        r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="13">{title}</text>"#
    )?;
    for r in rows {
        let (x0, x1, y) = (sx(r[0]), sx(r[1]), sy(r[3]));
        writeln!(
            f,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd" stroke-width="0.5"/>"##,
            (x1 - x0).max(0.0),
            (H - PAD - y).max(0.0)
        )?;
    }
    let pts: Vec<String> = (0..=200)
        .map(|k| {
            let x = x_lo + (x_hi - x_lo) * k as f64 / 200.0;
            format!(
                "{:.2},{:.2}",
                sx(x),
                sy(kernel_density(x, oracle.mean, oracle.variance))
            )
        })
        .collect();
    writeln!(
        f,
        r##"<polyline fill="none" stroke="#d62728" stroke-width="1.5" points="{}"/>"##,
        pts.join(" ")
    )?;
    writeln!(
        f,
        r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        H - PAD,
        W - PAD
    )?;
    for (x, label) in [(x_lo, x_lo), (oracle.mean, oracle.mean), (x_hi, x_hi)] {
        writeln!(
            f,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{label:.2}</text>"#,
            sx(x),
            H - PAD + 15.0
        )?;
    }
    writeln!(f, "</svg>")?;
    f.flush()?;
    Ok(())
}

fn write_seed_outputs(
    config: &ExperimentConfig,
    result: &SeedResult,
    oracle: &PosteriorSummary,
) -> Result<()> {
    let stem = config.file_stem(result.seed);
    let dir = &config.out_dir;
    write_trace_csv(&dir.join(format!("{stem}-trace.csv")), &result.rows)?;
    write_particles_csv(
        &dir.join(format!("{stem}-particles.csv")),
        &result.final_particles,
    )?;
    let hist = histogram_rows(&result.final_particles, oracle);
    write_histogram_csv(&dir.join(format!("{stem}-histogram.csv")), &hist)?;
    if config.plot {
        let title = format!(
            "{} seed {} (kernel variance {}): final particles vs N({}, {})",
            config.algorithm, result.seed, config.kernel_var, oracle.mean, oracle.variance
        );
        write_histogram_svg(
            &dir.join(format!("{stem}-histogram.svg")),
            &hist,
            oracle,
            &title,
        )?;
    }
    Ok(())
}

/// Run every seed, write per-seed outputs to `config.out_dir` and return the
/// summary across seeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let oracle = analytic_posterior(&config.model()?);

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;

    let seeds = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let result = run_seed(config, seed)?;
                write_seed_outputs(config, &result, &oracle)?;
                Ok(result)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let finals: Vec<f64> = seeds.iter().map(SeedResult::final_variance).collect();
    Ok(ExperimentSummary {
        algorithm: config.algorithm,
        kernel_var: config.kernel_var,
        median_final_variance: median(&finals),
        seeds,
        oracle,
    })
}
