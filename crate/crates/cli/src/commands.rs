use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use simgap_core::bounds::{
    bound_interval_from_mode, convexity_probe, threshold_from_spec, BoundResult, QueryFunctional,
};
use simgap_core::io::{load_problem, write_counts, write_designs, Design};
use simgap_core::mode::{find_posterior_mode, ModeResult};
use simgap_core::options::SolverOptions;
use simgap_core::posterior::{CountTable, PosteriorModel, ProbTable, ProblemData, Table};
use simgap_core::sampler::{effective_sample_size, mh_sample_from, quantile_type7, SamplerOptions};
use simgap_core::sim::{sample_multinomial_dataset, simulate_call_center, simulate_true_system, SyntheticScheme};

use crate::config::{ExperimentBlock, Generator, LabeledFunctional, LoadedConfig, SimulateBlock, Source, SCHEMA_VERSION};
use crate::error::CliError;
use crate::report::*;

/// Command-line overrides and run metadata.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
    started: Instant,
    started_unix: u64,
}

impl Context {
    pub fn new(cfg: &LoadedConfig, seed: Option<u64>, out: Option<PathBuf>, threads: usize) -> Self {
        Self {
            seed: seed.unwrap_or(cfg.config.seed),
            out_dir: out.unwrap_or_else(|| cfg.output_dir()),
            threads,
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn report(&self, command: &str, cfg: &LoadedConfig) -> ExperimentReport {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: cfg.path.display().to_string(),
            seed: self.seed,
            bounds: Vec::new(),
            sampler: None,
            coverage: None,
            consistency: None,
            mode: None,
            convexity: None,
            simulate: None,
            runtime: Runtime {
                started_unix: self.started_unix,
                elapsed_seconds: 0.0,
                threads: rayon::current_num_threads(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }

    fn finish(&self, mut report: ExperimentReport) -> Result<ExperimentReport, CliError> {
        report.runtime.elapsed_seconds = self.started.elapsed().as_secs_f64();
        let path = self.out_dir.join(format!("{}.json", report.command));
        report.write_json(&path)?;
        Ok(report)
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))
    }

    fn solver(&self, cfg: &LoadedConfig) -> SolverOptions {
        SolverOptions {
            seed: self.seed,
            ..cfg.config.solver.clone()
        }
    }
}

/// SplitMix64 mix of a base seed with stream indices.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Problem {
    designs: Vec<Design>,
    model: PosteriorModel,
    functionals: Vec<LabeledFunctional>,
}

fn load(cfg: &LoadedConfig) -> Result<Problem, CliError> {
    let data = cfg
        .config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a `data` block".into()))?;
    let designs_path = cfg.resolve(&data.designs);
    let counts: Vec<PathBuf> = data.counts.iter().map(|p| cfg.resolve(p)).collect();
    let count_refs: Vec<&Path> = counts.iter().map(PathBuf::as_path).collect();
    let (designs, problem) = load_problem(&designs_path, &count_refs, data.m)?;
    let prior = cfg.config.prior.to_spec(&cfg.base)?;
    let m = problem.m();
    let model = PosteriorModel::new(problem, &prior)?;
    let functionals = cfg.config.functionals.build(&designs, m)?;
    Ok(Problem {
        designs,
        model,
        functionals,
    })
}

fn record(f: &LabeledFunctional, outcome: Result<BoundResult, String>) -> FunctionalRecord {
    let (status, result, error) = match outcome {
        Ok(r) => (RecordStatus::Ok, Some(r), None),
        Err(e) => (RecordStatus::Failed, None, Some(e)),
    };
    FunctionalRecord {
        name: f.name.clone(),
        design: f.design.clone(),
        outcome: f.outcome,
        is_probability: f.functional.is_probability(),
        status,
        result,
        error,
    }
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_intervals_csv(path: &Path, records: &[FunctionalRecord]) -> Result<(), CliError> {
    let mut out = String::from("name,design,outcome,status,lower,upper,mode_value,lower_status,upper_status,error\n");
    for r in records {
        let design = r.design.as_deref().unwrap_or("");
        let outcome = r.outcome.map(|o| o.to_string()).unwrap_or_default();
        match &r.result {
            Some(b) => writeln!(
                out,
                "{},{},{},ok,{},{},{},{},{},",
                csv_field(&r.name),
                csv_field(design),
                outcome,
                b.lower,
                b.upper,
                b.mode_value,
                status_name(&b.lower_status),
                status_name(&b.upper_status)
            ),
            None => writeln!(
                out,
                "{},{},{},failed,,,,,,{}",
                csv_field(&r.name),
                csv_field(design),
                outcome,
                csv_field(r.error.as_deref().unwrap_or(""))
            ),
        }
        .expect("write to string");
    }
    write_text(path, &out)
}

fn status_name<T: Serialize>(s: &T) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn calibrate(cfg: &LoadedConfig, ctx: &Context) -> Result<ExperimentReport, CliError> {
    ctx.prepare_out()?;
    let problem = load(cfg)?;
    let opts = ctx.solver(cfg);
    let mut report = ctx.report("calibrate", cfg);
    match find_posterior_mode(&problem.model, &opts) {
        Ok(mode) => {
            report.bounds = problem
                .functionals
                .par_iter()
                .map(|f| {
                    let r = bound_interval_from_mode(&problem.model, &f.functional, &cfg.config.threshold, &mode, &opts);
                    record(f, r.map_err(|e| e.to_string()))
                })
                .collect();
            report.mode = Some(mode);
        }
        Err(e) => {
            let msg = format!("posterior mode: {e}");
            report.bounds = problem.functionals.iter().map(|f| record(f, Err(msg.clone()))).collect();
        }
    }
    write_intervals_csv(&ctx.out_dir.join("calibrate.csv"), &report.bounds)?;
    ctx.finish(report)
}

pub fn mode(cfg: &LoadedConfig, ctx: &Context) -> Result<ExperimentReport, CliError> {
    ctx.prepare_out()?;
    let problem = load(cfg)?;
    let mut report = ctx.report("mode", cfg);
    let mode = find_posterior_mode(&problem.model, &ctx.solver(cfg))?;
    let mut out = String::from("design,outcome,p,p_tilde,d\n");
    let m = problem.model.m();
    for (j, d) in problem.designs.iter().enumerate() {
        for i in 0..m {
            writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&d.id),
                i + 1,
                mode.p_star.get(j, i),
                mode.p_tilde_star.get(j, i),
                mode.d_star.get(j, i)
            )
            .expect("write to string");
        }
    }
    write_text(&ctx.out_dir.join("mode.csv"), &out)?;
    report.mode = Some(mode);
    ctx.finish(report)
}

pub fn convexity_check(cfg: &LoadedConfig, ctx: &Context) -> Result<ExperimentReport, CliError> {
    ctx.prepare_out()?;
    let problem = load(cfg)?;
    let mut report = ctx.report("convexity-check", cfg);
    let mode = find_posterior_mode(&problem.model, &ctx.solver(cfg))?;
    let log_c = threshold_from_spec(&cfg.config.threshold, mode.log_post_star)?;
    let n_pairs = cfg.config.convexity.clone().unwrap_or_default().n_pairs;
    report.convexity = Some(convexity_probe(&problem.model, log_c, n_pairs, ctx.seed)?);
    report.mode = Some(mode);
    ctx.finish(report)
}

pub fn compare_sampler(cfg: &LoadedConfig, ctx: &Context) -> Result<ExperimentReport, CliError> {
    ctx.prepare_out()?;
    let problem = load(cfg)?;
    let opts = ctx.solver(cfg);
    let mut report = ctx.report("compare-sampler", cfg);
    let mode = find_posterior_mode(&problem.model, &opts)?;
    let sampler = SamplerOptions {
        seed: ctx.seed,
        ..cfg.config.sampler.clone()
    };
    let chain = mh_sample_from(&problem.model, &mode.stacked(), &sampler)?;
    let q = cfg.config.threshold.q();
    let threshold = &cfg.config.threshold;
    let rows: Vec<(FunctionalRecord, SamplerComparison)> = problem
        .functionals
        .par_iter()
        .map(|f| -> Result<_, CliError> {
            let bound = bound_interval_from_mode(&problem.model, &f.functional, threshold, &mode, &opts);
            let mut values = chain.functional_values(&f.functional);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let ess = effective_sample_size(&values);
            let lo = quantile_type7(&mut values, 1.0 - q)?;
            let hi = quantile_type7(&mut values, q)?;
            let cmp = SamplerComparison {
                name: f.name.clone(),
                optimization: bound.as_ref().ok().cloned(),
                sampler_lower: lo,
                sampler_upper: hi,
                sampler_mean: mean,
                effective_sample_size: ess,
                acceptance_rate: chain.acceptance_rate,
            };
            Ok((record(f, bound.map_err(|e| e.to_string())), cmp))
        })
        .collect::<Result<_, _>>()?;
    let mut table = String::from("name,optimization_lower,optimization_upper,sampler_lower,sampler_upper\n");
    for (_, c) in &rows {
        let (ol, ou) = c
            .optimization
            .as_ref()
            .map(|b| (b.lower.to_string(), b.upper.to_string()))
            .unwrap_or_default();
        writeln!(table, "{},{ol},{ou},{},{}", csv_field(&c.name), c.sampler_lower, c.sampler_upper).expect("write to string");
    }
    write_text(&ctx.out_dir.join("compare-sampler.csv"), &table)?;
    let (records, comparisons): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    report.bounds = records;
    report.sampler = Some(comparisons);
    report.mode = Some(mode);
    ctx.finish(report)
}

pub fn simulate(cfg: &LoadedConfig, ctx: &Context) -> Result<ExperimentReport, CliError> {
    ctx.prepare_out()?;
    let block = cfg
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a `simulate` block".into()))?;
    let (designs, counts) = generate(block, ctx.seed)?;
    let designs_path = ctx.out_dir.join("designs.csv");
    let counts_path = ctx.out_dir.join("counts.csv");
    write_designs(&designs_path, &designs)?;
    match block.source {
        Source::Real => write_counts(&counts_path, &designs, Some(&counts), None)?,
        Source::Sim => write_counts(&counts_path, &designs, None, Some(&counts))?,
    }
    let sidecar = ctx.out_dir.join("simulate.sidecar.json");
    let meta = serde_json::json!({ "seed": ctx.seed, "simulate": block });
    write_text(&sidecar, &(serde_json::to_string_pretty(&meta).expect("sidecar serializes") + "\n"))?;
    let mut report = ctx.report("simulate", cfg);
    report.simulate = Some(SimulateSummary {
        designs: "designs.csv".into(),
        counts: "counts.csv".into(),
        sidecar: "simulate.sidecar.json".into(),
        row_totals: (0..counts.rows()).map(|j| counts.row_total(j)).collect(),
    });
    ctx.finish(report)
}

/// Designs and counts for a simulate block; each queue design gets its own seed stream.
pub fn generate(block: &SimulateBlock, seed: u64) -> Result<(Vec<Design>, CountTable), CliError> {
    match block.generator {
        Generator::Multinomial => {
            let scheme = block.scheme.as_ref().expect("validated");
            let designs = (1..=scheme.pi.rows())
                .map(|j| Design {
                    id: j.to_string(),
                    coord: j as f64,
                })
                .collect();
            Ok((designs, sample_multinomial_dataset(scheme, seed)?))
        }
        Generator::CallCenter | Generator::TrueSystem => {
            let rows = block
                .servers
                .par_iter()
                .enumerate()
                .map(|(j, &x)| {
                    let reps = block.reps_per_design.as_ref().map_or(block.reps, |r| r[j]);
                    let s = derive_seed(seed, x as u64, 0);
                    match block.generator {
                        Generator::TrueSystem => simulate_true_system(&block.true_config(x), reps, s),
                        _ => simulate_call_center(&block.base_config(x), reps, s),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let designs = block
                .servers
                .iter()
                .map(|&x| Design {
                    id: x.to_string(),
                    coord: x as f64,
                })
                .collect();
            Ok((designs, CountTable::from_rows(&rows)?))
        }
    }
}

/// One synthetic dataset: real counts from the scheme, simulator counts per design.
pub fn synthetic_problem(exp: &ExperimentBlock, n: u64, seed: u64, rep: u64) -> Result<ProblemData, CliError> {
    let real = sample_multinomial_dataset(&exp.scheme(n), derive_seed(seed, rep, 0))?;
    let sim_pi = exp.sim_pi.as_ref().unwrap_or(&exp.pi);
    let mut rows = Vec::with_capacity(sim_pi.rows());
    for j in 0..sim_pi.rows() {
        let scheme = SyntheticScheme {
            pi: ProbTable::from_rows(&[sim_pi.row(j).to_vec()])?,
            xi: vec![1.0],
            n_total: exp.sim_reps,
        };
        let c = sample_multinomial_dataset(&scheme, derive_seed(seed, rep, 1 + j as u64))?;
        rows.push(c.row(0).to_vec());
    }
    Ok(ProblemData::new(exp.coords(), real, CountTable::from_rows(&rows)?)?)
}

fn experiment(cfg: &LoadedConfig) -> Result<&ExperimentBlock, CliError> {
    cfg.config
        .experiment
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs an `experiment` block".into()))
}

/// `Σ_j Σ_i z_j(i) π_j(i)`.
fn true_value(z: &Table, pi: &Table) -> f64 {
    z.as_slice().iter().zip(pi.as_slice()).map(|(a, b)| a * b).sum()
}

/// Empirical-frequency estimate; `None` when a design with nonzero `z` has no data.
fn plug_in(z: &Table, counts: &CountTable) -> Option<f64> {
    let mut total = 0.0;
    for j in 0..z.rows() {
        let n = counts.row_total(j);
        if n == 0 {
            if z.row(j).iter().any(|v| *v != 0.0) {
                return None;
            }
            continue;
        }
        for (zi, c) in z.row(j).iter().zip(counts.row(j)) {
            total += zi * *c as f64 / n as f64;
        }
    }
    Some(total)
}

fn row_only(z: &Table, j: usize) -> Result<QueryFunctional, CliError> {
    let mut t = Table::filled(z.rows(), z.cols(), 0.0);
    t.row_mut(j).copy_from_slice(z.row(j));
    Ok(QueryFunctional::new(t, format!("design {}", j + 1))?)
}

struct Replicate {
    interval: BoundResult,
    plug_in: Option<f64>,
    ranking: Option<bool>,
}

fn run_replicate(
    cfg: &LoadedConfig,
    exp: &ExperimentBlock,
    functional: &QueryFunctional,
    n: u64,
    seed: u64,
    rep: u64,
    with_ranking: bool,
) -> Result<Replicate, CliError> {
    let data = synthetic_problem(exp, n, seed, rep)?;
    let plug = plug_in(&functional.z, data.real_counts());
    let prior = cfg.config.prior.to_spec(&cfg.base)?;
    let model = PosteriorModel::new(data, &prior)?;
    let opts = SolverOptions {
        seed: derive_seed(seed, rep, 1 << 32),
        ..cfg.config.solver.clone()
    };
    let mode: ModeResult = find_posterior_mode(&model, &opts)?;
    let threshold = &cfg.config.threshold;
    let interval = bound_interval_from_mode(&model, functional, threshold, &mode, &opts)?;
    let ranking = match (with_ranking, exp.ranking) {
        (true, Some([j, k])) => {
            let (fj, fk) = (row_only(&functional.z, j)?, row_only(&functional.z, k)?);
            let bj = bound_interval_from_mode(&model, &fj, threshold, &mode, &opts)?;
            let bk = bound_interval_from_mode(&model, &fk, threshold, &mode, &opts)?;
            let (tj, tk) = (true_value(&fj.z, &exp.pi), true_value(&fk.z, &exp.pi));
            Some(if tj > tk { bj.ranks_above(&bk) } else { bk.ranks_above(&bj) })
        }
        _ => None,
    };
    Ok(Replicate {
        interval,
        plug_in: plug,
        ranking,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn coverage(cfg: &LoadedConfig, ctx: &Context) -> Result<ExperimentReport, CliError> {
    ctx.prepare_out()?;
    let exp = experiment(cfg)?;
    let functional = exp.functional()?;
    let truth = true_value(&functional.z, &exp.pi);
    let results: Vec<Result<Replicate, CliError>> = (0..exp.replications as u64)
        .into_par_iter()
        .map(|rep| run_replicate(cfg, exp, &functional, exp.n, ctx.seed, rep, false))
        .collect();
    let ok: Vec<&BoundResult> = results.iter().filter_map(|r| r.as_ref().ok()).map(|r| &r.interval).collect();
    let total = ok.len();
    let mut report = ctx.report("coverage", cfg);
    report.coverage = Some(CoverageStats {
        n: exp.n,
        ell: cfg.config.threshold.ell(),
        true_value: truth,
        replications: exp.replications,
        failures: exp.replications - total,
        upper: Proportion::new(ok.iter().filter(|b| b.upper >= truth).count(), total),
        lower: Proportion::new(ok.iter().filter(|b| b.lower <= truth).count(), total),
        both: Proportion::new(ok.iter().filter(|b| b.contains(truth)).count(), total),
        mean_width: mean(ok.iter().map(|b| b.width())),
    });
    ctx.finish(report)
}

/// Variance target `ℓ·√(Σ_j Var Z_j / ξ_j)` for the slope check.
pub fn target_slope(z: &Table, pi: &Table, xi: &[f64], ell: f64) -> f64 {
    let mut total = 0.0;
    for (j, x) in xi.iter().enumerate() {
        let m1: f64 = z.row(j).iter().zip(pi.row(j)).map(|(a, p)| a * p).sum();
        let m2: f64 = z.row(j).iter().zip(pi.row(j)).map(|(a, p)| a * a * p).sum();
        total += (m2 - m1 * m1).max(0.0) / x;
    }
    ell * total.sqrt()
}

pub fn consistency(cfg: &LoadedConfig, ctx: &Context) -> Result<ExperimentReport, CliError> {
    ctx.prepare_out()?;
    let exp = experiment(cfg)?;
    let functional = exp.functional()?;
    let truth = true_value(&functional.z, &exp.pi);
    let ell = cfg.config.threshold.ell();
    let target = target_slope(&functional.z, &exp.pi, &exp.xi, ell);
    let mut steps = Vec::new();
    for (level, &n) in exp.n_ladder.iter().enumerate() {
        let seed = derive_seed(ctx.seed, level as u64, n);
        let results: Vec<Result<Replicate, CliError>> = (0..exp.replications as u64)
            .into_par_iter()
            .map(|rep| run_replicate(cfg, exp, &functional, n, seed, rep, true))
            .collect();
        let ok: Vec<&Replicate> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let root_n = (n as f64).sqrt();
        let with_plug: Vec<(&BoundResult, f64)> = ok.iter().filter_map(|r| r.plug_in.map(|p| (&r.interval, p))).collect();
        let upper_slope = mean(with_plug.iter().map(|(b, p)| root_n * (b.upper - p)));
        let lower_slope = mean(with_plug.iter().map(|(b, p)| root_n * (b.lower - p)));
        let ranked: Vec<bool> = ok.iter().filter_map(|r| r.ranking).collect();
        steps.push(LadderStep {
            n,
            replications: exp.replications,
            failures: exp.replications - ok.len(),
            undefined_plug_in: ok.len() - with_plug.len(),
            upper_slope,
            lower_slope,
            target_slope: target,
            upper_ratio: upper_slope.filter(|_| target > 0.0).map(|s| s / target),
            lower_ratio: lower_slope.filter(|_| target > 0.0).map(|s| -s / target),
            mean_width: mean(ok.iter().map(|r| r.interval.width())),
            mean_midpoint_error: mean(ok.iter().map(|r| (0.5 * (r.interval.lower + r.interval.upper) - truth).abs())),
            containment: Proportion::new(ok.iter().filter(|r| r.interval.contains(truth)).count(), ok.len()),
            ranking: exp
                .ranking
                .map(|_| Proportion::new(ranked.iter().filter(|v| **v).count(), ranked.len())),
        });
    }
    let mut report = ctx.report("consistency", cfg);
    report.consistency = Some(ConsistencyStats {
        ell,
        true_value: truth,
        steps,
    });
    ctx.finish(report)
}
