use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Child, Command as Process};

use serde::{Deserialize, Serialize};

use crate::baselines::{train_dual_critic, train_single_critic, LAMBDA_SWEEP};
use crate::cli::config::RunConfig;
use crate::cli::manifest::RunManifest;
use crate::cli::{
    CliResult, CompareArgs, ConfigArgs, EvalArgs, Failure, Method, OracleArgs, SweepArgs,
    TrainArgs,
};
use crate::codec::{write_trace_csv, Profile, StructureKind};
use crate::error::Error;
use crate::eval::{
    bd_rate, build_rd_curve, evaluate_policy, oracle_check as run_oracle_check,
    rate_deviation_stats, EvalSummary, OracleReport, Policy, RdPoint, TinyInstance,
    RATE_TOLERANCE,
};
use crate::nfwpo::{
    train_nfwpo, train_with_rule, write_metrics_csv, ActorRule, Agent, RunOptions, TrainingReport,
};

pub const EVAL_SCHEMA: &str = "nfwpo.eval.v1";
pub const RD_SCHEMA: &str = "nfwpo.rd-curve.v1";
pub const DEVIATION_SCHEMA: &str = "nfwpo.deviation.v1";
pub const GOPS_SCHEMA: &str = "nfwpo.gops.v1";
pub const COMPARE_SCHEMA: &str = "nfwpo.compare.v1";
pub const SWEEP_SCHEMA: &str = "nfwpo.sweep.v1";

fn load_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::Usage(format!(
                    "config file not found: {}",
                    path.display()
                )));
            }
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.trainer.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        config.trainer.episodes = episodes;
    }
    if let Some(profiles) = &args.profiles {
        config.env.profiles = profiles.clone();
    }
    config.validate()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Mean of the last `n` values (all of them when shorter).
fn tail_mean(values: &[f64], n: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(n)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

pub fn train(args: &TrainArgs) -> CliResult<RunManifest> {
    let mut config = load_config(&args.common)?;
    if let Some(lambda) = args.lambda {
        config.single.lambda = lambda;
        config.validate()?;
    }
    create_dir(&args.out)?;
    let rule = args.method.rule(&config);
    let mut manifest = RunManifest::new("train", rule.method(), &config);
    log::info!(
        "training {} for {} episodes, seed {}, profiles {:?}",
        rule,
        config.trainer.episodes,
        config.trainer.seed,
        config.env.profiles
    );
    let options = RunOptions {
        eval_gops_per_cell: config.eval.gops_per_cell,
        checkpoint_dir: Some(args.out.clone()),
    };
    let env = config.env.clone();
    let mut observer = |_: &crate::nfwpo::TrainEvent| {};
    let run = match args.method {
        Method::Nfwpo => train_nfwpo(config.trainer.clone(), env, &options, &mut observer),
        Method::NfwpoUnconstrained => train_with_rule(
            config.trainer.clone(),
            ActorRule::UnconstrainedArgmax,
            env,
            &options,
            &mut observer,
        ),
        Method::Single => train_single_critic(&config.single_critic(), env, &options, &mut observer),
        Method::Dual => train_dual_critic(&config.dual_critic(), env, &options, &mut observer),
    }
    .map_err(|e| match e {
        Error::Diverged { .. } => Failure::Runtime(format!(
            "{e}; diagnostic snapshot in {}",
            args.out.join(crate::nfwpo::DIVERGED_CHECKPOINT).display()
        )),
        other => other.into(),
    })?;

    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &run.report.metrics)?;
    write_file(&args.out.join("metrics.csv"), &csv)?;
    run.report.write_json(&args.out.join("report.json"))?;
    write_file(&args.out.join("config.toml"), config.to_toml().as_bytes())?;

    let deviations: Vec<f64> = run.report.metrics.iter().map(|m| m.rate_deviation).collect();
    let e = &run.report.evaluation;
    log::info!(
        "done: final-100 deviation {:.4}, eval deviation {:.4} raw / {:.4} tolerated",
        tail_mean(&deviations, 100),
        e.deviation.mean_raw,
        e.deviation.mean_tolerated
    );
    manifest.finish(
        ["agent.nfwa", "metrics.csv", "report.json", "config.toml"]
            .map(String::from)
            .to_vec(),
        serde_json::json!({
            "final100_rate_deviation": tail_mean(&deviations, 100),
            "evaluation": e,
            "invariants": run.report.invariants,
        }),
    );
    manifest.write(&args.out)?;
    Ok(manifest)
}

/// The GOP set an evaluation ran on; compare refuses to mix different sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub structure: StructureKind,
    pub profiles: Vec<Profile>,
    pub qp_levels: Vec<f64>,
    pub budget_factors: Vec<f64>,
    pub gops_per_cell: usize,
    pub seed: u64,
    pub rd_qp_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub checkpoint: String,
    pub eval_set: EvalSet,
    pub summary: EvalSummary,
    pub rd_curve: Vec<RdPoint>,
}

fn load_policy(checkpoint: &str) -> CliResult<Option<Agent>> {
    if checkpoint == "anchor" {
        return Ok(None);
    }
    let path = Path::new(checkpoint);
    if !path.exists() {
        return Err(Failure::Usage(format!("checkpoint not found: {checkpoint}")));
    }
    Agent::load(path)
        .map(Some)
        .map_err(|e| Failure::Runtime(format!("{checkpoint}: {e}")))
}

pub fn eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let config = load_config(&args.common)?;
    let agent = load_policy(&args.checkpoint)?;
    let policy = agent.as_ref().map_or(Policy::Anchor, Policy::Agent);
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("eval", policy.name(), &config);

    let env = &config.env;
    let structure = env.structure.build()?;
    let eval_seed = crate::seed::derive(config.trainer.seed, "eval");
    let gops = config.eval.gops_per_cell;
    let specs = env.evaluation_specs(eval_seed, gops);
    let evaluation = evaluate_policy(policy, &structure, &specs)?;
    let rd = build_rd_curve(policy, env, &config.eval.qp_levels, eval_seed, gops)?;

    let mut out = Vec::new();
    writeln!(out, "# schema: {RD_SCHEMA}")?;
    writeln!(out, "qp_level,bitrate,quality")?;
    for (level, p) in config.eval.qp_levels.iter().zip(&rd) {
        writeln!(out, "{level},{},{}", p.bitrate, p.quality)?;
    }
    write_file(&args.out.join("rd_curve.csv"), &out)?;

    let mut out = Vec::new();
    writeln!(out, "# schema: {DEVIATION_SCHEMA}")?;
    writeln!(
        out,
        "profile,episodes,mean_raw,mean_tolerated,violation_rate,mean_quality_gain"
    )?;
    let groups = env
        .profiles
        .iter()
        .map(|p| (p.as_str(), Some(*p)))
        .chain([("all", None)]);
    for (name, profile) in groups {
        let rows: Vec<_> = evaluation
            .episodes
            .iter()
            .filter(|(s, _)| profile.map_or(true, |p| s.profile == p))
            .map(|(_, o)| &o.summary)
            .collect();
        let stats =
            rate_deviation_stats(rows.iter().map(|s| s.rate_deviation), RATE_TOLERANCE)?;
        let gain = rows.iter().map(|s| s.quality_gain).sum::<f64>() / rows.len() as f64;
        writeln!(
            out,
            "{name},{},{},{},{},{gain}",
            stats.count, stats.mean_raw, stats.mean_tolerated, stats.violation_rate
        )?;
    }
    write_file(&args.out.join("deviation.csv"), &out)?;

    let traces = args.out.join("traces");
    if traces.exists() {
        fs::remove_dir_all(&traces)?;
    }
    create_dir(&traces)?;
    let mut out = Vec::new();
    writeln!(out, "# schema: {GOPS_SCHEMA}")?;
    writeln!(
        out,
        "gop,profile,qp_level,budget_factor,model_seed,r_gop,total_bits,rate_deviation,quality_gain"
    )?;
    for (i, (spec, o)) in evaluation.episodes.iter().enumerate() {
        let s = &o.summary;
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            spec.profile,
            spec.qp_level,
            spec.budget_factor,
            spec.model_seed,
            s.r_gop,
            s.total_bits,
            s.rate_deviation,
            s.quality_gain
        )?;
        let mut t = Vec::new();
        write_trace_csv(&mut t, &o.frames)?;
        write_file(&traces.join(format!("gop-{i:04}.csv")), &t)?;
    }
    write_file(&args.out.join("gops.csv"), &out)?;

    let report = EvalReport {
        schema: EVAL_SCHEMA.into(),
        checkpoint: args.checkpoint.clone(),
        eval_set: EvalSet {
            structure: env.structure,
            profiles: env.profiles.clone(),
            qp_levels: env.qp_levels.clone(),
            budget_factors: env.budget_factors.clone(),
            gops_per_cell: gops,
            seed: eval_seed,
            rd_qp_levels: config.eval.qp_levels.clone(),
        },
        summary: evaluation.summary,
        rd_curve: rd,
    };
    write_file(
        &args.out.join("eval.json"),
        (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
    )?;
    log::info!(
        "{}: deviation {:.4} raw / {:.4} tolerated over {} GOPs",
        report.summary.policy,
        report.summary.deviation.mean_raw,
        report.summary.deviation.mean_tolerated,
        report.summary.episodes
    );
    manifest.finish(
        ["rd_curve.csv", "deviation.csv", "gops.csv", "traces", "eval.json"]
            .map(String::from)
            .to_vec(),
        serde_json::to_value(&report.summary)?,
    );
    manifest.write(&args.out)?;
    Ok(report)
}

fn read_eval(dir: &Path) -> CliResult<EvalReport> {
    let path = dir.join("eval.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let r: EvalReport = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if r.schema != EVAL_SCHEMA {
        return Err(Failure::Usage(format!(
            "{}: unsupported schema {:?}",
            path.display(),
            r.schema
        )));
    }
    Ok(r)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub run: String,
    pub policy: String,
    /// Against the anchor run; NaN when the curves do not overlap.
    pub bd_rate_pct: f64,
    pub mean_raw: f64,
    pub mean_tolerated: f64,
    pub violation_rate: f64,
    pub mean_quality_gain: f64,
}

pub const COMPARE_COLUMNS: [&str; 7] = [
    "run",
    "policy",
    "bd_rate_pct",
    "mean_raw",
    "mean_tolerated",
    "violation_rate",
    "mean_quality_gain",
];

pub fn compare(args: &CompareArgs) -> CliResult<Vec<CompareRow>> {
    let reports = args
        .runs
        .iter()
        .map(|d| read_eval(d))
        .collect::<CliResult<Vec<_>>>()?;
    let anchor_idx = match &args.anchor {
        None => 0,
        Some(a) => args.runs.iter().position(|r| r == a).ok_or_else(|| {
            Failure::Usage(format!("anchor {} is not among the runs", a.display()))
        })?,
    };
    let reference = &reports[anchor_idx];
    for (dir, r) in args.runs.iter().zip(&reports) {
        if r.eval_set != reference.eval_set {
            return Err(Failure::Usage(format!(
                "{} was evaluated on a different GOP set than {}",
                dir.display(),
                args.runs[anchor_idx].display()
            )));
        }
    }
    let rows: Vec<CompareRow> = args
        .runs
        .iter()
        .zip(&reports)
        .map(|(dir, r)| {
            let bd = bd_rate(&reference.rd_curve, &r.rd_curve).unwrap_or_else(|e| {
                log::warn!("{}: no BD-rate ({e})", dir.display());
                f64::NAN
            });
            let d = &r.summary.deviation;
            CompareRow {
                run: dir.display().to_string(),
                policy: r.summary.policy.clone(),
                bd_rate_pct: bd,
                mean_raw: d.mean_raw,
                mean_tolerated: d.mean_tolerated,
                violation_rate: d.violation_rate,
                mean_quality_gain: r.summary.mean_quality_gain,
            }
        })
        .collect();

    println!(
        "{:<32} {:<20} {:>10} {:>9} {:>9} {:>9} {:>10}",
        "run", "policy", "BD-rate%", "dev raw", "dev tol", "viol", "gain"
    );
    for r in &rows {
        println!(
            "{:<32} {:<20} {:>10.3} {:>9.4} {:>9.4} {:>9.3} {:>10.3}",
            r.run, r.policy, r.bd_rate_pct, r.mean_raw, r.mean_tolerated, r.violation_rate, r.mean_quality_gain
        );
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        let mut csv = Vec::new();
        writeln!(csv, "# schema: {COMPARE_SCHEMA}")?;
        writeln!(csv, "{}", COMPARE_COLUMNS.join(","))?;
        for r in &rows {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                r.run, r.policy, r.bd_rate_pct, r.mean_raw, r.mean_tolerated, r.violation_rate, r.mean_quality_gain
            )?;
        }
        write_file(&out.join("compare.csv"), &csv)?;
    }
    Ok(rows)
}

pub fn oracle_check(args: &OracleArgs) -> CliResult<OracleReport> {
    let agent = load_policy(&args.checkpoint)?;
    let policy = agent.as_ref().map_or(Policy::Anchor, Policy::Agent);
    let instance = TinyInstance {
        frames: args.frames,
        profile: args.profile,
        model_seed: args.model_seed,
        qp_level: args.qp_level,
        budget_factor: args.budget_factor,
        tolerance: args.tolerance,
    };
    let report = run_oracle_check(policy, &instance)?;
    println!(
        "oracle   qps {:?} quality {:.3} deviation {:.4}",
        report.oracle.qps, report.oracle.total_quality, report.oracle.rate_deviation
    );
    println!(
        "{:<8} qps {:?} quality {:.3} deviation {:.4}",
        report.policy_name, report.policy.qps, report.policy.total_quality, report.policy.rate_deviation
    );
    println!(
        "gap {:.3}, captured {:.1}% of the oracle's gain over the anchor",
        report.quality_gap,
        100.0 * report.captured_fraction
    );
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_file(
            &out.join("oracle_check.json"),
            (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
        )?;
    }
    Ok(report)
}

/// One training job of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub name: String,
    pub method: Method,
    pub lambda: Option<f64>,
    pub profile: Profile,
    pub seed: u64,
}

pub fn sweep_jobs(methods: &[Method], seeds: &[u64], profiles: &[Profile]) -> Vec<SweepJob> {
    let mut jobs = Vec::new();
    for &seed in seeds {
        for &method in methods {
            let lambdas: Vec<Option<f64>> = match method {
                Method::Single => LAMBDA_SWEEP.iter().map(|&l| Some(l)).collect(),
                _ => vec![None],
            };
            for lambda in lambdas {
                for &profile in profiles {
                    let tag = match lambda {
                        Some(l) => format!("{}-l{l}", method.as_str()),
                        None => method.as_str().to_string(),
                    };
                    jobs.push(SweepJob {
                        name: format!("{tag}-{profile}-s{seed}"),
                        method,
                        lambda,
                        profile,
                        seed,
                    });
                }
            }
        }
    }
    jobs
}

fn spawn(job: &SweepJob, args: &SweepArgs, exe: &Path) -> CliResult<Child> {
    let mut cmd = Process::new(exe);
    cmd.arg("train")
        .args(["--method", job.method.as_str()])
        .args(["--seed", &job.seed.to_string()])
        .args(["--profiles", job.profile.as_str()])
        .arg("--out")
        .arg(args.out.join(&job.name));
    if let Some(c) = &args.config {
        cmd.arg("--config").arg(c);
    }
    if let Some(e) = args.episodes {
        cmd.args(["--episodes", &e.to_string()]);
    }
    if let Some(l) = job.lambda {
        cmd.args(["--lambda", &l.to_string()]);
    }
    log::info!("starting {}", job.name);
    cmd.spawn()
        .map_err(|e| Failure::Runtime(format!("cannot start {}: {e}", exe.display())))
}

pub fn sweep(args: &SweepArgs) -> CliResult<PathBuf> {
    let config = load_config(&ConfigArgs {
        config: args.config.clone(),
        seed: None,
        episodes: args.episodes,
        profiles: args.profiles.clone(),
    })?;
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be positive".into()));
    }
    create_dir(&args.out)?;
    let exe = std::env::current_exe()?;
    let jobs = sweep_jobs(&args.methods, &args.seeds, &config.env.profiles);
    let mut manifest = RunManifest::new("sweep", "sweep", &config);

    let mut queue: VecDeque<&SweepJob> = jobs.iter().collect();
    let mut running: Vec<(&SweepJob, Child)> = Vec::new();
    let mut failed = Vec::new();
    while !queue.is_empty() || !running.is_empty() {
        while running.len() < args.jobs {
            match queue.pop_front() {
                Some(job) => running.push((job, spawn(job, args, &exe)?)),
                None => break,
            }
        }
        // Wait on the oldest job; completion order does not affect output.
        let (job, mut child) = running.remove(0);
        let status = child.wait()?;
        if !status.success() {
            log::error!("{} failed with {status}", job.name);
            failed.push(job.name.clone());
        }
    }

    let mut csv = Vec::new();
    writeln!(csv, "# schema: {SWEEP_SCHEMA}")?;
    writeln!(
        csv,
        "run,method,lambda,profile,seed,episodes,final100_raw,eval_raw,eval_tolerated,eval_quality_gain"
    )?;
    for job in &jobs {
        if failed.contains(&job.name) {
            continue;
        }
        let report = TrainingReport::read_json(&args.out.join(&job.name).join("report.json"))?;
        let devs: Vec<f64> = report.metrics.iter().map(|m| m.rate_deviation).collect();
        let e = &report.evaluation;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            job.name,
            report.method,
            job.lambda.map(|l| l.to_string()).unwrap_or_default(),
            job.profile,
            job.seed,
            report.metrics.len(),
            tail_mean(&devs, 100),
            e.deviation.mean_raw,
            e.deviation.mean_tolerated,
            e.mean_quality_gain
        )?;
    }
    let path = args.out.join("sweep.csv");
    write_file(&path, &csv)?;
    manifest.finish(
        std::iter::once("sweep.csv".to_string())
            .chain(jobs.iter().map(|j| j.name.clone()))
            .collect(),
        serde_json::json!({ "jobs": jobs.len(), "failed": failed }),
    );
    manifest.write(&args.out)?;
    if failed.is_empty() {
        Ok(path)
    } else {
        Err(Failure::Runtime(format!("{} sweep job(s) failed: {}", failed.len(), failed.join(", "))))
    }
}
