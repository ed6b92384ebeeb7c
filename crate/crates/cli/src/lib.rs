//! The `reposer` command line: configuration, subcommands, artifacts and
//! exit codes.

pub mod args;
pub mod rundir;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use reposer_core::env::ReposeEnv;
use reposer_harness::ablation::{run_ablation, AblationReport, AblationSpec};
use reposer_harness::eval::{
    evaluate, robustness_sweep, threshold_heatmap, zero_shot_objects, EvalReport, EvalSpec, HeatmapReport, SweepParameter, SweepReport,
};
use reposer_harness::plot::{heatmap_svg, line_plot_svg, LinePlot, Series};
use reposer_harness::report::{eval_table, heatmap_table, read_json, read_jsonl, sha256_file, write_atomic, write_eval, write_json};
use reposer_harness::trainer::{engine_env, engine_spec, IterationMetrics, Trainer};
use reposer_harness::{bench, EngineConfig, HarnessError};
use reposer_ppo::{Checkpoint, PpoError};
use serde::Deserialize;

pub use args::{Cli, Command, Common, EvalArgs};
use rundir::{now, resolve_output, DirLock, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_INCOMPATIBLE: i32 = 4;

/// Exit code for an error: configuration, incompatibility or runtime fault.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Config(_) | HarnessError::UnsupportedObject(_) => EXIT_CONFIG,
                HarnessError::Incompatible(_) => EXIT_INCOMPATIBLE,
                HarnessError::Ppo(PpoError::Incompatible(_)) => EXIT_INCOMPATIBLE,
                HarnessError::Ppo(PpoError::InvalidArgument(_)) => EXIT_CONFIG,
                HarnessError::Core(reposer_core::CoreError::InvalidArgument(_)) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            };
        }
        if let Some(p) = cause.downcast_ref::<PpoError>() {
            return match p {
                PpoError::Incompatible(_) => EXIT_INCOMPATIBLE,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

/// Resolved configuration for a command.
pub fn load_config(common: &Common) -> Result<EngineConfig> {
    let mut sets = common.sets.clone();
    if let Some(seed) = common.seed {
        sets.push(format!("run.seed={seed}"));
    }
    if let Some(out) = &common.out {
        sets.push(format!("run.output_dir={}", toml_string(&out.to_string_lossy())));
    }
    Ok(EngineConfig::load(&common.profile, common.config.as_deref(), &sets)?)
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// Write to stdout, tolerating a closed pipe.
fn emit(s: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

pub fn output_dir(cfg: &EngineConfig) -> PathBuf {
    resolve_output(&cfg.run.output_dir)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.command.common())?;
    let out = output_dir(&cfg);
    match &cli.command {
        Command::Train { dry_run, benchmark, bench_envs, bench_steps, resume, max_iterations, .. } => {
            if *dry_run {
                emit(&format!("{}# config hash: {}\n", cfg.to_toml()?, cfg.hash()));
                return Ok(());
            }
            if *benchmark {
                return cmd_benchmark(&cfg, &out, *bench_envs, *bench_steps);
            }
            cmd_train(&cfg, &out, *resume, *max_iterations)
        }
        Command::Eval { eval, name, .. } => cmd_eval(&cfg, &out, eval, name),
        Command::Sweep { eval, parameter, grid, .. } => cmd_sweep(&cfg, &out, eval, parameter, grid.as_deref()),
        Command::Heatmap { eval, .. } => cmd_heatmap(&cfg, &out, eval),
        Command::Objects { eval, objects, .. } => cmd_objects(&cfg, &out, eval, objects.as_deref()),
        Command::Ablate { steps, .. } => cmd_ablate(&cfg, &out, *steps),
        Command::Plot { input, output, .. } => cmd_plot(&cfg, &out, input, output.as_deref()),
    }
}

fn cmd_benchmark(cfg: &EngineConfig, out: &Path, envs: usize, steps: usize) -> Result<()> {
    let dir = out.join("benchmark");
    let _lock = DirLock::acquire(&dir)?;
    let started = now();
    let report = bench::benchmark(cfg, envs, steps)?;
    println!("{report}");
    write_json(&dir.join("benchmark.json"), &report)?;
    let mut m = RunManifest::new("train --benchmark", cfg, vec![cfg.run.seed], started);
    m.env_steps_per_sec = Some(report.env_steps_per_sec);
    m.final_metrics = serde_json::to_value(&report)?;
    m.artifacts = vec!["benchmark.json".into()];
    m.finish(&dir)
}

fn cmd_train(cfg: &EngineConfig, out: &Path, resume: bool, max_iterations: Option<u64>) -> Result<()> {
    let _lock = DirLock::acquire(out)?;
    let started = now();
    write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let env = engine_env(cfg)?;
    let spec = engine_spec(cfg, Some(out.to_path_buf()));
    let mut trainer = if resume { Trainer::resume(env, spec)? } else { Trainer::new(env, spec)? };
    let total = trainer.total_iterations();
    println!(
        "training {} envs, horizon {}, {} iterations, output {}",
        cfg.run.num_envs,
        trainer.horizon(),
        total,
        out.display()
    );
    let summary = trainer.run(max_iterations, |m, t| {
        let pct = |v: Option<f64>| v.map_or("   -  ".to_string(), |x| format!("{:5.1}%", 100.0 * x));
        println!(
            "iter {:>6}/{total} step {:>11} reward {:>9.4} success {} kl {:.4} lr {:.2e} {:>8.0} steps/s",
            m.iteration,
            m.global_step,
            m.mean_reward,
            pct(m.success_rate),
            m.approx_kl,
            m.lr,
            t.env_steps_per_sec
        );
    })?;
    let mut m = RunManifest::new("train", cfg, vec![cfg.run.seed], started);
    m.env_steps_per_sec = Some(summary.env_steps_per_sec);
    m.final_metrics = serde_json::to_value(&summary)?;
    m.artifacts = ["config.toml", "metrics.jsonl", "timing.jsonl", "checkpoints/latest.rpck", "checkpoints/latest.json"]
        .map(String::from)
        .to_vec();
    if trainer.iteration == total {
        m.artifacts.push("policy.rpck".into());
    }
    m.finish(out)
}

struct Loaded {
    checkpoint: Checkpoint,
    spec: EvalSpec,
}

fn load_policy(cfg: &EngineConfig, out: &Path, eval: &EvalArgs) -> Result<Loaded> {
    let path = eval.checkpoint.clone().unwrap_or_else(|| out.join("policy.rpck"));
    let checkpoint = Checkpoint::load(&path).map_err(|e| match e {
        PpoError::Io(source) => HarnessError::Io { path: path.clone(), source },
        other => HarnessError::from(other),
    })?;
    let probe = ReposeEnv::new(cfg.physics.clone(), cfg.task.clone(), cfg.dr.clone(), 1, 0)?;
    checkpoint
        .check_compatible(probe.actor_dim(), probe.critic_dim(), reposer_core::physics::NUM_JOINTS)
        .map_err(HarnessError::from)
        .with_context(|| format!("checkpoint {}", path.display()))?;
    let spec = EvalSpec {
        physics: cfg.physics.clone(),
        task: cfg.task.clone(),
        dr: cfg.dr.clone(),
        trials: eval.trials.unwrap_or(cfg.harness.eval_trials),
        seed: eval.eval_seed.unwrap_or(cfg.harness.eval_seed),
        confidence: cfg.harness.confidence,
        config_hash: cfg.hash(),
        checkpoint_hash: sha256_file(&path)?,
    };
    Ok(Loaded { checkpoint, spec })
}

fn eval_manifest(command: &str, cfg: &EngineConfig, l: &Loaded, started: String, summary: serde_json::Value, artifacts: &[String]) -> RunManifest {
    let mut m = RunManifest::new(command, cfg, vec![l.spec.seed], started);
    m.final_metrics = summary;
    m.artifacts = artifacts.to_vec();
    m
}

fn cmd_eval(cfg: &EngineConfig, out: &Path, eval: &EvalArgs, name: &str) -> Result<()> {
    let l = load_policy(cfg, out, eval)?;
    let dir = out.join(format!("eval-{name}"));
    let _lock = DirLock::acquire(&dir)?;
    let started = now();
    let report = evaluate(&l.checkpoint.learner.agent, &l.spec, Default::default(), name)?;
    let table = eval_table(std::slice::from_ref(&report));
    emit(&table);
    write_eval(&dir, "report", &report)?;
    write_atomic(&dir.join("summary.txt"), table.as_bytes())?;
    let artifacts = ["report.json", "report.trials.jsonl", "summary.txt"].map(String::from);
    eval_manifest("eval", cfg, &l, started, serde_json::to_value(report.summary())?, &artifacts).finish(&dir)
}

fn cmd_sweep(cfg: &EngineConfig, out: &Path, eval: &EvalArgs, parameter: &str, grid: Option<&[f64]>) -> Result<()> {
    let parameter: SweepParameter = parameter.parse()?;
    let grid = grid.map(<[f64]>::to_vec).unwrap_or_else(|| match parameter {
        SweepParameter::Scale => cfg.harness.scale_grid.clone(),
        SweepParameter::Mass => cfg.harness.mass_grid.clone(),
    });
    if grid.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()).into());
    }
    let l = load_policy(cfg, out, eval)?;
    let pname = serde_json::to_value(parameter)?.as_str().unwrap_or_default().to_string();
    let dir = out.join(format!("sweep-{pname}"));
    let _lock = DirLock::acquire(&dir)?;
    let started = now();
    let report = robustness_sweep(&l.checkpoint.learner.agent, &l.spec, parameter, &grid)?;
    let table = eval_table(&report.reports);
    emit(&table);
    write_json(&dir.join("sweep.json"), &report)?;
    write_atomic(&dir.join("summary.txt"), table.as_bytes())?;
    write_atomic(&dir.join("sweep.svg"), sweep_plot(&report)?.as_bytes())?;
    let summary: Vec<_> = report.reports.iter().map(|r| r.summary()).collect();
    let artifacts = ["sweep.json", "summary.txt", "sweep.svg"].map(String::from);
    eval_manifest("sweep", cfg, &l, started, serde_json::to_value(summary)?, &artifacts).finish(&dir)
}

fn cmd_heatmap(cfg: &EngineConfig, out: &Path, eval: &EvalArgs) -> Result<()> {
    let l = load_policy(cfg, out, eval)?;
    let dir = out.join("heatmap");
    let _lock = DirLock::acquire(&dir)?;
    let started = now();
    let report = evaluate(&l.checkpoint.learner.agent, &l.spec, Default::default(), "heatmap")?;
    let h = threshold_heatmap(&report, &cfg.harness.position_thresholds, &cfg.harness.orientation_thresholds_deg)?;
    let table = heatmap_table(&h);
    emit(&table);
    write_eval(&dir, "trials", &report)?;
    write_json(&dir.join("heatmap.json"), &h)?;
    write_atomic(&dir.join("summary.txt"), table.as_bytes())?;
    write_atomic(&dir.join("heatmap.svg"), heatmap_svg(&h, "success rate by threshold")?.as_bytes())?;
    let artifacts = ["trials.json", "trials.trials.jsonl", "heatmap.json", "summary.txt", "heatmap.svg"].map(String::from);
    eval_manifest("heatmap", cfg, &l, started, serde_json::to_value(&h)?, &artifacts).finish(&dir)
}

fn cmd_objects(cfg: &EngineConfig, out: &Path, eval: &EvalArgs, objects: Option<&[String]>) -> Result<()> {
    let objects = objects.map(<[String]>::to_vec).unwrap_or_else(|| cfg.harness.objects.clone());
    for o in &objects {
        reposer_harness::eval::ObjectSpec::parse(o)?;
    }
    let l = load_policy(cfg, out, eval)?;
    let dir = out.join("objects");
    let _lock = DirLock::acquire(&dir)?;
    let started = now();
    let reports = zero_shot_objects(&l.checkpoint.learner.agent, &l.spec, &objects)?;
    let evals: Vec<EvalReport> = reports.iter().map(|r| r.report.clone()).collect();
    let table = eval_table(&evals);
    emit(&table);
    write_json(&dir.join("objects.json"), &reports)?;
    write_atomic(&dir.join("summary.txt"), table.as_bytes())?;
    let summary: Vec<_> = evals.iter().map(|r| r.summary()).collect();
    let artifacts = ["objects.json", "summary.txt"].map(String::from);
    eval_manifest("objects", cfg, &l, started, serde_json::to_value(summary)?, &artifacts).finish(&dir)
}

fn cmd_ablate(cfg: &EngineConfig, out: &Path, steps: Option<u64>) -> Result<()> {
    let dir = out.join("ablation");
    let _lock = DirLock::acquire(&dir)?;
    let started = now();
    let mut spec = AblationSpec::full_grid(cfg);
    if let Some(s) = steps {
        spec.total_steps = s;
    }
    let report = run_ablation(cfg, &spec, Some(&dir), |a| match (&a.eval, &a.error) {
        (Some(e), _) => println!(
            "{} seed {}: success {:.1}% position {:.1}% orientation {:.1}%",
            a.arm,
            a.seed,
            100.0 * e.success_rate,
            100.0 * e.position_success_rate,
            100.0 * e.orientation_success_rate
        ),
        (None, Some(err)) => println!("{} seed {}: training failed: {err}", a.arm, a.seed),
        _ => {}
    })?;
    write_json(&dir.join("ablation.json"), &report)?;
    let (by_steps, by_wall) = ablation_plots(&report)?;
    write_atomic(&dir.join("success_vs_steps.svg"), by_steps.as_bytes())?;
    write_atomic(&dir.join("success_vs_wallclock.svg"), by_wall.as_bytes())?;
    let mut m = RunManifest::new("ablate", cfg, spec.seeds.clone(), started);
    m.final_metrics = serde_json::json!({
        "orientation_success_r_kp": report.orientation_success(reposer_core::env::PoseEncoding::Keypoints),
        "orientation_success_r_pq": report.orientation_success(reposer_core::env::PoseEncoding::PosQuat),
        "failed_arms": report.arms.iter().filter(|a| a.error.is_some()).count(),
    });
    m.artifacts = ["ablation.json", "success_vs_steps.svg", "success_vs_wallclock.svg"].map(String::from).to_vec();
    m.finish(&dir)
}

fn sweep_plot(r: &SweepReport) -> Result<String> {
    let name = serde_json::to_value(r.parameter)?.as_str().unwrap_or_default().to_string();
    Ok(line_plot_svg(&LinePlot {
        title: format!("success vs object {name}"),
        x_label: format!("{name} multiplier"),
        y_label: "success rate".into(),
        series: vec![
            Series { name: "success".into(), points: r.grid.iter().zip(&r.reports).map(|(g, e)| (*g, e.success_rate)).collect() },
            Series { name: "CI low".into(), points: r.grid.iter().zip(&r.reports).map(|(g, e)| (*g, e.ci_low)).collect() },
            Series { name: "CI high".into(), points: r.grid.iter().zip(&r.reports).map(|(g, e)| (*g, e.ci_high)).collect() },
        ],
    })?)
}

fn ablation_plots(r: &AblationReport) -> Result<(String, String)> {
    let series = |wall: bool| -> Vec<Series> {
        r.arms
            .iter()
            .filter(|a| !a.curve.is_empty())
            .map(|a| Series {
                name: format!("{} s{}", a.arm, a.seed),
                points: a
                    .curve
                    .iter()
                    .filter_map(|p| p.success_rate.map(|s| (if wall { p.wall_secs } else { p.global_step as f64 }, s)))
                    .collect(),
            })
            .collect()
    };
    let plot = |wall: bool| {
        line_plot_svg(&LinePlot {
            title: "training success by arm".into(),
            x_label: if wall { "wall-clock (s)".into() } else { "environment steps".into() },
            y_label: "end-of-episode success".into(),
            series: series(wall),
        })
    };
    Ok((plot(false)?, plot(true)?))
}

/// Success rates once episodes have finished, otherwise the mean reward.
fn metrics_plot(m: &[IterationMetrics]) -> Result<String> {
    let s = |name: &str, f: fn(&IterationMetrics) -> Option<f64>| Series {
        name: name.into(),
        points: m.iter().filter_map(|r| f(r).map(|v| (r.global_step as f64, v))).collect(),
    };
    let success = vec![
        s("success", |r| r.success_rate),
        s("position", |r| r.position_success_rate),
        s("orientation", |r| r.orientation_success_rate),
    ];
    let plot = if success.iter().any(|x| !x.points.is_empty()) {
        LinePlot { title: "training success".into(), x_label: "environment steps".into(), y_label: "rate".into(), series: success }
    } else {
        LinePlot {
            title: "training reward".into(),
            x_label: "environment steps".into(),
            y_label: "mean reward".into(),
            series: vec![s("mean reward", |r| Some(r.mean_reward))],
        }
    };
    Ok(line_plot_svg(&plot)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlotInput {
    Heatmap(HeatmapReport),
    Sweep(SweepReport),
    Ablation(AblationReport),
}

fn cmd_plot(cfg: &EngineConfig, out: &Path, input: &Path, output: Option<&Path>) -> Result<()> {
    if !input.exists() {
        return Err(HarnessError::Io { path: input.to_path_buf(), source: std::io::ErrorKind::NotFound.into() }.into());
    }
    let svg = if input.extension().is_some_and(|e| e == "jsonl") {
        metrics_plot(&read_jsonl::<IterationMetrics>(input)?)?
    } else {
        match read_json::<PlotInput>(input).with_context(|| format!("{} is not a heatmap, sweep or ablation report", input.display()))? {
            PlotInput::Heatmap(h) => heatmap_svg(&h, "success rate by threshold")?,
            PlotInput::Sweep(s) => sweep_plot(&s)?,
            PlotInput::Ablation(a) => ablation_plots(&a)?.0,
        }
    };
    let dir = out.join("plots");
    let target = match output {
        Some(p) => p.to_path_buf(),
        None => dir.join(format!("{}.svg", input.file_stem().unwrap_or_default().to_string_lossy())),
    };
    let _lock = DirLock::acquire(&dir)?;
    let started = now();
    write_atomic(&target, svg.as_bytes())?;
    println!("wrote {}", target.display());
    let mut m = RunManifest::new("plot", cfg, vec![], started);
    m.final_metrics = serde_json::json!({ "input": input, "input_sha256": sha256_file(input)? });
    m.artifacts = vec![target.display().to_string()];
    m.finish(&dir)
}
