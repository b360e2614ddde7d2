use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tokio::sync::watch;

use hdlscale_core::config::{load_config, validate_config, CampaignConfig, ConfigOverrides};
use hdlscale_core::dispersion::{analyze_store, AnalyzeOptions, SampleFilter};
use hdlscale_core::fmt::sig6;
use hdlscale_core::metrics::{write_report, ReportOptions, DEFAULT_CHECKPOINTS};
use hdlscale_core::orchestrator::{Campaign, CampaignOutcome, CampaignProgress, CampaignStore, Engines};
use hdlscale_core::suite::load_suite;
use hdlscale_core::sweep::{load_plan, run_sweep};
use hdlscale_core::types::StopMode;

/// Sample, simulate and analyze LLM-generated Verilog at scale.
#[derive(Parser, Debug)]
#[command(name = "hdlscale", version)]
struct Cli {
    /// Campaign config file (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Use the built-in mock provider and mock simulator.
    #[arg(long, global = true)]
    mock: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output (store) directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a campaign until every problem is terminal.
    Run(RunArgs),
    /// Continue an interrupted campaign.
    Resume {
        /// Store directory; defaults to --out or the config's output_dir.
        dir: Option<PathBuf>,
    },
    /// Write hit-rate, pass@k, fit, tag and cost reports for a store.
    Report(ReportArgs),
    /// Write dispersion heatmaps, MCD scatter and length bins for a store.
    Analyze(AnalyzeArgs),
    /// Run one campaign per temperature and combine the results.
    Sweep {
        /// Sweep plan file (TOML).
        plan: PathBuf,
        /// Campaigns to run at once; overrides the plan.
        #[arg(long)]
        parallel: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Suite directory or JSONL file; required with --mock when no config is given.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long)]
    max_samples: Option<u32>,
    /// early-stop or fixedn.
    #[arg(long)]
    stop_mode: Option<StopMode>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    gen_concurrency: Option<u32>,
    #[arg(long)]
    sim_workers: Option<u32>,
    #[arg(long)]
    queue_capacity: Option<u32>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    dir: Option<PathBuf>,
    /// Comma-separated sample budgets.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CHECKPOINTS)]
    checkpoints: Vec<u32>,
    #[arg(long, default_value = "math-related")]
    tag: String,
    /// Multiplier in (0, 1] for batch or caching discounts.
    #[arg(long, default_value_t = 1.0)]
    discount: f64,
    /// Also project costs to this many requests per problem.
    #[arg(long)]
    cost_samples: Option<u64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    dir: Option<PathBuf>,
    /// Problems to draw heatmaps for (repeatable); all when omitted.
    #[arg(long = "problem")]
    problems: Vec<String>,
    /// Token n-gram order, 1 to 4.
    #[arg(long, default_value_t = 2)]
    ngram: usize,
    #[arg(long)]
    k_clusters: Option<usize>,
    /// Samples behind the MCD scatter: all or failed-only.
    #[arg(long, default_value = "all")]
    filter: SampleFilter,
    /// Samples behind the heatmaps: all or failed-only.
    #[arg(long, default_value = "failed-only")]
    heatmap_filter: SampleFilter,
    #[arg(long, default_value_t = 15)]
    bin_size: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CHECKPOINTS)]
    checkpoints: Vec<u32>,
    #[arg(long, default_value = "math-related")]
    tag: String,
}

impl Cli {
    fn overrides(&self, run: Option<&RunArgs>) -> ConfigOverrides {
        ConfigOverrides {
            max_samples: run.and_then(|r| r.max_samples),
            stop_mode: run.and_then(|r| r.stop_mode),
            temperature: run.and_then(|r| r.temperature),
            gen_concurrency: run.and_then(|r| r.gen_concurrency),
            sim_workers: run.and_then(|r| r.sim_workers),
            queue_capacity: run.and_then(|r| r.queue_capacity),
            seed: self.seed,
            output_dir: self.out.clone(),
            suite_path: run.and_then(|r| r.suite.clone()),
            mock: self.mock,
        }
    }

    /// Store directory from an explicit argument, `--out`, or the config file.
    fn store_dir(&self, explicit: Option<&Path>) -> Result<PathBuf> {
        if let Some(d) = explicit.or(self.out.as_deref()) {
            return Ok(d.to_path_buf());
        }
        match &self.config {
            Some(c) => Ok(load_config(c)?.output_dir),
            None => bail!("no store directory given; pass it as an argument, with -o, or via -c"),
        }
    }
}

fn progress_line(p: &CampaignProgress) -> String {
    format!(
        "progress: {}/{} problems terminal, {} issued, {} committed, {} passing",
        p.problems_terminal, p.problems_total, p.samples_issued, p.samples_committed, p.passes
    )
}

async fn run_with_progress(campaign: Campaign, interval_ms: u64) -> Result<CampaignOutcome> {
    let (tx, mut rx) = watch::channel(CampaignProgress::default());
    let printer = tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_millis(interval_ms.max(50)));
        tick.tick().await;
        loop {
            tokio::select! {
                _ = tick.tick() => println!("{}", progress_line(&rx.borrow())),
                changed = rx.changed() => if changed.is_err() { break },
            }
        }
    });
    let outcome = campaign.with_progress(tx).run().await;
    let _ = printer.await;
    let outcome = outcome?;
    let s = &outcome.stats;
    println!(
        "done: {}/{} problems terminal, {} samples committed, {} requests this run, {} passing, {:.1}s",
        s.problems_terminal,
        s.problems_total,
        s.samples_committed,
        s.samples_issued,
        s.passes,
        outcome.elapsed.as_secs_f64()
    );
    println!("store: {}", outcome.store.root().display());
    Ok(outcome)
}

async fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None if cli.mock && args.suite.is_some() => {
            CampaignConfig::mock(args.suite.clone().unwrap(), cli.out.clone().unwrap_or_else(|| "out".into()))
        }
        None => bail!("no config file given; pass -c <file> (or --mock --suite <path>)"),
    };
    cli.overrides(Some(args)).apply(&mut config);
    let config = validate_config(&config, &config.pricing)?;
    let suite = load_suite(&config.suite_path)?;
    let engines = Engines::builtin(&config)?;
    let interval = config.progress_interval_ms;
    run_with_progress(Campaign::new(suite, config, engines), interval).await?;
    Ok(())
}

async fn cmd_resume(cli: &Cli, dir: Option<&Path>) -> Result<()> {
    let dir = cli.store_dir(dir)?;
    let campaign = Campaign::resume(&dir, Engines::builtin)?;
    let interval = campaign.config().progress_interval_ms;
    run_with_progress(campaign, interval).await?;
    Ok(())
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let dir = cli.store_dir(args.dir.as_deref())?;
    let store = CampaignStore::open(&dir)?;
    let opts = ReportOptions {
        checkpoints: args.checkpoints.clone(),
        tag: args.tag.clone(),
        discount_factor: args.discount,
        cost_samples: args.cost_samples,
        out_dir: None,
    };
    let summary = write_report(&store, &opts)?;
    print!("{}", summary.render_text());
    println!("report: {}", summary.dir.display());
    Ok(())
}

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let dir = cli.store_dir(args.dir.as_deref())?;
    let store = CampaignStore::open(&dir)?;
    let opts = AnalyzeOptions {
        problems: args.problems.clone(),
        ngram: args.ngram,
        k_clusters: args.k_clusters,
        seed: cli.seed.unwrap_or(0),
        filter: args.filter,
        heatmap_filter: args.heatmap_filter,
        bin_size: args.bin_size,
        checkpoints: args.checkpoints.clone(),
        tag: args.tag.clone(),
        out_dir: None,
    };
    let summary = analyze_store(&store, &opts)?;
    println!("{:<24} {:>8} {:>4} {:>10}", "problem", "samples", "k", "mcd");
    for h in &summary.heatmaps {
        println!("{:<24} {:>8} {:>4} {:>10}", h.problem_id, h.samples, h.k, sig6(h.mcd));
    }
    for n in &summary.notices {
        println!("note: {n}");
    }
    println!("analysis: {}", summary.dir.display());
    Ok(())
}

async fn cmd_sweep(cli: &Cli, plan: &Path, parallel: Option<usize>) -> Result<()> {
    let mut plan = load_plan(plan)?;
    if let Some(p) = parallel {
        plan.parallel = p;
    }
    if let Some(o) = &cli.out {
        plan.output_dir = Some(o.clone());
    }
    let mut overrides = cli.overrides(None);
    overrides.output_dir = None;
    let outcome = run_sweep(&plan, &overrides).await?;
    println!("{:>12} {:>10} {:>10} {:>10}", "temperature", "hit@max", "mcd_med", "mcd_mean");
    for r in &outcome.results {
        let last = r.hit_curve.last().copied().unwrap_or(0.0);
        let (med, mean) = r.mcd.map(|q| (sig6(q.median), sig6(q.mean))).unwrap_or_else(|| ("-".into(), "-".into()));
        println!("{:>12} {:>10} {:>10} {:>10}", sig6(r.temperature), sig6(last), med, mean);
    }
    println!("sweep: {}", outcome.dir.display());
    Ok(())
}

async fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(args) => cmd_run(cli, args).await,
        Command::Resume { dir } => cmd_resume(cli, dir.as_deref()).await,
        Command::Report(args) => cmd_report(cli, args),
        Command::Analyze(args) => cmd_analyze(cli, args),
        Command::Sweep { plan, parallel } => cmd_sweep(cli, plan, *parallel)
            .await
            .with_context(|| format!("sweep {}", plan.display())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot start async runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
