use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gwasnet::pipeline::{
    cmd_assoc, cmd_evaluate, cmd_qc, cmd_report, cmd_run, cmd_select, cmd_simulate, cmd_train, default_bfile,
    parse_override, CliError, Context, PipelineConfig,
};

const THREADS_ENV: &str = "GWASNET_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "gwasnet",
    version,
    about = "Case/control GWAS quality control, association scanning and neural classification",
    after_help = "Any config key can be overridden with --<key> <value>, e.g. --qc.maf_min 0.01 or --select.thresholds '[1e-4, 1e-3]'.\nThe default thread count comes from GWASNET_THREADS when --threads is not given."
)]
struct Cli {
    /// TOML config file with flat dotted keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root directory for stage outputs
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort (BED/BIM/FAM plus truth table)
    Simulate,
    /// Sample and variant quality control
    Qc {
        /// Input PLINK prefix (default: input.bfile or the simulated cohort)
        #[arg(long)]
        bfile: Option<PathBuf>,
    },
    /// Per-SNP logistic association scan
    Assoc {
        /// Input PLINK prefix (default: the QC output)
        #[arg(long)]
        bfile: Option<PathBuf>,
    },
    /// SNP sets per P-value threshold
    Select {
        /// Association table (default: <out-dir>/assoc/assoc.tsv)
        #[arg(long)]
        assoc: Option<PathBuf>,
    },
    /// Train one classifier per threshold
    Train {
        #[arg(long)]
        bfile: Option<PathBuf>,
        /// Directory holding the selected SNP lists
        #[arg(long)]
        select_dir: Option<PathBuf>,
    },
    /// Validation and test metrics per threshold
    Evaluate {
        #[arg(long)]
        bfile: Option<PathBuf>,
        #[arg(long)]
        select_dir: Option<PathBuf>,
        #[arg(long)]
        train_dir: Option<PathBuf>,
    },
    /// Summary tables, ROC and Manhattan data of a run directory
    Report {
        /// Run directory (default: --out-dir)
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// All stages in order
    Run,
}

/// Split `--a.b value` / `--a.b=value` config overrides out of argv; clap
/// sees the rest.
fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, toml::Value)>), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let name = a.strip_prefix("--").filter(|n| n.split('=').next().is_some_and(|k| k.contains('.')));
        match name {
            Some(n) => {
                let (key, value) = match n.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => {
                        let v = it.next().ok_or_else(|| format!("--{n} needs a value"))?;
                        (n.to_string(), v)
                    }
                };
                overrides.push((key, parse_override(&value)));
            }
            None => rest.push(a),
        }
    }
    Ok((rest, overrides))
}

fn run(cli: Cli, overrides: Vec<(String, toml::Value)>) -> Result<(), CliError> {
    let mut config = PipelineConfig::load(cli.config.as_deref(), &overrides).map_err(CliError::Usage)?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(dir) = cli.out_dir {
        config.out_dir = dir;
    }
    let threads = match cli.threads {
        Some(t) => t,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?,
            Err(_) => config.threads,
        },
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Context::new(config);
    let stage = |s: &str| ctx.stage_dir(s);
    match cli.command {
        Command::Simulate => cmd_simulate(&ctx).map(drop),
        Command::Qc { bfile } => cmd_qc(&ctx, &bfile.unwrap_or_else(|| default_bfile(&ctx, "qc"))).map(drop),
        Command::Assoc { bfile } => cmd_assoc(&ctx, &bfile.unwrap_or_else(|| default_bfile(&ctx, "assoc"))).map(drop),
        Command::Select { assoc } => {
            cmd_select(&ctx, &assoc.unwrap_or_else(|| stage("assoc").join("assoc.tsv"))).map(drop)
        }
        Command::Train { bfile, select_dir } => cmd_train(
            &ctx,
            &bfile.unwrap_or_else(|| default_bfile(&ctx, "train")),
            &select_dir.unwrap_or_else(|| stage("select")),
        )
        .map(drop),
        Command::Evaluate {
            bfile,
            select_dir,
            train_dir,
        } => cmd_evaluate(
            &ctx,
            &bfile.unwrap_or_else(|| default_bfile(&ctx, "evaluate")),
            &select_dir.unwrap_or_else(|| stage("select")),
            &train_dir.unwrap_or_else(|| stage("train")),
        )
        .map(drop),
        Command::Report { run_dir } => cmd_report(&ctx, &run_dir.unwrap_or_else(|| ctx.out_dir.clone())).map(drop),
        Command::Run => cmd_run(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = match extract_overrides(std::env::args().collect()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("gwasnet: usage error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gwasnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
