//! Experiment CLI: `run` executes a config across its seeds, `sweep` fans a
//! precision axis out over shared seeds, `plot` aggregates saved records
//! into plot data. Exit codes: 0 success, 1 config error, 2 data error,
//! 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hdqt::error::Error;
use hdqt_cli::config::{DatasetConfig, ExperimentConfig, Method, QuantMode};
use hdqt_cli::emit::{emit_plotdata, emit_results, Figure, OutputFormat};
use hdqt_cli::runner::{run_experiment, run_experiment_keeping_models, sweep, RunRecord, SweepAxis};

#[derive(Parser)]
#[command(name = "hdqt", about = "Quantized class-incremental training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config across its seeds.
    Run(RunArgs),
    /// Sweep input or accumulator bit-widths with shared seeds.
    Sweep(SweepArgs),
    /// Aggregate saved run records into plot data.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the method: nocl | lwf | icarl | icarl_nme | bic.
    #[arg(long)]
    method: Option<String>,
    /// Override input bit-width (switches to integer mode).
    #[arg(long)]
    bits: Option<u8>,
    /// Override accumulator bit-width (switches to integer mode).
    #[arg(long)]
    accum: Option<u8>,
    /// Use this CSV dataset (schema at <path>.schema.toml).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Results table format: csv | json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Also write each seed's trained model as a JSON checkpoint.
    #[arg(long)]
    save_models: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep axis: input | accum.
    #[arg(long)]
    axis: String,
    /// Comma-separated bit-widths, e.g. 3,4,5,6,8.
    #[arg(long, value_delimiter = ',')]
    values: Vec<u8>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Figure: step_acc | forgetting | per_class_delta | bin_occupancy.
    #[arg(long)]
    figure: String,
    /// Directory holding run_*.json records.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also render a simple SVG next to the CSV.
    #[arg(long)]
    svg: bool,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Param { .. } | Error::Serde(_) => 1,
        Error::Data(_) | Error::Csv(_) => 2,
        Error::Shape { .. } | Error::Io(_) => 3,
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::from_toml_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_overrides(mut cfg: ExperimentConfig, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(method) = &args.method {
        cfg.method = Method::parse(method)?;
    }
    if let Some(path) = &args.dataset {
        cfg.dataset = DatasetConfig::Csv {
            path: path.clone(),
            schema: None,
            normalize: true,
            test_fraction: 0.2,
        };
    }
    if args.bits.is_some() || args.accum.is_some() {
        let (mut input_bits, mut accum_bits, tile_size, outlier_scale) = match cfg.quant {
            QuantMode::Int {
                input_bits,
                accum_bits,
                tile_size,
                outlier_scale,
            } => (input_bits, accum_bits, tile_size, outlier_scale),
            QuantMode::Fp => (4, 8, 32, 0.975),
        };
        if let Some(b) = args.bits {
            input_bits = b;
        }
        if let Some(a) = args.accum {
            accum_bits = a;
        }
        cfg.quant = QuantMode::Int {
            input_bits,
            accum_bits,
            tile_size,
            outlier_scale,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save_and_summarize(records: &[RunRecord], out: &PathBuf, format: &str) -> Result<(), Error> {
    let format = OutputFormat::parse(format)?;
    std::fs::create_dir_all(out)?;
    for record in records {
        record.save(out)?;
        println!(
            "{} seed {}: final accuracy {:.4} ({} tasks, {:.1}s)",
            record.config.run_label(),
            record.seed,
            record.final_accuracy,
            record.task_mean_acc.len(),
            record.wall_clock_secs
        );
    }
    let ext = match format {
        OutputFormat::Json => "json",
        OutputFormat::Csv => "csv",
    };
    let table = out.join(format!("results.{ext}"));
    emit_results(records, format, &table)?;
    println!("wrote {}", table.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let cfg = apply_overrides(load_config(args.config.as_ref())?, &args)?;
    if args.save_models {
        let pairs = run_experiment_keeping_models(&cfg)?;
        std::fs::create_dir_all(&args.out)?;
        let mut records = Vec::new();
        for (record, model) in pairs {
            let path = args
                .out
                .join(format!("model_{}_seed{}.json", cfg.run_label(), record.seed));
            hdqt::nn::save_checkpoint(&model, &path)?;
            records.push(record);
        }
        save_and_summarize(&records, &args.out, &args.format)
    } else {
        let records = run_experiment(&cfg)?;
        save_and_summarize(&records, &args.out, &args.format)
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let cfg = load_config(args.config.as_ref())?;
    let axis = SweepAxis::parse(&args.axis)?;
    let records = sweep(&cfg, axis, &args.values)?;
    save_and_summarize(&records, &args.out, "csv")
}

fn cmd_plot(args: PlotArgs) -> Result<(), Error> {
    let figure = Figure::parse(&args.figure)?;
    let mut records = Vec::new();
    for entry in std::fs::read_dir(&args.input)? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        if let Some(name) = name {
            if name.starts_with("run_") && name.ends_with(".json") {
                records.push(RunRecord::load(&path)?);
            }
        }
    }
    if records.is_empty() {
        return Err(Error::data(format!(
            "no run_*.json records under {}",
            args.input.display()
        )));
    }
    let svg_path = args.svg.then(|| args.out.with_extension("svg"));
    emit_plotdata(&records, figure, &args.out, svg_path.as_deref())?;
    println!("wrote {}", args.out.display());
    if let Some(svg) = svg_path {
        println!("wrote {}", svg.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(workers) = std::env::var("HDQT_WORKERS") {
        match workers.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size worker pool: {e}");
                }
            }
            _ => log::warn!("ignoring invalid HDQT_WORKERS value '{workers}'"),
        }
    }

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
