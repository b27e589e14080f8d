use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use panelq_core::interval::run_detection;
use panelq_core::panel::{describe, parse_panel, write_describe, ParseOptions};
use panelq_core::report::{
    aggregate_annual, emit_report, evaluate_logo, read_records_csv, record_interval_metrics,
    split_uar_by_class, write_metrics_csv, AggregationMode, Format, Report,
};
use panelq_core::{Error, ForestConfig, MethodConfig, PanelDataset, RegionClassification, Result, TauPair};

#[derive(Parser)]
#[command(name = "panelq", version, about = "Quantile-based anomaly detection on regional sales panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a panel CSV and print a summary.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Per-region descriptive statistics.
    Describe {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Leave-one-region-out intervals, anomaly records and yearly aggregates.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        /// Optional `region,class` file; adds the class-split series.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Average ratios over all records instead of anomalous ones only.
        #[arg(long)]
        all_records: bool,
    },
    /// Point and interval metrics for every fold plus their means.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Yearly and class-split series from a records CSV.
    Aggregate {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        #[arg(long)]
        all_records: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Qr,
    Qrf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, default_value_t = 0.1)]
    tau_low: f64,
    #[arg(long, default_value_t = 0.9)]
    tau_high: f64,
    /// Forest seed (ignored by qr).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    n_trees: usize,
    #[arg(long, default_value_t = 1)]
    mtry: usize,
    #[arg(long, default_value_t = 5)]
    min_node_size: usize,
}

impl ModelArgs {
    fn config(&self) -> Result<(MethodConfig, TauPair)> {
        let taus = TauPair::new(self.tau_low, self.tau_high)?;
        let cfg = match self.method {
            MethodArg::Qr => MethodConfig::Qr,
            MethodArg::Qrf => MethodConfig::Qrf(ForestConfig {
                n_trees: self.n_trees,
                mtry: self.mtry,
                min_node_size: self.min_node_size,
                bootstrap: true,
                seed: self.seed,
            }),
        };
        Ok((cfg, taus))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn load(path: &Path) -> Result<PanelDataset> {
    parse_panel(open(path)?, &ParseOptions::default())
}

fn read_classes(path: &Path) -> Result<RegionClassification> {
    RegionClassification::read(open(path)?, Some(path.to_path_buf()))
}

fn mode(all_records: bool) -> AggregationMode {
    if all_records {
        AggregationMode::AllRecords
    } else {
        AggregationMode::AnomalousOnly
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { input } => {
            let d = load(&input)?;
            let years = d.years();
            println!(
                "{}: {} observations, {} regions, years {}-{}",
                input.display(),
                d.len(),
                d.regions().len(),
                years[0],
                years[years.len() - 1]
            );
        }
        Command::Describe { input, output } => {
            let d = load(&input)?;
            let mut w = create(&output)?;
            write_describe(&describe(&d), &mut w)?;
            w.flush().map_err(|e| Error::io(&output, e))?;
            println!("wrote {}", output.display());
        }
        Command::Detect { input, model, output_dir, format, classes, all_records } => {
            let (cfg, taus) = model.config()?;
            let classes = classes.as_deref().map(read_classes).transpose()?;
            let d = load(&input)?;
            let records = run_detection(&d, &cfg, taus)?;
            let mode = mode(all_records);
            let annual = aggregate_annual(&records, mode)?;
            let class_split = classes
                .map(|c| split_uar_by_class(&records, &c, mode))
                .transpose()?;
            let metrics = record_interval_metrics(&records, &cfg.method().to_string())?;
            let report = Report { records, annual, class_split, metrics };
            print_written(&emit_report(&report, &output_dir, format.into())?);
        }
        Command::Evaluate { input, model, output } => {
            let (cfg, taus) = model.config()?;
            let d = load(&input)?;
            let rows = evaluate_logo(&d, &cfg, taus)?;
            let mut w = create(&output)?;
            write_metrics_csv(&rows, &mut w)?;
            w.flush().map_err(|e| Error::io(&output, e))?;
            println!("wrote {}", output.display());
        }
        Command::Aggregate { records, classes, output_dir, format, all_records } => {
            let recs = read_records_csv(open(&records)?)?;
            let classes = read_classes(&classes)?;
            let mode = mode(all_records);
            let report = Report {
                annual: aggregate_annual(&recs, mode)?,
                class_split: Some(split_uar_by_class(&recs, &classes, mode)?),
                records: Vec::new(),
                metrics: Vec::new(),
            };
            print_written(&emit_report(&report, &output_dir, format.into())?);
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    if err.is_pathology() {
        3
    } else if err.is_validation() {
        2
    } else {
        4
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
