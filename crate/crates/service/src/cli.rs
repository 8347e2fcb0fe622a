//! The `vocabsize` command. Exit status is 0 on success, 1 when input fails
//! validation or an operation fails, and 2 on a usage error.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use vocabsize_core::bank::{bank_summary, demo_bank, load_bank, save_bank, validate_for_administration};
use vocabsize_core::calibration::{
    calibrate, export_item_curve, export_wright_map, fit_conversion_with_cap, matrix_from_sessions, prune_items,
    write_curve_csv, write_item_table, CalibrationError, CalibrationOptions, CalibrationResult, ResponseMatrix,
};
use vocabsize_core::cat::{read_log, SelectionRule, SessionEvent};
use vocabsize_core::sim::{compare_lengths, honest_population, run_recovery, simulate_rasch_matrix, synthetic_study, Planted};
use vocabsize_core::study::{analyze, clean, read_records, write_records, CleaningConfig};
use vocabsize_core::{ConversionCoefficients, ItemBank, SessionConfig};

use crate::store::{BankStatus, Store};

#[derive(Debug, Parser)]
#[command(name = "vocabsize", version, about = "Adaptive receptive vocabulary size test")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect and edit item banks.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Rasch calibration by marginal maximum likelihood.
    Calibrate(CalibrateArgs),
    /// Apply the misfit rule to a calibration.
    Prune(PruneArgs),
    /// Fit the logit-to-words conversion from ranked, calibrated items.
    FitConversion(FitConversionArgs),
    /// Observed versus model response curve of one item.
    ItemCurve(ItemCurveArgs),
    /// Person and item distributions on the logit scale.
    WrightMap(WrightMapArgs),
    /// Remove untrustworthy and outlying results from a study export.
    Clean(CleanArgs),
    /// Group comparisons and correlations over a cleaned study export.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo studies and synthetic data.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum BankCommand {
    /// Check stimuli and that a session of `--length` items can be served.
    Validate {
        bank: PathBuf,
        #[arg(long, default_value_t = 30)]
        length: usize,
    },
    /// Append words from a CSV (`surface,kind,rank,option1..4,synonym_index`).
    Import {
        /// Bank to extend; created when missing.
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "w")]
        id_prefix: String,
        /// Write here instead of updating the bank in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Counts and difficulty spread as JSON.
    Summary { bank: PathBuf },
    /// Write the built-in demonstration bank.
    Demo { out: PathBuf },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "sessions"]))]
pub struct CalibrateArgs {
    /// Response CSV with columns `person_id,item_id,score`.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Directory of session event logs; needs `--bank`.
    #[arg(long, requires = "bank")]
    sessions: Option<PathBuf>,
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-item table with fit and pruning decision.
    #[arg(long)]
    items_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Keep the latent distribution at N(0, 1) instead of estimating its spread.
    #[arg(long)]
    fixed_latent: bool,
    #[command(flatten)]
    caps: FitCaps,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct FitCaps {
    #[arg(long, default_value_t = 1.3)]
    fit_cap: f64,
    #[arg(long, default_value_t = 2.0)]
    z_cap: f64,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    calib: PathBuf,
    #[command(flatten)]
    caps: FitCaps,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("points").required(true).args(["bank", "input"]))]
pub struct FitConversionArgs {
    /// Use ranked stimuli of this bank.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Take difficulties from this calibration instead of the bank.
    #[arg(long, requires = "bank")]
    calib: Option<PathBuf>,
    /// CSV with columns `rank,difficulty`.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = ConversionCoefficients::DEFAULT_CAP)]
    cap: f64,
    /// Store the coefficients in the bank file.
    #[arg(long, requires = "bank")]
    write_bank: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ItemCurveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    item: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WrightMapArgs {
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    bin_width: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Cleaning report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.70)]
    attention_threshold: f64,
    /// Minimum test duration in seconds.
    #[arg(long, default_value_t = 60.0)]
    duration_floor: f64,
    #[arg(long, default_value_t = 7)]
    min_age: u32,
    #[arg(long, default_value_t = 2.0)]
    sd_k: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    age_bins: usize,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Selection {
    Adaptive,
    Random,
}

#[derive(Debug, Args)]
pub struct SimBank {
    /// Bank to draw items from; the built-in demo bank when absent.
    #[arg(long)]
    bank: Option<PathBuf>,
}

impl SimBank {
    fn load(&self) -> Result<ItemBank, CliError> {
        match &self.bank {
            Some(p) => Ok(load_bank(p)?),
            None => Ok(demo_bank()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Ability recovery of simulated honest respondents.
    Recovery {
        #[command(flatten)]
        bank: SimBank,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        mean: f64,
        #[arg(long, default_value_t = 2.0)]
        sd: f64,
        #[arg(long, default_value_t = 30)]
        length: usize,
        #[arg(long, value_enum, default_value_t = Selection::Adaptive)]
        selection: Selection,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Precision against test length.
    Lengths {
        #[command(flatten)]
        bank: SimBank,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 30])]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Rasch responses for calibration (`person_id,item_id,score`).
    Responses {
        #[arg(long, default_value_t = 500)]
        persons: usize,
        #[arg(long, default_value_t = 60)]
        items: usize,
        /// Person abilities are N(0, sd).
        #[arg(long, default_value_t = 1.0)]
        sd: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Generating difficulties as `item_id,difficulty`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Study export with planted violations.
    Study {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Planted records as `session_id,planted`.
        #[arg(long)]
        planted: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "VOCABSIZE_DATA_DIR", default_value = "data/service")]
    data_dir: PathBuf,
    #[arg(long, env = "VOCABSIZE_HOST", default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "VOCABSIZE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "VOCABSIZE_BANK", conflicts_with = "demo_bank")]
    bank: Option<PathBuf>,
    /// Serve the built-in demonstration bank.
    #[arg(long)]
    demo_bank: bool,
    /// Session settings as JSON, overriding the defaults.
    #[arg(long)]
    session_config: Option<PathBuf>,
    #[arg(long)]
    attention_threshold: Option<f64>,
    /// Allowed CORS origin; repeatable. Any origin when omitted.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Usage(String),
}

macro_rules! failed_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Failed(e.to_string())
            }
        }
    )*};
}

failed_from!(
    io::Error,
    serde_json::Error,
    vocabsize_core::bank::BankError,
    CalibrationError,
    vocabsize_core::study::StudyError,
    vocabsize_core::sim::SimError,
    vocabsize_core::cat::CatError,
    crate::store::StoreError
);

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when absent.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_calibration(path: &Path) -> Result<CalibrationResult, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    Ok(CalibrationResult::from_json_str(&text)?)
}

fn check_caps(caps: FitCaps) -> Result<(), CliError> {
    if !(caps.fit_cap.is_finite() && caps.z_cap.is_finite()) {
        return Err(CliError::Usage("--fit-cap and --z-cap must be finite".into()));
    }
    Ok(())
}

fn bank_command(cmd: BankCommand) -> Result<(), CliError> {
    match cmd {
        BankCommand::Validate { bank, length } => {
            let config = SessionConfig::with_length(length).map_err(|e| CliError::Usage(e.to_string()))?;
            let bank = load_bank(&bank)?;
            let mut problems: Vec<String> = Vec::new();
            if let Err(d) = validate_for_administration(&bank, &config.composition) {
                problems.extend(d.iter().map(ToString::to_string));
            }
            match bank.conversion {
                None => problems.push("no conversion coefficients".into()),
                Some(c) => problems.extend(c.validate().err()),
            }
            if problems.is_empty() {
                println!("ok: {} stimuli, {length}-item sessions can be served", bank.stimuli.len());
                Ok(())
            } else {
                Err(CliError::Failed(problems.join("\n")))
            }
        }
        BankCommand::Import { bank, csv, id_prefix, out } => {
            let mut b = if bank.exists() { load_bank(&bank)? } else { ItemBank::default() };
            let added = b.import_csv(open(&csv)?, &id_prefix)?;
            save_bank(&b, out.as_ref().unwrap_or(&bank))?;
            println!("imported {} stimuli", added.len());
            Ok(())
        }
        BankCommand::Summary { bank } => write_json(None, &bank_summary(&load_bank(&bank)?)),
        BankCommand::Demo { out } => Ok(save_bank(&demo_bank(), &out)?),
    }
}

fn read_session_logs(dir: &Path) -> Result<Vec<(String, Vec<SessionEvent>)>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let records = read_log(open(p)?).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
            let id = records.first().map(|r| r.session_id.clone()).unwrap_or_default();
            Ok((id, records.into_iter().map(|r| r.event).collect()))
        })
        .collect()
}

fn calibrate_command(args: CalibrateArgs) -> Result<(), CliError> {
    check_caps(args.caps)?;
    let matrix = match (&args.input, &args.sessions, &args.bank) {
        (Some(input), _, _) => ResponseMatrix::read_csv(open(input)?)?,
        (None, Some(dir), Some(bank)) => {
            let bank = load_bank(bank)?;
            let logs = read_session_logs(dir)?;
            matrix_from_sessions(&bank, logs.iter().map(|(id, ev)| (id.as_str(), ev.as_slice())))?
        }
        _ => return Err(CliError::Usage("give --in, or --sessions with --bank".into())),
    };
    let options = CalibrationOptions {
        max_iterations: args.max_iter,
        tolerance: args.tol,
        estimate_latent_sd: !args.fixed_latent,
        ..CalibrationOptions::default()
    };
    let (result, failure) = match calibrate(&matrix, &options) {
        Ok(r) => (r, None),
        Err(CalibrationError::NotConverged { iterations, last_change, last }) => (
            *last,
            Some(format!("no convergence after {iterations} iterations (last change {last_change:.3e})")),
        ),
        Err(e) => return Err(e.into()),
    };
    fs::write(&args.out, result.to_json_string() + "\n")?;
    if let Some(path) = &args.items_csv {
        let prune = prune_items(&result, args.caps.fit_cap, args.caps.z_cap);
        let mut w = create(path)?;
        write_item_table(&mut w, &result, &prune)?;
        w.flush()?;
    }
    let s = &result.summary;
    println!(
        "{}: {} iterations, log-likelihood {:.3}, latent sd {:.3}",
        if result.converged { "converged" } else { "not converged" },
        result.iterations,
        result.log_likelihood,
        result.latent_sd
    );
    println!(
        "items: {} estimated, {} extreme; mean infit {:.3}, mean outfit {:.3}, reliability {:.3}",
        result.item_difficulties.len(),
        result.extreme_items.len(),
        s.items.mean_infit,
        s.items.mean_outfit,
        s.items.reliability
    );
    println!(
        "persons: {} scored, {} extreme; reliability {:.3}, strata {:.2}",
        result.person_abilities.len(),
        result.extreme_persons.len(),
        s.persons.reliability,
        s.persons.strata
    );
    match failure {
        Some(f) => Err(CliError::Failed(f)),
        None => Ok(()),
    }
}

fn prune_command(args: PruneArgs) -> Result<(), CliError> {
    check_caps(args.caps)?;
    let result = read_calibration(&args.calib)?;
    let report = prune_items(&result, args.caps.fit_cap, args.caps.z_cap);
    println!("retained ({}): {}", report.retained.len(), report.retained.join(" "));
    println!("removed ({}):", report.removed.len());
    for r in &report.removed {
        println!("  {}: {}", r.id, r.reason);
    }
    if !report.unestimated.is_empty() {
        println!("unestimated ({}): {}", report.unestimated.len(), report.unestimated.join(" "));
    }
    if let Some(out) = &args.out {
        write_json(Some(out), &report)?;
    }
    Ok(())
}

fn fit_conversion_command(args: FitConversionArgs) -> Result<(), CliError> {
    let points: Vec<(f64, f64)> = match (&args.bank, &args.input) {
        (Some(bank_path), _) => {
            let bank = load_bank(bank_path)?;
            let calib = args.calib.as_deref().map(read_calibration).transpose()?;
            bank.stimuli
                .iter()
                .filter(|s| s.is_active())
                .filter_map(|s| {
                    let d = match &calib {
                        Some(c) => c.item_difficulties.get(&s.id).map(|e| e.difficulty),
                        None => s.difficulty,
                    };
                    Some((f64::from(s.rank?), d?))
                })
                .collect()
        }
        (None, Some(input)) => {
            #[derive(serde::Deserialize)]
            struct Row {
                rank: f64,
                difficulty: f64,
            }
            csv::Reader::from_reader(open(input)?)
                .deserialize::<Row>()
                .map(|r| r.map(|r| (r.rank, r.difficulty)))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Failed(format!("{}: {e}", input.display())))?
        }
        (None, None) => return Err(CliError::Usage("give --bank or --in".into())),
    };
    let fit = fit_conversion_with_cap(&points, args.cap)?;
    let c = fit.coefficients;
    println!(
        "cap {} slope {:.6} midpoint {:.6} (rmse {:.1} words over {} items)",
        c.cap, c.slope, c.midpoint, fit.rmse, fit.points
    );
    if args.write_bank {
        let path = args.bank.as_ref().expect("clap enforces --bank");
        let mut bank = load_bank(path)?;
        bank.conversion = Some(c);
        save_bank(&bank, path)?;
    }
    if let Some(out) = &args.out {
        write_json(Some(out), &fit)?;
    }
    Ok(())
}

fn item_curve_command(args: ItemCurveArgs) -> Result<(), CliError> {
    let matrix = ResponseMatrix::read_csv(open(&args.input)?)?;
    let result = read_calibration(&args.calib)?;
    let curve = export_item_curve(&matrix, &result, &args.item, args.bins)?;
    let mut w = output(args.out.as_deref())?;
    write_curve_csv(&mut w, &curve)?;
    w.flush()?;
    Ok(())
}

fn wright_map_command(args: WrightMapArgs) -> Result<(), CliError> {
    let result = read_calibration(&args.calib)?;
    let map = export_wright_map(&result, args.bin_width)?;
    let mut w = output(args.out.as_deref())?;
    map.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn clean_command(args: CleanArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.attention_threshold) {
        return Err(CliError::Usage("--attention-threshold must lie in [0, 1]".into()));
    }
    if !(args.duration_floor >= 0.0 && args.sd_k > 0.0) {
        return Err(CliError::Usage("--duration-floor must be >= 0 and --sd-k > 0".into()));
    }
    let records = read_records(open(&args.input)?)?;
    let config = CleaningConfig {
        min_attention: args.attention_threshold,
        min_duration_s: args.duration_floor,
        min_age: args.min_age,
        sd_k: args.sd_k,
    };
    let (kept, report) = clean(&records, &config);
    let mut w = create(&args.out)?;
    write_records(&mut w, &kept)?;
    w.flush()?;
    println!(
        "input {}; removed: honesty {}, age {}, attention {}, duration {}, outlier {}; retained {}; retake suspects {}",
        report.input,
        report.removed_honesty,
        report.removed_age,
        report.removed_attention,
        report.removed_duration,
        report.removed_outlier,
        report.retained,
        report.flagged_retakes.len()
    );
    if let Some(path) = &args.report {
        write_json(Some(path), &report)?;
    }
    Ok(())
}

fn analyze_command(args: AnalyzeArgs) -> Result<(), CliError> {
    let records = read_records(open(&args.input)?)?;
    let report = analyze(&records, args.age_bins)?;
    if args.json {
        write_json(None, &report)
    } else {
        print!("{}", report.to_text());
        Ok(())
    }
}

fn simulate_command(cmd: SimulateCommand) -> Result<(), CliError> {
    match cmd {
        SimulateCommand::Recovery { bank, n, mean, sd, length, selection, seed } => {
            let bank = bank.load()?;
            let mut config = SessionConfig::with_length(length).map_err(|e| CliError::Usage(e.to_string()))?;
            config.selection = match selection {
                Selection::Adaptive => SelectionRule::MaxInformation,
                Selection::Random => SelectionRule::Random,
            };
            let profiles = honest_population(n, mean, sd, seed)?;
            write_json(None, &run_recovery(&bank, &config, &profiles, seed)?)
        }
        SimulateCommand::Lengths { bank, lengths, n, seed } => {
            let bank = bank.load()?;
            if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l % 5 != 0) {
                return Err(CliError::Usage(format!("lengths must be positive multiples of 5, got {bad}")));
            }
            let rows = compare_lengths(&bank, &lengths, n, seed)?;
            println!("length,mean_se,rmse");
            for r in rows {
                println!("{},{:.6},{:.6}", r.length, r.mean_se, r.rmse);
            }
            Ok(())
        }
        SimulateCommand::Responses { persons, items, sd, seed, out, truth } => {
            if persons < 2 || items < 2 {
                return Err(CliError::Usage("need at least 2 persons and 2 items".into()));
            }
            let normal = Normal::new(0.0, sd).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let thetas: Vec<f64> = (0..persons).map(|_| normal.sample(&mut rng)).collect();
            let difficulties: Vec<f64> =
                (0..items).map(|i| -2.5 + 5.0 * i as f64 / (items - 1) as f64).collect();
            let matrix = simulate_rasch_matrix(&thetas, &difficulties, seed);
            let mut w = create(&out)?;
            matrix.write_csv(&mut w)?;
            w.flush()?;
            if let Some(path) = truth {
                let mut w = create(&path)?;
                writeln!(w, "item_id,difficulty")?;
                for (id, b) in matrix.items().iter().zip(&difficulties) {
                    writeln!(w, "{id},{b}")?;
                }
                w.flush()?;
            }
            Ok(())
        }
        SimulateCommand::Study { n, seed, out, planted } => {
            let study = synthetic_study(n, seed)?;
            let mut w = create(&out)?;
            write_records(&mut w, &study.records)?;
            w.flush()?;
            if let Some(path) = planted {
                let mut w = create(&path)?;
                writeln!(w, "session_id,planted")?;
                for (id, p) in &study.planted {
                    let label = match p {
                        Planted::Retake => "retake".to_string(),
                        Planted::Violation(rule) => serde_json::to_value(rule)?.as_str().unwrap_or_default().to_string(),
                    };
                    writeln!(w, "{id},{label}")?;
                }
                w.flush()?;
            }
            Ok(())
        }
    }
}

fn serve_command(args: ServeArgs) -> Result<(), CliError> {
    let mut config = match &args.session_config {
        Some(p) => serde_json::from_reader(open(p)?)?,
        None => SessionConfig::default(),
    };
    if let Some(t) = args.attention_threshold {
        config.trust_threshold = t;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let bank = if args.demo_bank {
        BankStatus::check(demo_bank(), &config)
    } else {
        match &args.bank {
            Some(p) => match load_bank(p) {
                Ok(b) => BankStatus::check(b, &config),
                Err(e) => BankStatus::Unavailable(vec![e.to_string()]),
            },
            None => BankStatus::Unavailable(vec!["no bank configured".into()]),
        }
    };
    if let BankStatus::Unavailable(d) = &bank {
        eprintln!("warning: sessions are unavailable: {}", d.join("; "));
    }
    let store = Store::open(&args.data_dir, bank, config)?;
    for w in store.warnings() {
        eprintln!("warning: skipped session log {w}");
    }
    let runtime = tokio::runtime::Runtime::new()?;
    let addr = SocketAddr::new(args.host, args.port);
    runtime.block_on(crate::api::serve(Arc::new(store), addr, &args.cors_origins))?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bank(cmd) => bank_command(cmd),
        Command::Calibrate(args) => calibrate_command(args),
        Command::Prune(args) => prune_command(args),
        Command::FitConversion(args) => fit_conversion_command(args),
        Command::ItemCurve(args) => item_curve_command(args),
        Command::WrightMap(args) => wright_map_command(args),
        Command::Clean(args) => clean_command(args),
        Command::Analyze(args) => analyze_command(args),
        Command::Simulate(cmd) => simulate_command(cmd),
        Command::Serve(args) => serve_command(args),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Failed(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Usage(_)) => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
    }
}
