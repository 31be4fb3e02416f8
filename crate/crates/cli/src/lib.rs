//! `pntag` command-line front end.
//!
//! [`run`] parses arguments, dispatches to a subcommand and maps failures to
//! exit codes: 0 success, 1 usage or input error, 2 domain failure
//! (codebook capacity, no bearing, verification failure).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;

pub use config::FileConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pntag", version, about = "PN-coded BLE tag link: codebooks, simulation, detection")]
pub struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON settings file; explicit flags override its values.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    /// Progress and diagnostics on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a set of tag codes with bounded cross-correlation.
    GenCodebook(GenCodebookArgs),
    /// Recompute pairwise cross-correlation of a codebook file.
    VerifyCodebook(VerifyCodebookArgs),
    /// Synthesize one tag frame through the channel into an IQ file.
    Tx(TxArgs),
    /// Run the receiver over an IQ file; detections go to stdout as JSON lines.
    Rx(RxArgs),
    /// Sweep the receive antenna in azimuth and estimate the tag bearing.
    Sweep(SweepArgs),
    /// Measure Pd against SNR and predict the boresight range.
    Range(RangeArgs),
    /// Write the register values that make a tag transmit its code.
    ExportFirmware(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenCodebookArgs {
    #[arg(long)]
    pub tags: usize,
    /// Largest allowed sliding cross-correlation between any two tags.
    #[arg(long, default_value_t = 192)]
    pub max_cross: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyCodebookArgs {
    #[arg(long)]
    pub codebook: PathBuf,
    /// Limit to check against; defaults to the value stored in the file.
    #[arg(long)]
    pub max_cross: Option<u32>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TxArgs {
    #[arg(long)]
    pub codebook: PathBuf,
    /// Tag id to transmit.
    #[arg(long)]
    pub tag: String,
    /// Target in-band SNR in dB; `inf` for a noiseless capture.
    #[arg(long, conflicts_with = "distance", required_unless_present = "distance")]
    pub snr: Option<f64>,
    /// Range in metres; SNR follows from the link budget.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Tag azimuth off the receive antenna boresight, degrees.
    #[arg(long, default_value_t = 0.0, requires = "distance")]
    pub angle: f64,
    #[arg(long, default_value_t = 0.0)]
    pub cfo: f64,
    /// Carrier phase, radians.
    #[arg(long, default_value_t = 0.0)]
    pub phase: f64,
    /// Fractional delay, samples.
    #[arg(long, default_value_t = 0.0)]
    pub timing_offset: f64,
    #[arg(long, default_value_t = 0.0)]
    pub clock_ppm: f64,
    /// Per-sample noise power, dBFS.
    #[arg(long)]
    pub noise_floor: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RxArgs {
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long = "in", value_name = "IQ")]
    pub input: PathBuf,
    /// Overrides the sidecar sample rate.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub threshold: Option<u32>,
    /// Also write the JSON lines to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    /// Codebook file; a four-tag codebook is generated from the seed when absent.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// Tag id to place in the scene; the first entry by default.
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub distance: Option<f64>,
    /// True tag direction, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub tag_angle: f64,
    /// Comma-separated antenna angles in degrees; -90..90 in 10 degree steps by default.
    #[arg(long, allow_hyphen_values = true)]
    pub angles: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub threshold: Option<u32>,
    /// `angle,correlation` CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Sweep points and bearing as JSON; `<out>.json` by default.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Per-angle statistics as CSV for external plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct RangeArgs {
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub pd_target: Option<f64>,
    /// Trials per SNR bin.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = -2.0)]
    pub snr_min: f64,
    #[arg(long, default_value_t = 16.0)]
    pub snr_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub snr_step: f64,
    #[arg(long)]
    pub threshold: Option<u32>,
    /// Report file; the report is printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pd curve as CSV for external plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
    CHeader,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long)]
    pub tag: String,
    #[arg(long, value_enum, default_value_t = ExportFormat::Json)]
    pub format: ExportFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Output streams and resolved global settings handed to every subcommand.
pub struct Ctx<'a> {
    pub seed: u64,
    pub file: FileConfig,
    pub verbose: bool,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn log(&mut self, msg: impl AsRef<str>) {
        if self.verbose {
            let _ = writeln!(self.stderr, "{}", msg.as_ref());
        }
    }
}

/// Runs the CLI with `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let result = execute(cli, stdout, stderr);
    let _ = stdout.flush();
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut ctx = Ctx { seed: cli.seed.or(file.seed).unwrap_or(0), file, verbose: cli.verbose, stdout, stderr };
    match cli.command {
        Command::GenCodebook(a) => commands::gen_codebook(&mut ctx, &a),
        Command::VerifyCodebook(a) => commands::verify_codebook(&mut ctx, &a),
        Command::Tx(a) => commands::tx(&mut ctx, &a),
        Command::Rx(a) => commands::rx(&mut ctx, &a),
        Command::Sweep(a) => commands::sweep(&mut ctx, &a),
        Command::Range(a) => commands::range(&mut ctx, &a),
        Command::ExportFirmware(a) => commands::export_firmware(&mut ctx, &a),
    }
}
