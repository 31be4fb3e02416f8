use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pntag_core::bearing::{run_sweep, SweepConfig, SweepPoint};
use pntag_core::channel::{ChannelParams, Drive};
use pntag_core::frame::{self, flatten_to_bits};
use pntag_core::io::{self, IqReader, SidecarMeta};
use pntag_core::pncode::{build_codebook, Codebook};
use pntag_core::rx::{DetectionEvent, DetectorConfig, Receiver, ReceiverConfig};
use pntag_core::sim::{predict_range, transmit, RangeConfig, TrialConfig, TrialRunner};
use pntag_core::{seed, DEFAULT_THRESHOLD};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::{
    Ctx, ExportArgs, ExportFormat, FileConfig, GenCodebookArgs, RangeArgs, RxArgs, SweepArgs, TxArgs,
    VerifyCodebookArgs,
};

/// Seed streams per subcommand, so that two subcommands sharing `--seed`
/// do not draw the same numbers.
const STREAM_TX: u64 = 1;
const STREAM_SWEEP: u64 = 3;
const STREAM_RANGE: u64 = 4;
const STREAM_DEFAULT_CODEBOOK: u64 = 5;

const DEFAULT_SWEEP_DISTANCE_M: f64 = 50.0;
const DEFAULT_SWEEP_TRIALS: usize = 5;
const DEFAULT_RANGE_TRIALS: usize = 200;
const DEFAULT_PD_TARGET: f64 = 0.9;
const DEFAULT_CODEBOOK_TAGS: usize = 4;
const READ_BLOCK: usize = 1 << 16;

fn load_codebook(path: &Path) -> CliResult<Codebook> {
    io::load_codebook(path).map_err(|e| CliError::usage(format!("codebook {}: {e}", path.display())))
}

fn codebook_or_default(ctx: &Ctx, path: Option<&Path>) -> CliResult<Codebook> {
    match path {
        Some(p) => load_codebook(p),
        None => Ok(build_codebook(
            DEFAULT_CODEBOOK_TAGS,
            seed::derive(ctx.seed, STREAM_DEFAULT_CODEBOOK),
            DEFAULT_THRESHOLD,
        )?),
    }
}

fn tag_index(codebook: &Codebook, tag: &str) -> CliResult<usize> {
    codebook
        .entries()
        .iter()
        .position(|e| e.tag_id == tag)
        .ok_or_else(|| CliError::usage(format!("tag {tag:?} is not in the codebook")))
}

/// Fails early when an output path cannot possibly be written.
fn check_output(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        return Err(CliError::usage(format!("{} is a directory", path.display())));
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::usage(format!("directory {} does not exist", parent.display())));
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    io::write_atomic(path, contents.as_bytes()).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn receiver_config(file: &FileConfig, detector: DetectorConfig, sample_rate: f64) -> ReceiverConfig {
    let mut rc = ReceiverConfig::new(detector);
    rc.sample_rate = sample_rate;
    if let Some(v) = file.squelch {
        rc.squelch = v;
    }
    if let Some(v) = file.fir {
        rc.fir = v;
    }
    if let Some(v) = file.gmsk {
        rc.gmsk = v;
    }
    if let Some(v) = file.timing {
        rc.timing = v;
    }
    if let Some(v) = file.dc_window {
        rc.dc_window = v;
    }
    if let Some(v) = file.smoothing_samples {
        rc.smoothing_samples = v;
    }
    rc
}

fn trial_config(file: &FileConfig, codebook: Codebook, threshold: Option<u32>) -> TrialConfig {
    let mut tc = TrialConfig::new(codebook.clone());
    if let Some(v) = file.gmsk {
        tc.gmsk = v;
    }
    if let Some(v) = file.burst {
        tc.shape = v;
    }
    if let Some(v) = file.budget {
        tc.budget = v;
    }
    if let Some(v) = file.pattern {
        tc.pattern = v;
    }
    if let Some(v) = file.impairments {
        tc.impairments = v;
    }
    if let Some(v) = file.noise_floor_dbfs {
        tc.noise_floor_dbfs = v;
    }
    let detector =
        DetectorConfig::new(codebook).with_threshold(threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD));
    tc.receiver = receiver_config(file, detector, tc.gmsk.sample_rate() * tc.receiver.fir.decimation as f64);
    tc
}

fn validate_sim(tc: &TrialConfig) -> CliResult<()> {
    tc.budget.validate()?;
    tc.pattern.validate()?;
    tc.receiver.validate()?;
    Ok(())
}

pub fn gen_codebook(ctx: &mut Ctx, a: &GenCodebookArgs) -> CliResult<()> {
    if a.tags == 0 {
        return Err(CliError::usage("--tags must be at least 1"));
    }
    check_output(&a.out)?;
    ctx.log(format!("searching for {} codes, max cross-correlation {}", a.tags, a.max_cross));
    let codebook = build_codebook(a.tags, ctx.seed, a.max_cross)?;
    write_file(&a.out, &codebook.to_json()?)?;
    ctx.log(format!("wrote {} tags to {}", codebook.len(), a.out.display()));
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    tags: usize,
    stated_max_cross: u32,
    measured_max_cross: u32,
    limit: u32,
    ok: bool,
}

pub fn verify_codebook(ctx: &mut Ctx, a: &VerifyCodebookArgs) -> CliResult<()> {
    let codebook = load_codebook(&a.codebook)?;
    let measured = codebook.recompute_max_cross()?;
    let limit = a.max_cross.unwrap_or(codebook.max_cross_correlation());
    let report = VerifyReport {
        tags: codebook.len(),
        stated_max_cross: codebook.max_cross_correlation(),
        measured_max_cross: measured,
        limit,
        ok: measured <= limit,
    };
    ctx.stdout.write_all(pretty(&report)?.as_bytes())?;
    if report.ok {
        Ok(())
    } else {
        Err(CliError::Domain(format!("measured cross-correlation {measured} exceeds {limit}")))
    }
}

pub fn tx(ctx: &mut Ctx, a: &TxArgs) -> CliResult<()> {
    let codebook = load_codebook(&a.codebook)?;
    let entry = &codebook.entries()[tag_index(&codebook, &a.tag)?];
    let tc = trial_config(&ctx.file, codebook.clone(), None);
    tc.budget.validate()?;
    tc.pattern.validate()?;
    tc.gmsk.validate()?;

    let mut params = ChannelParams::with_snr(f64::INFINITY, seed::derive(ctx.seed, STREAM_TX));
    params.drive = match (a.snr, a.distance) {
        (Some(snr), _) => Drive::Snr(snr),
        (None, Some(distance_m)) => Drive::Distance { distance_m, azimuth_deg: a.angle },
        (None, None) => return Err(CliError::usage("one of --snr or --distance is required")),
    };
    params.cfo_hz = a.cfo;
    params.phase_rad = a.phase;
    params.timing_offset_samples = a.timing_offset;
    params.clock_offset_ppm = a.clock_ppm;
    params.noise_floor_dbfs = a.noise_floor.unwrap_or(tc.noise_floor_dbfs);
    params.validate()?;
    check_output(&a.out)?;

    let snr_db = params.target_snr_db(&tc.budget, &tc.pattern)?;
    ctx.log(format!("tag {} at {snr_db:.2} dB SNR", entry.tag_id));
    let bits = flatten_to_bits(&entry.frame()?);
    let iq = transmit(&bits, &tc.gmsk, &tc.shape, &params, &tc.budget, &tc.pattern)?;
    let mut meta = SidecarMeta::new(
        iq.sample_rate(),
        tc.budget.frequency_hz - tc.shape.center_offset_hz,
        format!("tag {} frame", entry.tag_id),
    );
    meta.snr_db = snr_db.is_finite().then_some(snr_db);
    io::write_iq(&a.out, &iq, &meta)?;
    ctx.log(format!("wrote {} samples to {}", iq.len(), a.out.display()));
    Ok(())
}

pub fn rx(ctx: &mut Ctx, a: &RxArgs) -> CliResult<()> {
    let codebook = load_codebook(&a.codebook)?;
    let threshold = a.threshold.or(ctx.file.threshold).unwrap_or(DEFAULT_THRESHOLD);
    let sample_rate = match a.sample_rate {
        Some(r) => r,
        None => {
            io::read_sidecar(&a.input)
                .map_err(|e| {
                    CliError::usage(format!("no usable sidecar for {} ({e}); pass --sample-rate", a.input.display()))
                })?
                .sample_rate_hz
        }
    };
    let config = receiver_config(&ctx.file, DetectorConfig::new(codebook).with_threshold(threshold), sample_rate);
    config.validate()?;
    if let Some(out) = &a.out {
        check_output(out)?;
    }

    let mut reader =
        IqReader::open(&a.input, sample_rate).map_err(|e| CliError::usage(format!("{}: {e}", a.input.display())))?;
    let mut receiver = Receiver::new(&config)?;
    let mut events: Vec<DetectionEvent> = Vec::new();
    let mut lines = String::new();
    let mut emitted = 0;
    let mut emit = |ctx: &mut Ctx, events: &[DetectionEvent]| -> CliResult<()> {
        for e in &events[emitted..] {
            let line = e.to_json_line()? + "\n";
            ctx.stdout.write_all(line.as_bytes())?;
            lines.push_str(&line);
        }
        emitted = events.len();
        Ok(())
    };
    while let Some(block) = reader.read_block(READ_BLOCK)? {
        receiver.push(&block, &mut events);
        emit(ctx, &events)?;
    }
    receiver.finish(&mut events);
    emit(ctx, &events)?;
    ctx.log(format!("{} bits demodulated, {} detections", receiver.bits_demodulated(), events.len()));
    if let Some(out) = &a.out {
        write_file(out, &lines)?;
    }
    Ok(())
}

fn parse_angles(s: &str) -> CliResult<Vec<f64>> {
    if s.trim().is_empty() {
        return Err(CliError::usage("--angles is empty"));
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| CliError::usage(format!("bad angle {t:?}")))).collect()
}

fn sweep_plot_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("angle_deg,best_score,mean_score,detection_rate,mean_rssi_db\n");
    for p in points {
        let rssi = p.mean_rssi_db.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", p.angle_deg, p.best_score, p.mean_score, p.detection_rate, rssi);
    }
    s
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn sweep(ctx: &mut Ctx, a: &SweepArgs) -> CliResult<()> {
    let codebook = codebook_or_default(ctx, a.codebook.as_deref())?;
    let tag_index = match &a.tag {
        Some(t) => tag_index(&codebook, t)?,
        None => 0,
    };
    let tag_id = codebook.entries()[tag_index].tag_id.clone();
    let defaults = SweepConfig::default();
    let config = SweepConfig {
        angles_deg: match &a.angles {
            Some(s) => parse_angles(s)?,
            None => defaults.angles_deg,
        },
        distance_m: a.distance.unwrap_or(DEFAULT_SWEEP_DISTANCE_M),
        tag_azimuth_deg: a.tag_angle,
        trials_per_angle: a.trials.unwrap_or(DEFAULT_SWEEP_TRIALS),
        tag_index,
        rng_seed: seed::derive(ctx.seed, STREAM_SWEEP),
    };
    config.validate()?;
    let tc = trial_config(&ctx.file, codebook, a.threshold);
    validate_sim(&tc)?;
    let summary_path = a.summary.clone().unwrap_or_else(|| with_suffix(&a.out, ".json"));
    for p in [Some(&a.out), Some(&summary_path), a.plot_data.as_ref()].into_iter().flatten() {
        check_output(p)?;
    }
    if summary_path == a.out || a.plot_data.as_ref().is_some_and(|p| *p == a.out || *p == summary_path) {
        return Err(CliError::usage("sweep outputs must go to distinct files"));
    }

    ctx.log(format!(
        "sweeping {} angles, {} trials each, tag {tag_id} at {} deg, {} m",
        config.angles_deg.len(),
        config.trials_per_angle,
        config.tag_azimuth_deg,
        config.distance_m
    ));
    let runner = TrialRunner::new(tc)?;
    let result = run_sweep(&config, &runner)?;
    let summary = json!({
        "tag_id": tag_id,
        "tag_azimuth_deg": config.tag_azimuth_deg,
        "distance_m": config.distance_m,
        "trials_per_angle": config.trials_per_angle,
        "threshold": runner.config().receiver.detector.threshold,
        "points": result.points,
        "bearing": result.bearing,
    });
    write_file(&a.out, &result.to_csv())?;
    write_file(&summary_path, &pretty(&summary)?)?;
    if let Some(p) = &a.plot_data {
        write_file(p, &sweep_plot_csv(&result.points))?;
    }
    match result.bearing {
        Some(b) => {
            let line = json!({
                "bearing_deg": b.bearing_deg,
                "peak_angle_deg": b.peak_angle_deg,
                "method": b.method,
                "error_deg": b.bearing_deg - config.tag_azimuth_deg,
            });
            ctx.stdout.write_all((line.to_string() + "\n").as_bytes())?;
            Ok(())
        }
        None => Err(CliError::Domain("no detection at any sweep angle; bearing unavailable".into())),
    }
}

pub fn range(ctx: &mut Ctx, a: &RangeArgs) -> CliResult<()> {
    let config = RangeConfig {
        pd_target: a.pd_target.unwrap_or(DEFAULT_PD_TARGET),
        trials: a.trials.unwrap_or(DEFAULT_RANGE_TRIALS),
        snr_min_db: a.snr_min,
        snr_max_db: a.snr_max,
        snr_step_db: a.snr_step,
        seed: seed::derive(ctx.seed, STREAM_RANGE),
    };
    config.validate()?;
    let codebook = codebook_or_default(ctx, a.codebook.as_deref())?;
    let tc = trial_config(&ctx.file, codebook, a.threshold);
    validate_sim(&tc)?;
    for p in [a.out.as_ref(), a.plot_data.as_ref()].into_iter().flatten() {
        check_output(p)?;
    }

    ctx.log(format!("Pd curve over {}..{} dB, {} trials per bin", config.snr_min_db, config.snr_max_db, config.trials));
    let runner = TrialRunner::new(tc)?;
    let report = predict_range(&runner, &config)?;
    let text = pretty(&report)?;
    ctx.stdout.write_all(text.as_bytes())?;
    if let Some(p) = &a.out {
        write_file(p, &text)?;
    }
    if let Some(p) = &a.plot_data {
        let mut s = String::from("snr_db,trials,detections,pd\n");
        for q in &report.curve {
            let _ = writeln!(s, "{},{},{},{}", q.snr_db, q.trials, q.detections, q.pd);
        }
        write_file(p, &s)?;
    }
    ctx.log(format!("SNR* {:.2} dB, predicted range {:.0} m", report.snr_star_db, report.predicted_range_m));
    Ok(())
}

pub fn export_firmware(ctx: &mut Ctx, a: &ExportArgs) -> CliResult<()> {
    let codebook = load_codebook(&a.codebook)?;
    let entry = &codebook.entries()[tag_index(&codebook, &a.tag)?];
    if let Some(out) = &a.out {
        check_output(out)?;
    }
    let export = frame::export_firmware(&entry.frame()?);
    let text = match a.format {
        ExportFormat::Json => export.to_json()?,
        ExportFormat::CHeader => export.to_c_header(&entry.tag_id),
    };
    match &a.out {
        Some(p) => write_file(p, &text),
        None => Ok(ctx.stdout.write_all(text.as_bytes())?),
    }
}
