use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pntag_core::channel::{apply_channel, ChannelParams};
use pntag_core::frame::flatten_to_bits;
use pntag_core::modem::gmsk_modulate;
use pntag_core::pncode::BitSequence;
use pntag_core::rx::{run_receiver, ReceiverConfig, SlidingCorrelator};
use pntag_core::sim::{clean_burst, BurstShape};
use pntag_core::{build_codebook, seed, AntennaPattern, DetectorConfig, GmskParams, LinkBudget, DEFAULT_THRESHOLD};

fn random_bits(n: usize) -> BitSequence {
    BitSequence::from_bools((0..n).map(|i| seed::derive(11, i as u64) & 1 == 1))
}

fn correlator(c: &mut Criterion) {
    let bits = random_bits(100_000);
    let mut g = c.benchmark_group("correlator");
    g.throughput(Throughput::Elements(bits.len() as u64));
    for tags in [1, 8, 32] {
        let book = build_codebook(tags, 3, DEFAULT_THRESHOLD).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(tags), &book, |b, book| {
            b.iter(|| {
                let mut corr = SlidingCorrelator::new(book, DEFAULT_THRESHOLD, 280).unwrap();
                let mut hits = Vec::new();
                for &bit in bits.as_slice() {
                    corr.push(bit, &mut hits);
                }
                black_box(hits.len())
            })
        });
    }
    g.finish();
}

fn modulator(c: &mut Criterion) {
    let bits = random_bits(280);
    let gmsk = GmskParams::default();
    let mut g = c.benchmark_group("modulator");
    g.throughput(Throughput::Elements(bits.len() as u64));
    g.bench_function("frame", |b| b.iter(|| gmsk_modulate(black_box(&bits), &gmsk, gmsk.sample_rate()).unwrap()));
    g.finish();
}

fn receiver(c: &mut Criterion) {
    let book = build_codebook(4, 3, DEFAULT_THRESHOLD).unwrap();
    let frame = book.entries()[0].frame().unwrap();
    let (clean, _) = clean_burst(&flatten_to_bits(&frame), &GmskParams::default(), &BurstShape::default()).unwrap();
    let noisy =
        apply_channel(&clean, &ChannelParams::with_snr(15.0, 1), &LinkBudget::default(), &AntennaPattern::default())
            .unwrap();
    let config = ReceiverConfig::new(DetectorConfig::new(book));
    let mut g = c.benchmark_group("receiver");
    g.throughput(Throughput::Elements(noisy.len() as u64));
    g.bench_function("frame_15db", |b| b.iter(|| run_receiver(black_box(&noisy), &config).unwrap()));
    g.finish();
}

criterion_group!(benches, correlator, modulator, receiver);
criterion_main!(benches);
