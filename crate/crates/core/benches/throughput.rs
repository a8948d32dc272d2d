//! Benchmarks for the data-parallel batch paths: a batch of reference-buck
//! simulations with feature reads, evaluated sequentially and (with the
//! default `parallel` feature) on the rayon worker pool, plus the raw
//! waveform reader on its own.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion, SamplingMode};

use spicedeck_core::engine::{parse_raw, run_reference_buck, write_raw, BuckParams, TransientSpec};
use spicedeck_core::measure::{read_feature, MeasurementKind};

fn batch_params(n: usize) -> Vec<BuckParams> {
    (0..n)
        .map(|i| BuckParams {
            v_in: 12.0,
            inductance: (4.0 + i as f64) * 1e-6,
            capacitance: 100e-6,
            load: 6.0,
            switching_frequency: 500e3,
            duty: 0.3 + 0.04 * (i % 10) as f64,
            esr: 0.0,
        })
        .collect()
}

fn simulate_and_read(p: &BuckParams) -> (f64, f64) {
    let spec = TransientSpec {
        t_stop: 100.0 / p.switching_frequency,
        t_step_hint: 0.0,
        t_start_record: 75.0 / p.switching_frequency,
    };
    let ds = run_reference_buck(p, &spec).expect("simulation");
    let mean = read_feature(&ds, "V(out)", MeasurementKind::Mean).expect("mean");
    let ripple = read_feature(&ds, "I(L)", MeasurementKind::Ripple).expect("ripple");
    (mean.value, ripple.value)
}

fn bench_simulation_batch(c: &mut Criterion) {
    let params = batch_params(16);
    let mut group = c.benchmark_group("buck_batch_16");
    group
        .sampling_mode(SamplingMode::Flat)
        .sample_size(10)
        .warm_up_time(Duration::from_millis(500));

    group.bench_function("sequential", |b| {
        b.iter(|| {
            let results: Vec<(f64, f64)> = params
                .iter()
                .map(|p| simulate_and_read(black_box(p)))
                .collect();
            black_box(results)
        })
    });

    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        use rayon::prelude::*;
        b.iter(|| {
            let results: Vec<(f64, f64)> = params
                .par_iter()
                .map(|p| simulate_and_read(black_box(p)))
                .collect();
            black_box(results)
        })
    });

    group.finish();
}

fn bench_raw_reader(c: &mut Criterion) {
    let p = batch_params(1)[0];
    let spec = TransientSpec {
        t_stop: 400.0 / p.switching_frequency,
        t_step_hint: 0.0,
        t_start_record: 0.0,
    };
    let dataset = run_reference_buck(&p, &spec).expect("simulation");
    let bytes = write_raw(&dataset);

    let mut group = c.benchmark_group("raw_reader");
    group.throughput(criterion::Throughput::Bytes(bytes.len() as u64));
    group.bench_function("parse_binary", |b| {
        b.iter(|| black_box(parse_raw(black_box(&bytes)).expect("parse")))
    });
    group.finish();
}

criterion_group!(benches, bench_simulation_batch, bench_raw_reader);
criterion_main!(benches);
