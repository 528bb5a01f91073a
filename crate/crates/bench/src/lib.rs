//! Criterion benchmarks for the hot paths: diagonalisation, propagation
//! and the Monte Carlo readout loop.

use criterion::{BatchSize, Criterion};
use std::hint::black_box;
use trispin::dynamics::{propagate, PulseSequence, Segment};
use trispin::experiments::{initial_state, measure_populations, GaugePolicy, NoiseEnv};
use trispin::hamiltonian::{build_hamiltonian, eigensystem, ExchangeConfig, LocalFields};
use trispin::noise::HyperfineModel;

fn fields() -> LocalFields {
    LocalFields {
        b: [[0.05, -0.02, 0.11], [-0.07, 0.03, 0.01], [0.02, 0.09, -0.04]],
    }
}

/// A 1-J, 3-J, 1-J sequence with local fields on every segment.
pub fn sequence() -> PulseSequence {
    let cfgs = [
        ExchangeConfig::new(20.0, 0.0, 0.0, 1.0).unwrap(),
        ExchangeConfig::equal(50.0, 1.0).unwrap(),
        ExchangeConfig::new(0.0, 20.0, 0.0, 1.0).unwrap(),
    ];
    let segs = cfgs
        .iter()
        .map(|&config| Segment {
            config,
            fields: fields(),
            duration_us: 0.02,
        })
        .collect();
    PulseSequence::new(segs).unwrap()
}

pub fn benchmarks(c: &mut Criterion) {
    let h = build_hamiltonian(&ExchangeConfig::new(30.0, 40.0, 50.0, 2.0).unwrap(), &fields()).unwrap();
    c.bench_function("eigensystem", |b| b.iter(|| eigensystem(black_box(&h)).unwrap()));

    let seq = sequence();
    let rho0 = initial_state(1.0, GaugePolicy::EqualMixture);
    c.bench_function("propagate_3_segments", |b| b.iter(|| propagate(black_box(&seq), &rho0).unwrap()));

    let env = NoiseEnv {
        hyperfine: HyperfineModel::quasi_static(0.09),
        ..NoiseEnv::noiseless()
    };
    let mut group = c.benchmark_group("measure_populations");
    group.sample_size(20);
    group.bench_function("100_shots", |b| {
        b.iter_batched(|| 7u64, |seed| measure_populations(&seq, &rho0, &env, 100, seed).unwrap(), BatchSize::SmallInput)
    });
    group.finish();
}
