//! Benchmark fixtures shared by the criterion benches.

use hankel_doa::array::{generate_dataset, random_sla, ArrayConfig, DatasetSpec, Sample};
use hankel_doa::net::NetParams;
use hankel_doa::train::TrainData;
use hankel_doa::ResidualMode;

/// 21-element ULA with a seeded 18-element SLA.
pub fn desk_array() -> ArrayConfig {
    random_sla(21, 18, 0.5, 7).expect("valid SLA")
}

pub fn samples(array: &ArrayConfig, count: usize, snr_db: f64) -> Vec<Sample> {
    let spec = DatasetSpec {
        count,
        p: 2,
        snr_range_db: [snr_db; 2],
        seed: 1,
        min_separation_deg: 0.0,
    };
    generate_dataset(array, &spec).expect("valid spec")
}

pub fn batch(array: &ArrayConfig, count: usize) -> TrainData {
    TrainData::from_samples(&samples(array, count, 20.0), array.m()).expect("non-empty")
}

pub fn network(array: &ArrayConfig, k_phases: usize) -> NetParams {
    NetParams::init(array, k_phases, ResidualMode::Masked, 3)
}
