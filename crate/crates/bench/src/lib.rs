//! Seeded synthetic inputs for the criterion benches.

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmrank_core::{
    default_taxonomy, AttributeMeasurement, BenchmarkDataset, ContainerSpec, CpuMode, DatasetRole,
    Polarity,
};

/// A complete dataset of `vms` VMs over the whole default taxonomy.
pub fn dataset(vms: usize, seed: u64) -> BenchmarkDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ContainerSpec::new(100, CpuMode::SingleCore).unwrap();
    let at = Utc.with_ymd_and_hms(2015, 6, 1, 0, 0, 0).unwrap();
    let mut ds = BenchmarkDataset::new(
        format!("bench-{seed}").into(),
        DatasetRole::Current,
        spec.clone(),
    );
    for def in default_taxonomy().iter() {
        let base = match def.polarity {
            Polarity::HigherBetter => 5_000.0,
            Polarity::LowerBetter => 40.0,
        };
        for i in 0..vms {
            ds.insert(AttributeMeasurement {
                vm_id: format!("vm-{i:04}"),
                attribute_key: def.key.clone(),
                value: base * rng.random_range(0.5..2.0),
                unit: def.unit.clone(),
                container: spec.clone(),
                captured_at: at,
            })
            .unwrap();
        }
    }
    ds
}

/// Two equally long rank vectors with some agreement between them.
pub fn rank_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (1..=n).map(|r| r as f64).collect();
    let b = a
        .iter()
        .map(|r| (r + rng.random_range(-3.0..3.0)).round().max(1.0))
        .collect();
    (a, b)
}
