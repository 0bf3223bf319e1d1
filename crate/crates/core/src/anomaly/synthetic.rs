use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;

/// Column order. The first four line up with `FlowFeatures::as_row`; the
/// last two are drawn identically for both classes.
pub const SYNTHETIC_FEATURES: [&str; 6] = [
    "packet_rate",
    "byte_rate",
    "flag_entropy",
    "duration_s",
    "ttl_mean",
    "window_size",
];

/// Balanced benign/attack flow features. Attack rows come from a shifted
/// distribution: high packet rate, small packets, low flag entropy, short
/// lifetime. Row `i` is an attack when `i` is odd.
pub fn synthetic_flows(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let attack = i % 2 == 1;
        let (rate, bytes_per_pkt, entropy, duration) = if attack {
            (
                rng.gen_range(200.0..2000.0),
                rng.gen_range(40.0..120.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.1..10.0),
            )
        } else {
            (
                rng.gen_range(1.0..50.0),
                rng.gen_range(200.0..1200.0),
                rng.gen_range(0.5..2.5),
                rng.gen_range(1.0..120.0),
            )
        };
        let ttl = rng.gen_range(32.0..128.0);
        let window = rng.gen_range(1024.0..65535.0);
        rows.push(vec![rate, rate * bytes_per_pkt, entropy, duration, ttl, window]);
        labels.push(u8::from(attack));
    }
    Dataset::new(
        SYNTHETIC_FEATURES.iter().map(|s| s.to_string()).collect(),
        rows,
        labels,
    )
    .expect("generator output is well formed")
}
