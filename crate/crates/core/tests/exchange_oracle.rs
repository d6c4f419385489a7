mod common;

use common::cases::density_ratio_spread;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn pga_factor_is_window_over_priors() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for m in 1..=3 {
        for _ in 0..30 {
            let spread = density_ratio_spread(&mut rng, m);
            assert!(spread < 1e-8, "m={m} spread={spread:e}");
        }
    }
}
