#![no_main]

use libfuzzer_sys::fuzz_target;
use pgop_core::SoftmaxPolicy;

fuzz_target!(|data: &[u8]| {
    let Ok(policy) = serde_json::from_slice::<SoftmaxPolicy>(data) else {
        return;
    };
    if policy.n_states() * policy.n_actions() <= 1 << 16 {
        let table = policy.table();
        for s in 0..policy.n_states() {
            let sum: f64 = table.row(s).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
});
