#![no_main]

use libfuzzer_sys::fuzz_target;
use pgop_core::experiments::sweep::SweepConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sweep) = SweepConfig::from_json_str(text) {
        sweep.base_config().expect("parsed sweeps have a base");
    }
});
