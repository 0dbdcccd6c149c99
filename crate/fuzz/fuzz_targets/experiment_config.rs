#![no_main]

use libfuzzer_sys::fuzz_target;
use pgop_core::experiments::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_json_str(text) {
        let again = ExperimentConfig::from_json_str(&config.to_json().unwrap()).unwrap();
        assert_eq!(again, config);
    }
});
