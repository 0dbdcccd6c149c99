#![no_main]

use libfuzzer_sys::fuzz_target;
use pgop_core::bounds::{read_landscape_csv, write_landscape_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_landscape_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_landscape_csv(&rows, &mut buf).unwrap();
    let again = read_landscape_csv(&buf[..]).unwrap();
    assert_eq!(again.len(), rows.len());
});
