#![no_main]

use libfuzzer_sys::fuzz_target;
use pgop_core::experiments::run::{read_curve_csv, write_curve_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_curve_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_curve_csv(&rows, &mut buf).unwrap();
    let again = read_curve_csv(&buf[..]).unwrap();
    assert_eq!(again.len(), rows.len());
});
