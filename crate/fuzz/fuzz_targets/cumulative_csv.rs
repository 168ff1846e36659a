#![no_main]

use libfuzzer_sys::fuzz_target;
use netsir::dataio::{decompose_sir, parse_cumulative_csv};

fuzz_target!(|data: &[u8]| {
    // Rejections are fine; panics are not.
    let Ok(series) = parse_cumulative_csv(data, &[1000, 2000]) else {
        return;
    };
    for window in [1, 15] {
        if let Ok(smoothed) = series.smoothed(window) {
            let _ = decompose_sir(&smoothed, 14);
        }
    }
});
