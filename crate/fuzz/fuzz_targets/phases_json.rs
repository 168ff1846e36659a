#![no_main]

use libfuzzer_sys::fuzz_target;
use netsir::phase::PhaseReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = serde_json::from_slice::<PhaseReport>(data) {
        let text = serde_json::to_string(&report).expect("report serializes");
        let _: PhaseReport = serde_json::from_str(&text).expect("serialized report parses");
    }
});
