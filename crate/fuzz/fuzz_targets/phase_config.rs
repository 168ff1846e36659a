#![no_main]

use libfuzzer_sys::fuzz_target;
use netsir::phase::PhaseConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<PhaseConfig>(data) {
        let _ = cfg.validate();
    }
});
