#![no_main]

use libfuzzer_sys::fuzz_target;
use netsir::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scenario) = Scenario::from_json(text) {
        let _ = scenario.params();
        let _ = scenario.initial_fractions();
    }
});
