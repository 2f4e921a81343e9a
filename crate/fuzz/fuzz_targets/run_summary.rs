#![no_main]

use libfuzzer_sys::fuzz_target;
use mab_uplink::metrics::RunSummary;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(summary) = RunSummary::from_json(text) else { return };
    if let Ok(json) = summary.to_json() {
        let _ = RunSummary::from_json(&json);
    }
});
