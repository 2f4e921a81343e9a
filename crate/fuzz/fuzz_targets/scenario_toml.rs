#![no_main]

use libfuzzer_sys::fuzz_target;
use mab_uplink::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ScenarioConfig::from_toml_str(text) else { return };
    if cfg.validate().is_err() {
        return;
    }
    let again = cfg.to_toml_string().expect("valid configs serialise");
    let back = ScenarioConfig::from_toml_str(&again).expect("own output parses");
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
});
