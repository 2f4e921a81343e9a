#![no_main]

use libfuzzer_sys::fuzz_target;
use mab_uplink::SweepSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = SweepSpec::from_toml_str(text) else { return };
    if spec.validate().is_err() {
        return;
    }
    let again = spec.to_toml_string().expect("valid specs serialise");
    assert_eq!(SweepSpec::from_toml_str(&again).expect("own output parses"), spec);
    let _ = spec.cells();
});
