#![no_main]

use libfuzzer_sys::fuzz_target;
use mab_uplink::experiments::FigurePreset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(fig) = FigurePreset::from_toml_str(text) else { return };
    let again = fig.to_toml_string().expect("figure presets serialise");
    assert_eq!(FigurePreset::from_toml_str(&again).expect("own output parses"), fig);
});
