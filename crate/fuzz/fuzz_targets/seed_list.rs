#![no_main]

use libfuzzer_sys::fuzz_target;
use mab_uplink::parse_seed_list;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(seeds) = parse_seed_list(text) {
        assert!(!seeds.is_empty());
        assert!(seeds.iter().all(|&s| s <= i64::MAX as u64));
    }
});
