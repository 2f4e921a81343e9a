#![no_main]

use libfuzzer_sys::fuzz_target;
use mab_uplink::metrics::{read_window_table, write_window_table};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_window_table(data) else { return };
    for w in &rows {
        assert!(w.successes <= w.attempts);
        assert!((0.0..=1.0).contains(&w.s_tx));
    }
    let mut buf = Vec::new();
    write_window_table(&mut buf, &rows).expect("rows serialise");
    let back = read_window_table(&buf[..]).expect("own output parses");
    assert_eq!(back.len(), rows.len());
});
