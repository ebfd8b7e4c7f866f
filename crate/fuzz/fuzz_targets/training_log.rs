#![no_main]
use crowdnav::io::{format_log, parse_log};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(rows) = parse_log(text) else { return };
    // NaN columns rule out comparing rows; compare the canonical text.
    let once = format_log(&rows);
    assert_eq!(format_log(&parse_log(&once).unwrap()), once);
});
