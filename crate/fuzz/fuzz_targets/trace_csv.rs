//! Feeds arbitrary text to the trace reader. Accepted traces are already in
//! canonical form, so writing and re-reading them must be the identity.

#![no_main]

use hyconf::{read_trace, write_trace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = read_trace(text) {
        let written = write_trace(&trace);
        let reread = read_trace(&written).expect("written trace reads back");
        assert_eq!(trace, reread, "rewriting changed the trace:\n{written}");
    }
});
