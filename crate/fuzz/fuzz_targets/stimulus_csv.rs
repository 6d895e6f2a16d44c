//! Feeds arbitrary text to the stimulus reader. Accepted stimuli must
//! survive a write and re-read unchanged under the same horizon.

#![no_main]

use hyconf::{read_stimulus, write_stimulus};
use libfuzzer_sys::fuzz_target;

// Wide enough that the horizon itself never rejects a parsed schedule.
const HORIZON: f64 = 1e9;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(stim) = read_stimulus(text, HORIZON) {
        let written = write_stimulus(&stim);
        let reread = read_stimulus(&written, HORIZON).expect("written stimulus reads back");
        assert_eq!(stim, reread, "rewriting changed the stimulus:\n{written}");
    }
});
