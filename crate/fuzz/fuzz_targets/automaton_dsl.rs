//! Feeds arbitrary text to the automaton parser. Accepted models must be
//! valid and must survive a print and reparse unchanged.

#![no_main]

use hyconf::{parse_automaton, print_automaton};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = parse_automaton(text) {
        let printed = print_automaton(&model);
        let reparsed = parse_automaton(&printed).expect("printed model parses");
        assert_eq!(model, reparsed, "printing changed the model:\n{printed}");
    }
});
