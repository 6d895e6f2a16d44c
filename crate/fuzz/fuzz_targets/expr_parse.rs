//! Feeds arbitrary text to the expression and predicate parsers. Accepted
//! inputs must survive a print and reparse unchanged.

#![no_main]

use hyconf::{Expr, Predicate};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(expr) = Expr::parse(text) {
        let printed = expr.to_string();
        let reparsed = Expr::parse(&printed).expect("printed expression parses");
        assert_eq!(expr, reparsed, "printing `{printed}` changed the expression");
    }
    if let Ok(pred) = Predicate::parse(text) {
        let printed = pred.to_string();
        let reparsed = Predicate::parse(&printed).expect("printed predicate parses");
        assert_eq!(pred, reparsed, "printing `{printed}` changed the predicate");
    }
});
