#![no_main]

use libfuzzer_sys::fuzz_target;
use probplan::cnf::{parse_wdimacs, write_wdimacs};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cnf) = parse_wdimacs(s) {
            let _ = parse_wdimacs(&write_wdimacs(&cnf)).expect("printed formula parses");
        }
    }
});
