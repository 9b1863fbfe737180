#![no_main]

use libfuzzer_sys::fuzz_target;
use probplan::task::{parse_task, write_task};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(task) = parse_task(s) {
            // A parsed task must survive its own printout.
            let text = write_task(&task);
            let again = parse_task(&text).expect("printed task parses");
            assert_eq!(write_task(&again), text);
        }
    }
});
