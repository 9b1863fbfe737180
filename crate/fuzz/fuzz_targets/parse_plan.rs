#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use probplan::task::{parse_plan, parse_task, PlanningTask};

static TASK: OnceLock<PlanningTask> = OnceLock::new();

fuzz_target!(|data: &[u8]| {
    let task = TASK.get_or_init(|| parse_task(include_str!("../corpus/parse_task/running.task")).unwrap());
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_plan(task, s);
    }
});
