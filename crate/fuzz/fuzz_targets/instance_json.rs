#![no_main]

use libfuzzer_sys::fuzz_target;
use npudraft::scheduler::{greedy_schedule, simulate, synchronous_plan, ScheduleInstance};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(inst) = ScheduleInstance::from_json_str(s) else {
        return;
    };
    if inst.num_slots() > 4096 {
        return;
    }
    let (Ok(sync), Ok(greedy)) = (
        simulate(&inst, &synchronous_plan(&inst)),
        simulate(&inst, &greedy_schedule(&inst)),
    ) else {
        return;
    };
    assert!(greedy.overall <= sync.overall);
});
