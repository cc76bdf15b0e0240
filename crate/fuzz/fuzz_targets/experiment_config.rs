#![no_main]

use libfuzzer_sys::fuzz_target;
use npudraft::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let _ = ExperimentConfig::from_json_str(s);
});
