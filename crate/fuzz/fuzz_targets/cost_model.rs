#![no_main]

use libfuzzer_sys::fuzz_target;
use npudraft::harness::CostModel;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cm) = CostModel::from_json_str(s) else {
        return;
    };
    for len in 0..=cm.verify_cost.len() {
        let cost = cm.step_cost(len).unwrap();
        assert!(cost.is_finite() && cost >= 0.0, "{cost}");
    }
});
