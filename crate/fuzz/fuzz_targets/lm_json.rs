#![no_main]

use libfuzzer_sys::fuzz_target;
use npudraft::TableLm;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(lm) = TableLm::from_json_str(s) else {
        return;
    };
    // Whatever parses must survive its own serialization.
    let doc = serde_json::to_string(&lm.to_document()).unwrap();
    let back = TableLm::from_json_str(&doc).unwrap();
    assert_eq!(back.to_document(), lm.to_document());
});
