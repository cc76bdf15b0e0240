#![no_main]

use libfuzzer_sys::fuzz_target;
use npudraft::lm::read_corpus_jsonl;
use npudraft::TableLm;

fuzz_target!(|data: &[u8]| {
    let Ok(docs) = read_corpus_jsonl(data) else {
        return;
    };
    let _ = TableLm::from_corpus(docs, 2);
});
