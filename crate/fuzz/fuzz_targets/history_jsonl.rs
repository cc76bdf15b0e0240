#![no_main]

use libfuzzer_sys::fuzz_target;
use npudraft::retrieval::DraftStore;
use npudraft::{TokenId, Vocab};

fuzz_target!(|data: &[u8]| {
    let vocab = Vocab::new(["</s>", "a", "b", "c", "the", "cat"]).unwrap();
    let text = [TokenId(1), TokenId(2), TokenId(3)];
    let mut store = DraftStore::new(&text);
    let _ = store.load_history(data, &vocab);
});
