//! Replays the checked-in fuzz corpus on stable, with the same checks as the
//! fuzz targets.

use std::fs;
use std::path::PathBuf;

use npudraft::harness::{CostModel, ExperimentConfig};
use npudraft::lm::read_corpus_jsonl;
use npudraft::retrieval::DraftStore;
use npudraft::scheduler::{greedy_schedule, simulate, synchronous_plan, ScheduleInstance};
use npudraft::{TableLm, TokenId, Vocab};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn text(data: &[u8]) -> &str {
    std::str::from_utf8(data).unwrap()
}

#[test]
fn lm_json_seeds() {
    let mut parsed = 0;
    for data in seeds("lm_json") {
        let Ok(lm) = TableLm::from_json_str(text(&data)) else {
            continue;
        };
        let doc = serde_json::to_string(&lm.to_document()).unwrap();
        assert_eq!(
            TableLm::from_json_str(&doc).unwrap().to_document(),
            lm.to_document()
        );
        parsed += 1;
    }
    assert_eq!(parsed, 2);
}

#[test]
fn corpus_jsonl_seeds() {
    let ok: Vec<bool> = seeds("corpus_jsonl")
        .iter()
        .map(|d| read_corpus_jsonl(&d[..]).is_ok_and(|docs| TableLm::from_corpus(docs, 2).is_ok()))
        .collect();
    assert_eq!(ok, [false, true]);
}

#[test]
fn history_jsonl_seeds() {
    let vocab = Vocab::new(["</s>", "a", "b", "c", "the", "cat"]).unwrap();
    let loaded: Vec<_> = seeds("history_jsonl")
        .iter()
        .map(|d| {
            DraftStore::new(&[TokenId(1), TokenId(2)])
                .load_history(&d[..], &vocab)
                .ok()
        })
        .collect();
    assert_eq!(loaded, [Some(2), None]);
}

#[test]
fn instance_json_seeds() {
    for data in seeds("instance_json") {
        let Ok(inst) = ScheduleInstance::from_json_str(text(&data)) else {
            continue;
        };
        let (Ok(sync), Ok(greedy)) = (
            simulate(&inst, &synchronous_plan(&inst)),
            simulate(&inst, &greedy_schedule(&inst)),
        ) else {
            continue;
        };
        assert!(greedy.overall <= sync.overall);
    }
}

#[test]
fn experiment_config_seeds() {
    let ok: Vec<bool> = seeds("experiment_config")
        .iter()
        .map(|d| ExperimentConfig::from_json_str(text(d)).is_ok())
        .collect();
    assert_eq!(ok, [false, true, true]);
}

#[test]
fn cost_model_seeds() {
    let mut parsed = 0;
    for data in seeds("cost_model") {
        let Ok(cm) = CostModel::from_json_str(text(&data)) else {
            continue;
        };
        for len in 0..=cm.verify_cost.len() {
            let c = cm.step_cost(len).unwrap();
            assert!(c.is_finite() && c >= 0.0);
        }
        parsed += 1;
    }
    assert_eq!(parsed, 2);
}
