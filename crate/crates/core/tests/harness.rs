mod common;

use common::{greedy_reference, random_workload_spec, rng};
use npudraft::engine::DecodeStats;
use npudraft::harness::{
    generate_workload, levenshtein, levenshtein_norm, median, run_experiment, simulated_latency,
    CostModel, ExperimentConfig, RunReport, SpanKind, Variant, WorkloadSpec, VERIFY_COST_LEN1,
    VERIFY_COST_LEN32,
};
use npudraft::retrieval::RetrievalConfig;
use npudraft::{Error, TokenId};
use proptest::prelude::*;

fn spec(seed: u64, overlap: f64, synonym: f64, missing: f64) -> WorkloadSpec {
    WorkloadSpec {
        seed,
        num_tasks: 20,
        overlap_rate: overlap,
        synonym_rate: synonym,
        missing_rate: missing,
        ..Default::default()
    }
}

fn experiment(w: WorkloadSpec, variants: Vec<Variant>) -> ExperimentConfig {
    ExperimentConfig {
        workload: w,
        variants,
        ..Default::default()
    }
}

fn ids(v: &[u32]) -> Vec<TokenId> {
    v.iter().map(|&i| TokenId(i)).collect()
}

#[test]
fn references_are_greedy() {
    let wl = generate_workload(&spec(3, 0.3, 0.3, 0.2)).unwrap();
    for t in &wl.tasks {
        assert_eq!(
            t.reference,
            greedy_reference(&wl.lm, &t.prompt, t.reference.len())
        );
        assert_eq!(t.reference.last(), Some(&wl.lm.eos()));
    }
}

#[test]
fn synonym_spans_differ_from_reference() {
    let wl = generate_workload(&spec(5, 0.0, 1.0, 0.0)).unwrap();
    let mut seen = 0;
    for t in &wl.tasks {
        let text: Vec<TokenId> = t.context.iter().chain(&t.prompt).copied().collect();
        for s in t.spans.iter().filter(|s| s.kind == SpanKind::Synonym) {
            let a = &t.reference[s.reference.0..s.reference.1];
            let b = &text[s.context.0..s.context.1];
            assert!(levenshtein_norm(a, b) > 0.0);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn full_overlap_drafts_long() {
    let r = run_experiment(&experiment(spec(1, 1.0, 0.0, 0.0), vec![Variant::Plain])).unwrap();
    assert!(r.summary(Variant::Plain).unwrap().mean_acceptance_ratio > 4.0);
}

#[test]
fn no_overlap_stays_near_one() {
    let mut w = spec(2, 0.0, 0.0, 0.0);
    w.context_len = 16;
    let r = run_experiment(&experiment(w, vec![Variant::Plain])).unwrap();
    let acc = r.summary(Variant::Plain).unwrap().mean_acceptance_ratio;
    assert!((1.0..1.5).contains(&acc), "{acc}");
}

#[test]
fn saturated_table_is_reported() {
    let w = WorkloadSpec {
        num_tasks: 50,
        vocab_size: 4,
        order: 1,
        prompt_len: 1,
        target_len: 48,
        ..spec(0, 1.0, 0.0, 0.0)
    };
    assert!(matches!(generate_workload(&w), Err(Error::Config { .. })));
}

#[test]
fn cost_model_examples() {
    let cm = CostModel::default();
    assert_eq!(cm.verify_cost(1).unwrap(), VERIFY_COST_LEN1);
    assert!((cm.verify_cost(32).unwrap() - VERIFY_COST_LEN32).abs() < 1e-9);
    assert_eq!(cm.verify_cost(0).unwrap(), cm.verify_cost(1).unwrap());
    // 4.2 tokens per step at length 32.
    let stats = DecodeStats {
        steps: 10,
        tokens_out: 42,
        per_step_draft_lens: vec![32; 10],
        ..Default::default()
    };
    let ms = simulated_latency(&stats, &cm).unwrap();
    assert!((ms - 10.0 * (0.5 + 32.0 * VERIFY_COST_LEN32) / 42.0).abs() < 1e-9);
    // Step cost grows linearly in the draft-side constant.
    let bumped = CostModel {
        draft_cost_per_step: 2.5,
        ..CostModel::default()
    };
    let ms2 = simulated_latency(&stats, &bumped).unwrap();
    assert!((ms2 - ms - 10.0 * 2.0 / 42.0).abs() < 1e-9);
    assert!(simulated_latency(&DecodeStats::default(), &cm).is_err());
    // Empty drafts still pay a length-1 verification every step.
    let bare = DecodeStats {
        steps: 5,
        tokens_out: 5,
        per_step_draft_lens: vec![0; 5],
        ..Default::default()
    };
    let ms = simulated_latency(&bare, &cm).unwrap();
    assert!((ms - (cm.draft_cost_per_step + VERIFY_COST_LEN1)).abs() < 1e-9);
}

#[test]
fn cost_model_rejects_bad_tables() {
    assert!(CostModel::from_json_str(r#"{"verify_cost": []}"#).is_err());
    assert!(CostModel::from_json_str(r#"{"verify_cost": [1.0, 2.0]}"#).is_err());
    assert!(CostModel::from_json_str(r#"{"verify_cost": [2.0, 1.0]}"#).is_ok());
    assert!(CostModel::from_json_str(r#"{"verify_cost": [1e308, 1e308]}"#).is_err());
}

#[test]
fn levenshtein_examples() {
    assert_eq!(levenshtein(&ids(&[1, 2, 3]), &ids(&[1, 3])), 1);
    assert_eq!(levenshtein(&ids(&[]), &ids(&[4, 4])), 2);
    assert_eq!(levenshtein(&ids(&[1, 2]), &ids(&[2, 1])), 2);
    assert_eq!(levenshtein_norm(&ids(&[]), &ids(&[])), 0.0);
    assert_eq!(levenshtein_norm(&ids(&[7]), &ids(&[])), 1.0);
    assert!((levenshtein_norm(&ids(&[1, 2, 3]), &ids(&[1, 8, 3])) - 1.0 / 3.0).abs() < 1e-12);
    assert!((levenshtein_norm(&ids(&[1, 2, 3, 4]), &ids(&[1, 9, 3, 4])) - 0.25).abs() < 1e-12);
    assert_eq!(median(&[3, 1, 2]), 2.0);
    assert_eq!(median(&[1, 2, 3, 4]), 2.5);
}

#[test]
fn report_is_deterministic_and_lossless() {
    let cfg = experiment(spec(9, 0.3, 0.3, 0.2), Variant::ALL.to_vec());
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    for s in &a.summaries {
        assert_eq!(s.lossless_tasks, s.tasks, "{}", s.variant);
    }
    let back: RunReport = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(back, a);
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    assert_eq!(
        String::from_utf8(csv).unwrap().lines().count(),
        1 + a.tasks.len()
    );
}

#[test]
fn reuse_shifts_short_drafts_right() {
    let mut cfg = experiment(spec(4, 0.1, 0.4, 0.3), vec![Variant::Plain, Variant::Reuse]);
    cfg.engine.retrieval = RetrievalConfig {
        match_len_min: 2,
        ..Default::default()
    };
    let r = run_experiment(&cfg).unwrap();
    let plain = r.summary(Variant::Plain).unwrap().median_draft_len;
    let reuse = r.summary(Variant::Reuse).unwrap().median_draft_len;
    assert!(plain < 8.0, "{plain}");
    assert!(reuse > plain, "{reuse} vs {plain}");
}

#[test]
fn config_errors_name_the_key() {
    for (doc, key) in [
        (
            r#"{"workload": {"overlap_rate": 1.5}}"#,
            "workload.overlap_rate",
        ),
        (r#"{"workload": {"order": 0}}"#, "workload.order"),
        (
            r#"{"engine": {"target_draft_len": 0}}"#,
            "engine.target_draft_len",
        ),
        (r#"{"calibration": {"top_k": 0}}"#, "calibration.top_k"),
        (r#"{"variants": ["plain", "turbo"]}"#, "variants[1]"),
        (r#"{"variants": []}"#, "variants"),
        (
            r#"{"engine": {"target_draft_len": 65}}"#,
            "cost.verify_cost",
        ),
    ] {
        match ExperimentConfig::from_json_str(doc) {
            Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{doc}"),
            other => panic!("{doc}: expected config error, got {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_workloads_decode_losslessly(seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = random_workload_spec(&mut r);
        let wl = match generate_workload(&w) {
            Err(Error::Config { key, .. }) if key == "workload" => return Ok(()),
            other => other.unwrap(),
        };
        prop_assert_eq!(wl.tasks.len(), w.num_tasks);
        for t in &wl.tasks {
            prop_assert_eq!(&t.reference, &greedy_reference(&wl.lm, &t.prompt, t.reference.len()));
        }
        let cfg = experiment(w, Variant::ALL.to_vec());
        let report = npudraft::harness::run_on_workload(&cfg, &wl).unwrap();
        for s in &report.summaries {
            prop_assert_eq!(s.lossless_tasks, s.tasks);
            prop_assert!(s.mean_acceptance_ratio >= 1.0);
        }
    }
}

#[test]
fn vanilla_accepts_exactly_one_token() {
    let r = run_experiment(&experiment(spec(5, 0.3, 0.3, 0.2), vec![Variant::Vanilla])).unwrap();
    assert!(r.rows(Variant::Vanilla).all(|t| t.acceptance_ratio == 1.0));
}

#[test]
fn missing_heavy_workload_favors_reuse_on_top_of_calibration() {
    let mut w = spec(6, 0.2, 0.0, 0.6);
    w.num_tasks = 60;
    let r = run_experiment(&experiment(w, vec![Variant::Calibration, Variant::Full])).unwrap();
    let cal = r.summary(Variant::Calibration).unwrap().mean_draft_len;
    let full = r.summary(Variant::Full).unwrap().mean_draft_len;
    assert!(full > cal, "full {full} calibration {cal}");
}
