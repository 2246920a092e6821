use safetune_web::{freeze_plan, lcs_alignment, score_texts};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn identical_texts_score_100() {
    let v = parse(&score_texts("The van left the road.", "The van left the road.").unwrap());
    assert_eq!(v["bleu"], 100.0);
    assert_eq!(v["rouge1"]["f1"], 100.0);
    assert!((v["bert"]["f1"].as_f64().unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn empty_reference_is_rejected() {
    assert!(score_texts("a", "  ").is_err());
}

#[test]
fn alignment_matches_lcs_length() {
    let v = parse(&lcs_alignment("police stopped the car", "the police stopped a red car"));
    let pairs = v["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 3);
    let cand = v["candidate"].as_array().unwrap();
    let refs = v["reference"].as_array().unwrap();
    let mut last = (-1i64, -1i64);
    for p in pairs {
        let (i, j) = (p[0].as_u64().unwrap() as usize, p[1].as_u64().unwrap() as usize);
        assert_eq!(cand[i], refs[j]);
        assert!(i as i64 > last.0 && j as i64 > last.1);
        last = (i as i64, j as i64);
    }
}

#[test]
fn alignment_of_empty_text_is_empty() {
    let v = parse(&lcs_alignment("", "a b"));
    assert!(v["pairs"].as_array().unwrap().is_empty());
}

#[test]
fn plan_keeps_last_blocks_trainable() {
    let v = parse(&freeze_plan(32, 2, false, false).unwrap());
    assert_eq!(v["plan"]["trainable"], serde_json::json!(["block.30", "block.31"]));
    assert_eq!(v["plan"]["frozen"].as_array().unwrap().len(), 32);
    assert_eq!(v["config"]["batch_size"], 16);
    assert!(freeze_plan(4, 0, false, false).is_err());
}
