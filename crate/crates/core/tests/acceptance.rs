//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test -p safetune --test acceptance`.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;
use safetune::dataset::{self, InstructionRecord, Provenance, RecordDefaults, SourceTag, TaskType};
use safetune::eval::{self, render_report, EvalOptions, ReportFormat};
use safetune::generate::endpoint::{CallContext, ScriptedEndpoint};
use safetune::generate::{generate_dataset, ChatRequest, Dispatcher, GenerateError, GenerationConfig};
use safetune::metrics::providers::{HashEmbedder, OneHotEmbedder};
use safetune::metrics::{self, bleu, embed_sequence, rouge_l, rouge_n, BleuConfig, MetricConfig};
use safetune::retry::{RecordingSleeper, RemoteError, RetryPolicy};
use safetune::text_norm::{Token, TokenSequence};
use safetune::train_plan::{
    checksum_hex, emit_config, plan_freeze, verify_freeze, FreezePolicy, FreezeStatus, LayerManifest,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn to_seq(s: &[u8]) -> TokenSequence {
    TokenSequence::from_words(s.iter().map(|c| ((b'a' + c) as char).to_string())).unwrap()
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let seqs = all_sequences(3, 6);
    let tokens: Vec<TokenSequence> = seqs.iter().map(|s| to_seq(s)).collect();
    let keys: Vec<Vec<u32>> = seqs.iter().map(|s| subsequence_keys(s)).collect();
    let key_sets: Vec<HashSet<u32>> = keys.iter().map(|k| k.iter().copied().collect()).collect();
    let unsmoothed = BleuConfig::unsmoothed(4);
    let pairs = (1..seqs.len())
        .into_par_iter()
        .map(|ri| -> Result<usize, String> {
            let (r, rt) = (&seqs[ri], &tokens[ri]);
            for (ci, (c, ct)) in seqs.iter().zip(&tokens).enumerate() {
                let got = bleu(ct, rt, &unsmoothed).unwrap();
                let want = bleu_oracle(c, r, 4);
                ensure!(close(got, want), "bleu {c:?} vs {r:?}: {got} != {want}");
                for n in 1..=2 {
                    let got = rouge_n(ct, rt, n).unwrap();
                    let (p, rc, f) = rouge_n_oracle(c, r, n);
                    ensure!(
                        close(got.precision, p) && close(got.recall, rc) && close(got.f1, f),
                        "rouge-{n} {c:?} vs {r:?}: {got:?}"
                    );
                }
                let got = rouge_l(ct, rt);
                let (p, rc, f) = prf(lcs_from_keys(&keys[ci], &key_sets[ri]), c.len(), r.len());
                ensure!(
                    close(got.precision, p) && close(got.recall, rc) && close(got.f1, f),
                    "rouge-l {c:?} vs {r:?}: {got:?}"
                );
            }
            Ok(seqs.len())
        })
        .collect::<Result<Vec<usize>, String>>()?
        .into_iter()
        .sum::<usize>();

    // Longer sequences for the LCS itself: every pair up to length 8 over two
    // symbols, then random three-symbol pairs up to length 8.
    let binary = all_sequences(2, 8);
    let binary_keys: Vec<Vec<u32>> = binary.iter().map(|s| subsequence_keys(s)).collect();
    let lcs_pairs: usize = binary
        .par_iter()
        .zip(&binary_keys)
        .map(|(a, ka)| -> Result<usize, String> {
            let sa: HashSet<u32> = ka.iter().copied().collect();
            for (b, kb) in binary.iter().zip(&binary_keys) {
                let want = lcs_from_keys(kb, &sa);
                let got = metrics::lcs_length(a, b);
                ensure!(got == want, "lcs {a:?} {b:?}: {got} != {want}");
            }
            Ok(binary.len())
        })
        .collect::<Result<Vec<usize>, String>>()?
        .into_iter()
        .sum();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5_000 {
        let mut gen = || -> Vec<u8> { (0..rng.gen_range(0..=8)).map(|_| rng.gen_range(0..3)).collect() };
        let (a, b) = (gen(), gen());
        ensure!(metrics::lcs_length(&a, &b) == lcs_oracle(&a, &b), "lcs {a:?} {b:?}");
    }

    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{pairs} BLEU/ROUGE pairs, {} LCS pairs, {:.1}s",
        lcs_pairs + 5_000,
        elapsed.as_secs_f64()
    ))
}

const WORDS: [&str; 24] = [
    "crash", "Vehicle", "the", "a", "road", "police", "officer", "van", "GVWR", "10,000", "pounds", "trafficway",
    "(on", "tires).", "ride-on", "Chargé", "weather", "fog,", "hazard", "lights", "DOT", "\"box", "wheels\"", "is",
];

fn identity_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let embedder = HashEmbedder::default();
    let config = MetricConfig::default();
    for i in 0..1000 {
        let len = rng.gen_range(1..=40);
        let text: Vec<&str> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
        let text = text.join(if i % 2 == 0 { " " } else { "  " });
        let s = metrics::score_pair(&text, &text, &config, &embedder, None).map_err(|e| e.to_string())?;
        let tokens = safetune::text_norm::tokenize(&text, &config.normalization).len();
        ensure!(s.bleu == 100.0, "bleu {text:?} = {}", s.bleu);
        ensure!(s.rouge1.f1 == 100.0, "rouge-1 {text:?}");
        ensure!(tokens < 2 || s.rouge2.f1 == 100.0, "rouge-2 {text:?}");
        ensure!(s.rouge_l.f1 == 100.0, "rouge-l {text:?}");
        let b = s.bert.ok_or("missing bertscore")?;
        ensure!(
            close(b.precision, 100.0) && close(b.recall, 100.0) && close(b.f1, 100.0),
            "bertscore {text:?}: {b:?}"
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("1000 texts, {:.1}s", elapsed.as_secs_f64()))
}

fn one_hot_reduction() -> Outcome {
    let vocab: Vec<Token> = ["v", "w", "x", "y", "z", "q"].iter().map(|s| Token::new(*s).unwrap()).collect();
    let embedder = OneHotEmbedder::new(vocab.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..200 {
        let mut gen = || -> Vec<Token> { (0..rng.gen_range(1..=12)).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect() };
        let (c, r) = (TokenSequence::new(gen()), TokenSequence::new(gen()));
        let ce = embed_sequence(&embedder, &c).map_err(|e| e.to_string())?;
        let re = embed_sequence(&embedder, &r).map_err(|e| e.to_string())?;
        let got = metrics::bertscore(&ce, &re).map_err(|e| e.to_string())?;
        let hits = |from: &TokenSequence, to: &TokenSequence| from.iter().filter(|t| to.contains(t)).count();
        let p = hits(&c, &r) as f64 / c.len() as f64;
        let rc = hits(&r, &c) as f64 / r.len() as f64;
        ensure!(got.precision == 100.0 * p, "precision {} != {}", got.precision, 100.0 * p);
        ensure!(got.recall == 100.0 * rc, "recall {} != {}", got.recall, 100.0 * rc);
    }
    Ok("200 pairs, exact equality".into())
}

fn anchors() -> Outcome {
    let words = |s: &str| TokenSequence::from_words(s.split_whitespace()).unwrap();
    let b = bleu(&words("the the the the the the the"), &words("the cat is on the mat"), &BleuConfig::unsmoothed(1))
        .unwrap();
    ensure!(close(b, 100.0 * 2.0 / 7.0) && format!("{b:.2}") == "28.57", "BLEU-1 = {b}");
    let r1 = rouge_n(&words("police stopped the car"), &words("the police stopped a red car"), 1).unwrap();
    ensure!(close(r1.f1, 80.0), "ROUGE-1 F1 = {}", r1.f1);
    let rl = rouge_l(&words("a b c d"), &words("a c b d"));
    ensure!(close(rl.f1, 75.0), "ROUGE-L F1 = {}", rl.f1);
    Ok(format!("BLEU-1 {b:.2}, ROUGE-1 F1 {:.2}, ROUGE-L F1 {:.2}", r1.f1, rl.f1))
}

fn table_shaped_dataset() -> Vec<InstructionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let plan = [(SourceTag::Mmucc, 1689), (SourceTag::Hsm, 311), (SourceTag::Generated, 2000)];
    let mut out = Vec::new();
    for (source, count) in plan {
        for i in 0..count {
            let task = TaskType::ALL[rng.gen_range(0..6)];
            let provenance = if source == SourceTag::Generated {
                Provenance::ModelGenerated
            } else {
                Provenance::Human
            };
            let input = format!("What is {} #{i} in \"crash\" reports?", WORDS[rng.gen_range(0..WORDS.len())]);
            let output = format!("Line one\nline two with tab\t and unicode Chargé {}", rng.gen::<u32>());
            out.push(InstructionRecord {
                id: dataset::content_id(source.label(), &[&input, &output]),
                instruction: "You are a police officer at the crash Scene".into(),
                input,
                output,
                task_type: task,
                source,
                provenance,
            });
        }
    }
    out
}

fn dataset_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (first, second) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let records = table_shaped_dataset();
    dataset::save_dataset(&first, &records).map_err(|e| e.to_string())?;
    let loaded = dataset::load_dataset(&first, dataset::DatasetFormat::RecordLines, RecordDefaults::default())
        .map_err(|e| e.to_string())?;
    dataset::save_dataset(&second, &loaded).map_err(|e| e.to_string())?;
    let (a, b) = (std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    ensure!(a == b, "second save differs from the first");
    ensure!(loaded == records, "loaded records differ");
    let s = dataset::stats(&loaded);
    let by = |t| s.by_source[&t];
    ensure!(s.total == 4000, "total {}", s.total);
    ensure!(
        by(SourceTag::Mmucc) == 1689 && by(SourceTag::Hsm) == 311 && by(SourceTag::Generated) == 2000,
        "by_source {:?}",
        s.by_source
    );
    Ok(format!("4000 records, {} bytes, by source 1689/311/2000", a.len()))
}

/// Captures every log record emitted while the generation check runs.
struct CaptureLogger(Mutex<Vec<String>>);

impl log::Log for CaptureLogger {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }
    fn log(&self, record: &log::Record) {
        self.0.lock().unwrap().push(format!("{} {} {}", record.level(), record.target(), record.args()));
    }
    fn flush(&self) {}
}

fn logger() -> &'static CaptureLogger {
    static LOGGER: OnceLock<CaptureLogger> = OnceLock::new();
    let l = LOGGER.get_or_init(|| CaptureLogger(Mutex::new(Vec::new())));
    if log::set_logger(l).is_ok() {
        log::set_max_level(log::LevelFilter::Trace);
    }
    l
}

const SENTINEL: &str = "sk-SENTINEL-7f3a9c0d";

const NOVEL: [(&str, &str); 6] = [
    ("How do you deal with fog?", "Slow down and use low beams."),
    ("Which pavement markings separate opposing lanes?", "Yellow center lines."),
    ("When must a school bus stop be obeyed", "Whenever its red lights flash."),
    ("What defines a work zone crash", "A crash inside the advance warning area or activity area."),
    ("Why is night glare dangerous for older drivers", "Recovery from bright light takes longer."),
    ("Explain steering during a tire blowout", "Hold the wheel firmly and ease off the accelerator."),
];

/// A mock client that holds a credential the way a network client would.
fn mock_dispatcher(repeat: bool, in_flight: usize) -> Dispatcher {
    let token = SENTINEL.to_owned();
    let endpoint = ScriptedEndpoint(move |req: &ChatRequest, ctx: CallContext| -> Result<String, RemoteError> {
        if token.is_empty() || req.messages.is_empty() {
            return Err(RemoteError::Terminal("unauthorized".into()));
        }
        let (q, a) = if repeat { NOVEL[0] } else { NOVEL[ctx.index % NOVEL.len()] };
        Ok(format!("Instruction: You are a traffic engineer work for DOT\nInput: {q}\nOutput: {a}\n"))
    });
    Dispatcher::new(Arc::new(endpoint), RetryPolicy::default(), in_flight, 0)
        .with_sleeper(Arc::new(RecordingSleeper::default()))
}

fn seeds() -> Vec<InstructionRecord> {
    vec![
        InstructionRecord {
            id: "mmucc-1".into(),
            instruction: "You are a police officer at the crash Scene".into(),
            input: "What is the definition of property in Motor Vehicle Traffic Crashes".into(),
            output: "Property is any physical object other than a person.".into(),
            task_type: TaskType::Definition,
            source: SourceTag::Mmucc,
            provenance: Provenance::Human,
        },
        InstructionRecord {
            id: "hsm-1".into(),
            instruction: "You are a traffic engineer work for DOT".into(),
            input: "What is weather conditions and seasonal hazards?".into(),
            output: "The weather can cause all sorts of driving hazards, especially reduced visibility and slippery \
                     road surfaces."
                .into(),
            task_type: TaskType::Guidance,
            source: SourceTag::Hsm,
            provenance: Provenance::Human,
        },
    ]
}

fn generation_pipeline() -> Outcome {
    let log = logger();
    let cfg = GenerationConfig {
        target_count: 5,
        max_requests: 12,
        seed_count: 2,
        seed: 7,
        ..Default::default()
    };
    let run = |in_flight| generate_dataset(&seeds(), &cfg, "mock-model", &mock_dispatcher(false, in_flight));
    let first = run(3).map_err(|e| e.to_string())?;
    ensure!(first.records.len() == 5, "accepted {}", first.records.len());
    ensure!(
        first.records.iter().all(|r| r.source == SourceTag::Generated && r.provenance == Provenance::ModelGenerated),
        "generated records mislabelled"
    );
    let bytes = dataset::to_record_lines(&first.records);
    let again = dataset::to_record_lines(&run(3).map_err(|e| e.to_string())?.records);
    let serial = dataset::to_record_lines(&run(1).map_err(|e| e.to_string())?.records);
    ensure!(bytes == again && bytes == serial, "output is not byte-reproducible");

    let repeat_cfg = GenerationConfig {
        target_count: 3,
        max_requests: 8,
        seed_count: 1,
        ..Default::default()
    };
    let repeated = match generate_dataset(&seeds(), &repeat_cfg, "mock-model", &mock_dispatcher(true, 4)) {
        Err(GenerateError::BudgetExhausted { accepted, .. }) => accepted.len(),
        Ok(o) => o.records.len(),
        Err(e) => return Err(e.to_string()),
    };
    ensure!(repeated == 1, "repeating mock accepted {repeated}");

    let lines = log.0.lock().unwrap();
    ensure!(!lines.is_empty(), "no log records captured");
    ensure!(!lines.iter().any(|l| l.contains(SENTINEL)), "token sentinel found in logs");
    ensure!(!bytes.contains(SENTINEL), "token sentinel found in output");
    Ok(format!(
        "target 5 reached, repeating mock accepted 1, {} log lines clean, {} bytes reproduced",
        lines.len(),
        bytes.len()
    ))
}

fn train_plan() -> Outcome {
    let manifest = LayerManifest::synthetic_decoder(32, false);
    ensure!(manifest.len() == 34, "manifest has {} layers", manifest.len());
    let plan = plan_freeze(&manifest, &FreezePolicy::default()).map_err(|e| e.to_string())?;
    let cfg = emit_config(&plan, &BTreeMap::new()).map_err(|e| e.to_string())?;
    ensure!(
        cfg.batch_size == 16
            && cfg.learning_rate == 2e-5
            && cfg.epochs == 3
            && cfg.max_sequence_length == 152
            && cfg.warmup_ratio == 0.03
            && cfg.weight_decay == 0.0,
        "config {cfg:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let names: Vec<String> = manifest.names().map(str::to_owned).collect();
    let mut frozen_hits = 0;
    for trial in 0..100 {
        let victim = &names[rng.gen_range(0..names.len())];
        let mut entries = manifest.entries().to_vec();
        let e = entries.iter_mut().find(|e| &e.name == victim).unwrap();
        e.checksum = checksum_hex(format!("{victim}-{trial}").as_bytes());
        let after = LayerManifest::new(entries).map_err(|e| e.to_string())?;
        let report = verify_freeze(&manifest, &after, &plan).map_err(|e| e.to_string())?;
        let flagged: Vec<&String> = report.changed_frozen.iter().chain(&report.changed_trainable).collect();
        ensure!(flagged == [victim], "trial {trial}: mutated {victim}, flagged {flagged:?}");
        if plan.frozen.contains(victim) {
            frozen_hits += 1;
            ensure!(report.status == FreezeStatus::Fail, "trial {trial}: frozen {victim} not failed");
        } else {
            ensure!(report.status == FreezeStatus::Pass, "trial {trial}: trainable {victim} gave {}", report.status);
        }
    }
    Ok(format!("defaults 16/2e-5/3/152/0.03/0, 100 trials over 34 layers ({frozen_hits} frozen mutations caught)"))
}

fn golden_report() -> Outcome {
    let items = eval::load_items(fixture("eval_items.jsonl")).map_err(|e| e.to_string())?;
    let outputs = eval::load_outputs(fixture("eval_outputs.jsonl")).map_err(|e| e.to_string())?;
    let runs = eval::group_by_system(outputs);
    ensure!(items.len() == 18 && runs.len() == 2, "fixture shape");
    let render = || -> Result<String, String> {
        let report = eval::run_eval(&items, &runs, &EvalOptions::default(), &HashEmbedder::default(), Some(&JaccardBleurt))
            .map_err(|e| e.to_string())?;
        Ok(render_report(&report, ReportFormat::TableText))
    };
    let text = render()?;
    ensure!(render()? == text, "re-run differs");

    let golden_path = fixture("golden_report.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden_path, &text).map_err(|e| e.to_string())?;
    }
    let golden = std::fs::read_to_string(&golden_path).map_err(|e| format!("{}: {e}", golden_path.display()))?;
    ensure!(text == golden, "report differs from golden:\n{text}");

    let labels: Vec<&str> = text.lines().filter(|l| !l.starts_with(' ') && !l.is_empty()).skip(1).collect();
    let expected: Vec<&str> = TaskType::ALL.iter().map(|t| t.section_label()).collect();
    ensure!(labels == expected, "sections {labels:?}");
    let rows = text.lines().filter(|l| l.starts_with("  ")).count();
    ensure!(rows == 6 * 8, "{rows} metric rows");
    Ok(format!("{} bytes, sections Definitions..Guidance, 48 rows, byte-identical", text.len()))
}

fn main() {
    let start = Instant::now();
    let checks: [(&str, fn() -> Outcome); 8] = [
        ("metric oracle suite", metric_oracles),
        ("identity suite", identity_suite),
        ("one-hot BERTScore reduction", one_hot_reduction),
        ("hand-derived anchors", anchors),
        ("dataset round-trip", dataset_round_trip),
        ("generation pipeline", generation_pipeline),
        ("train plan", train_plan),
        ("harness golden report", golden_report),
    ];
    let mut failed = 0;
    let mut lines = String::new();
    for (name, check) in checks {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => {
                let _ = writeln!(lines, "PASS  {name}: {detail}");
            }
            Err(why) => {
                failed += 1;
                let _ = writeln!(lines, "FAIL  {name}: {why}");
            }
        }
        print!("{}", std::mem::take(&mut lines));
    }
    let elapsed = start.elapsed();
    if elapsed < Duration::from_secs(300) {
        println!("PASS  offline time budget: acceptance checks took {:.1}s with mock and replay providers only", elapsed.as_secs_f64());
    } else {
        failed += 1;
        println!("FAIL  offline time budget: acceptance checks took {:.1}s", elapsed.as_secs_f64());
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
