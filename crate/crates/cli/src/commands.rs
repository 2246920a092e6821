use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use safetune::dataset::{self, DatasetFormat, InstructionRecord, RecordDefaults};
use safetune::eval::{self, render_report, EvalError, EvalOptions, EvalReport, ReportFormat};
use safetune::generate::endpoint::{ChatEndpoint, ReplayEndpoint};
use safetune::generate::{generate_dataset, Dispatcher, GenerateError};
use safetune::ingest::{parse_guidebook, to_records, PersonaMap};
use safetune::metrics::providers::{HashEmbedder, ReplayBleurt, ReplayEmbedder, Retrying};
use safetune::metrics::{score_pair, BleurtProvider, EmbeddingProvider, ScoreError};
use safetune::train_plan::{emit_config, plan_freeze, verify_freeze, FreezeStatus, LayerManifest};

use crate::config::{Config, ServiceConfig};
use crate::http::{HttpBleurt, HttpChat, HttpEmbedder, JsonClient, Secret};
use crate::{Cli, Command, Format, InputFormat, ProviderArgs, TrainplanAction};

/// A failed command and its exit status: 1 data, 2 endpoint, 3 usage.
#[derive(Debug)]
pub enum Failure {
    Data(String),
    Endpoint(String),
    Usage(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Endpoint(_) => 2,
            Failure::Usage(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Data(m) | Failure::Endpoint(m) | Failure::Usage(m) => m,
        }
    }
}

impl From<safetune::Error> for Failure {
    fn from(e: safetune::Error) -> Self {
        use safetune::Error as E;
        match e {
            E::InvalidArgument(_) | E::Config(_) => Failure::Usage(e.to_string()),
            E::Provider(_) => Failure::Endpoint(e.to_string()),
            E::Data(ref rows) => {
                let mut msg = e.to_string();
                for (loc, violations) in rows.iter().take(20) {
                    msg.push_str(&format!("\n  {loc}: {}", violations.join(", ")));
                }
                if rows.len() > 20 {
                    msg.push_str(&format!("\n  ... and {} more", rows.len() - 20));
                }
                Failure::Data(msg)
            }
            E::Parse { .. } | E::Io { .. } => Failure::Data(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.generation.seed = seed;
    }
    let format = cli.format;
    match cli.command {
        Command::Ingest { input, output } => ingest(&input, &output, format),
        Command::Generate {
            seeds,
            seeds_format,
            output,
            target,
            max_requests,
            replay,
        } => {
            if let Some(t) = target {
                cfg.generation.target_count = t;
            }
            if let Some(m) = max_requests {
                cfg.generation.max_requests = m;
            }
            let seeds = load(&seeds, seeds_format.input_format)?;
            generate(&cfg, &seeds, &output, replay.as_deref(), format)
        }
        Command::Stats { input, format: f } => {
            let records = load(&input, f.input_format)?;
            print_object(&dataset::stats(&records), format);
            Ok(())
        }
        Command::Split {
            input,
            format: f,
            train,
            test,
            fraction,
        } => {
            let records = load(&input, f.input_format)?;
            let fraction = fraction.unwrap_or(cfg.split.train_fraction);
            let s = dataset::split(&records, fraction, cfg.generation.seed)?;
            dataset::save_dataset(&train, &s.train)?;
            dataset::save_dataset(&test, &s.test)?;
            print_object(
                &serde_json::json!({"train": s.train.len(), "test": s.test.len(), "seed": cfg.generation.seed}),
                format,
            );
            Ok(())
        }
        Command::Score {
            candidate,
            reference,
            providers,
        } => {
            let (embedder, bleurt) = build_providers(&cfg, &providers)?;
            match score_pair(&candidate, &reference, &cfg.metrics, embedder.as_ref(), bleurt.as_deref()) {
                Ok(set) => {
                    print_object(&set, format);
                    Ok(())
                }
                Err(ScoreError::InvalidArgument(m)) => Err(Failure::Usage(m)),
                Err(ScoreError::Provider { partial, source }) => {
                    print_object(&partial, format);
                    Err(Failure::Endpoint(format!("scoring provider failed: {source}")))
                }
            }
        }
        Command::Eval {
            items,
            outputs,
            collect,
            replay,
            save_outputs,
            report,
            strict_missing,
            providers,
        } => {
            let items = eval::load_items(&items)?;
            let mut answers = Vec::new();
            for p in &outputs {
                answers.extend(eval::load_outputs(p)?);
            }
            if let Some(name) = collect {
                let dispatcher = chat_dispatcher(&cfg, replay.as_deref())?;
                match eval::collect_outputs(&items, &name, &cfg.chat.model, cfg.eval.temperature, &dispatcher) {
                    Ok(got) => {
                        if let Some(p) = &save_outputs {
                            eval::save_outputs(p, &got)?;
                        }
                        answers.extend(got);
                    }
                    Err(e) => {
                        if let Some(p) = &save_outputs {
                            eval::save_outputs(p, &e.partial)?;
                        }
                        return Err(Failure::Endpoint(e.to_string()));
                    }
                }
            }
            if answers.is_empty() {
                return Err(Failure::Usage("no system outputs: pass --outputs or --collect".into()));
            }
            let options = EvalOptions {
                metrics: cfg.metrics.clone(),
                strict_missing: strict_missing || cfg.eval.strict_missing,
                timestamp: Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            };
            let (embedder, bleurt) = build_providers(&cfg, &providers)?;
            let result = eval::run_eval(&items, &eval::group_by_system(answers), &options, embedder.as_ref(), bleurt.as_deref())
                .map_err(|e| match e {
                    EvalError::InvalidArgument(m) => Failure::Usage(m),
                    EvalError::Data(m) => Failure::Data(m),
                    e @ EvalError::Provider { .. } => Failure::Endpoint(e.to_string()),
                })?;
            for w in &result.warnings {
                log::warn!("{w}");
            }
            if let Some(p) = &report {
                write(p, &render_report(&result, ReportFormat::Json))?;
            }
            print!("{}", render_report(&result, report_format(format)));
            Ok(())
        }
        Command::Trainplan { action } => trainplan(&cfg, action, format),
        Command::Report { input } => {
            let text = read(&input)?;
            let report: EvalReport =
                serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", input.display())))?;
            print!("{}", render_report(&report, report_format(format)));
            Ok(())
        }
    }
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Table => ReportFormat::TableText,
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load(path: &Path, format: InputFormat) -> Result<Vec<InstructionRecord>, Failure> {
    let format = match format {
        InputFormat::RecordLines => DatasetFormat::RecordLines,
        InputFormat::InstructionArray => DatasetFormat::InstructionArray,
    };
    Ok(dataset::load_dataset(path, format, RecordDefaults::default())?)
}

fn ingest(input: &Path, output: &Path, format: Format) -> Outcome {
    let entries = parse_guidebook(&read(input)?)?;
    let records = to_records(&entries, &PersonaMap::default())?;
    dataset::save_dataset(output, &records)?;
    print_object(&dataset::stats(&records), format);
    Ok(())
}

fn generate(cfg: &Config, seeds: &[InstructionRecord], output: &Path, replay: Option<&Path>, format: Format) -> Outcome {
    let dispatcher = chat_dispatcher(cfg, replay)?;
    match generate_dataset(seeds, &cfg.generation, &cfg.chat.model, &dispatcher) {
        Ok(out) => {
            dataset::save_dataset(output, &out.records)?;
            print_object(&out.stats, format);
            Ok(())
        }
        Err(GenerateError::InvalidArgument(m)) => Err(Failure::Usage(m)),
        Err(e) => {
            dataset::save_dataset(output, e.partial())?;
            log::warn!("wrote {} partial record(s) to {}", e.partial().len(), output.display());
            match e {
                GenerateError::BudgetExhausted { ref stats, .. } => {
                    print_object(stats, format);
                    Err(Failure::Data(e.to_string()))
                }
                _ => Err(Failure::Endpoint(e.to_string())),
            }
        }
    }
}

fn chat_dispatcher(cfg: &Config, replay: Option<&Path>) -> Result<Dispatcher, Failure> {
    let (endpoint, rpm): (Arc<dyn ChatEndpoint>, u32) = match replay {
        Some(p) => (Arc::new(ReplayEndpoint::from_file(p)?), 0),
        None => {
            let token = Secret::from_env(&cfg.chat.token_env).map_err(|e| Failure::Usage(e.to_string()))?;
            let timeout = Duration::from_secs(cfg.chat.timeout_secs);
            (Arc::new(HttpChat::new(&cfg.chat.base_url, token, timeout)), cfg.chat.requests_per_minute)
        }
    };
    Ok(Dispatcher::new(endpoint, cfg.generation.retry.clone(), cfg.generation.max_in_flight.max(1), rpm))
}

fn client(svc: &ServiceConfig) -> Result<JsonClient, Failure> {
    let token = svc
        .token_env
        .as_deref()
        .map(Secret::from_env)
        .transpose()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(JsonClient::new(svc.url.clone(), token, Duration::from_secs(svc.timeout_secs)))
}

type Providers = (Box<dyn EmbeddingProvider>, Option<Box<dyn BleurtProvider>>);

fn build_providers(cfg: &Config, args: &ProviderArgs) -> Result<Providers, Failure> {
    let embedder: Box<dyn EmbeddingProvider> = match (&args.embedding_replay, &cfg.embedding) {
        (Some(p), _) => Box::new(ReplayEmbedder::from_file(p)?),
        (None, Some(svc)) => Box::new(Retrying::new(HttpEmbedder(client(svc)?), svc.retry.clone(), svc.requests_per_minute)),
        (None, None) => Box::new(HashEmbedder::default()),
    };
    let bleurt: Option<Box<dyn BleurtProvider>> = match (&args.bleurt_replay, &cfg.bleurt) {
        (Some(p), _) => Some(Box::new(ReplayBleurt::from_file(p)?)),
        (None, Some(svc)) => Some(Box::new(Retrying::new(HttpBleurt(client(svc)?), svc.retry.clone(), svc.requests_per_minute))),
        (None, None) => None,
    };
    Ok((embedder, bleurt))
}

fn parse_override(s: &str) -> Result<(String, Value), Failure> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("override {s:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_owned()));
    Ok((k.trim().to_owned(), value))
}

fn trainplan(cfg: &Config, action: TrainplanAction, format: Format) -> Outcome {
    match action {
        TrainplanAction::Plan {
            manifest,
            output,
            overrides,
        } => {
            let m = match (manifest.manifest, manifest.synthetic_blocks) {
                (Some(p), _) => LayerManifest::parse(&read(&p)?)?,
                (None, Some(n)) => LayerManifest::synthetic_decoder(n, false),
                (None, None) => unreachable!("clap requires one manifest source"),
            };
            let plan = plan_freeze(&m, &cfg.trainplan.freeze)?;
            for w in &plan.warnings {
                log::warn!("{w}");
            }
            let mut all: BTreeMap<String, Value> = cfg.trainplan.overrides.clone();
            for o in &overrides {
                let (k, v) = parse_override(o)?;
                all.insert(k, v);
            }
            let config = emit_config(&plan, &all)?;
            match output {
                Some(p) => {
                    write(&p, &config.to_json())?;
                    print_object(&plan, format);
                }
                None => print!("{}", config.to_json()),
            }
            Ok(())
        }
        TrainplanAction::Verify { before, after } => {
            let before = LayerManifest::parse(&read(&before)?)?;
            let after = LayerManifest::parse(&read(&after)?)?;
            let plan = plan_freeze(&before, &cfg.trainplan.freeze)?;
            let report = verify_freeze(&before, &after, &plan)?;
            print_object(&report, format);
            match report.status {
                FreezeStatus::Fail => Err(Failure::Data(format!(
                    "frozen layer(s) changed: {}",
                    report.changed_frozen.join(", ")
                ))),
                FreezeStatus::Warn => {
                    log::warn!("no trainable layer changed");
                    Ok(())
                }
                FreezeStatus::Pass => Ok(()),
            }
        }
        TrainplanAction::Manifest {
            blocks,
            final_norm,
            output,
        } => write(&output, &LayerManifest::synthetic_decoder(blocks, final_norm).to_text()),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "—".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_f64() => format!("{:.2}", n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(a) => a.iter().map(scalar).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_owned(), scalar(other))),
    }
}

/// Prints a serializable value as aligned key/value lines, CSV rows or JSON.
fn print_object<T: Serialize>(value: &T, format: Format) {
    let v = serde_json::to_value(value).expect("results always serialize");
    if format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&v).expect("values always serialize"));
        return;
    }
    let mut rows = Vec::new();
    flatten("", &v, &mut rows);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let _ = w.write_record(["key", "value"]);
            for (k, v) in &rows {
                let _ = w.write_record([k, v]);
            }
            let _ = w.flush();
        }
        _ => {
            let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
            for (k, v) in rows {
                println!("{k:<width$}  {v}");
            }
        }
    }
}
