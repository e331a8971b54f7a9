use std::io::Write;
use std::path::Path;
use std::thread;

use grantscope::alerting::{AlertSink, DryRunSink, HttpWebhook, LogSink, WebhookSink};
use grantscope::analysis::{self, report};
use grantscope::clock::SystemClock;
use grantscope::collector::{GraphTransport, HttpGraphTransport, ReplayTransport};
use grantscope::config::Config;
use grantscope::corpus::{self, CorpusError};
use grantscope::pipeline::{import_score_file, run_scan_cycle, ImportError};
use grantscope::scorer::{
    cache_model_key, score_batch, BatchOptions, HttpChatEndpoint, PromptVersion, RiskCache, ScoreTable,
    ScorerError, ScoringJob,
};
use grantscope::statestore::StateStore;
use regex::Regex;
use serde::Serialize;
use tracing::{info, warn};

use crate::args::{AnalyzeArgs, Format, Report, ScanArgs, ScoreArgs, ScrapeArgs};
use crate::CliError;

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn corpus_err(e: CorpusError) -> CliError {
    CliError::Usage(e.to_string())
}

fn cache_err(e: ScorerError) -> CliError {
    match e {
        ScorerError::Transport(t) => CliError::Collect(t.to_string()),
        other => CliError::Storage(other.to_string()),
    }
}

pub fn scrape(cfg: &Config, args: &ScrapeArgs) -> Result<(), CliError> {
    if let Some(path) = &args.validate {
        let records = corpus::load_corpus(path).map_err(corpus_err)?;
        let report = corpus::validate_corpus(&records);
        print_json(&report);
        return if report.is_accepted() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("{} failed validation", path.display())))
        };
    }
    let input = args
        .input
        .as_ref()
        .or(cfg.corpus.reference_md.as_ref())
        .ok_or_else(|| CliError::Usage("no reference document: pass --input or set corpus.reference_md".into()))?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", input.display())))?;
    let parsed = corpus::parse_reference_detailed(&text).map_err(corpus_err)?;
    for w in &parsed.warnings {
        warn!(warning = %w, "reference parse warning");
    }
    let report = corpus::validate_corpus(&parsed.records);
    print_json(&report);
    if !report.is_accepted() {
        return Err(CliError::Usage("parsed corpus failed validation; nothing written".into()));
    }
    let output = args.output.as_ref().unwrap_or(&cfg.corpus.corpus_json);
    std::fs::write(output, corpus::to_canonical_json(&parsed.records))
        .map_err(|e| CliError::Storage(format!("cannot write {}: {e}", output.display())))?;
    info!(records = parsed.records.len(), output = %output.display(), "corpus written");
    Ok(())
}

pub fn score(cfg: &Config, args: &ScoreArgs) -> Result<(), CliError> {
    let model = args.model.clone().unwrap_or_else(|| cfg.model.name.clone());
    let version: PromptVersion = args.prompt_version.map(Into::into).unwrap_or(cfg.model.prompt_version);
    let cache_path = args.risk_cache.as_ref().unwrap_or(&cfg.store.risk_cache);
    let cache = RiskCache::open(cache_path).map_err(cache_err)?;

    if let Some(file) = &args.import {
        let key = cache_model_key(&model, version);
        let n = import_score_file(&cache, file, &key, Some(version)).map_err(|e| match e {
            ImportError::Cache(c) => cache_err(c),
            other => CliError::Usage(other.to_string()),
        })?;
        info!(imported = n, model = %key, "scores imported");
        print_json(&serde_json::json!({"imported": n, "model": key}));
        return Ok(());
    }

    let corpus_path = args.corpus.as_ref().unwrap_or(&cfg.corpus.corpus_json);
    let records = corpus::load_corpus(corpus_path).map_err(corpus_err)?;
    let endpoint = HttpChatEndpoint::from_env(cfg.model.sampling()).map_err(|e| CliError::Usage(e.to_string()))?;
    let job = ScoringJob {
        model,
        version,
        max_attempts: cfg.model.max_attempts,
    };
    let opts = BatchOptions {
        concurrency: args.concurrency.unwrap_or(cfg.model.concurrency).max(1),
        resume: args.resume,
    };
    let report = score_batch(&records, &job, &endpoint, &cache, &opts).map_err(cache_err)?;
    print_json(&report);
    Ok(())
}

fn load_scores(path: &Path, key: &str) -> Result<ScoreTable, CliError> {
    if !path.exists() {
        warn!(path = %path.display(), "risk cache not found; all permissions use the fallback score");
        return Ok(ScoreTable::default());
    }
    RiskCache::open(path).and_then(|c| c.score_table(key)).map_err(cache_err)
}

pub fn scan(mut cfg: Config, args: &ScanArgs) -> Result<(), CliError> {
    if let Some(dir) = &args.replay {
        cfg.graph.replay_dir = Some(dir.clone());
    }
    if let Some(p) = &args.state_db {
        cfg.store.state_db = p.clone();
    }
    if let Some(p) = &args.risk_cache {
        cfg.store.risk_cache = p.clone();
    }
    if let Some(m) = &args.score_model {
        cfg.risk.score_model = Some(m.clone());
    }
    if args.dry_run {
        cfg.alerts.dry_run = true;
    }
    if let Some(secs) = args.interval {
        cfg.scan_interval_secs = Some(secs);
    }
    cfg.validate()?;

    let transport: Box<dyn GraphTransport> = match &cfg.graph.replay_dir {
        Some(dir) => Box::new(ReplayTransport::open(dir).map_err(|e| CliError::Usage(e.to_string()))?),
        None => Box::new(HttpGraphTransport::from_env().map_err(|e| CliError::Usage(e.to_string()))?),
    };
    let sink: Box<dyn AlertSink> = if cfg.alerts.dry_run {
        Box::new(DryRunSink::new(std::io::stdout()))
    } else {
        match std::env::var(HttpWebhook::URL_ENV).ok().filter(|u| !u.is_empty()) {
            Some(url) => Box::new(WebhookSink {
                url,
                transport: HttpWebhook::new().map_err(CliError::Usage)?,
                policy: cfg.alerts.delivery_policy(),
            }),
            None => {
                warn!("{} is not set; alerts will only be logged", HttpWebhook::URL_ENV);
                Box::new(LogSink)
            }
        }
    };
    let mut store = StateStore::open(&cfg.store.state_db)?;
    let clock = SystemClock;
    let looping = !args.once && cfg.scan_interval_secs.is_some();

    loop {
        let scores = load_scores(&cfg.store.risk_cache, &cfg.score_model_key())?;
        match run_scan_cycle(&cfg, transport.as_ref(), &clock, &scores, sink.as_ref(), &mut store) {
            Ok(summary) => {
                println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
                let _ = std::io::stdout().flush();
            }
            Err(e) => {
                let e = CliError::from(e);
                if !looping || e.exit_code() != 2 {
                    return Err(e);
                }
                warn!(error = %e, "cycle failed, retrying at next interval");
            }
        }
        if !looping {
            return Ok(());
        }
        thread::sleep(cfg.scan_interval());
    }
}

fn open_existing_cache(cfg: &Config, args: &AnalyzeArgs) -> Result<RiskCache, CliError> {
    let path = args.risk_cache.as_ref().unwrap_or(&cfg.store.risk_cache);
    if !path.exists() {
        return Err(CliError::Usage(format!("risk cache {} does not exist", path.display())));
    }
    RiskCache::open(path).map_err(cache_err)
}

fn emit(format: Format, text: String, json: impl Serialize, csv: Result<String, csv::Error>) -> Result<(), CliError> {
    match format {
        Format::Text => print!("{text}"),
        Format::Json => print_json(&json),
        Format::Csv => print!("{}", csv.map_err(|e| CliError::Usage(e.to_string()))?),
    }
    Ok(())
}

pub fn analyze(cfg: &Config, args: &AnalyzeArgs) -> Result<(), CliError> {
    let cache = open_existing_cache(cfg, args)?;
    let entries = |model: Option<&str>| cache.entries(model).map_err(cache_err);
    let usage = |e: analysis::AnalysisError| CliError::Usage(e.to_string());
    match &args.report {
        Report::Stats { models } => {
            let mut all = entries(None)?;
            if !models.is_empty() {
                all.retain(|e| models.contains(&e.model_name));
            }
            let rows = analysis::per_permission_stats(&all);
            emit(args.format, report::stats_text(&rows), &rows, report::stats_csv(&rows))
        }
        Report::Agreement { left, right } => {
            let m = analysis::agreement_matrix(&entries(Some(left))?, &entries(Some(right))?).map_err(usage)?;
            emit(args.format, report::agreement_text(&m), &m, report::grid_csv(&m.grid))
        }
        Report::Transition { model, from, to } => {
            let old = entries(Some(&cache_model_key(model, (*from).into())))?;
            let new = entries(Some(&cache_model_key(model, (*to).into())))?;
            let t = analysis::transition_matrix(&old, &new, model).map_err(usage)?;
            emit(args.format, report::transition_text(&t), &t, report::grid_csv(&t.grid))
        }
        Report::Distribution { model, filter } => {
            let key = model.clone().unwrap_or_else(|| cfg.score_model_key());
            let re = filter
                .as_deref()
                .map(Regex::new)
                .transpose()
                .map_err(|e| CliError::Usage(format!("bad --filter: {e}")))?;
            let d = analysis::distribution_report(&entries(Some(&key))?, re.as_ref());
            emit(args.format, report::distribution_text(&d), &d, report::distribution_csv(&d))
        }
        Report::Ngrams { n } => {
            let m = analysis::model_similarity_matrix(&entries(None)?, usize::from(*n));
            let json = serde_json::json!({
                "metric": "jaccard",
                "stopwords": analysis::STOPWORD_LIST_VERSION,
                "matrix": m,
            });
            emit(args.format, report::similarity_text(&m), json, report::similarity_csv(&m))
        }
    }
}
