//! Implementations behind each subcommand: data loading, experiment
//! execution, and atomic artifact writing.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use fedpkt_core::experiment::{
    build_client_datasets, prepare_examples, report_to_csv, report_to_json, report_to_markdown,
    ExperimentOutput, ModelFamily,
};
use fedpkt_core::features::{build_vocabulary, vocab_overlap, Feature, StandardHeaders, Vocabulary};
use fedpkt_core::fed::{crowdsourcing_curve, rounds_to_target_sweep, CrowdPoint};
use fedpkt_core::partition::ClientDataset;
use fedpkt_core::svm::model_to_bytes;
use fedpkt_core::trace::{
    emit_trace_string, parse_trace, summarize, DatasetSummary, HttpPacket, ParseWarning,
    Strictness,
};

use crate::config::{fed_config, Resolved};
use crate::convert::convert_antmonitor;

const MAX_PRINTED_WARNINGS: usize = 20;

/// Writes a whole artifact through a temp file in the target directory, so
/// a crash never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create directory {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot stage a file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("cannot replace {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn print_warnings(warnings: &[ParseWarning]) {
    for w in warnings.iter().take(MAX_PRINTED_WARNINGS) {
        eprintln!("warning: {w}");
    }
    if warnings.len() > MAX_PRINTED_WARNINGS {
        eprintln!("warning: ... and {} more", warnings.len() - MAX_PRINTED_WARNINGS);
    }
}

fn load_trace(path: &Path, strictness: Strictness) -> Result<Vec<HttpPacket>> {
    let file =
        File::open(path).with_context(|| format!("cannot open trace {}", path.display()))?;
    let (packets, warnings) = parse_trace(BufReader::new(file), strictness)
        .with_context(|| format!("trace {}", path.display()))?;
    print_warnings(&warnings);
    Ok(packets)
}

fn config_trace(resolved: &Resolved) -> Result<Vec<HttpPacket>> {
    let Some(path) = &resolved.trace else {
        bail!("config needs a `trace` key for this command");
    };
    load_trace(path, resolved.strictness)
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("cannot serialize artifact")?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_report_files(out: &Path, output: &ExperimentOutput) -> Result<()> {
    write_atomic(&out.join("report.json"), report_to_json(&output.report).as_bytes())?;
    write_atomic(&out.join("report.csv"), report_to_csv(&output.report).as_bytes())?;
    write_atomic(&out.join("report.md"), report_to_markdown(&output.report).as_bytes())?;
    write_atomic(&out.join("vocab.txt"), output.vocab.to_file_string().as_bytes())?;
    Ok(())
}

fn print_report_rows(output: &ExperimentOutput, verbose: u8) {
    if verbose == 0 {
        return;
    }
    for row in &output.report.rows {
        eprintln!(
            "{} on {}: F1 {:.4}",
            row.trained_on, row.tested_on, row.mean_f1
        );
    }
}

pub fn convert(input: &Path, format: InputFormat, output: &Path, strictness: Strictness) -> Result<()> {
    let text = fs::read_to_string(input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    let (packets, warnings) = match format {
        InputFormat::Canonical => fedpkt_core::trace::parse_trace_str(&text, strictness)
            .with_context(|| format!("trace {}", input.display()))?,
        InputFormat::Antmonitor => convert_antmonitor(&text, strictness)
            .with_context(|| format!("capture {}", input.display()))?,
    };
    print_warnings(&warnings);
    write_atomic(output, emit_trace_string(&packets).as_bytes())?;
    eprintln!("converted {} packets ({} records skipped)", packets.len(), warnings.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    /// Already canonical; parse, normalize, and re-emit.
    Canonical,
    /// On-device capture export (JSON array or object-per-line).
    Antmonitor,
}

pub fn summarize_cmd(input: &Path, json: bool, strictness: Strictness) -> Result<()> {
    let packets = load_trace(input, strictness)?;
    let summary = summarize(&packets, StandardHeaders::bundled());
    if json {
        let mut text = serde_json::to_string_pretty(&summary).context("summary")?;
        text.push('\n');
        print!("{text}");
    } else {
        print!("{}", render_summary(&summary));
    }
    Ok(())
}

fn render_summary(s: &DatasetSummary) -> String {
    let mut out = String::new();
    let mut line = |name: &str, value: usize| {
        out.push_str(&format!("{name:<24} {value}\n"));
    };
    line("packets", s.packet_count);
    line("pii positives", s.positive_pii);
    line("ad positives", s.positive_ad);
    line("distinct uri keys", s.uri_key_count);
    line("distinct cookie keys", s.cookie_key_count);
    line("distinct custom headers", s.custom_header_count);
    line("file-request only", s.file_request_only_count);
    line("keyless packets", s.keyless_count);
    line("keyless posts", s.keyless_post_count);
    line("distinct domains", s.distinct_domains);
    out.push_str(&format!("{:<32} {:>8} {:>9} {:>8}\n", "app", "packets", "features", "domains"));
    for (app, a) in &s.per_app {
        out.push_str(&format!(
            "{:<32} {:>8} {:>9} {:>8}\n",
            app, a.packets, a.feature_count, a.domain_count
        ));
    }
    out
}

#[derive(Serialize)]
struct OverlapReport {
    clients: usize,
    per_client_vocab_sizes: Vec<usize>,
    intersection: usize,
    union: usize,
    jaccard: f64,
}

pub fn featurize(resolved: &Resolved) -> Result<()> {
    let packets = config_trace(resolved)?;
    let spec = &resolved.spec;
    let (vocab, pool, prep) = prepare_examples(&packets, spec.task, &spec.features)?;
    let out = &resolved.output_dir;

    write_atomic(&out.join("vocab.txt"), vocab.to_file_string().as_bytes())?;
    let mut lines = String::new();
    for example in &pool {
        lines.push_str(&serde_json::to_string(example).context("example")?);
        lines.push('\n');
    }
    write_atomic(&out.join("examples.jsonl"), lines.as_bytes())?;
    write_json_pretty(&out.join("prep.json"), &prep)?;

    if spec.split.clients > 1 {
        let clients = build_client_datasets(&pool, &spec.split, spec.seed)?;
        let per_client: Vec<Vocabulary> = clients
            .iter()
            .map(|c| client_vocabulary(c, &vocab))
            .collect();
        let refs: Vec<&Vocabulary> = per_client.iter().collect();
        let overlap = vocab_overlap(&refs)?;
        let report = OverlapReport {
            clients: clients.len(),
            per_client_vocab_sizes: per_client.iter().map(Vocabulary::len).collect(),
            intersection: overlap.intersection,
            union: overlap.union,
            jaccard: if overlap.union == 0 {
                0.0
            } else {
                overlap.intersection as f64 / overlap.union as f64
            },
        };
        write_json_pretty(&out.join("overlap.json"), &report)?;
    }
    Ok(())
}

/// The features a client's training split actually uses, as a vocabulary.
fn client_vocabulary(client: &ClientDataset, vocab: &Vocabulary) -> Vocabulary {
    let sets: Vec<std::collections::BTreeSet<Feature>> = client
        .train
        .iter()
        .map(|e| {
            e.indices
                .iter()
                .filter_map(|&i| vocab.feature(i).cloned())
                .collect()
        })
        .collect();
    build_vocabulary(&sets, vocab.mode(), 1)
}

#[derive(Serialize)]
struct ClientSummary {
    client_id: usize,
    n_train: usize,
    n_test: usize,
    train_positives: usize,
    test_positives: usize,
}

pub fn split(resolved: &Resolved) -> Result<()> {
    let packets = config_trace(resolved)?;
    let spec = &resolved.spec;
    let (_, pool, _) = prepare_examples(&packets, spec.task, &spec.features)?;
    let clients = build_client_datasets(&pool, &spec.split, spec.seed)?;
    let out = &resolved.output_dir;

    write_json_pretty(&out.join("clients.json"), &clients)?;
    let positives = |xs: &[fedpkt_core::features::EncodedExample]| {
        xs.iter().filter(|e| e.label == 1).count()
    };
    let summaries: Vec<ClientSummary> = clients
        .iter()
        .map(|c| ClientSummary {
            client_id: c.client_id,
            n_train: c.train.len(),
            n_test: c.test.len(),
            train_positives: positives(&c.train),
            test_positives: positives(&c.test),
        })
        .collect();
    write_json_pretty(&out.join("split_summary.json"), &summaries)?;
    Ok(())
}

pub fn train(resolved: &Resolved, verbose: u8) -> Result<()> {
    let spec = &resolved.spec;
    match spec.family {
        ModelFamily::Local | ModelFamily::Centralized | ModelFamily::Dtree => {}
        ModelFamily::Federated => bail!("family = \"federated\" is driven by the federate subcommand"),
        ModelFamily::KnowledgeTransfer => {
            bail!("family = \"knowledge_transfer\" is driven by the transfer subcommand")
        }
    }
    let packets = config_trace(resolved)?;
    let output = fedpkt_core::experiment::run_experiment(&packets, spec)?;
    let out = &resolved.output_dir;
    write_report_files(out, &output)?;
    if let Some(model) = &output.runs[0].final_model {
        write_atomic(&out.join("model.json"), &model_to_bytes(model, &spec.hyper))?;
    }
    if let Some(tree) = &output.runs[0].tree {
        write_atomic(&out.join("tree.json"), tree.to_json().as_bytes())?;
        write_atomic(&out.join("tree.dot"), tree.to_dot(&output.vocab)?.as_bytes())?;
    }
    print_report_rows(&output, verbose);
    Ok(())
}

pub fn federate(resolved: &Resolved, verbose: u8) -> Result<()> {
    let mut spec = resolved.spec.clone();
    spec.family = ModelFamily::Federated;
    let packets = config_trace(resolved)?;
    let output = fedpkt_core::experiment::run_experiment(&packets, &spec)?;
    let out = &resolved.output_dir;
    write_report_files(out, &output)?;
    for run in &output.runs {
        let Some(logs) = &run.round_logs else { continue };
        let mut lines = String::new();
        for log in logs {
            lines.push_str(&serde_json::to_string(log).context("round log")?);
            lines.push('\n');
        }
        write_atomic(&out.join(format!("rounds_{:02}.jsonl", run.run_index)), lines.as_bytes())?;
    }
    if let Some(model) = &output.runs[0].final_model {
        write_atomic(&out.join("model.json"), &model_to_bytes(model, &spec.hyper))?;
    }
    print_report_rows(&output, verbose);
    Ok(())
}

pub fn sweep(resolved: &Resolved) -> Result<()> {
    let Some(grid) = &resolved.sweep else {
        bail!("config needs a [sweep] section for this command");
    };
    let spec = &resolved.spec;
    if spec.fed.target_f1.is_none() {
        bail!("sweep needs fed.target_f1 so rounds-to-target is defined");
    }
    let packets = config_trace(resolved)?;
    let (vocab, pool, _) = prepare_examples(&packets, spec.task, &spec.features)?;
    let clients = build_client_datasets(&pool, &spec.split, spec.seed)?;
    let base = fed_config(spec, spec.seed);
    let table = rounds_to_target_sweep(&clients, &vocab, &base, grid, spec.runs)?;
    let out = &resolved.output_dir;
    write_atomic(&out.join("sweep.csv"), table.to_csv().as_bytes())?;
    write_json_pretty(&out.join("sweep.json"), &table)?;
    Ok(())
}

fn crowd_csv(points: &[CrowdPoint]) -> String {
    let mut out = String::from("clients_included,train_examples,f1_subset_union,f1_full_union\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.clients_included, p.train_examples, p.f1_subset_union, p.f1_full_union
        ));
    }
    out
}

pub fn crowdsource(resolved: &Resolved) -> Result<()> {
    let spec = &resolved.spec;
    let packets = config_trace(resolved)?;
    let (vocab, pool, _) = prepare_examples(&packets, spec.task, &spec.features)?;
    let clients = build_client_datasets(&pool, &spec.split, spec.seed)?;
    let base = fed_config(spec, spec.seed);
    let points = crowdsourcing_curve(&clients, &vocab, &base, spec.runs)?;
    let out = &resolved.output_dir;
    write_atomic(&out.join("crowdsource.csv"), crowd_csv(&points).as_bytes())?;
    write_json_pretty(&out.join("crowdsource.json"), &points)?;
    Ok(())
}

pub fn transfer(resolved: &Resolved, verbose: u8) -> Result<()> {
    let mut spec = resolved.spec.clone();
    spec.family = ModelFamily::KnowledgeTransfer;
    let packets = config_trace(resolved)?;
    let output = fedpkt_core::experiment::run_experiment(&packets, &spec)?;
    let out = &resolved.output_dir;
    write_report_files(out, &output)?;
    if let Some(t) = &output.runs[0].transfer {
        write_atomic(&out.join("teacher_model.json"), &model_to_bytes(&t.teacher, &spec.hyper))?;
        write_atomic(&out.join("student_tree.json"), t.student.to_json().as_bytes())?;
        write_atomic(&out.join("student_tree.dot"), t.student.to_dot(&output.vocab)?.as_bytes())?;
        write_atomic(&out.join("direct_tree.json"), t.direct.to_json().as_bytes())?;
        write_atomic(&out.join("direct_tree.dot"), t.direct.to_dot(&output.vocab)?.as_bytes())?;
    }
    print_report_rows(&output, verbose);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

pub fn report(input: &Path, format: ReportFormat, output: Option<&PathBuf>) -> Result<()> {
    let text = fs::read_to_string(input)
        .with_context(|| format!("cannot read report {}", input.display()))?;
    let report = fedpkt_core::experiment::report_from_json(&text)
        .with_context(|| format!("report {}", input.display()))?;
    let rendered = match format {
        ReportFormat::Csv => report_to_csv(&report),
        ReportFormat::Markdown => report_to_markdown(&report),
        ReportFormat::Json => report_to_json(&report),
    };
    match output {
        Some(path) => write_atomic(path, rendered.as_bytes()),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
